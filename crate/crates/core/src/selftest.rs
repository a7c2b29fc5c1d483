//! Quick invariant checks at a reduced sample rate.

use serde::Serialize;

use crate::decompose::spectrum::{smoothing_centers, third_octave_smooth};
use crate::error::Result;
use crate::fvn::{allpass_deviation, matched_compress_full};
use crate::io::sidecar::{generate, GenConfig};
use crate::recovery::{self, Alignment, RegionConfig};
use crate::sequences::{raw_test_signal, Mode, NormPolicy, SequencePlan};
use crate::simsys::design_pink_shaper;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn db(x: f64) -> f64 {
    20.0 * x.abs().max(1e-300).log10()
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

const FS: u32 = 8000;
const SIGMA_T: f64 = 0.05;
const N_O: usize = 800;

/// Runs every check; errors inside a check count as a failure of that check.
pub fn run() -> Vec<Check> {
    let steps: Vec<(&'static str, fn() -> Result<Check>)> = vec![
        ("allpass", allpass),
        ("pulse_recovery", pulse_recovery),
        ("orthogonal_cancellation", cancellation),
        ("expansion_patterns", expansion),
        ("smoother_identity", smoother),
        ("shaper_inverse", shaper),
        ("sidecar_reconstruction", sidecar),
    ];
    steps
        .into_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| check(name, false, e.to_string())))
        .collect()
}

fn plan(mode: Mode) -> Result<SequencePlan> {
    SequencePlan::from_seed(mode, FS, SIGMA_T, N_O, 44, 17)
}

fn allpass() -> Result<Check> {
    let p = plan(Mode::FourSeqFull)?;
    let dev = p.fvns.iter().map(allpass_deviation).fold(0.0, f64::max);
    Ok(check("allpass", dev < 1e-10, format!("max | |H| - 1 | = {dev:.2e}")))
}

fn pulse_recovery() -> Result<Check> {
    let p = plan(Mode::FourSeqFull)?;
    let mut worst = f64::NEG_INFINITY;
    for h in &p.fvns {
        let c = matched_compress_full(h, &h.waveform);
        let at = h.len() - 1;
        let off = c.iter().enumerate().filter(|(i, _)| *i != at).fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
        worst = worst.max(db(off / c[at]));
    }
    Ok(check("pulse_recovery", worst < -180.0, format!("off-peak floor {worst:.1} dB")))
}

fn cancellation() -> Result<Check> {
    let p = plan(Mode::FourSeqFull)?;
    let x = raw_test_signal(&p)?;
    let cfg = RegionConfig { ir_margin: 0.0, ..RegionConfig::default() };
    let set = recovery::recover(&x, &p, Alignment::Plan, &cfg)?;
    let t0 = p.first_pulse();
    let mut worst = f64::NEG_INFINITY;
    for r in &set.r_itr {
        for n in set.region.lo..set.region.hi {
            if (n - t0) % N_O != 0 {
                worst = worst.max(db(r[n]));
            }
        }
    }
    Ok(check("orthogonal_cancellation", worst < -200.0, format!("interior leakage {worst:.1} dB")))
}

fn expansion() -> Result<Check> {
    let (c1, c2) = recovery::expansion_coefficients()?;
    let v1 = recovery::expansion_pattern(&c1);
    let v2 = recovery::expansion_pattern(&c2);
    let ok = v1 == [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0] && v2 == [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    Ok(check("expansion_patterns", ok, format!("{v1:?} {v2:?}")))
}

fn smoother() -> Result<Check> {
    let p = vec![0.25; 4001];
    let c = smoothing_centers(20.0, 2000.0, 24);
    let err = third_octave_smooth(&p, 0.5, &c)
        .into_iter()
        .map(|v| v.map_or(f64::INFINITY, |v| (v - 0.25).abs()))
        .fold(0.0, f64::max);
    Ok(check("smoother_identity", err < 1e-12, format!("max error {err:.1e}")))
}

fn shaper() -> Result<Check> {
    let s = design_pink_shaper(44, FS as f64)?;
    let x: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
    let y = s.inverse(&s.shape(&x));
    let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(check("shaper_inverse", err < 1e-9, format!("max error {err:.1e}")))
}

fn sidecar() -> Result<Check> {
    let cfg = GenConfig { fs: FS, sigma_t: SIGMA_T, n_o: N_O, k_reps: 16, seed: 5, norm: NormPolicy::Peak, pink: true, ..GenConfig::default() };
    let g = generate(&cfg)?;
    let r = g.sidecar.reconstruct()?;
    let ok = r.signal.samples == g.signal.samples;
    Ok(check("sidecar_reconstruction", ok, format!("hash {}", &g.sidecar.signal_sha256[..16])))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
