//! Separation of a measured response into linear, nonlinear and random parts.

pub mod spectrum;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::recovery::{self, Alignment, CleanRegion, RegionConfig};
use crate::sequences::{Mode, SequencePlan};
pub use spectrum::{power_spectrum, smoothing_centers, third_octave_smooth, to_db};

/// Cross-talk threshold used by [`DecomposeConfig::default`]. Leakage at this
/// level sits far below any noise or distortion the analysis reports, and it
/// leaves two strides at K = 44.
pub const DECOMPOSE_THETA_DB: f64 = 180.0;

/// Relation between the null-channel sample variance and the observation noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// `var_ro = 8 (L + 1) var_rv`: averaging `8 (L + 1)` independent noise segments.
    #[default]
    Averaging,
    /// `var_ro = var_rv / (8 (L + 1))`, the form as typeset.
    Printed,
}

impl Calibration {
    pub fn factor(self, strides: usize) -> f64 {
        let n = 8.0 * strides as f64;
        match self {
            Calibration::Averaging => n,
            Calibration::Printed => 1.0 / n,
        }
    }
}

/// Prefactor applied to the summed squared deviations of the three responses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlPrefactor {
    /// 9 per sample.
    #[default]
    Printed,
    /// `4 * 3 / 2 = 6` per sample.
    Commentary,
    Custom(f64),
}

impl NlPrefactor {
    pub fn value(self) -> f64 {
        match self {
            NlPrefactor::Printed => 9.0,
            NlPrefactor::Commentary => 6.0,
            NlPrefactor::Custom(v) => v,
        }
    }
}

/// Normalization of the per-sequence stride averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseNorm {
    /// Divide by the number of strides; the identity system gives a unit pulse.
    #[default]
    Mean,
    /// Divide by eight times the number of strides.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomComponent {
    pub r_rv: Vec<f64>,
    /// Number of averaged strides minus one.
    pub l_count: usize,
    pub n0: usize,
    pub var_rv: f64,
    pub var_ro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearComponent {
    pub deviations: Vec<Vec<f64>>,
    pub var_n: f64,
    /// Per-bin power on the analysis grid, scaled like `var_n`.
    pub spectrum: Vec<f64>,
}

/// Scalar component levels in dBFS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentLevels {
    pub linear: f64,
    pub nonlinear: f64,
    pub random: f64,
    pub preceding: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub sample_rate: u32,
    pub n_o: usize,
    /// Linear response divided by the input scale.
    pub linear_ir: Vec<f64>,
    pub linear_xpd: Option<Vec<f64>>,
    pub frequencies: Vec<f64>,
    pub linear_spectrum: Vec<f64>,
    pub nonlinear_spectrum: Vec<f64>,
    pub random_spectrum: Vec<f64>,
    pub preceding_noise_spectrum: Option<Vec<f64>>,
    pub component_levels: ComponentLevels,
    pub var_ro: f64,
    pub var_n: f64,
    pub strides: usize,
    pub alignment: usize,
    pub region: CleanRegion,
}

/// Choice of the noise-only stretch used for the preceding-noise estimate.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Preceding {
    /// The leading silent guard, when it holds `8 n_o` samples.
    #[default]
    Auto,
    None,
    Range(Range<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub alignment: Alignment,
    pub region: RegionConfig,
    pub calibration: Calibration,
    pub nl_prefactor: NlPrefactor,
    pub response_norm: ResponseNorm,
    pub preceding: Preceding,
    /// Divides the reported impulse responses (the test-signal normalization factor).
    pub input_scale: f64,
    /// FIR applied to the observation before analysis (pink-shaper inverse).
    pub inverse_fir: Option<Vec<f64>>,
    pub smoothing_f_min: f64,
    pub smoothing_per_octave: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            alignment: Alignment::Auto,
            region: RegionConfig {
                theta_db: DECOMPOSE_THETA_DB,
                ir_margin: 0.5,
                min_strides: 2,
            },
            calibration: Calibration::default(),
            nl_prefactor: NlPrefactor::default(),
            response_norm: ResponseNorm::default(),
            preceding: Preceding::Auto,
            input_scale: 1.0,
            inverse_fir: None,
            smoothing_f_min: 10.0,
            smoothing_per_octave: 24,
        }
    }
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Stride average of the null channel and the calibrated noise variance.
pub fn random_component(
    r_itr4: &[f64],
    region: &CleanRegion,
    n_o: usize,
    calibration: Calibration,
) -> Result<RandomComponent> {
    if region.len() < 2 {
        return param(format!(
            "random component needs at least 2 strides in the clean region, found {}",
            region.len()
        ));
    }
    let r_rv = recovery::average_slices(r_itr4, &region.pulse_indices, 8 * n_o)?;
    let var_rv = sample_variance(&r_rv);
    Ok(RandomComponent {
        var_ro: calibration.factor(region.len()) * var_rv,
        l_count: region.len() - 1,
        n0: region.pulse_indices[0],
        r_rv,
        var_rv,
    })
}

/// Stride-averaged response of one sequence at its pulse phase.
pub fn per_sequence_response(
    r_itr_m: &[f64],
    region: &CleanRegion,
    n_o: usize,
    phase: usize,
    norm: ResponseNorm,
) -> Result<Vec<f64>> {
    let mut r = recovery::synchronous_average(r_itr_m, region, n_o, phase)?;
    if norm == ResponseNorm::Printed {
        for v in &mut r {
            *v /= 8.0;
        }
    }
    Ok(r)
}

/// Deviations of three responses from their mean and the scaled deviation power.
pub fn nonlinear_component(r: &[Vec<f64>], prefactor: NlPrefactor, n_fft: usize) -> Result<NonlinearComponent> {
    if r.len() != 3 {
        return param(format!("nonlinear component needs 3 responses, got {}", r.len()));
    }
    let n = r[0].len();
    if n == 0 || r.iter().any(|x| x.len() != n) {
        return param("responses must be nonempty and of equal length");
    }
    let mean: Vec<f64> = (0..n).map(|i| (r[0][i] + r[1][i] + r[2][i]) / 3.0).collect();
    let mut deviations: Vec<Vec<f64>> = r
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    // Remove rounding so the deviations sum to zero exactly.
    for i in 0..n {
        deviations[2][i] = -(deviations[0][i] + deviations[1][i]);
    }
    let k = prefactor.value();
    let var_n = k * deviations.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
    let spectra: Vec<Vec<f64>> = deviations.par_iter().map(|d| power_spectrum(d, n_fft)).collect();
    let spectrum = (0..spectra[0].len())
        .map(|b| k * (spectra[0][b] + spectra[1][b] + spectra[2][b]))
        .collect();
    Ok(NonlinearComponent {
        deviations,
        var_n,
        spectrum,
    })
}

/// Causal FIR filtering truncated to the input length.
pub fn fir_filter(x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = crate::fft::convolve(x, b);
    y.truncate(x.len());
    y
}

/// Runs the whole analysis on an observation of a reduced or full four-sequence plan.
pub fn decompose(observed: &[f64], plan: &SequencePlan, cfg: &DecomposeConfig) -> Result<DecompositionReport> {
    if plan.mode == Mode::TwoSeq {
        return param("decomposition needs a four-sequence plan");
    }
    if !(cfg.input_scale > 0.0 && cfg.input_scale.is_finite()) {
        return param("input_scale must be positive");
    }
    let filtered;
    let observed = match &cfg.inverse_fir {
        Some(b) => {
            filtered = fir_filter(observed, b);
            &filtered[..]
        }
        None => observed,
    };
    let n_o = plan.n_o;
    let set = recovery::recover(observed, plan, cfg.alignment, &cfg.region)?;
    let region = &set.region;

    let r_per_seq = (0..3)
        .map(|m| per_sequence_response(&set.r_itr[m], region, n_o, plan.weights.pulse_phase(m), cfg.response_norm))
        .collect::<Result<Vec<_>>>()?;
    let r_r = recovery::combine_responses(&r_per_seq, Mode::FourSeqReduced)?;
    let xpd = recovery::expand_response(&set.r_itr, region, set.alignment, n_o).ok();
    let random = random_component(&set.r_itr[3], region, n_o, cfg.calibration)?;

    let n_fft = 8 * n_o;
    let nl = nonlinear_component(&r_per_seq, cfg.nl_prefactor, n_fft)?;
    let lin_p: Vec<f64> = power_spectrum(&r_r, n_fft).into_iter().map(|v| 3.0 * v).collect();
    let rnd_scale = cfg.calibration.factor(random.l_count + 1);
    let rnd_p: Vec<f64> = power_spectrum(&random.r_rv, n_fft).into_iter().map(|v| rnd_scale * v).collect();

    let pre_range = match &cfg.preceding {
        Preceding::Auto => {
            let lead = plan.silent_lead().min(set.alignment.saturating_sub(plan.fvns[0].center_offset));
            (lead >= n_fft).then(|| 0..n_fft)
        }
        Preceding::None => None,
        Preceding::Range(r) => Some(r.clone()),
    };
    let pre_p = match pre_range {
        Some(r) => {
            if r.is_empty() || r.len() > n_fft || r.end > observed.len() {
                return param(format!("preceding range {r:?} must be nonempty, within the signal and at most {n_fft} samples"));
            }
            Some(power_spectrum(&observed[r], n_fft))
        }
        None => None,
    };

    let fs = plan.sample_rate() as f64;
    let df = fs / n_fft as f64;
    let centers = smoothing_centers(cfg.smoothing_f_min, fs / 2.0, cfg.smoothing_per_octave);
    let smooth = |p: &[f64]| -> Result<Vec<f64>> {
        third_octave_smooth(p, df, &centers)
            .into_iter()
            .map(|v| v.map(to_db).ok_or_else(|| Error::Internal("smoothing band outside the grid".into())))
            .collect()
    };

    let levels = ComponentLevels {
        linear: to_db(lin_p.iter().sum()),
        nonlinear: to_db(nl.var_n),
        random: to_db(random.var_ro),
        preceding: pre_p.as_ref().map(|p| to_db(p.iter().sum())),
    };
    let scale = 1.0 / cfg.input_scale;
    Ok(DecompositionReport {
        sample_rate: plan.sample_rate(),
        n_o,
        linear_ir: r_r.iter().map(|v| v * scale).collect(),
        linear_xpd: xpd.map(|x| x.iter().map(|v| v * scale).collect()),
        linear_spectrum: smooth(&lin_p)?,
        nonlinear_spectrum: smooth(&nl.spectrum)?,
        random_spectrum: smooth(&rnd_p)?,
        preceding_noise_spectrum: pre_p.as_deref().map(smooth).transpose()?,
        frequencies: centers,
        component_levels: levels,
        var_ro: random.var_ro,
        var_n: nl.var_n,
        strides: region.len(),
        alignment: set.alignment,
        region: set.region.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(starts: Vec<usize>, stride: usize) -> CleanRegion {
        CleanRegion {
            lo: starts[0],
            hi: starts.last().unwrap() + stride,
            pulse_indices: starts,
            period_stride: stride,
        }
    }

    #[test]
    fn identical_responses_have_no_deviation() {
        let r = vec![vec![1.0, -2.0, 0.5]; 3];
        let nl = nonlinear_component(&r, NlPrefactor::Printed, 8).unwrap();
        assert_eq!(nl.var_n, 0.0);
        assert!(nl.deviations.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn deviations_sum_to_zero() {
        let r = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let nl = nonlinear_component(&r, NlPrefactor::Commentary, 8).unwrap();
        for i in 0..3 {
            assert_eq!(nl.deviations[0][i] + nl.deviations[1][i] + nl.deviations[2][i], 0.0);
        }
        let want = 6.0 * 3.0 * (4.0 / 9.0 + 1.0 / 9.0 + 1.0 / 9.0) / 3.0;
        assert!((nl.var_n - want).abs() < 1e-12);
        let total: f64 = nl.spectrum.iter().sum();
        assert!((total - nl.var_n).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_rejects_bad_input() {
        assert!(nonlinear_component(&[vec![1.0]], NlPrefactor::Printed, 4).is_err());
        assert!(nonlinear_component(&[vec![1.0], vec![1.0, 2.0], vec![1.0]], NlPrefactor::Printed, 4).is_err());
    }

    #[test]
    fn prefactors() {
        assert_eq!(NlPrefactor::Printed.value(), 9.0);
        assert_eq!(NlPrefactor::Commentary.value(), 6.0);
        assert_eq!(NlPrefactor::Custom(2.0).value(), 2.0);
        assert_eq!(Calibration::Averaging.factor(3), 24.0);
        assert_eq!(Calibration::Printed.factor(3), 1.0 / 24.0);
    }

    #[test]
    fn random_component_stride_average() {
        let n_o = 2;
        let x: Vec<f64> = (0..100).map(|i| (i % 16) as f64).collect();
        let reg = region(vec![16, 32, 48], 16);
        let rc = random_component(&x, &reg, n_o, Calibration::Averaging).unwrap();
        assert_eq!(rc.r_rv, x[16..32].to_vec());
        assert_eq!(rc.l_count, 2);
        assert_eq!(rc.n0, 16);
        assert!((rc.var_ro - 24.0 * rc.var_rv).abs() < 1e-12);
        assert!(random_component(&x, &region(vec![16], 16), n_o, Calibration::Averaging).is_err());
    }

    #[test]
    fn printed_norm_divides_by_eight() {
        let x: Vec<f64> = (0..64).map(|i| (i % 8) as f64).collect();
        let reg = region(vec![8, 16], 8);
        let a = per_sequence_response(&x, &reg, 1, 3, ResponseNorm::Mean).unwrap();
        let b = per_sequence_response(&x, &reg, 1, 3, ResponseNorm::Printed).unwrap();
        assert_eq!(a, vec![3.0]);
        assert_eq!(b, vec![3.0 / 8.0]);
    }

    #[test]
    fn fir_filter_truncates() {
        let y = fir_filter(&[1.0, 0.0, 0.0, 0.0], &[0.5, 0.25]);
        assert_eq!(y.len(), 4);
        assert!((y[0] - 0.5).abs() < 1e-15 && (y[1] - 0.25).abs() < 1e-15 && y[2].abs() < 1e-15);
    }
}
