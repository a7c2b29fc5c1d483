//! Unit FVN generation.
//!
//! A unit FVN is the impulse response of an all-pass filter whose phase is a
//! sum of randomly placed, randomly signed six-term cosine bumps. Because its
//! DFT magnitude is exactly one, correlating the waveform with itself yields
//! a unit impulse, which is what makes it usable as a time-stretched pulse.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft;

/// Six-term cosine window coefficients with optimum maximum-sidelobe attenuation.
pub const WINDOW_COEFFS: [f64; 6] = [
    0.2624710164,
    0.4265335164,
    0.2250165621,
    0.0726831633,
    0.0125124215,
    0.0007833203,
];

/// FVN half-length (in units of `sigma_t`) that the default synthesis grid must hold.
///
/// The envelope is near -235 dB at 20 sigma_t and reaches the double-precision
/// floor around 30 sigma_t; a grid of 40 sigma_t keeps the wrapped tails below
/// the -200 dB cancellation floor.
pub const DEFAULT_SPAN_SIGMAS: f64 = 40.0;

/// Design parameters of a unit FVN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvnParams {
    pub sample_rate: u32,
    /// Desired duration in seconds.
    pub sigma_t: f64,
    /// Average frequency separation of the bump centers in Hz.
    pub f_d: f64,
    pub phi_max: f64,
    /// Time-stretching coefficient of the bump window.
    pub c_mag: f64,
    pub fft_length: usize,
    pub seed: u64,
    /// ChaCha stream index; distinct FVNs of one plan share `seed` and differ here.
    pub stream: u64,
}

impl FvnParams {
    /// Parameters derived from a desired duration, with `F_d = 1 / (5 sigma_t)`.
    pub fn from_sigma_t(sample_rate: u32, sigma_t: f64, seed: u64) -> Result<Self> {
        if sample_rate == 0 {
            return param("sample_rate must be positive");
        }
        if !(sigma_t > 0.0 && sigma_t.is_finite()) {
            return param(format!("sigma_t must be positive, got {sigma_t}"));
        }
        let p = FvnParams {
            sample_rate,
            sigma_t,
            f_d: 1.0 / (5.0 * sigma_t),
            phi_max: PI / 4.0,
            c_mag: 1.0,
            fft_length: default_fft_length(sample_rate, sigma_t),
            seed,
            stream: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return param("sample_rate must be positive");
        }
        if !(self.f_d > 0.0) || !(self.c_mag > 0.0) {
            return param("f_d and c_mag must be positive");
        }
        if !(self.phi_max.is_finite()) {
            return param("phi_max must be finite");
        }
        if !self.fft_length.is_power_of_two() || self.fft_length < 4 {
            return param(format!("fft_length {} is not a power of two", self.fft_length));
        }
        let spacing = self.sample_rate as f64 / self.fft_length as f64;
        if spacing > 1.0_f64.min(self.f_d / 2.0) {
            return param(format!(
                "grid spacing {spacing:.4} Hz exceeds min(1 Hz, f_d/2 = {:.4} Hz)",
                self.f_d / 2.0
            ));
        }
        Ok(())
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }
}

/// Smallest power of two that satisfies the grid-spacing rule and holds
/// [`DEFAULT_SPAN_SIGMAS`] durations.
pub fn default_fft_length(sample_rate: u32, sigma_t: f64) -> usize {
    let fs = sample_rate as f64;
    let span = (DEFAULT_SPAN_SIGMAS * sigma_t * fs).ceil();
    let spacing = (10.0 * sigma_t * fs).ceil();
    let need = fs.max(span).max(spacing) as usize;
    need.next_power_of_two()
}

/// Phase manipulation design of one unit FVN.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub centers: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub n_alloc: usize,
    /// Phase at DFT bins `0..=fft_length/2`; negative bins follow by odd symmetry.
    pub phase_grid: Vec<f64>,
}

impl PhaseSpec {
    /// Zero phase: synthesizes a unit impulse.
    pub fn flat(params: &FvnParams) -> Self {
        PhaseSpec {
            centers: Vec::new(),
            coeffs: Vec::new(),
            n_alloc: 0,
            phase_grid: vec![0.0; params.fft_length / 2 + 1],
        }
    }

    /// Phase at any DFT bin of the full grid.
    pub fn phase_at_bin(&self, k: usize) -> f64 {
        let half = self.phase_grid.len() - 1;
        let n = 2 * half;
        let k = k % n;
        if k <= half {
            self.phase_grid[k]
        } else {
            -self.phase_grid[n - k]
        }
    }

    /// Debug summary suitable for JSON dumps.
    pub fn summary(&self, params: &FvnParams) -> PhaseSummary {
        PhaseSummary {
            seed: params.seed,
            stream: params.stream,
            centers: self.centers.clone(),
            coeffs: self.coeffs.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub seed: u64,
    pub stream: u64,
    pub centers: Vec<f64>,
    pub coeffs: Vec<f64>,
}

/// A synthesized unit FVN.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitFvn {
    /// `fft_length` samples; the envelope peak sits at `center_offset`.
    pub waveform: Vec<f64>,
    pub center_offset: usize,
    pub params: FvnParams,
}

impl UnitFvn {
    /// Designs and synthesizes in one step.
    pub fn generate(params: &FvnParams) -> Result<Self> {
        let spec = design_phase(params)?;
        synthesize_unit_fvn(&spec, params)
    }

    pub fn len(&self) -> usize {
        self.waveform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveform.is_empty()
    }

    /// Largest distance from the center at which `|h|` exceeds `floor_db` below the peak.
    pub fn envelope_extent(&self, floor_db: f64) -> usize {
        let peak = self.waveform.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let thr = peak * 10f64.powf(-floor_db.abs() / 20.0);
        let c = self.center_offset;
        self.waveform
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > thr)
            .map(|(i, _)| i.abs_diff(c))
            .max()
            .unwrap_or(0)
    }
}

/// Six-term cosine bump, zero outside `|f| <= 3 c_mag f_d`.
pub fn window_value(f: f64, f_d: f64, c_mag: f64) -> Result<f64> {
    if !(f_d > 0.0) || !(c_mag > 0.0) {
        return param("f_d and c_mag must be positive");
    }
    Ok(window_unchecked(f, 3.0 * c_mag * f_d))
}

#[inline]
fn window_unchecked(f: f64, half_support: f64) -> f64 {
    let f = f.abs();
    if f > half_support {
        return 0.0;
    }
    let x = PI * f / half_support;
    WINDOW_COEFFS
        .iter()
        .enumerate()
        .map(|(m, a)| a * (m as f64 * x).cos())
        .sum()
}

/// Maps a uniform draw to the bump sign: nearest integer 1 gives `+phi_max`.
pub fn coeff_from_draw(r2: f64, phi_max: f64) -> f64 {
    (2.0 * r2.round() - 1.0) * phi_max
}

/// Draws bump centers and signs and samples the phase on the DFT grid.
///
/// The phase is the odd, `fs`-periodic extension of the bump sum, so it is
/// smooth across both DC and Nyquist and vanishes exactly at those bins.
pub fn design_phase(params: &FvnParams) -> Result<PhaseSpec> {
    params.validate()?;
    let fs = params.sample_rate as f64;
    let n_alloc = (params.nyquist() / params.f_d).floor() as usize;
    if n_alloc < 1 {
        return param(format!(
            "f_d = {} Hz leaves no room for a phase bump below Nyquist",
            params.f_d
        ));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    rng.set_stream(params.stream);
    let mut centers = Vec::with_capacity(n_alloc);
    let mut coeffs = Vec::with_capacity(n_alloc);
    for n in 0..n_alloc {
        let r1: f64 = rng.sample(Open01);
        let r2: f64 = rng.sample(Open01);
        centers.push((n as f64 + r1) * params.f_d);
        coeffs.push(coeff_from_draw(r2, params.phi_max));
    }

    let l = params.fft_length;
    let half = l / 2;
    let df = fs / l as f64;
    let support = 3.0 * params.c_mag * params.f_d;
    let mut phase = vec![0.0; half + 1];

    // Each bump contributes at +fc and with opposite sign at the images
    // -fc and fs - fc.
    let mut add_bump = |center: f64, weight: f64| {
        let lo = ((center - support) / df).ceil().max(0.0);
        let hi = ((center + support) / df).floor().min(half as f64);
        if hi < lo {
            return;
        }
        for k in lo as usize..=hi as usize {
            phase[k] += weight * window_unchecked(k as f64 * df - center, support);
        }
    };
    for (&fc, &c) in centers.iter().zip(&coeffs) {
        add_bump(fc, c);
        add_bump(-fc, -c);
        add_bump(fs - fc, -c);
    }
    phase[0] = 0.0;
    phase[half] = 0.0;

    Ok(PhaseSpec {
        centers,
        coeffs,
        n_alloc,
        phase_grid: phase,
    })
}

/// Inverse DFT of `exp(j phi)`, rotated so the envelope is centered.
pub fn synthesize_unit_fvn(spec: &PhaseSpec, params: &FvnParams) -> Result<UnitFvn> {
    params.validate()?;
    let l = params.fft_length;
    let half = l / 2;
    if spec.phase_grid.len() != half + 1 {
        return param(format!(
            "phase grid has {} bins, expected {}",
            spec.phase_grid.len(),
            half + 1
        ));
    }
    if spec.phase_grid[0].sin().abs() > 1e-15 || spec.phase_grid[half].sin().abs() > 1e-15 {
        return Err(Error::Internal(
            "phase at DC or Nyquist is not a multiple of pi; spectrum is not Hermitian".into(),
        ));
    }

    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    for k in 0..=half {
        buf[k] = Complex64::from_polar(1.0, spec.phase_grid[k]);
    }
    buf[0].im = 0.0;
    buf[half].im = 0.0;
    for k in 1..half {
        buf[l - k] = buf[k].conj();
    }
    fft::inverse_in_place(&mut buf);
    let scale = 1.0 / l as f64;

    let peak = buf.iter().fold(0.0_f64, |m, c| m.max(c.re.abs())) * scale;
    let imag = buf.iter().fold(0.0_f64, |m, c| m.max(c.im.abs())) * scale;
    if imag > 1e-12 * peak {
        return Err(Error::Internal(format!(
            "imaginary residue {imag:e} exceeds tolerance for peak {peak:e}"
        )));
    }

    let waveform: Vec<f64> = (0..l).map(|n| buf[(n + half) % l].re * scale).collect();
    Ok(UnitFvn {
        waveform,
        center_offset: half,
        params: params.clone(),
    })
}

/// Largest deviation of the per-bin DFT magnitude from one.
pub fn allpass_deviation(fvn: &UnitFvn) -> f64 {
    let spec = fft::forward_real(&fvn.waveform, fvn.len());
    spec.iter().fold(0.0_f64, |m, c| m.max((c.norm() - 1.0).abs()))
}

/// Full linear convolution of the time-reversed waveform with `x`.
///
/// Output index `i` corresponds to lag `i - (len - 1)`; a copy of the
/// waveform compresses to a peak at index `len - 1`.
pub fn matched_compress_full(fvn: &UnitFvn, x: &[f64]) -> Vec<f64> {
    let rev: Vec<f64> = fvn.waveform.iter().rev().copied().collect();
    fft::convolve(&rev, x)
}

/// Pulse compression with the delay removed: a waveform copy centered at
/// sample `t` of `x` compresses to a unit pulse at sample `t` of the output.
/// The output has the same length as `x`.
pub fn matched_compress(fvn: &UnitFvn, x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return param("cannot compress an empty signal");
    }
    let full = matched_compress_full(fvn, x);
    let delay = fvn.len() - 1 - fvn.center_offset;
    Ok(full[delay..delay + x.len()].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCorrelation {
    pub max_abs: f64,
    pub rms: f64,
}

/// Peak and RMS cross-correlation of two FVNs, relative to the matched peak of `a`.
pub fn cross_correlation_report(a: &UnitFvn, b: &UnitFvn) -> Result<CrossCorrelation> {
    if a.params.sample_rate != b.params.sample_rate || a.len() != b.len() {
        return param("cross-correlation needs equal sample_rate and fft_length");
    }
    let peak: f64 = a.waveform.iter().map(|v| v * v).sum();
    let c = matched_compress_full(a, &b.waveform);
    let max_abs = c.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / peak;
    let rms = (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt() / peak;
    Ok(CrossCorrelation { max_abs, rms })
}
