//! Simulated measurement targets and the pink spectral-shaping chain.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft;
use crate::sequences::TestSignal;

/// Two resonators followed by a differentiator, normalized to 0 dB at 1 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoudspeakerModel {
    pub pole_freqs: [f64; 2],
    pub pole_bandwidths: [f64; 2],
    pub diff_order: usize,
    pub fs: f64,
}

/// Frequency at which [`LoudspeakerModel`] has unit gain.
pub const REFERENCE_HZ: f64 = 1000.0;

impl LoudspeakerModel {
    pub fn new(fs: f64) -> Self {
        LoudspeakerModel {
            pole_freqs: [70.0, 8000.0],
            pole_bandwidths: [50.0, 1200.0],
            diff_order: 2,
            fs,
        }
    }

    /// Denominator sections `[1, -2 r cos(theta), r^2]` by impulse invariance.
    pub fn sections(&self) -> Result<Vec<[f64; 3]>> {
        if !(self.fs > 0.0) {
            return param("sample rate must be positive");
        }
        let mut out = Vec::with_capacity(2);
        for (&f0, &bw) in self.pole_freqs.iter().zip(&self.pole_bandwidths) {
            let r = (-PI * bw / self.fs).exp();
            let theta = 2.0 * PI * f0 / self.fs;
            if !(bw > 0.0) || !(r < 1.0) || !(f0 > 0.0 && f0 < self.fs / 2.0) {
                return param(format!("pole at {f0} Hz with bandwidth {bw} Hz is not stable below Nyquist"));
            }
            out.push([1.0, -2.0 * r * theta.cos(), r * r]);
        }
        Ok(out)
    }

    /// Numerator `g (1 - z^-1)^d`.
    fn numerator(&self, gain: f64) -> Vec<f64> {
        let mut b = vec![gain];
        for _ in 0..self.diff_order {
            let mut nb = vec![0.0; b.len() + 1];
            for (i, v) in b.iter().enumerate() {
                nb[i] += v;
                nb[i + 1] -= v;
            }
            b = nb;
        }
        b
    }

    fn raw_response(&self, sections: &[[f64; 3]], f: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / self.fs);
        let mut h = (Complex64::new(1.0, 0.0) - z1).powu(self.diff_order as u32);
        for s in sections {
            h /= Complex64::new(s[0], 0.0) + z1 * s[1] + z1 * z1 * s[2];
        }
        h
    }

    fn gain(&self, sections: &[[f64; 3]]) -> f64 {
        1.0 / self.raw_response(sections, REFERENCE_HZ).norm()
    }

    /// Complex frequency response at `f` Hz.
    pub fn response(&self, f: f64) -> Result<Complex64> {
        let s = self.sections()?;
        Ok(self.raw_response(&s, f) * self.gain(&s))
    }

    /// Runs the filter over `x` from a zero state.
    pub fn filter(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.sections()?;
        let b = self.numerator(self.gain(&s));
        let mut y = fir(x, &b);
        for sec in &s {
            let (mut y1, mut y2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let out = *v - sec[1] * y1 - sec[2] * y2;
                y2 = y1;
                y1 = out;
                *v = out;
            }
        }
        Ok(y)
    }
}

fn fir(x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| b.iter().enumerate().take(n + 1).map(|(k, c)| c * x[n - k]).sum())
        .collect()
}

/// First `length` samples of the model's impulse response.
pub fn loudspeaker_ir(model: &LoudspeakerModel, length: usize) -> Result<Vec<f64>> {
    if length < 1 {
        return param("impulse response length must be at least 1");
    }
    let mut x = vec![0.0; length];
    x[0] = 1.0;
    model.filter(&x)
}

/// Asymmetric saturating memoryless map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub alpha: f64,
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity { alpha: 0.3 }
    }
}

impl Nonlinearity {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return param(format!("alpha must be nonnegative, got {alpha}"));
        }
        Ok(Nonlinearity { alpha })
    }

    pub fn eval(&self, x: f64) -> f64 {
        2.0 / (1.0 + (-2.0 * (x + self.alpha * x.exp())).exp()) - 1.0 - self.alpha
    }

    /// `df/dx = sech^2(u) (1 + alpha e^x)` with `u = x + alpha e^x`.
    pub fn derivative(&self, x: f64) -> f64 {
        let u = x + self.alpha * x.exp();
        let c = u.cosh();
        (1.0 + self.alpha * x.exp()) / (c * c)
    }
}

pub fn apply_nonlinearity(x: &[f64], nl: &Nonlinearity) -> Vec<f64> {
    x.iter().map(|&v| nl.eval(v)).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Adds white Gaussian noise `level_db` below the RMS of `x`; `-inf` leaves `x` unchanged.
pub fn add_noise(x: &[f64], level_db: f64, seed: u64) -> Vec<f64> {
    add_noise_relative(x, level_db, rms(x), seed)
}

/// Adds white Gaussian noise of RMS `reference_rms * 10^(level_db / 20)`.
pub fn add_noise_relative(x: &[f64], level_db: f64, reference_rms: f64, seed: u64) -> Vec<f64> {
    if level_db == f64::NEG_INFINITY {
        return x.to_vec();
    }
    let sigma = reference_rms * 10f64.powf(level_db / 20.0);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    x.iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + sigma * e
        })
        .collect()
}

/// Full linear convolution with an impulse response.
pub fn convolve_ir(x: &[f64], ir: &[f64]) -> Result<Vec<f64>> {
    if ir.is_empty() {
        return param("impulse response is empty");
    }
    Ok(fft::convolve(x, ir))
}

/// Order-`p` all-pole pink shaper and its FIR inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaperPair {
    pub order: usize,
    /// `[1, a_1, ..., a_p]`; the shaper is `1 / A(z)`.
    pub all_pole_coeffs: Vec<f64>,
    /// The same polynomial, applied as a forward filter.
    pub fir_inverse_coeffs: Vec<f64>,
    pub corner_hz: f64,
}

/// Pink-target corner frequency; the target is flat below it.
pub const PINK_CORNER_HZ: f64 = 20.0;
/// Grid on which the target autocorrelation is computed.
const SHAPER_GRID: usize = 1 << 16;

/// Levinson-Durbin recursion for `[1, a_1, ..., a_p]` from `r[0..=p]`.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<Vec<f64>> {
    if r.len() <= order {
        return param("autocorrelation shorter than the requested order");
    }
    if !(r[0] > 0.0) {
        return Err(Error::Numerical("autocorrelation at lag 0 is not positive".into()));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        if !(k.abs() < 1.0) {
            return Err(Error::Numerical(format!(
                "reflection coefficient {k} at step {i}: autocorrelation is not positive definite"
            )));
        }
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    Ok(a)
}

/// LPC fit of a `1 / max(f, corner)` power target.
pub fn design_pink_shaper(order: usize, fs: f64) -> Result<ShaperPair> {
    if order < 1 {
        return param("shaper order must be at least 1");
    }
    if !(fs > 2.0 * PINK_CORNER_HZ) {
        return param("sample rate too low for the pink corner");
    }
    let n = SHAPER_GRID;
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for (k, s) in spec.iter_mut().enumerate() {
        let kk = k.min(n - k);
        let f = kk as f64 * fs / n as f64;
        s.re = 1.0 / f.max(PINK_CORNER_HZ);
    }
    let r = fft::inverse_real(spec);
    let a = levinson_durbin(&r[..=order], order)?;
    Ok(ShaperPair {
        order,
        fir_inverse_coeffs: a.clone(),
        all_pole_coeffs: a,
        corner_hz: PINK_CORNER_HZ,
    })
}

impl ShaperPair {
    /// Recursive `1 / A(z)` filter from a zero state.
    pub fn shape(&self, x: &[f64]) -> Vec<f64> {
        let a = &self.all_pole_coeffs;
        let mut y = vec![0.0; x.len()];
        for n in 0..x.len() {
            let mut acc = x[n];
            for k in 1..a.len().min(n + 1) {
                acc -= a[k] * y[n - k];
            }
            y[n] = acc;
        }
        y
    }

    /// Non-recursive `A(z)` filter from a zero state.
    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        fir(x, &self.fir_inverse_coeffs)
    }

    /// Power response `1 / |A|^2` at `f` Hz.
    pub fn power_response(&self, f: f64, fs: f64) -> f64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        let mut zk = Complex64::new(1.0, 0.0);
        let mut a = Complex64::new(0.0, 0.0);
        for c in &self.all_pole_coeffs {
            a += zk * c;
            zk *= z1;
        }
        1.0 / a.norm_sqr()
    }
}

/// What 0 dB input level means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputReference {
    /// Unit sample standard deviation over the active span.
    #[default]
    Std,
    /// Unit peak magnitude (digital full scale).
    Peak,
}

impl std::str::FromStr for InputReference {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(InputReference::Std),
            "peak" => Ok(InputReference::Peak),
            _ => param(format!("unknown input reference {s:?} (expected std or peak)")),
        }
    }
}

/// Virtual measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// `None` is the identity system.
    pub model: Option<LoudspeakerModel>,
    pub nonlinearity: Option<Nonlinearity>,
    /// Noise level relative to the clean output RMS; `None` adds no noise.
    pub noise_db: Option<f64>,
    /// Input level in dB relative to `input_reference`.
    pub input_db: f64,
    pub input_reference: InputReference,
    /// Extra impulse response (room) after the loudspeaker.
    pub reverb_ir: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            model: None,
            nonlinearity: None,
            noise_db: None,
            input_db: 0.0,
            input_reference: InputReference::Std,
            reverb_ir: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub observed: Vec<f64>,
    /// Factor applied to the test-signal samples before the system.
    pub input_gain: f64,
    /// RMS of the noiseless output over the active span.
    pub clean_rms: f64,
    pub noise_sigma: f64,
}

/// Drives the simulated system with a test signal.
///
/// The signal is scaled to unit standard deviation over its active span (or
/// unit peak) and then to `input_db`. The nonlinearity is offset so that silence maps to
/// silence. The output has the length of the input.
pub fn simulate_measurement(signal: &TestSignal, cfg: &SimulationConfig) -> Result<Simulation> {
    simulate_samples(&signal.samples, signal.plan.active_span(), cfg)
}

pub fn simulate_samples(x: &[f64], span: (usize, usize), cfg: &SimulationConfig) -> Result<Simulation> {
    if span.1 > x.len() || span.1 <= span.0 + 1 {
        return param("active span does not fit the signal");
    }
    let sd = match cfg.input_reference {
        InputReference::Std => crate::sequences::std_dev(&x[span.0..span.1]),
        InputReference::Peak => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
    };
    if !(sd > 0.0) {
        return Err(Error::Numerical("test signal is silent".into()));
    }
    let input_gain = 10f64.powf(cfg.input_db / 20.0) / sd;
    let mut y: Vec<f64> = x.iter().map(|v| v * input_gain).collect();
    if let Some(nl) = &cfg.nonlinearity {
        let f0 = nl.eval(0.0);
        for v in &mut y {
            *v = nl.eval(*v) - f0;
        }
    }
    if let Some(m) = &cfg.model {
        y = m.filter(&y)?;
    }
    if let Some(ir) = &cfg.reverb_ir {
        y = convolve_ir(&y, ir)?;
        y.truncate(x.len());
    }
    let clean_rms = rms(&y[span.0..span.1]);
    let (observed, noise_sigma) = match cfg.noise_db {
        Some(db) => (
            add_noise_relative(&y, db, clean_rms, cfg.seed),
            clean_rms * 10f64.powf(db / 20.0),
        ),
        None => (y, 0.0),
    };
    Ok(Simulation {
        observed,
        input_gain,
        clean_rms,
        noise_sigma,
    })
}
