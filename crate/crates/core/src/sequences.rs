//! Orthogonal FVN sequences and test-signal assembly.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fvn::{FvnParams, UnitFvn};

/// Default upper bound on the assembled test-signal length (samples).
pub const DEFAULT_MAX_SAMPLES: usize = 1 << 28;

/// Measurement scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Two polarity-coded sequences plus an unplayed probe FVN for the extra channel.
    #[serde(rename = "two")]
    TwoSeq,
    /// All four sequences are played.
    #[serde(rename = "four")]
    FourSeqFull,
    /// Sequences 1-3 are played; the fourth FVN is used only for analysis.
    #[serde(rename = "fourR")]
    FourSeqReduced,
}

impl Mode {
    /// Number of rows of the weight matrix.
    pub fn m_sequences(self) -> usize {
        match self {
            Mode::TwoSeq => 2,
            _ => 4,
        }
    }

    /// Sequences summed into the test signal.
    pub fn synthesis_count(self) -> usize {
        match self {
            Mode::TwoSeq => 2,
            Mode::FourSeqFull => 4,
            Mode::FourSeqReduced => 3,
        }
    }

    /// FVNs the plan carries (and the analysis compresses with).
    pub fn fvn_count(self) -> usize {
        match self {
            Mode::TwoSeq => 3,
            _ => 4,
        }
    }

    /// Weight-cycle length in repetitions.
    pub fn period(self) -> usize {
        match self {
            Mode::TwoSeq => 2,
            _ => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TwoSeq => "two",
            Mode::FourSeqFull => "four",
            Mode::FourSeqReduced => "fourR",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" => Ok(Mode::TwoSeq),
            "four" => Ok(Mode::FourSeqFull),
            "fourR" | "fourr" => Ok(Mode::FourSeqReduced),
            _ => param(format!("unknown mode {s:?}; expected two, four or fourR")),
        }
    }
}

/// Binary (+1/-1) orthogonal rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub rows: Vec<Vec<i8>>,
    pub period: usize,
}

impl WeightMatrix {
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        self.rows[m][k % self.period] as f64
    }

    /// Cyclic autocorrelation of row `m`: the pulse weight left in the
    /// orthogonalized signal at repetition phase `j`.
    pub fn self_kernel(&self, m: usize) -> Vec<f64> {
        cyclic_correlation(&self.rows[m], &self.rows[m])
    }

    /// First repetition phase where the orthogonalized row-`m` signal
    /// carries a pulse of weight +1.
    pub fn pulse_phase(&self, m: usize) -> usize {
        self.self_kernel(m)
            .iter()
            .position(|&a| a == 1.0)
            .expect("cyclic autocorrelation has value 1 at lag 0")
    }
}

/// `(1/P) sum_k a[k] b[j - k]` over cyclic indices, for every `j`.
pub fn cyclic_correlation(a: &[i8], b: &[i8]) -> Vec<f64> {
    let p = a.len();
    (0..p)
        .map(|j| {
            let s: i32 = (0..p)
                .map(|k| a[k] as i32 * b[(j + p - k) % p] as i32)
                .sum();
            s as f64 / p as f64
        })
        .collect()
}

/// Orthogonal weight rows for two or four sequences.
pub fn weight_matrix(m_sequences: usize) -> Result<WeightMatrix> {
    match m_sequences {
        2 => Ok(WeightMatrix {
            rows: vec![vec![1, 1], vec![1, -1]],
            period: 2,
        }),
        4 => Ok(WeightMatrix {
            rows: vec![
                vec![1, 1, 1, 1, 1, 1, 1, 1],
                vec![1, -1, 1, -1, 1, -1, 1, -1],
                vec![1, 1, -1, -1, 1, 1, -1, -1],
                vec![1, 1, 1, 1, -1, -1, -1, -1],
            ],
            period: 8,
        }),
        _ => param(format!("unsupported number of sequences: {m_sequences}")),
    }
}

/// Weights of the two-sequence extra channel, period 4.
pub const EXTRA_WEIGHTS: [i8; 4] = [1, 1, -1, -1];

/// Scaling applied to the summed sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPolicy {
    /// Peak magnitude 1.
    Peak,
    /// Unit standard deviation over the active span. Peaks exceed 1, so the
    /// result only fits float sample formats.
    Std,
}

/// Target standard deviation for [`NormPolicy::Std`].
pub const STD_TARGET: f64 = 1.0;

impl FromStr for NormPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak" => Ok(NormPolicy::Peak),
            "std" => Ok(NormPolicy::Std),
            _ => param(format!("unknown norm policy {s:?}")),
        }
    }
}

/// Everything that defines a test signal.
#[derive(Debug, Clone)]
pub struct SequencePlan {
    pub n_o: usize,
    pub k_reps: usize,
    pub mode: Mode,
    pub fvns: Vec<UnitFvn>,
    pub weights: WeightMatrix,
}

impl SequencePlan {
    pub fn new(mode: Mode, fvns: Vec<UnitFvn>, n_o: usize, k_reps: usize) -> Result<Self> {
        let plan = SequencePlan {
            n_o,
            k_reps,
            mode,
            weights: weight_matrix(mode.m_sequences())?,
            fvns,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Generates `mode.fvn_count()` FVNs that share `seed` on distinct streams.
    pub fn from_seed(
        mode: Mode,
        sample_rate: u32,
        sigma_t: f64,
        n_o: usize,
        k_reps: usize,
        seed: u64,
    ) -> Result<Self> {
        let base = FvnParams::from_sigma_t(sample_rate, sigma_t, seed)?;
        let params: Vec<FvnParams> = (0..mode.fvn_count() as u64)
            .map(|s| base.clone().with_stream(s))
            .collect();
        Self::from_params(mode, &params, n_o, k_reps)
    }

    pub fn from_params(mode: Mode, params: &[FvnParams], n_o: usize, k_reps: usize) -> Result<Self> {
        let fvns = params
            .par_iter()
            .map(UnitFvn::generate)
            .collect::<Result<Vec<_>>>()?;
        Self::new(mode, fvns, n_o, k_reps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_o < 1 {
            return param("n_o must be at least 1");
        }
        let p = self.period();
        if self.k_reps < 2 * p {
            return Err(Error::Configuration {
                message: format!(
                    "{} repetitions do not cover two weight cycles of {p}",
                    self.k_reps
                ),
                min_reps: 2 * p,
            });
        }
        if self.fvns.len() != self.mode.fvn_count() {
            return param(format!(
                "mode {} needs {} FVNs, got {}",
                self.mode,
                self.mode.fvn_count(),
                self.fvns.len()
            ));
        }
        let first = &self.fvns[0];
        for f in &self.fvns[1..] {
            if f.params.sample_rate != first.params.sample_rate || f.len() != first.len() {
                return param("all FVNs of a plan need the same sample rate and length");
            }
        }
        for (i, a) in self.fvns.iter().enumerate() {
            for b in &self.fvns[i + 1..] {
                if (a.params.seed, a.params.stream) == (b.params.seed, b.params.stream) {
                    return param(format!(
                        "FVNs share seed {} and stream {}",
                        a.params.seed, a.params.stream
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn period(&self) -> usize {
        self.weights.period
    }

    pub fn sample_rate(&self) -> u32 {
        self.fvns[0].params.sample_rate
    }

    pub fn fft_length(&self) -> usize {
        self.fvns[0].len()
    }

    /// Sample index of the center of the first emitted FVN.
    pub fn first_pulse(&self) -> usize {
        self.period() * self.n_o + self.fvns[0].center_offset
    }

    /// Center of repetition `k`.
    pub fn pulse_center(&self, k: usize) -> usize {
        self.first_pulse() + k * self.n_o
    }

    /// Test-signal length: guard cycles on both sides plus one FVN tail.
    pub fn signal_len(&self) -> usize {
        (self.k_reps + 2 * self.period()) * self.n_o + self.fft_length()
    }

    /// Leading samples that contain no test signal.
    pub fn silent_lead(&self) -> usize {
        self.period() * self.n_o
    }

    /// Span `[start, end)` between the first and one past the last pulse center.
    pub fn active_span(&self) -> (usize, usize) {
        let t0 = self.first_pulse();
        (t0, t0 + self.k_reps * self.n_o)
    }
}

/// Overlap-added sequence: repetition `k` is `row[k mod P]` times the FVN,
/// centered at `k * n_o + center_offset`. Length `(k_reps - 1) * n_o + fft_length`.
pub fn build_sequence(fvn: &UnitFvn, row: &[i8], n_o: usize, k_reps: usize) -> Result<Vec<f64>> {
    if n_o < 1 || k_reps < 1 {
        return param("n_o and k_reps must be at least 1");
    }
    if row.is_empty() {
        return param("empty weight row");
    }
    let l = fvn.len();
    let mut out = vec![0.0; (k_reps - 1) * n_o + l];
    for k in 0..k_reps {
        let w = row[k % row.len()] as f64;
        let dst = &mut out[k * n_o..k * n_o + l];
        for (d, &h) in dst.iter_mut().zip(&fvn.waveform) {
            *d += w * h;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TestSignal {
    pub samples: Vec<f64>,
    pub plan: SequencePlan,
    /// Factor applied to the raw sum of sequences.
    pub peak_norm: f64,
}

/// Raw (unnormalized) sum of the played sequences in plan geometry.
pub fn raw_test_signal(plan: &SequencePlan) -> Result<Vec<f64>> {
    raw_test_signal_limited(plan, DEFAULT_MAX_SAMPLES)
}

pub fn raw_test_signal_limited(plan: &SequencePlan, max_samples: usize) -> Result<Vec<f64>> {
    plan.validate()?;
    let len = plan.signal_len();
    if len > max_samples {
        return param(format!(
            "test signal of {len} samples exceeds the limit of {max_samples}"
        ));
    }
    let seqs = (0..plan.mode.synthesis_count())
        .into_par_iter()
        .map(|m| build_sequence(&plan.fvns[m], &plan.weights.rows[m], plan.n_o, plan.k_reps))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; len];
    let lead = plan.silent_lead();
    for s in &seqs {
        for (d, v) in out[lead..lead + s.len()].iter_mut().zip(s) {
            *d += v;
        }
    }
    Ok(out)
}

/// Scale factor that brings `x` to the requested level.
pub fn normalization_factor(x: &[f64], span: (usize, usize), norm: NormPolicy) -> Result<f64> {
    let g = match norm {
        NormPolicy::Peak => {
            let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            1.0 / peak
        }
        NormPolicy::Std => STD_TARGET / std_dev(&x[span.0..span.1]),
    };
    if !g.is_finite() {
        return Err(Error::Numerical("cannot normalize a silent signal".into()));
    }
    Ok(g)
}

pub(crate) fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Sums the played sequences and peak-normalizes.
pub fn assemble_test_signal(plan: &SequencePlan) -> Result<TestSignal> {
    assemble_with(plan, NormPolicy::Peak, |_| Ok(()))
}

/// Sums the played sequences, applies `shape` in place, then normalizes.
pub fn assemble_with<F>(plan: &SequencePlan, norm: NormPolicy, shape: F) -> Result<TestSignal>
where
    F: FnOnce(&mut Vec<f64>) -> Result<()>,
{
    let mut x = raw_test_signal(plan)?;
    shape(&mut x)?;
    let g = normalization_factor(&x, plan.active_span(), norm)?;
    for v in &mut x {
        *v *= g;
    }
    if norm == NormPolicy::Peak && x.iter().any(|v| v.abs() > 1.0 + 1e-12) {
        return Err(Error::Numerical(
            "normalized test signal exceeds full scale".into(),
        ));
    }
    Ok(TestSignal {
        samples: x,
        plan: plan.clone(),
        peak_norm: g,
    })
}
