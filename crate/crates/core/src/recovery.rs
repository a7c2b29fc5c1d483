//! Pulse compression, orthogonalization and synchronous averaging.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fvn::{matched_compress, matched_compress_full, UnitFvn};
use crate::sequences::{Mode, SequencePlan, EXTRA_WEIGHTS};

/// Default cross-talk threshold below the matched peak, in dB.
pub const DEFAULT_THETA_DB: f64 = 200.0;

/// How the clean region is trimmed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    /// Cross-correlation lags above `-theta_db` count as cross-talk.
    pub theta_db: f64,
    /// Allowance for the measured system's impulse response, in repetition intervals.
    pub ir_margin: f64,
    /// Minimum number of strides the region must hold.
    pub min_strides: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            theta_db: DEFAULT_THETA_DB,
            ir_margin: 1.0,
            min_strides: 1,
        }
    }
}

/// Pulse positions inside the span where all cross-correlation terms cancel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanRegion {
    /// Start of each stride (a repetition whose weight-cycle phase is 0).
    pub pulse_indices: Vec<usize>,
    pub period_stride: usize,
    /// Span `[lo, hi)` in which cancellation holds.
    pub lo: usize,
    pub hi: usize,
}

impl CleanRegion {
    pub fn len(&self) -> usize {
        self.pulse_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulse_indices.is_empty()
    }

    /// Starts of `width`-sample windows at repetition phase `phase + j * step`
    /// (in units of `n_o`) that lie fully within `[lo, hi)`.
    pub fn windows(&self, first: usize, n_o: usize, phase: usize, step: usize, width: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut s = first + phase * n_o;
        while s < self.lo {
            s += step * n_o;
        }
        while s + width <= self.hi {
            out.push(s);
            s += step * n_o;
        }
        out
    }
}

/// Compressed and orthogonalized signals of one analysis.
#[derive(Debug, Clone)]
pub struct RecoveredSet {
    pub q: Vec<Vec<f64>>,
    pub r_itr: Vec<Vec<f64>>,
    /// Sample index of the first recovered pulse.
    pub alignment: usize,
    pub region: CleanRegion,
    pub mode: Mode,
    pub n_o: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedResponse {
    pub r_per_seq: Vec<Vec<f64>>,
    pub r_mean: Vec<f64>,
    pub r_xpd: Option<Vec<f64>>,
}

/// Compresses `observed` with every analysis FVN of the plan.
pub fn compress_all(observed: &[f64], plan: &SequencePlan) -> Result<Vec<Vec<f64>>> {
    let need = plan.active_span().1 + plan.fvns[0].center_offset;
    if observed.len() < need {
        return param(format!(
            "observed signal has {} samples; the plan needs at least {need}",
            observed.len()
        ));
    }
    plan.fvns
        .par_iter()
        .map(|h| matched_compress(h, observed))
        .collect()
}

/// `(1/P) sum_k q[n - k n_o] row[k]` with zeros outside the signal.
pub fn orthogonalize(q: &[f64], row: &[i8], n_o: usize) -> Vec<f64> {
    let p = row.len() as f64;
    let mut out = vec![0.0; q.len()];
    for (k, &w) in row.iter().enumerate() {
        let shift = k * n_o;
        if shift >= q.len() {
            break;
        }
        let w = w as f64;
        for (o, v) in out[shift..].iter_mut().zip(q) {
            *o += w * v;
        }
    }
    for o in &mut out {
        *o /= p;
    }
    out
}

/// Two-sequence orthogonalization: sum and difference of adjacent repetitions.
pub fn orthogonalize_two_seq(q1: &[f64], q2: &[f64], n_o: usize) -> (Vec<f64>, Vec<f64>) {
    (orthogonalize(q1, &[1, 1], n_o), orthogonalize(q2, &[1, -1], n_o))
}

/// Extra channel of the two-sequence scheme, weights (1, 1, -1, -1) / 4.
pub fn extra_two_seq(q_x: &[f64], n_o: usize) -> Vec<f64> {
    orthogonalize(q_x, &EXTRA_WEIGHTS, n_o)
}

/// Largest lag at which a pairwise cross-correlation of `fvns` exceeds
/// `-theta_db` relative to the matched peak.
pub fn cross_talk_extent(fvns: &[UnitFvn], theta_db: f64) -> usize {
    let pairs: Vec<(usize, usize)> = (0..fvns.len())
        .flat_map(|i| (i + 1..fvns.len()).map(move |j| (i, j)))
        .collect();
    let thr = 10f64.powf(-theta_db.abs() / 20.0);
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let c = matched_compress_full(&fvns[i], &fvns[j].waveform);
            let zero = fvns[i].len() - 1;
            c.iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > thr)
                .map(|(n, _)| n.abs_diff(zero))
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

/// Repetition count of the cancellation window of a mode.
fn cancel_period(mode: Mode) -> usize {
    match mode {
        Mode::TwoSeq => EXTRA_WEIGHTS.len(),
        _ => mode.period(),
    }
}

/// Clean region for pulses starting at `alignment`, given the cross-talk extent.
pub fn clean_region(
    plan: &SequencePlan,
    alignment: usize,
    analyzed_len: usize,
    extent: usize,
    cfg: &RegionConfig,
) -> Result<CleanRegion> {
    match region_geometry(plan.mode, plan.n_o, plan.k_reps, alignment, analyzed_len, extent, cfg) {
        Some(r) if r.len() >= cfg.min_strides.max(1) => Ok(r),
        found => {
            let min_reps = minimum_reps(plan, extent, cfg);
            Err(Error::Configuration {
                message: format!(
                    "clean region holds {} of the {} required strides (cross-talk extent {extent} samples)",
                    found.map_or(0, |r| r.len()),
                    cfg.min_strides.max(1)
                ),
                min_reps,
            })
        }
    }
}

fn region_geometry(
    mode: Mode,
    n_o: usize,
    k_reps: usize,
    t0: usize,
    analyzed_len: usize,
    extent: usize,
    cfg: &RegionConfig,
) -> Option<CleanRegion> {
    let p = mode.period();
    let pc = cancel_period(mode);
    let margin = (cfg.ir_margin.max(0.0) * n_o as f64).ceil() as usize;
    let lo = t0 + (pc - 2) * n_o + extent + margin;
    let hi = (t0 + k_reps * n_o).checked_sub(extent)?.min(analyzed_len);
    if hi <= lo {
        return None;
    }
    let stride = p * n_o;
    let mut region = CleanRegion {
        pulse_indices: Vec::new(),
        period_stride: stride,
        lo,
        hi,
    };
    // The stride window must hold the cancellation window of the extra channel too.
    region.pulse_indices = region.windows(t0, n_o, 0, p, stride.max(pc * n_o));
    Some(region)
}

/// Smallest K for which the region holds `cfg.min_strides` strides.
pub fn minimum_reps(plan: &SequencePlan, extent: usize, cfg: &RegionConfig) -> usize {
    let p = plan.mode.period();
    let t0 = plan.first_pulse();
    let need = cfg.min_strides.max(1);
    let mut k = 2 * p;
    loop {
        let ok = region_geometry(plan.mode, plan.n_o, k, t0, usize::MAX, extent, cfg)
            .is_some_and(|r| r.len() >= need);
        if ok {
            return k;
        }
        k += 1;
    }
}

/// Clean region at plan geometry, with the cross-talk extent measured from the plan's FVNs.
pub fn locate_clean_region(
    plan: &SequencePlan,
    analyzed_len: usize,
    cfg: &RegionConfig,
) -> Result<CleanRegion> {
    let extent = cross_talk_extent(&plan.fvns, cfg.theta_db);
    clean_region(plan, plan.first_pulse(), analyzed_len, extent, cfg)
}

/// Locates the first pulse from the all-positive first channel.
///
/// The detected pulse grid is compared with the plan geometry; offsets beyond
/// `n_o / 4` are a sync error. A later peak (system delay) keeps the plan
/// position so the response retains its delay.
pub fn align(q1: &[f64], plan: &SequencePlan) -> Result<usize> {
    let t0 = plan.first_pulse();
    let n_o = plan.n_o as i64;
    let (a, b) = plan.active_span();
    let lo = a.saturating_sub(plan.n_o / 2);
    let hi = b.min(q1.len());
    if hi <= lo {
        return param("observed signal does not cover the pulse span");
    }
    let (imax, vmax) = q1[lo..hi]
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    if vmax == 0.0 {
        return Err(Error::Sync { offset: 0, tolerance: n_o / 4 });
    }
    let d = (lo + imax) as i64 - t0 as i64;
    let resid = (d + n_o / 2).rem_euclid(n_o) - n_o / 2;
    if resid.abs() > n_o / 4 {
        return Err(Error::Sync { offset: resid, tolerance: n_o / 4 });
    }
    Ok((t0 as i64 + resid.min(0)) as usize)
}

/// Orthogonalized signals for every analysis FVN.
pub fn orthogonalize_all(q: &[Vec<f64>], plan: &SequencePlan) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<i8>> = match plan.mode {
        Mode::TwoSeq => vec![vec![1, 1], vec![1, -1], EXTRA_WEIGHTS.to_vec()],
        _ => plan.weights.rows.clone(),
    };
    q.par_iter()
        .zip(rows.par_iter())
        .map(|(qm, row)| orthogonalize(qm, row, plan.n_o))
        .collect()
}

/// How the first pulse is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Alignment {
    #[default]
    Auto,
    /// Trust the plan geometry.
    Plan,
    Fixed(usize),
}

/// Full recovery: compress, align, orthogonalize, locate the clean region.
pub fn recover(
    observed: &[f64],
    plan: &SequencePlan,
    alignment: Alignment,
    cfg: &RegionConfig,
) -> Result<RecoveredSet> {
    let q = compress_all(observed, plan)?;
    let t0 = match alignment {
        Alignment::Auto => align(&q[0], plan)?,
        Alignment::Plan => plan.first_pulse(),
        Alignment::Fixed(t) => t,
    };
    let r_itr = orthogonalize_all(&q, plan);
    let extent = cross_talk_extent(&plan.fvns, cfg.theta_db);
    let region = clean_region(plan, t0, observed.len(), extent, cfg)?;
    Ok(RecoveredSet {
        q,
        r_itr,
        alignment: t0,
        region,
        mode: plan.mode,
        n_o: plan.n_o,
    })
}

/// Mean of `len`-sample slices of `x` at `starts`, summed in order.
pub fn average_slices(x: &[f64], starts: &[usize], len: usize) -> Result<Vec<f64>> {
    if starts.is_empty() {
        return param("no slices to average");
    }
    let mut out = vec![0.0; len];
    for &s in starts {
        let Some(slice) = x.get(s..s + len) else {
            return param(format!("slice at {s} of length {len} exceeds the signal"));
        };
        for (o, v) in out.iter_mut().zip(slice) {
            *o += v;
        }
    }
    let n = starts.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

/// Average of the `n_o`-sample slices at `stride start + phase * n_o`.
pub fn synchronous_average(r_itr_m: &[f64], region: &CleanRegion, n_o: usize, phase: usize) -> Result<Vec<f64>> {
    if region.is_empty() {
        return param("empty clean region");
    }
    let starts: Vec<usize> = region.pulse_indices.iter().map(|s| s + phase * n_o).collect();
    average_slices(r_itr_m, &starts, n_o)
}

/// Mean of all four responses, the first three in reduced mode, both in two-sequence mode.
pub fn combine_responses(r_per_seq: &[Vec<f64>], mode: Mode) -> Result<Vec<f64>> {
    let used = mode.synthesis_count();
    if r_per_seq.len() < used {
        return param(format!("need {used} responses, got {}", r_per_seq.len()));
    }
    let n = r_per_seq[0].len();
    if r_per_seq[..used].iter().any(|r| r.len() != n) {
        return param("responses differ in length");
    }
    let mut out = vec![0.0; n];
    for r in &r_per_seq[..used] {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= used as f64;
    }
    Ok(out)
}

/// Per-sequence synchronous averages and their mean.
pub fn average_responses(set: &RecoveredSet, plan: &SequencePlan) -> Result<AveragedResponse> {
    let played = plan.mode.synthesis_count();
    let r_per_seq = (0..played)
        .map(|m| synchronous_average(&set.r_itr[m], &set.region, set.n_o, plan.weights.pulse_phase(m)))
        .collect::<Result<Vec<_>>>()?;
    let r_mean = combine_responses(&r_per_seq, plan.mode)?;
    let r_xpd = match plan.mode {
        Mode::TwoSeq => None,
        _ => Some(expand_response(&set.r_itr, &set.region, set.alignment, set.n_o)?),
    };
    Ok(AveragedResponse {
        r_per_seq,
        r_mean,
        r_xpd,
    })
}

/// Cyclic self-kernels of the four-sequence rows.
pub fn expansion_matrix() -> [[f64; 8]; 4] {
    let w = crate::sequences::weight_matrix(4).expect("four rows are supported");
    let mut a = [[0.0; 8]; 4];
    for (m, row) in a.iter_mut().enumerate() {
        row.copy_from_slice(&w.self_kernel(m));
    }
    a
}

/// `A^T c` for a coefficient vector.
pub fn expansion_pattern(c: &[f64; 4]) -> [f64; 8] {
    let a = expansion_matrix();
    let mut v = [0.0; 8];
    for (j, vj) in v.iter_mut().enumerate() {
        *vj = (0..4).map(|m| a[m][j] * c[m]).sum();
    }
    v
}

/// The two combinations whose pattern has a single unit pulse per four repetitions.
pub fn expansion_coefficients() -> Result<([f64; 4], [f64; 4])> {
    let c1 = [0.25, -0.25, 0.5, 0.0];
    let c2 = [0.25, -0.25, -0.5, 0.0];
    for c in [&c1, &c2] {
        let v = expansion_pattern(c);
        for half in v.chunks(4) {
            let ones = half.iter().filter(|&&x| x == 1.0).count();
            let zeros = half.iter().filter(|&&x| x == 0.0).count();
            if ones != 1 || zeros != 3 || half != &v[..4] {
                return Err(Error::Internal(format!("expansion pattern {v:?} is not a 4-periodic unit pulse")));
            }
        }
    }
    Ok((c1, c2))
}

/// Combination of the first three orthogonalized signals with period `4 n_o`.
pub fn expanded_signal(r_itr: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (c1, _) = expansion_coefficients()?;
    if r_itr.len() < 3 {
        return param("expansion needs three orthogonalized signals");
    }
    let n = r_itr[0].len();
    Ok((0..n)
        .map(|i| c1[0] * r_itr[0][i] + c1[1] * r_itr[1][i] + c1[2] * r_itr[2][i])
        .collect())
}

/// Expanded response of length `4 n_o`, averaged over the clean region.
pub fn expand_response(r_itr: &[Vec<f64>], region: &CleanRegion, first: usize, n_o: usize) -> Result<Vec<f64>> {
    let x = expanded_signal(r_itr)?;
    let (c1, _) = expansion_coefficients()?;
    let phase = expansion_pattern(&c1).iter().position(|&v| v == 1.0).unwrap_or(0);
    let starts = region.windows(first, n_o, phase, 4, 4 * n_o);
    if starts.is_empty() {
        return Err(Error::Configuration {
            message: "clean region is shorter than one expanded segment".into(),
            min_reps: 0,
        });
    }
    average_slices(&x, &starts, 4 * n_o)
}
