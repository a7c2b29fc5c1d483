//! FFT plumbing shared by the synthesis and analysis stages.
//!
//! Forward transforms are unnormalized; [`inverse_real`] applies the `1/N`
//! scale. Plans are cached per thread.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

pub(crate) fn forward_in_place(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

pub(crate) fn inverse_in_place(buf: &mut [Complex64]) {
    plan(buf.len(), true).process(buf);
}

/// Zero-padded forward transform of a real signal.
pub fn forward_real(x: &[f64], n_fft: usize) -> Vec<Complex64> {
    debug_assert!(x.len() <= n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    forward_in_place(&mut buf);
    buf
}

/// Inverse transform scaled by `1/N`, keeping the real part.
pub(crate) fn inverse_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    inverse_in_place(&mut spec);
    let scale = 1.0 / n as f64;
    spec.into_iter().map(|c| c.re * scale).collect()
}

/// Full linear convolution (`a.len() + b.len() - 1` samples).
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n_fft = out_len.next_power_of_two();
    let fa = forward_real(a, n_fft);
    let mut fb = forward_real(b, n_fft);
    for (y, x) in fb.iter_mut().zip(&fa) {
        *y *= x;
    }
    let mut out = inverse_real(fb);
    out.truncate(out_len);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolve_matches_direct_sum() {
        let a = [1.0, -2.0, 0.5, 3.0];
        let b = [0.25, 1.0, -1.0];
        let got = convolve(&a, &b);
        let mut want = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                want[i + j] += x * y;
            }
        }
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_empty_is_empty() {
        assert!(convolve(&[], &[1.0]).is_empty());
    }
}
