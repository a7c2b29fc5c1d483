//! Periodograms and fractional-octave smoothing.

use crate::fft;

/// One-sided per-bin power of `x` zero-padded to `n_fft` bins.
///
/// Normalized by the unpadded length so that the bins sum to the mean square of `x`.
/// The result has `n_fft / 2 + 1` entries at `k * fs / n_fft`.
pub fn power_spectrum(x: &[f64], n_fft: usize) -> Vec<f64> {
    assert!(n_fft >= x.len() && n_fft >= 2, "n_fft must cover the signal");
    let spec = fft::forward_real(x, n_fft);
    let norm = 1.0 / (x.len().max(1) as f64 * n_fft as f64);
    let half = n_fft / 2;
    (0..=half)
        .map(|k| {
            let p = spec[k].norm_sqr() * norm;
            // Bins without a mirror image (DC, and Nyquist for even sizes) count once.
            if k == 0 || (k == half && n_fft % 2 == 0) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Bin frequencies of a one-sided spectrum.
pub fn bin_frequencies(n_bins: usize, n_fft: usize, fs: f64) -> Vec<f64> {
    (0..n_bins).map(|k| k as f64 * fs / n_fft as f64).collect()
}

const BAND_LO: f64 = 0.890_898_718_140_339_3; // 2^(-1/6)
const BAND_HI: f64 = 1.122_462_048_309_373; // 2^(1/6)

/// Band edges of the third-octave band centered at `f`.
pub fn third_octave_band(f: f64) -> (f64, f64) {
    (f * BAND_LO, f * BAND_HI)
}

/// Running trapezoid integral of the piecewise-linear interpolant of `p`.
struct Cumulative<'a> {
    p: &'a [f64],
    cum: Vec<f64>,
    df: f64,
}

impl<'a> Cumulative<'a> {
    fn new(p: &'a [f64], df: f64) -> Self {
        let mut cum = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in p.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * df;
            cum.push(acc);
        }
        Cumulative { p, cum, df }
    }

    fn upper(&self) -> f64 {
        (self.p.len() - 1) as f64 * self.df
    }

    /// Integral from 0 to `f`, with `0 <= f <= upper`.
    fn at(&self, f: f64) -> f64 {
        let x = f / self.df;
        let k = (x.floor() as usize).min(self.p.len() - 2);
        let t = x - k as f64;
        let p0 = self.p[k];
        let p1 = self.p[k + 1];
        // Exact integral of the linear segment from k to k + t.
        self.cum[k] + self.df * (p0 * t + 0.5 * (p1 - p0) * t * t)
    }
}

/// Third-octave rectangular smoothing of `p` (bins spaced `df`) at `centers`.
///
/// Entries whose band leaves `[0, (len - 1) * df]` are `None`.
pub fn third_octave_smooth(p: &[f64], df: f64, centers: &[f64]) -> Vec<Option<f64>> {
    if p.len() < 2 {
        return vec![None; centers.len()];
    }
    let c = Cumulative::new(p, df);
    let top = c.upper() * (1.0 + 1e-12);
    centers
        .iter()
        .map(|&f| {
            let (a, b) = third_octave_band(f);
            if !(f > 0.0) || b > top {
                return None;
            }
            let b = b.min(c.upper());
            Some((c.at(b) - c.at(a)) / ((BAND_HI - BAND_LO) * f))
        })
        .collect()
}

/// Log-spaced centers `1000 * 2^(i / per_octave)` whose third-octave band fits in `[f_min, nyquist]`.
pub fn smoothing_centers(f_min: f64, nyquist: f64, per_octave: usize) -> Vec<f64> {
    let step = 1.0 / per_octave as f64;
    let i_lo = ((f_min / 1000.0).log2() / step).ceil() as i64;
    let i_hi = ((nyquist / BAND_HI / 1000.0).log2() / step).floor() as i64;
    (i_lo..=i_hi)
        .map(|i| 1000.0 * 2f64.powf(i as f64 * step))
        .filter(|&f| f * BAND_HI <= nyquist)
        .collect()
}

/// `10 log10(p)` clamped at -400 dB.
pub fn to_db(p: f64) -> f64 {
    10.0 * p.max(1e-40).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn band_constants() {
        assert!((BAND_LO - 2f64.powf(-1.0 / 6.0)).abs() < 1e-15);
        assert!((BAND_HI - 2f64.powf(1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn parseval() {
        let x: Vec<f64> = (0..300).map(|i| ((i * i) % 17) as f64 - 8.0).collect();
        let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        for n_fft in [300, 301, 512, 2400] {
            let s: f64 = power_spectrum(&x, n_fft).iter().sum();
            assert!((s - ms).abs() < 1e-9 * ms, "n_fft {n_fft}: {s} vs {ms}");
        }
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = vec![0.0; 64];
        x[0] = 1.0;
        let p = power_spectrum(&x, 64);
        for v in &p[1..32] {
            assert!((v - 2.0 / 4096.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sinusoid_at_bin_center() {
        let n = 256;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / n as f64).cos()).collect();
        let p = power_spectrum(&x, n);
        assert!((p[10] - 0.5).abs() < 1e-12);
        assert!(p.iter().enumerate().all(|(k, &v)| k == 10 || v < 1e-20));
    }

    #[test]
    fn white_noise_mean_level() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1 << 14).map(|_| { let e: f64 = StandardNormal.sample(&mut rng); 0.5 * e }).collect();
        let p = power_spectrum(&x, x.len());
        let mean = p[1..p.len() - 1].iter().sum::<f64>() / (p.len() - 2) as f64;
        let want = 0.25 * 2.0 / x.len() as f64;
        assert!((mean / want - 1.0).abs() < 0.05);
    }

    #[test]
    fn constant_is_preserved() {
        let p = vec![3.5; 1001];
        let centers = smoothing_centers(20.0, 500.0, 24);
        for v in third_octave_smooth(&p, 0.5, &centers) {
            assert!((v.unwrap() - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn line_support_is_band() {
        let df = 1.0;
        let mut p = vec![0.0; 2001];
        p[1000] = 1.0;
        let f0 = 1000.0;
        // The interpolant of a single bin spreads over one bin each side.
        for f in [850.0, 900.0, 1000.0, 1100.0, 1150.0] {
            let s = third_octave_smooth(&p, df, &[f])[0].unwrap();
            let (a, b) = third_octave_band(f);
            let touches = a < f0 + df && b > f0 - df;
            assert_eq!(s > 0.0, touches, "center {f}");
            let inside = a <= f0 - df && b >= f0 + df;
            if inside {
                assert!((s - 1.0 / ((BAND_HI - BAND_LO) * f)).abs() < 1e-12);
            }
        }
        assert_eq!(third_octave_smooth(&p, df, &[1900.0])[0], None);
    }

    #[test]
    fn pink_slope_is_preserved() {
        let df = 0.25;
        let p: Vec<f64> = (0..80001).map(|k| if k == 0 { 0.0 } else { 1.0 / (k as f64 * df) }).collect();
        let centers = smoothing_centers(20.0, 20000.0, 3);
        let g = (2f64.ln() / 3.0) / (BAND_HI - BAND_LO);
        for (f, v) in centers.iter().zip(third_octave_smooth(&p, df, &centers)) {
            let err = to_db(v.unwrap()) - to_db(g / f);
            assert!(err.abs() < 0.01, "{f}: {err}");
            assert!((to_db(v.unwrap()) - to_db(1.0 / f)).abs() < 0.1);
        }
    }

    #[test]
    fn centers_fit_in_grid() {
        let c = smoothing_centers(20.0, 22050.0, 24);
        assert!(c[0] >= 20.0);
        assert!(*c.last().unwrap() * BAND_HI <= 22050.0);
        assert!(c.windows(2).all(|w| (w[1] / w[0] - 2f64.powf(1.0 / 24.0)).abs() < 1e-12));
        assert_eq!(to_db(0.0), -400.0);
    }
}
