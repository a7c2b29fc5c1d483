//! Unit FVN properties at the 44.1 kHz, sigma 0.1 s configuration.

use fvnkit::fvn::cross_correlation_report;
use fvnkit::{FvnParams, UnitFvn};
use rayon::prelude::*;

fn fvn(seed: u64, stream: u64) -> UnitFvn {
    UnitFvn::generate(&FvnParams::from_sigma_t(44100, 0.1, seed).unwrap().with_stream(stream)).unwrap()
}

#[test]
fn envelope_is_localized() {
    let h = fvn(3, 0);
    let peak = h.waveform.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let c = h.center_offset;
    // -100 dB is reached near +/-0.8 s; at +/-0.5 s the tail is still near -55 dB.
    let half = 44100;
    let outside = h
        .waveform
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(c) > half)
        .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
    let lvl = 20.0 * (outside / peak).log10();
    assert!(lvl < -100.0, "outside +/-1 s: {lvl:.1} dB");
    let at_half = h.waveform[c + 22050..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(20.0 * (at_half / peak).log10() < -45.0);
    let extent = h.envelope_extent(-100.0);
    assert!(extent <= half, "extent {extent}");
}

#[test]
fn independent_pairs_are_weakly_correlated() {
    let stats: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|i| {
            let r = cross_correlation_report(&fvn(40 + i, 0), &fvn(40 + i, 1)).unwrap();
            (20.0 * r.max_abs.log10(), 20.0 * r.rms.log10())
        })
        .collect();
    for &(max_db, rms_db) in &stats {
        // The largest lag is the overlap of the two central impulses.
        assert!((-9.0..-4.0).contains(&max_db), "max {max_db:.1} dB");
        assert!(rms_db < -50.0, "rms {rms_db:.1} dB");
    }
}
