//! Generation, simulation and analysis against simulator ground truth.

use fvnkit::decompose::{decompose, DecomposeConfig, Preceding};
use fvnkit::recovery::{self, Alignment, RegionConfig};
use fvnkit::sequences::{assemble_test_signal, raw_test_signal};
use fvnkit::simsys::{simulate_measurement, InputReference};
use fvnkit::{LoudspeakerModel, Mode, Nonlinearity, SequencePlan, SimulationConfig, TestSignal};
use rayon::prelude::*;

fn small(mode: Mode, k: usize, seed: u64) -> SequencePlan {
    SequencePlan::from_seed(mode, 8000, 0.05, 800, k, seed).unwrap()
}

fn reference_plan(seed: u64) -> SequencePlan {
    SequencePlan::from_seed(Mode::FourSeqReduced, 44100, 0.1, 8820, 44, seed).unwrap()
}

fn db(x: f64) -> f64 {
    20.0 * x.abs().max(1e-300).log10()
}

fn run(sig: &TestSignal, cfg: &SimulationConfig) -> (fvnkit::DecompositionReport, f64) {
    let sim = simulate_measurement(sig, cfg).unwrap();
    let dcfg = DecomposeConfig { input_scale: sim.input_gain * sig.peak_norm, ..Default::default() };
    (decompose(&sim.observed, &sig.plan, &dcfg).unwrap(), sim.noise_sigma)
}

#[test]
fn identity_gives_unit_pulses() {
    for mode in [Mode::FourSeqFull, Mode::FourSeqReduced] {
        let plan = small(mode, 44, 2);
        let x = raw_test_signal(&plan).unwrap();
        let set = recovery::recover(&x, &plan, Alignment::Auto, &RegionConfig::default()).unwrap();
        let avg = recovery::average_responses(&set, &plan).unwrap();
        for r in avg.r_per_seq.iter().chain([&avg.r_mean]) {
            assert!((r[0] - 1.0).abs() < 1e-9);
            let off = r[1..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(db(off) < -180.0, "{mode}: {:.1} dB", db(off));
        }
        let xpd = avg.r_xpd.unwrap();
        assert_eq!(xpd.len(), 4 * plan.n_o);
        assert!((xpd[0] - 1.0).abs() < 1e-9);
        assert!(db(xpd[1..].iter().fold(0.0_f64, |m, v| m.max(v.abs()))) < -180.0);
    }
}

#[test]
fn two_sequence_identity() {
    let short = small(Mode::TwoSeq, 24, 3);
    let e = recovery::recover(&raw_test_signal(&short).unwrap(), &short, Alignment::Auto, &RegionConfig::default());
    let Err(fvnkit::Error::Configuration { min_reps, .. }) = e else { panic!("K = 24 should be too short") };
    let plan = small(Mode::TwoSeq, min_reps, 3);
    let x = raw_test_signal(&plan).unwrap();
    let set = recovery::recover(&x, &plan, Alignment::Auto, &RegionConfig::default()).unwrap();
    let avg = recovery::average_responses(&set, &plan).unwrap();
    assert!((avg.r_mean[0] - 1.0).abs() < 1e-9);
    assert!(db(avg.r_mean[1..].iter().fold(0.0_f64, |m, v| m.max(v.abs()))) < -180.0);
}

#[test]
fn averaged_noise_variance() {
    // White noise alone: each orthogonalized sample has variance sigma^2 / 8,
    // and averaging over the strides divides by their count.
    let plan = small(Mode::FourSeqReduced, 44, 4);
    let len = plan.signal_len();
    let sigma: f64 = 0.01;
    let ratios: Vec<f64> = (0..64u64)
        .into_par_iter()
        .map(|t| {
            let y = fvnkit::simsys::add_noise_relative(&vec![0.0; len], 20.0 * sigma.log10(), 1.0, 77 + t);
            let set = recovery::recover(&y, &plan, Alignment::Plan, &RegionConfig::default()).unwrap();
            let r = recovery::synchronous_average(&set.r_itr[0], &set.region, plan.n_o, 0).unwrap();
            let v = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
            v / (sigma * sigma / (8.0 * set.region.len() as f64))
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() < 0.2, "variance ratio {mean:.3}");
}

#[test]
fn time_invariant_nonlinearity_leaves_null_channel_silent() {
    let plan = small(Mode::FourSeqReduced, 44, 5);
    let sig = assemble_test_signal(&plan).unwrap();
    let cfg = SimulationConfig { nonlinearity: Some(Nonlinearity::default()), input_db: -10.0, ..Default::default() };
    let (rep, _) = run(&sig, &cfg);
    let lin = rep.component_levels.linear;
    assert!(rep.component_levels.nonlinear > lin - 60.0);
    assert!(rep.component_levels.random < lin - 150.0, "random {:.1} dB", rep.component_levels.random);
}

#[test]
fn noise_smears_the_nonlinear_estimate() {
    let plan = reference_plan(6);
    let sig = assemble_test_signal(&plan).unwrap();
    let level = |noise_db: f64| {
        let cfg = SimulationConfig {
            nonlinearity: Some(Nonlinearity::default()),
            input_db: -25.0,
            input_reference: InputReference::Peak,
            noise_db: Some(noise_db),
            seed: 8,
            ..Default::default()
        };
        run(&sig, &cfg).0.component_levels
    };
    let quiet = level(-150.0);
    let loud = level(-20.0);
    assert!(quiet.random < quiet.nonlinear);
    assert!(loud.random > quiet.nonlinear);
    // Noise above the distortion dominates the deviations between sequences.
    assert!(loud.nonlinear > quiet.nonlinear + 10.0);
}

#[test]
fn background_matches_preceding_noise() {
    let plan = reference_plan(7);
    let sig = assemble_test_signal(&plan).unwrap();
    let cfg = SimulationConfig { model: Some(LoudspeakerModel::new(44100.0)), noise_db: Some(-40.0), seed: 9, ..Default::default() };
    let (rep, _) = run(&sig, &cfg);
    let pre = rep.preceding_noise_spectrum.as_ref().expect("lead holds 8 n_o samples");
    let lv = rep.component_levels;
    assert!((lv.random - lv.preceding.unwrap()).abs() < 1.0, "{lv:?}");
    let mut worst = 0.0_f64;
    for ((f, a), b) in rep.frequencies.iter().zip(&rep.random_spectrum).zip(pre) {
        if (1000.0..=16000.0).contains(f) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1.0, "band difference {worst:.2} dB");
}

#[test]
fn preceding_can_be_disabled_or_chosen() {
    let plan = small(Mode::FourSeqReduced, 44, 8);
    let sig = assemble_test_signal(&plan).unwrap();
    let sim = simulate_measurement(&sig, &SimulationConfig { noise_db: Some(-30.0), ..Default::default() }).unwrap();
    let none = DecomposeConfig { preceding: Preceding::None, ..Default::default() };
    assert!(decompose(&sim.observed, &plan, &none).unwrap().preceding_noise_spectrum.is_none());
    let range = DecomposeConfig { preceding: Preceding::Range(0..1000), ..Default::default() };
    assert!(decompose(&sim.observed, &plan, &range).unwrap().preceding_noise_spectrum.is_some());
    let bad = DecomposeConfig { preceding: Preceding::Range(0..usize::MAX / 2), ..Default::default() };
    assert!(decompose(&sim.observed, &plan, &bad).is_err());
}

#[test]
fn component_ordering_with_distortion_and_noise() {
    let plan = reference_plan(9);
    let sig = assemble_test_signal(&plan).unwrap();
    for input_db in [-25.0, -15.0] {
        let cfg = SimulationConfig {
            model: Some(LoudspeakerModel::new(44100.0)),
            nonlinearity: Some(Nonlinearity::default()),
            noise_db: Some(-90.0),
            input_db,
            input_reference: InputReference::Peak,
            seed: 10,
            ..Default::default()
        };
        let (rep, _) = run(&sig, &cfg);
        let mut ordered = 0;
        let mut bands = 0;
        for (i, f) in rep.frequencies.iter().enumerate() {
            if (100.0..=10000.0).contains(f) {
                bands += 1;
                if rep.linear_spectrum[i] > rep.nonlinear_spectrum[i] && rep.nonlinear_spectrum[i] > rep.random_spectrum[i] {
                    ordered += 1;
                }
            }
        }
        assert_eq!(ordered, bands, "{input_db} dBFS: {ordered}/{bands} bands ordered");
    }
}

#[test]
fn scaling_the_observation_scales_power() {
    let plan = small(Mode::FourSeqReduced, 44, 10);
    let sig = assemble_test_signal(&plan).unwrap();
    let cfg = SimulationConfig { nonlinearity: Some(Nonlinearity::default()), noise_db: Some(-50.0), ..Default::default() };
    let sim = simulate_measurement(&sig, &cfg).unwrap();
    let g = 0.37;
    let scaled: Vec<f64> = sim.observed.iter().map(|v| v * g).collect();
    let d = DecomposeConfig::default();
    let a = decompose(&sim.observed, &plan, &d).unwrap();
    let b = decompose(&scaled, &plan, &d).unwrap();
    let shift = 20.0 * g.log10();
    for (x, y) in [
        (a.component_levels.linear, b.component_levels.linear),
        (a.component_levels.nonlinear, b.component_levels.nonlinear),
        (a.component_levels.random, b.component_levels.random),
    ] {
        assert!((y - x - shift).abs() < 1e-9);
    }
    for (x, y) in a.linear_ir.iter().zip(&b.linear_ir) {
        assert!((y - g * x).abs() < 1e-12);
    }
}

#[test]
fn noise_at_zero_db_doubles_variance() {
    let plan = small(Mode::FourSeqReduced, 44, 11);
    let sig = assemble_test_signal(&plan).unwrap();
    let sim = simulate_measurement(&sig, &SimulationConfig { noise_db: Some(0.0), seed: 4, ..Default::default() }).unwrap();
    let (a, b) = plan.active_span();
    let v = sim.observed[a..b].iter().map(|v| v * v).sum::<f64>() / (b - a) as f64;
    let ratio = v / (sim.clean_rms * sim.clean_rms);
    assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio:.3}");
}

#[test]
fn delayed_system_keeps_its_delay() {
    let plan = small(Mode::FourSeqReduced, 44, 12);
    let sig = assemble_test_signal(&plan).unwrap();
    let mut ir = vec![0.0; 31];
    ir[30] = 0.5;
    let (rep, _) = run(&sig, &SimulationConfig { reverb_ir: Some(ir), ..Default::default() });
    assert!((rep.linear_ir[30] - 0.5).abs() < 1e-9);
    assert!(rep.linear_ir[..30].iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn pink_signal_is_equalized() {
    let g = fvnkit::io::generate(&fvnkit::io::GenConfig {
        fs: 8000,
        sigma_t: 0.05,
        n_o: 800,
        k_reps: 44,
        seed: 13,
        pink: true,
        ..Default::default()
    })
    .unwrap();
    let sim = simulate_measurement(&g.signal, &SimulationConfig::default()).unwrap();
    let shaper = g.shaper.unwrap();
    let d = DecomposeConfig {
        input_scale: sim.input_gain * g.signal.peak_norm,
        inverse_fir: Some(shaper.fir_inverse_coeffs.clone()),
        ..Default::default()
    };
    let rep = decompose(&sim.observed, &g.signal.plan, &d).unwrap();
    assert!((rep.linear_ir[0] - 1.0).abs() < 1e-9, "{}", rep.linear_ir[0]);
    assert!(rep.linear_ir[1..].iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn short_signal_reports_minimum_repetitions() {
    let plan = small(Mode::FourSeqReduced, 20, 14);
    let x = raw_test_signal(&plan).unwrap();
    match decompose(&x, &plan, &DecomposeConfig::default()) {
        Err(fvnkit::Error::Configuration { min_reps, .. }) => assert!(min_reps > 20),
        other => panic!("expected a configuration error, got {other:?}"),
    }
}
