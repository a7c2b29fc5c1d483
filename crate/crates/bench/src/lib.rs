//! Fixtures shared by the benchmarks.

use fvnkit::sequences::assemble_test_signal;
use fvnkit::simsys::simulate_measurement;
use fvnkit::{LoudspeakerModel, Mode, Nonlinearity, SequencePlan, SimulationConfig, TestSignal};

/// Reduced mode at 44.1 kHz, sigma 0.1 s, n_o 8820, K 44.
pub fn reference_plan(seed: u64) -> SequencePlan {
    SequencePlan::from_seed(Mode::FourSeqReduced, 44100, 0.1, 8820, 44, seed).expect("valid plan")
}

/// Test signal and a loudspeaker recording of it with mild distortion.
pub fn recording(plan: &SequencePlan) -> (TestSignal, Vec<f64>) {
    let sig = assemble_test_signal(plan).expect("signal");
    let cfg = SimulationConfig {
        model: Some(LoudspeakerModel::new(plan.sample_rate() as f64)),
        nonlinearity: Some(Nonlinearity::default()),
        noise_db: Some(-80.0),
        input_db: -25.0,
        seed: 1,
        ..Default::default()
    };
    let obs = simulate_measurement(&sig, &cfg).expect("simulation").observed;
    (sig, obs)
}
