//! Plan sidecar: everything needed to rebuild a test signal bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fvn::FvnParams;
use crate::sequences::{assemble_with, Mode, NormPolicy, SequencePlan, TestSignal};
use crate::simsys::{design_pink_shaper, ShaperPair, PINK_CORNER_HZ};

pub const SIDECAR_SCHEMA: u32 = 1;
/// Order of the pink shaper used by `--pink`.
pub const PINK_ORDER: usize = 44;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaperInfo {
    pub order: usize,
    pub corner_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSidecar {
    pub schema_version: u32,
    pub mode: Mode,
    pub fs: u32,
    pub sigma_t: f64,
    pub n_o: usize,
    pub k_reps: usize,
    /// `(seed, stream)` per FVN, in sequence order.
    pub seeds: Vec<(u64, u64)>,
    pub norm: NormPolicy,
    pub peak_norm: f64,
    pub shaper: Option<ShaperInfo>,
    pub fft_length: usize,
    pub f_d: f64,
    pub phi_max: f64,
    pub c_mag: f64,
    pub n_samples: usize,
    /// SHA-256 of the little-endian f64 samples.
    pub signal_sha256: String,
}

/// Settings for a new test signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub mode: Mode,
    pub fs: u32,
    pub sigma_t: f64,
    pub n_o: usize,
    pub k_reps: usize,
    pub seed: u64,
    pub norm: NormPolicy,
    pub pink: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            mode: Mode::FourSeqReduced,
            fs: 44100,
            sigma_t: 0.1,
            n_o: 8820,
            k_reps: 44,
            seed: 1,
            norm: NormPolicy::Peak,
            pink: false,
        }
    }
}

pub fn sha256_f64(x: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in x {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn sha256_bytes(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}

/// A generated signal together with the shaper it was filtered with.
#[derive(Debug, Clone)]
pub struct Generated {
    pub signal: TestSignal,
    pub shaper: Option<ShaperPair>,
    pub sidecar: PlanSidecar,
}

fn build(plan: &SequencePlan, norm: NormPolicy, shaper: Option<&ShaperPair>) -> Result<TestSignal> {
    assemble_with(plan, norm, |x| {
        if let Some(s) = shaper {
            *x = s.shape(x);
        }
        Ok(())
    })
}

pub fn generate(cfg: &GenConfig) -> Result<Generated> {
    let plan = SequencePlan::from_seed(cfg.mode, cfg.fs, cfg.sigma_t, cfg.n_o, cfg.k_reps, cfg.seed)?;
    let shaper = if cfg.pink { Some(design_pink_shaper(PINK_ORDER, cfg.fs as f64)?) } else { None };
    let signal = build(&plan, cfg.norm, shaper.as_ref())?;
    let p0: &FvnParams = &plan.fvns[0].params;
    let sidecar = PlanSidecar {
        schema_version: SIDECAR_SCHEMA,
        mode: cfg.mode,
        fs: cfg.fs,
        sigma_t: cfg.sigma_t,
        n_o: cfg.n_o,
        k_reps: cfg.k_reps,
        seeds: plan.fvns.iter().map(|f| (f.params.seed, f.params.stream)).collect(),
        norm: cfg.norm,
        peak_norm: signal.peak_norm,
        shaper: shaper.as_ref().map(|s| ShaperInfo { order: s.order, corner_hz: s.corner_hz }),
        fft_length: p0.fft_length,
        f_d: p0.f_d,
        phi_max: p0.phi_max,
        c_mag: p0.c_mag,
        n_samples: signal.samples.len(),
        signal_sha256: sha256_f64(&signal.samples),
    };
    Ok(Generated { signal, shaper, sidecar })
}

impl PlanSidecar {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s: PlanSidecar = serde_json::from_slice(&std::fs::read(path)?)?;
        if s.schema_version != SIDECAR_SCHEMA {
            return Err(Error::SidecarMismatch(format!("unsupported schema version {}", s.schema_version)));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn plan(&self) -> Result<SequencePlan> {
        let params: Vec<FvnParams> = self
            .seeds
            .iter()
            .map(|&(seed, stream)| FvnParams {
                sample_rate: self.fs,
                sigma_t: self.sigma_t,
                f_d: self.f_d,
                phi_max: self.phi_max,
                c_mag: self.c_mag,
                fft_length: self.fft_length,
                seed,
                stream,
            })
            .collect();
        SequencePlan::from_params(self.mode, &params, self.n_o, self.k_reps)
    }

    /// Rebuilds the signal and checks it against the recorded hash.
    pub fn reconstruct(&self) -> Result<Generated> {
        let plan = self.plan()?;
        let shaper = match &self.shaper {
            Some(info) => {
                if info.corner_hz != PINK_CORNER_HZ {
                    return Err(Error::SidecarMismatch(format!("unsupported shaper corner {} Hz", info.corner_hz)));
                }
                Some(design_pink_shaper(info.order, self.fs as f64)?)
            }
            None => None,
        };
        let signal = build(&plan, self.norm, shaper.as_ref())?;
        if signal.samples.len() != self.n_samples {
            return Err(Error::SidecarMismatch(format!(
                "rebuilt {} samples, sidecar records {}",
                signal.samples.len(),
                self.n_samples
            )));
        }
        let h = sha256_f64(&signal.samples);
        if h != self.signal_sha256 {
            return Err(Error::SidecarMismatch(format!("signal hash {h} differs from {}", self.signal_sha256)));
        }
        Ok(Generated { signal, shaper, sidecar: self.clone() })
    }
}
