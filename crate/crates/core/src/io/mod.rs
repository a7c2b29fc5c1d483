//! File formats: WAV audio, plan sidecars and analysis reports.

pub mod report;
pub mod sidecar;
pub mod wav;

pub use report::{csv_export, Provenance, ReportFile};
pub use sidecar::{generate, GenConfig, Generated, PlanSidecar};
pub use wav::{wav_read, wav_read_channel, wav_write, SampleFormat, WavData};
