//! Analysis report files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decompose::{ComponentLevels, DecompositionReport};
use crate::error::Result;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the analyzed WAV file.
    pub input_sha256: String,
    /// SHA-256 of the plan sidecar file.
    pub plan_sha256: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub provenance: Provenance,
    /// Added to every dBFS value in `levels_display` and the CSV.
    pub spl_offset_db: f64,
    pub levels_dbfs: ComponentLevels,
    pub levels_display: ComponentLevels,
    pub report: DecompositionReport,
}

impl ReportFile {
    pub fn new(report: DecompositionReport, provenance: Provenance, spl_offset_db: f64) -> Self {
        let l = report.component_levels;
        let levels_display = ComponentLevels {
            linear: l.linear + spl_offset_db,
            nonlinear: l.nonlinear + spl_offset_db,
            random: l.random + spl_offset_db,
            preceding: l.preceding.map(|v| v + spl_offset_db),
        };
        ReportFile {
            schema_version: REPORT_SCHEMA,
            provenance,
            spl_offset_db,
            levels_dbfs: l,
            levels_display,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// CSV text with one row per smoothing center; an absent preceding spectrum leaves its column empty.
pub fn csv_string(report: &DecompositionReport, offset_db: f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["frequency_hz", "linear_db", "nonlinear_db", "random_db", "preceding_db"])?;
    for (i, f) in report.frequencies.iter().enumerate() {
        let pre = report
            .preceding_noise_spectrum
            .as_ref()
            .map(|p| format!("{:.6}", p[i] + offset_db))
            .unwrap_or_default();
        w.write_record([
            format!("{f:.6}"),
            format!("{:.6}", report.linear_spectrum[i] + offset_db),
            format!("{:.6}", report.nonlinear_spectrum[i] + offset_db),
            format!("{:.6}", report.random_spectrum[i] + offset_db),
            pre,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn csv_export(report: &DecompositionReport, path: impl AsRef<Path>, offset_db: f64) -> Result<()> {
    std::fs::write(path, csv_string(report, offset_db)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::CleanRegion;

    fn flat(pre: bool) -> DecompositionReport {
        DecompositionReport {
            sample_rate: 8000,
            n_o: 4,
            linear_ir: vec![1.0, 0.0, 0.0, 0.0],
            linear_xpd: None,
            frequencies: vec![100.0, 200.0, 400.0],
            linear_spectrum: vec![-10.0; 3],
            nonlinear_spectrum: vec![-80.0; 3],
            random_spectrum: vec![-120.0; 3],
            preceding_noise_spectrum: pre.then(|| vec![-121.0; 3]),
            component_levels: ComponentLevels { linear: 0.0, nonlinear: -70.0, random: -110.0, preceding: None },
            var_ro: 1e-11,
            var_n: 1e-7,
            strides: 2,
            alignment: 40,
            region: CleanRegion { pulse_indices: vec![64, 96], period_stride: 32, lo: 60, hi: 130 },
        }
    }

    #[test]
    fn constant_spectra_give_constant_columns() {
        let s = csv_string(&flat(true), 0.0).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "frequency_hz,linear_db,nonlinear_db,random_db,preceding_db");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3);
        for r in rows {
            assert!(r.ends_with(",-10.000000,-80.000000,-120.000000,-121.000000"));
        }
        assert!(csv_string(&flat(false), 0.0).unwrap().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn export_is_deterministic_and_offset_applies() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        csv_export(&flat(true), &a, 94.0).unwrap();
        csv_export(&flat(true), &b, 94.0).unwrap();
        let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().contains(",84.000000,"));
        let prov = Provenance { input_sha256: "a".into(), plan_sha256: "b".into(), tool_version: "0".into() };
        let r = ReportFile::new(flat(true), prov, 94.0);
        assert_eq!(r.levels_display.linear, 94.0);
        assert_eq!(r.to_json().unwrap(), r.to_json().unwrap());
    }
}
