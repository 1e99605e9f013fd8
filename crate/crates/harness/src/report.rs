//! Serialisable experiment summary and the files written from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::metrics::{CrlbMetrics, EstimatorMetrics};
use crate::HarnessError;

/// Deterministic for a given config and seed: no timings, no host data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Measurement (and metric) epochs.
    pub times: Vec<f64>,
    pub state_dim: usize,
    pub nees_bounds: (f64, f64),
    /// SHA-256 of each run's measurement sequence.
    pub measurement_hashes: Vec<String>,
    pub estimators: BTreeMap<String, EstimatorMetrics>,
    pub crlb: Option<CrlbMetrics>,
}

/// Mean wall-clock seconds per run for each estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingReport {
    pub mean_seconds: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Json(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Json(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Per-epoch table for one estimator: errors, NEES and the bound.
    pub fn metrics_csv(&self, label: &str) -> Option<String> {
        let m = self.estimators.get(label)?;
        let n = self.state_dim;
        let mut out = String::from("time");
        for i in 0..n {
            write!(out, ",avg_abs_error_x{i}").unwrap();
        }
        for i in 0..n {
            write!(out, ",rms_error_x{i}").unwrap();
        }
        out.push_str(",nees");
        if self.crlb.is_some() {
            for i in 0..n {
                write!(out, ",crlb_sqrt_x{i}").unwrap();
            }
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            write!(out, "{t}").unwrap();
            for v in &m.avg_abs_error[k] {
                write!(out, ",{v:e}").unwrap();
            }
            for v in &m.rms_error[k] {
                write!(out, ",{v:e}").unwrap();
            }
            match m.nees.as_ref().and_then(|v| v[k]) {
                Some(v) => write!(out, ",{v:e}").unwrap(),
                None => out.push(','),
            }
            if let Some(c) = &self.crlb {
                for i in 0..n {
                    match c.sqrt_bound.get(k) {
                        Some(row) => write!(out, ",{:e}", row[i]).unwrap(),
                        None => out.push(','),
                    }
                }
            }
            out.push('\n');
        }
        Some(out)
    }

    /// Writes `report.json`, one `metrics_<estimator>.csv` per estimator and
    /// the figures.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        for label in self.estimators.keys() {
            let csv = self.metrics_csv(label).expect("label exists");
            fs::write(dir.join(format!("metrics_{label}.csv")), csv)?;
        }
        crate::plot::write_figures(self, dir)
    }
}

impl TimingReport {
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Json(e.to_string()))?;
        fs::write(dir.join("timing.json"), text)?;
        Ok(())
    }
}
