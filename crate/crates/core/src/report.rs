//! Experiment reports with aggregates that are re-verified on load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::lowrank::BoundReport;
use crate::timing::{total_seconds, Stage};

pub const TOOLKIT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Metric names aggregated over records.
pub const METRICS: [&str; 4] = ["recovery_rate", "abs_error", "rel_error", "wall_seconds"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub q: Option<usize>,
    pub delta: Option<f64>,
    pub eps: Option<f64>,
    pub seed: u64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Seed that regenerates this run's input.
    pub seed: u64,
    pub recovery_rate: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    pub timing: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "recovery_rate" => self.recovery_rate,
            "abs_error" => self.abs_error,
            "rel_error" => self.rel_error,
            "wall_seconds" if self.error.is_none() => Some(total_seconds(&self.timing)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Aggregate> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Aggregate {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub toolkit_version: String,
    pub command: String,
    pub method: String,
    pub parameters: Parameters,
    /// Selected columns, 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    pub records: Vec<RunRecord>,
    pub aggregates: BTreeMap<String, Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_fields: Option<BoundReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentReport {
    pub fn new(command: &str, method: &str, parameters: Parameters) -> Self {
        ExperimentReport {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            command: command.to_string(),
            method: method.to_string(),
            parameters,
            indices: None,
            records: Vec::new(),
            aggregates: BTreeMap::new(),
            bound_fields: None,
            notes: Vec::new(),
            error: None,
        }
    }

    /// Aggregates recomputed from the records.
    pub fn compute_aggregates(&self) -> BTreeMap<String, Aggregate> {
        METRICS
            .iter()
            .filter_map(|&name| {
                let vals: Vec<f64> = self.records.iter().filter_map(|r| r.metric(name)).collect();
                Aggregate::of(&vals).map(|a| (name.to_string(), a))
            })
            .collect()
    }

    /// Refreshes the aggregates; call after the records are final.
    pub fn finalize(&mut self) {
        self.aggregates = self.compute_aggregates();
    }

    /// Errors unless the stored aggregates equal a recomputation.
    pub fn verify(&self) -> Result<()> {
        let fresh = self.compute_aggregates();
        if fresh != self.aggregates {
            return Err(Error::Invalid(format!(
                "report aggregates do not match its records: stored {:?}, recomputed {:?}",
                self.aggregates, fresh
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Loads and verifies a report.
    pub fn load(path: &Path) -> Result<Self> {
        let r: ExperimentReport = io::read_json(path)?;
        r.verify().map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(r)
    }
}
