//! Offline experiments: pretraining, stage-wise validation, closed-loop
//! simulation and the sliding-window versus fixed-input comparison.

pub mod compare_post;
pub mod pretrain;
pub mod simulate;
pub mod validate;

use std::fmt::Write as _;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apm::ApmError;
use crate::corpus::CorpusError;
use crate::evolve::EvolveError;
use crate::pollhub::HubError;
use crate::synthvoter::SynthError;
use crate::tilemap::MapError;

pub use compare_post::{compare_post, polls_from_state, simulated_polls, ComparePostConfig, PollSample, SizeResult};
pub use pretrain::{pretrain, PretrainConfig, PretrainOutcome};
pub use simulate::{simulate, SharePoint, SimulateConfig, SimulationOutcome};
pub use validate::{validate, ValidateConfig, ValidationStage};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Apm(#[from] ApmError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error("seed corpus for {0:?} is empty")]
    EmptyCorpus(String),
    #[error("no checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("{cell}: only {found} eligible polls, need {needed}")]
    InsufficientData { cell: String, found: usize, needed: usize },
}

/// Timestamp given to maps created by offline experiments, so outputs do not
/// depend on the wall clock.
pub fn experiment_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap()
}

/// One row of a report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub labels: Vec<String>,
    pub values: Vec<Option<f64>>,
}

/// Table plus configuration echo, printable and serialisable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub label_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, config: serde_json::Value, label_columns: &[&str], value_columns: &[&str]) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            seed,
            config,
            label_columns: label_columns.iter().map(|s| s.to_string()).collect(),
            value_columns: value_columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
            runtime_secs: 0.0,
        }
    }

    pub fn push(&mut self, labels: &[&str], values: Vec<Option<f64>>) {
        self.rows.push(ReportRow {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            values,
        });
    }

    /// Value by row labels and column name.
    pub fn value(&self, labels: &[&str], column: &str) -> Option<f64> {
        let col = self.value_columns.iter().position(|c| c == column)?;
        self.rows
            .iter()
            .find(|r| r.labels.iter().map(String::as_str).eq(labels.iter().copied()))
            .and_then(|r| r.values.get(col).copied().flatten())
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let headers: Vec<&str> = self
            .label_columns
            .iter()
            .chain(&self.value_columns)
            .map(String::as_str)
            .collect();
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.labels
                    .iter()
                    .cloned()
                    .chain(r.values.iter().map(|v| match v {
                        Some(x) => format!("{x:.4}"),
                        None => "-".to_string(),
                    }))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..headers.len())
            .map(|i| {
                cells
                    .iter()
                    .map(|row| row[i].len())
                    .chain(std::iter::once(headers[i].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "{} (seed {})", self.experiment, self.seed);
        let line = |row: &[String], out: &mut String| {
            let padded: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  "));
        };
        let head: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
        line(&head, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&rule, &mut out);
        for row in &cells {
            line(row, &mut out);
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}
