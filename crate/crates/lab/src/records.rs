//! CSV row types and an append-only writer.

use std::fs::{File, OpenOptions};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// Version of the metrics CSV column layout.
pub const METRICS_SCHEMA: u32 = 1;

/// One method evaluated on one sweep cell, averaged over its test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub schema: u32,
    pub method: String,
    pub variable: String,
    pub value: f64,
    pub replication: usize,
    pub eta: f64,
    pub aps: usize,
    pub users: usize,
    pub antennas: usize,
    pub lambda: f64,
    /// Certified worst-case sum rate in bits/s/Hz.
    pub worst_case_rate: f64,
    /// Sum rate on the true channels.
    pub true_rate: f64,
    pub q_ave: f64,
    /// Multiplications of one forward pass; empty for iterative baselines.
    pub mult_count: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub value: f64,
    pub replication: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub loss: f64,
    pub rate: f64,
    pub sparsity: f64,
    pub certified_rate: Option<f64>,
    pub q_ave: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub sample: usize,
    pub user: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub mu: f64,
    pub c4_min_eig: f64,
    pub c5_min_eig: f64,
    /// Smallest SINR over the sampled error draws, when sampling was run.
    pub sampled_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub sample: usize,
    pub true_rate: f64,
    pub worst_case_rate: f64,
    pub q_ave: f64,
    pub relaxed_objective: f64,
}

/// Appends serialized rows to a CSV file, writing the header only when
/// the file is new or empty. Rows are flushed one at a time.
pub struct CsvLog {
    writer: csv::Writer<File>,
}

impl CsvLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let fresh = file.metadata()?.len() == 0;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(CsvLog { writer })
    }

    pub fn append<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Reads a metrics CSV and checks the schema version of every row.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let rows: Vec<MetricsRow> = read_rows(path)?;
    if let Some(r) = rows.iter().find(|r| r.schema != METRICS_SCHEMA) {
        bail!("{}: metrics schema {} is not supported", path.display(), r.schema);
    }
    Ok(rows)
}
