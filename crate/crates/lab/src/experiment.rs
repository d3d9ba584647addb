//! Parameter sweeps: generate data, train the network, run WMMSE, certify
//! both, and tabulate the results.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use cellfree::baseline::{wmmse_solve, WmmseConfig};
use cellfree::certifier::{certify, worst_case_sum_rate};
use cellfree::metrics::{mult_count_rjapcbn, nominal_sinr, q_ave, sum_rate, zero_tolerance};
use cellfree::nn::{NetworkSpec, Pooling, Projection};
use cellfree::sysmodel::{ChannelPair, SystemConfig};
use cellfree::train::{infer, train, Dataset, TrainConfig};
use cellfree::{seeded_rng, CTensor3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::records::{CsvLog, MetricsRow, TimingRow, METRICS_SCHEMA};
use crate::svg::{LineChart, Series};

pub const NETWORK: &str = "rjapcbn";
pub const WMMSE: &str = "wmmse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Eta,
    Users,
    Antennas,
    Lambda,
    Kernel,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Eta => "eta",
            SweepVariable::Users => "users",
            SweepVariable::Antennas => "antennas",
            SweepVariable::Lambda => "lambda",
            SweepVariable::Kernel => "kernel",
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            SweepVariable::Eta => "CSI error level η",
            SweepVariable::Users => "number of users I",
            SweepVariable::Antennas => "antennas per AP M",
            SweepVariable::Lambda => "sparsity weight λ",
            SweepVariable::Kernel => "kernel size k",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, SweepVariable::Users | SweepVariable::Antennas | SweepVariable::Kernel)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "eta" => Ok(SweepVariable::Eta),
            "users" => Ok(SweepVariable::Users),
            "antennas" => Ok(SweepVariable::Antennas),
            "lambda" => Ok(SweepVariable::Lambda),
            "kernel" => Ok(SweepVariable::Kernel),
            _ => Err(format!("unknown sweep variable `{s}` (eta, users, antennas, lambda, kernel)")),
        }
    }
}

/// Architecture knobs of the network, expanded by [`NetSettings::spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSettings {
    pub depth: usize,
    pub kernel: usize,
    pub channels: usize,
    pub amplification: f64,
    pub pooling: Pooling,
    pub projection: Projection,
}

impl Default for NetSettings {
    fn default() -> Self {
        NetSettings {
            depth: 3,
            kernel: 3,
            channels: 8,
            amplification: 50.0,
            pooling: Pooling::Mean,
            projection: Projection::PowerRatio,
        }
    }
}

impl NetSettings {
    pub fn spec(&self, antennas: usize) -> NetworkSpec {
        let mut spec = NetworkSpec::uniform(self.depth, self.kernel, self.kernel, self.channels, antennas);
        spec.amplification = self.amplification;
        spec.pooling = self.pooling;
        spec.projection = self.projection;
        spec
    }

    pub fn mult_count(&self, system: &SystemConfig) -> u64 {
        mult_count_rjapcbn(
            system.num_aps as u64,
            system.num_users as u64,
            system.num_antennas as u64,
            self.channels as u64,
            self.depth as u64,
            self.kernel as u64,
            self.kernel as u64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub replications: usize,
    /// Base seed; replication `r` draws its data and initialization from
    /// [`cell_seed`]`(seed, r)` at every grid value.
    pub seed: u64,
    pub eta: f64,
    pub system: SystemConfig,
    pub train: TrainConfig,
    pub train_size: usize,
    pub test_size: usize,
    pub net: NetSettings,
    pub wmmse_iterations: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.values.is_empty(), "the value grid is empty");
        ensure!(self.replications >= 1, "at least one replication is required");
        ensure!(self.train_size >= 1 && self.test_size >= 1, "train and test sets must be non-empty");
        ensure!(self.wmmse_iterations >= 1, "WMMSE needs at least one iteration");
        for &v in &self.values {
            ensure!(v.is_finite() && v >= 0.0, "grid value {v} is not a finite nonnegative number");
            if self.variable.is_count() {
                ensure!(v >= 1.0 && v.fract() == 0.0, "grid value {v} is not a positive integer");
            }
        }
        for k in 0..self.values.len() {
            let (system, eta, train) = self.cell(k, 0);
            system.validate()?;
            train.validate()?;
            ensure!(eta >= 0.0, "η must be nonnegative");
        }
        Ok(())
    }

    /// System, error level and training setup of grid point `k`,
    /// replication `rep`.
    pub fn cell(&self, k: usize, rep: usize) -> (SystemConfig, f64, TrainConfig) {
        let value = self.values[k];
        let seed = cell_seed(self.seed, rep);
        let mut system = self.system.clone();
        let mut eta = self.eta;
        let mut train = self.train.clone();
        match self.variable {
            SweepVariable::Eta => eta = value,
            SweepVariable::Lambda => train.lambda = value,
            SweepVariable::Users => {
                system.num_users = value as usize;
                let noise = self.system.noise_power.first().copied().unwrap_or(1e-2);
                system.noise_power = vec![noise; system.num_users];
            }
            SweepVariable::Antennas => system.num_antennas = value as usize,
            SweepVariable::Kernel => {}
        }
        system.rng_seed = seed;
        train.seed = seed;
        (system, eta, train)
    }

    fn net_for(&self, k: usize) -> NetSettings {
        let mut net = self.net.clone();
        if self.variable == SweepVariable::Kernel {
            net.kernel = self.values[k] as usize;
        }
        net
    }
}

/// SplitMix64 finalizer of `base + rep`.
pub fn cell_seed(base: u64, rep: usize) -> u64 {
    let mut z = base.wrapping_add((rep as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mean certified worst-case rate, true-channel rate and Q_ave.
pub fn score(samples: &[ChannelPair], beamformers: &[CTensor3], system: &SystemConfig) -> Result<(f64, f64, f64)> {
    ensure!(!samples.is_empty(), "nothing to score");
    let tol = zero_tolerance(system.max_power);
    let (mut worst, mut truth, mut q) = (0.0, 0.0, 0.0);
    for (p, v) in samples.iter().zip(beamformers) {
        worst += worst_case_sum_rate(&certify(&p.est_h, v, &p.per_user_eps, &system.noise_power)?);
        truth += sum_rate(&nominal_sinr(&p.true_h, v, &system.noise_power)?);
        q += q_ave(v, tol);
    }
    let n = samples.len() as f64;
    Ok((worst / n, truth / n, q / n))
}

/// WMMSE beamformers for every sample.
pub fn wmmse_beamformers(samples: &[ChannelPair], system: &SystemConfig, iterations: usize) -> Result<Vec<CTensor3>> {
    let config = WmmseConfig {
        iterations,
        ..WmmseConfig::default()
    };
    samples
        .iter()
        .map(|p| Ok(wmmse_solve(&p.est_h, system.max_power, &system.noise_power, &config)?.beamformer))
        .collect()
}

struct CellResult {
    metrics: Vec<MetricsRow>,
    timings: Vec<TimingRow>,
}

fn run_cell(config: &ExperimentConfig, k: usize, rep: usize) -> Result<CellResult> {
    let (system, eta, train_config) = config.cell(k, rep);
    let value = config.values[k];
    let net = config.net_for(k);
    let mut rng = seeded_rng(system.rng_seed);
    let train_set = Dataset::generate(&system, eta, config.train_size, &mut rng)?;
    let test_set = Dataset::generate(&system, eta, config.test_size, &mut rng)?;
    let spec = net.spec(system.num_antennas);

    let row = |method: &str, (worst, truth, q): (f64, f64, f64), mult_count| MetricsRow {
        schema: METRICS_SCHEMA,
        method: method.into(),
        variable: config.variable.name().into(),
        value,
        replication: rep,
        eta,
        aps: system.num_aps,
        users: system.num_users,
        antennas: system.num_antennas,
        lambda: train_config.lambda,
        worst_case_rate: worst,
        true_rate: truth,
        q_ave: q,
        mult_count,
        seed: system.rng_seed,
    };
    let timing = |method: &str, start: Instant| TimingRow {
        method: method.into(),
        value,
        replication: rep,
        seconds: start.elapsed().as_secs_f64(),
    };

    let start = Instant::now();
    let outcome = train(&train_set, &test_set, &spec, &train_config, |_, _| {}).map_err(|f| anyhow!(f))?;
    let trained = timing("rjapcbn-train", start);
    let start = Instant::now();
    let v = infer(&spec, &outcome.params, &test_set.samples, system.max_power)?;
    let inferred = timing(NETWORK, start);
    let net_row = row(NETWORK, score(&test_set.samples, &v, &system)?, Some(net.mult_count(&system)));

    let start = Instant::now();
    let v = wmmse_beamformers(&test_set.samples, &system, config.wmmse_iterations)?;
    let solved = timing(WMMSE, start);
    let wmmse_row = row(WMMSE, score(&test_set.samples, &v, &system)?, None);

    Ok(CellResult {
        metrics: vec![net_row, wmmse_row],
        timings: vec![trained, inferred, solved],
    })
}

/// Runs the sweep into `dir`: `config.json`, `metrics.csv`, `timings.csv`,
/// `rate.svg` and `q_ave.svg`. Cells run in parallel; rows are written in
/// grid order.
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let metrics_path = dir.join("metrics.csv");
    if metrics_path.exists() {
        bail!("{} already exists; choose a fresh run directory", metrics_path.display());
    }
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;

    let cells: Vec<(usize, usize)> = (0..config.values.len())
        .flat_map(|k| (0..config.replications).map(move |r| (k, r)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(k, r)| run_cell(config, k, r).with_context(|| format!("cell {}={} replication {r}", config.variable, config.values[k])))
        .collect::<Vec<_>>();

    let mut metrics = CsvLog::open(&metrics_path)?;
    let mut timings = CsvLog::open(&dir.join("timings.csv"))?;
    let mut rows = Vec::new();
    for result in results {
        let cell = result?;
        for r in &cell.metrics {
            metrics.append(r)?;
        }
        for t in &cell.timings {
            timings.append(t)?;
        }
        rows.extend(cell.metrics);
    }
    write_charts(&rows, config.variable, dir)?;
    Ok(rows)
}

/// Per-method means over replications, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: String,
    /// `(value, worst-case rate, true rate, Q_ave, replications)`.
    pub points: Vec<(f64, f64, f64, f64, usize)>,
}

pub fn summarize(rows: &[MetricsRow]) -> Vec<Summary> {
    let mut out: Vec<Summary> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|s| s.method == r.method) {
            Some(i) => i,
            None => {
                out.push(Summary {
                    method: r.method.clone(),
                    points: Vec::new(),
                });
                out.len() - 1
            }
        };
        let points = &mut out[idx].points;
        match points.iter_mut().find(|p| p.0 == r.value) {
            Some(p) => {
                p.1 += r.worst_case_rate;
                p.2 += r.true_rate;
                p.3 += r.q_ave;
                p.4 += 1;
            }
            None => points.push((r.value, r.worst_case_rate, r.true_rate, r.q_ave, 1)),
        }
    }
    for s in &mut out {
        for p in &mut s.points {
            let n = p.4 as f64;
            p.1 /= n;
            p.2 /= n;
            p.3 /= n;
        }
    }
    out
}

pub fn write_charts(rows: &[MetricsRow], variable: SweepVariable, dir: &Path) -> Result<()> {
    let summary = summarize(rows);
    let chart = |title: &str, y_label: &str, pick: fn(&(f64, f64, f64, f64, usize)) -> f64| LineChart {
        title: title.into(),
        x_label: variable.axis_label().into(),
        y_label: y_label.into(),
        series: summary
            .iter()
            .map(|s| Series {
                name: s.method.clone(),
                points: s.points.iter().map(|p| (p.0, pick(p))).collect(),
            })
            .collect(),
    };
    fs::write(
        dir.join("rate.svg"),
        chart("Certified worst-case sum rate", "bits/s/Hz", |p| p.1).render(),
    )?;
    fs::write(dir.join("q_ave.svg"), chart("Average serving APs", "Q_ave", |p| p.3).render())?;
    Ok(())
}

/// Plain-text table of [`summarize`].
pub fn format_summary(rows: &[MetricsRow]) -> String {
    let variable = rows.first().map(|r| r.variable.as_str()).unwrap_or("value");
    let mut out = format!(
        "{:<10} {:>10} {:>12} {:>12} {:>8} {:>5}\n",
        "method", variable, "worst-case", "true rate", "Q_ave", "reps"
    );
    for s in summarize(rows) {
        for p in &s.points {
            out.push_str(&format!(
                "{:<10} {:>10} {:>12.4} {:>12.4} {:>8.3} {:>5}\n",
                s.method, p.0, p.1, p.2, p.3, p.4
            ));
        }
    }
    out
}
