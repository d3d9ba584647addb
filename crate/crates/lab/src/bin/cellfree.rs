use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use cellfree::certifier::{certify, sampling_oracle, worst_case_sum_rate};
use cellfree::metrics::{nominal_sinr, q_ave, sum_rate, zero_tolerance};
use cellfree::nn::{Pooling, Projection};
use cellfree::sysmodel::{ChannelModel, SystemConfig};
use cellfree::train::{infer, train, Dataset, TrainConfig};
use cellfree::{seeded_rng, CTensor3};
use cellfree_lab::checkpoint::Checkpoint;
use cellfree_lab::experiment::{format_summary, write_charts, wmmse_beamformers, ExperimentConfig, NetSettings, SweepVariable};
use cellfree_lab::records::{read_metrics, BaselineRow, CertificateRow, CsvLog, CurveRow};
use cellfree_lab::svg::{LineChart, Series};
use cellfree_lab::{dataset, run};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Robust AP clustering and beamforming laboratory.
#[derive(Parser)]
#[command(name = "cellfree", version)]
struct Cli {
    /// Root directory for all outputs.
    #[arg(long, env = "CELLFREE_OUT", default_value = "cellfree-out", global = true)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test channel datasets.
    GenData(GenData),
    /// Train the clustering network on a generated dataset.
    Train(TrainCmd),
    /// Certify worst-case SINRs of a trained network or of WMMSE.
    Certify(CertifyCmd),
    /// Run WMMSE on a dataset and score it.
    Baseline(BaselineCmd),
    /// Run a parameter sweep.
    Sweep(SweepCmd),
    /// Summarize a sweep directory and redraw its charts.
    Report(ReportCmd),
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// Number of access points Q.
    #[arg(long, default_value_t = 4)]
    aps: usize,
    /// Number of users I.
    #[arg(long, default_value_t = 4)]
    users: usize,
    /// Antennas per access point M.
    #[arg(long, default_value_t = 2)]
    antennas: usize,
    /// Per-AP power budget in watts.
    #[arg(long, default_value_t = 1.0)]
    max_power: f64,
    /// Noise power in watts, one value for all users or a comma list.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    noise_power: Vec<f64>,
    /// Side of the square deployment area in meters.
    #[arg(long, default_value_t = 1000.0)]
    area_side: f64,
    /// Shadowing standard deviation in dB.
    #[arg(long, default_value_t = cellfree::sysmodel::SHADOW_STD_DB)]
    shadow_std_db: f64,
    /// Minimum AP-user distance in meters.
    #[arg(long, default_value_t = cellfree::sysmodel::MIN_DISTANCE)]
    min_distance: f64,
    /// Disable Rayleigh small-scale fading.
    #[arg(long)]
    no_small_scale: bool,
    /// CSI error level η.
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
}

impl SystemArgs {
    fn config(&self, seed: u64) -> Result<SystemConfig> {
        let noise_power = match self.noise_power.as_slice() {
            [s] => vec![*s; self.users],
            list => list.to_vec(),
        };
        let config = SystemConfig {
            num_aps: self.aps,
            num_users: self.users,
            num_antennas: self.antennas,
            max_power: self.max_power,
            noise_power,
            area_side: self.area_side,
            rng_seed: seed,
            channel: ChannelModel {
                shadow_std_db: self.shadow_std_db,
                small_scale: !self.no_small_scale,
                min_distance: self.min_distance,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    Mean,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    PowerRatio,
    NormRatio,
}

#[derive(Args, Clone)]
struct NetArgs {
    /// Number of convolutional units L.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Square kernel size.
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Hidden channels C.
    #[arg(long, default_value_t = 8)]
    channels: usize,
    /// Gate sharpness k.
    #[arg(long, default_value_t = 50.0)]
    amplification: f64,
    #[arg(long, value_enum, default_value = "mean")]
    pooling: PoolingArg,
    #[arg(long, value_enum, default_value = "power-ratio")]
    projection: ProjectionArg,
}

impl NetArgs {
    fn settings(&self) -> NetSettings {
        NetSettings {
            depth: self.depth,
            kernel: self.kernel,
            channels: self.channels,
            amplification: self.amplification,
            pooling: match self.pooling {
                PoolingArg::Mean => Pooling::Mean,
                PoolingArg::Max => Pooling::Max,
            },
            projection: match self.projection {
                ProjectionArg::PowerRatio => Projection::PowerRatio,
                ProjectionArg::NormRatio => Projection::NormRatio,
            },
        }
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Sparsity weight λ.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Held-out samples evaluated after each epoch.
    #[arg(long, default_value_t = 50)]
    eval_samples: usize,
    /// Skip certification in the per-epoch evaluation.
    #[arg(long)]
    no_certify: bool,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig> {
        let config = TrainConfig {
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            eval_samples: Some(self.eval_samples),
            certify: !self.no_certify,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    seed: u64,
    /// Run directory name under the output root.
    #[arg(long, default_value = "data")]
    name: String,
    #[arg(long, default_value_t = 500)]
    train_size: usize,
    #[arg(long, default_value_t = 200)]
    test_size: usize,
    #[command(flatten)]
    system: SystemArgs,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    seed: u64,
    /// Directory holding train.cfds and test.cfds.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "train")]
    name: String,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct CertifyCmd {
    #[arg(long)]
    seed: u64,
    /// Directory holding test.cfds.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint of the network to certify.
    #[arg(long, conflicts_with = "wmmse", required_unless_present = "wmmse")]
    checkpoint: Option<PathBuf>,
    /// Certify WMMSE beamformers instead of a network.
    #[arg(long)]
    wmmse: bool,
    #[arg(long, default_value_t = cellfree::baseline::DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Certify only the first N test samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Error draws per user for the sampling cross-check (0 disables it).
    #[arg(long, default_value_t = 0)]
    oracle_draws: usize,
    #[arg(long, default_value = "certify")]
    name: String,
}

#[derive(Args)]
struct BaselineCmd {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = cellfree::baseline::DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value = "baseline")]
    name: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariableArg {
    Eta,
    Users,
    Antennas,
    Lambda,
    Kernel,
}

#[derive(Args)]
struct SweepCmd {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum)]
    vary: VariableArg,
    /// Comma-separated grid.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    replications: usize,
    #[arg(long, default_value_t = 500)]
    train_size: usize,
    #[arg(long, default_value_t = 200)]
    test_size: usize,
    #[arg(long, default_value_t = cellfree::baseline::DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value = "sweep")]
    name: String,
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct ReportCmd {
    /// Sweep directory containing metrics.csv.
    #[arg(long)]
    run: PathBuf,
}

fn run_dir(root: &Path, name: &str) -> Result<PathBuf> {
    let dir = root.join(name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn load_split(dir: &Path, split: &str) -> Result<Dataset> {
    let path = dir.join(format!("{split}.cfds"));
    let (data, _) = dataset::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok(data)
}

fn gen_data(root: &Path, cmd: &GenData) -> Result<()> {
    let config = cmd.system.config(cmd.seed)?;
    let dir = run_dir(root, &cmd.name)?;
    let mut rng = seeded_rng(cmd.seed);
    for (split, count) in [("train", cmd.train_size), ("test", cmd.test_size)] {
        let data = Dataset::generate(&config, cmd.system.eta, count, &mut rng)?;
        dataset::save(&dir.join(format!("{split}.cfds")), &data, cmd.seed)?;
    }
    fs::write(dir.join("system.json"), serde_json::to_string_pretty(&config)?)?;
    println!("wrote {} train and {} test samples to {}", cmd.train_size, cmd.test_size, dir.display());
    Ok(())
}

fn train_cmd(root: &Path, cmd: &TrainCmd) -> Result<()> {
    let train_set = load_split(&cmd.data, "train")?;
    let test_set = load_split(&cmd.data, "test")?;
    let system = train_set.config.clone();
    let config = cmd.train.config(cmd.seed)?;
    let spec = cmd.net.settings().spec(system.num_antennas);
    let dir = run_dir(root, &cmd.name)?;
    let curve_path = dir.join("curve.csv");
    if curve_path.exists() {
        bail!("{} already exists; choose a fresh run name", curve_path.display());
    }
    let mut curve = CsvLog::open(&curve_path)?;
    let mut io_error = None;
    let result = train(&train_set, &test_set, &spec, &config, |report, params| {
        let row = CurveRow {
            epoch: report.epoch,
            loss: report.eval.total,
            rate: report.eval.rate,
            sparsity: report.eval.sparsity,
            certified_rate: report.eval.certified_rate,
            q_ave: report.eval.q_ave,
        };
        let written = curve.append(&row).and_then(|_| {
            Checkpoint::new(report.epoch, &system, &config, &spec, params)
                .save(&dir.join(format!("checkpoint-{:04}.json", report.epoch)))
        });
        if let Err(e) = written {
            io_error.get_or_insert(e);
        }
        println!(
            "epoch {:>4}  train loss {:>10.4}  rate {:>8.4}  certified {:>8}  Q_ave {:.3}",
            report.epoch,
            report.train_loss,
            report.eval.rate,
            report.eval.certified_rate.map_or("-".into(), |c| format!("{c:.4}")),
            report.eval.q_ave
        );
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    let outcome = match result {
        Ok(o) => o,
        Err(failure) => {
            let last = Checkpoint::new(failure.epoch.saturating_sub(1), &system, &config, &spec, &failure.last_good);
            last.save(&dir.join("checkpoint.json"))?;
            return Err(anyhow!(failure).context(format!("last good parameters saved in {}", dir.display())));
        }
    };
    Checkpoint::new(config.epochs, &system, &config, &spec, &outcome.params).save(&dir.join("checkpoint.json"))?;
    let chart = |title: &str, pick: fn(&cellfree::train::EpochReport) -> f64| LineChart {
        title: title.into(),
        x_label: "epoch".into(),
        y_label: title.into(),
        series: vec![Series {
            name: "held-out".into(),
            points: outcome.curve.iter().map(|r| (r.epoch as f64, pick(r))).collect(),
        }],
    };
    fs::write(dir.join("loss.svg"), chart("loss", |r| r.eval.total).render())?;
    fs::write(dir.join("q_ave.svg"), chart("Q_ave", |r| r.eval.q_ave).render())?;
    println!("checkpoint written to {}", dir.join("checkpoint.json").display());
    Ok(())
}

fn certify_cmd(root: &Path, cmd: &CertifyCmd) -> Result<()> {
    let mut test_set = load_split(&cmd.data, "test")?;
    if let Some(n) = cmd.samples {
        test_set.samples.truncate(n);
    }
    let system = test_set.config.clone();
    let beamformers: Vec<CTensor3> = match &cmd.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let c = &ck.system;
            if (c.num_aps, c.num_users, c.num_antennas) != (system.num_aps, system.num_users, system.num_antennas) {
                bail!("checkpoint and dataset dimensions differ");
            }
            infer(&ck.spec, &ck.params, &test_set.samples, system.max_power)?
        }
        None => wmmse_beamformers(&test_set.samples, &system, cmd.iterations)?,
    };
    let dir = run_dir(root, &cmd.name)?;
    let path = dir.join("certificates.csv");
    if path.exists() {
        bail!("{} already exists; choose a fresh run name", path.display());
    }
    let mut log = CsvLog::open(&path)?;
    let mut rng = seeded_rng(cmd.seed);
    let (mut total, mut violations) = (0.0, 0usize);
    for (s, (pair, v)) in test_set.samples.iter().zip(&beamformers).enumerate() {
        let cert = certify(&pair.est_h, v, &pair.per_user_eps, &system.noise_power)?;
        total += worst_case_sum_rate(&cert);
        for (i, u) in cert.users.iter().enumerate() {
            let sampled_min = (cmd.oracle_draws > 0).then(|| {
                let h = pair.est_h.user_vector(i);
                sampling_oracle(&h, v, i, pair.per_user_eps[i], system.noise_power[i], cmd.oracle_draws, &mut rng)
            });
            if sampled_min.is_some_and(|m| u.gamma > m + 1e-6) {
                violations += 1;
            }
            log.append(&CertificateRow {
                sample: s,
                user: i,
                alpha: u.alpha,
                beta: u.beta,
                gamma: u.gamma,
                delta: u.delta,
                mu: u.mu,
                c4_min_eig: u.c4_min_eig,
                c5_min_eig: u.c5_min_eig,
                sampled_min,
            })?;
        }
    }
    println!(
        "mean certified worst-case sum rate {:.4} bits/s/Hz over {} samples",
        total / test_set.len().max(1) as f64,
        test_set.len()
    );
    if cmd.oracle_draws > 0 {
        println!("sampling cross-check: {violations} violations");
    }
    println!("certificates written to {}", path.display());
    Ok(())
}

fn baseline_cmd(root: &Path, cmd: &BaselineCmd) -> Result<()> {
    let test_set = load_split(&cmd.data, "test")?;
    let system = test_set.config.clone();
    let config = cellfree::baseline::WmmseConfig {
        iterations: cmd.iterations,
        ..Default::default()
    };
    let dir = run_dir(root, &cmd.name)?;
    let path = dir.join("baseline.csv");
    if path.exists() {
        bail!("{} already exists; choose a fresh run name", path.display());
    }
    let mut log = CsvLog::open(&path)?;
    let tol = zero_tolerance(system.max_power);
    let (mut worst, mut truth) = (0.0, 0.0);
    for (s, pair) in test_set.samples.iter().enumerate() {
        let sol = cellfree::baseline::wmmse_solve(&pair.est_h, system.max_power, &system.noise_power, &config)?;
        let v = &sol.beamformer;
        let row = BaselineRow {
            sample: s,
            true_rate: sum_rate(&nominal_sinr(&pair.true_h, v, &system.noise_power)?),
            worst_case_rate: worst_case_sum_rate(&certify(&pair.est_h, v, &pair.per_user_eps, &system.noise_power)?),
            q_ave: q_ave(v, tol),
            relaxed_objective: sol.state.objective,
        };
        worst += row.worst_case_rate;
        truth += row.true_rate;
        log.append(&row)?;
    }
    let n = test_set.len().max(1) as f64;
    println!(
        "WMMSE (seed {}): worst-case {:.4}, true-channel {:.4} bits/s/Hz over {} samples",
        cmd.seed,
        worst / n,
        truth / n,
        test_set.len()
    );
    Ok(())
}

fn sweep_cmd(root: &Path, cmd: &SweepCmd) -> Result<()> {
    let config = ExperimentConfig {
        variable: match cmd.vary {
            VariableArg::Eta => SweepVariable::Eta,
            VariableArg::Users => SweepVariable::Users,
            VariableArg::Antennas => SweepVariable::Antennas,
            VariableArg::Lambda => SweepVariable::Lambda,
            VariableArg::Kernel => SweepVariable::Kernel,
        },
        values: cmd.values.clone(),
        replications: cmd.replications,
        seed: cmd.seed,
        eta: cmd.system.eta,
        system: cmd.system.config(cmd.seed)?,
        train: cmd.train.config(cmd.seed)?,
        train_size: cmd.train_size,
        test_size: cmd.test_size,
        net: cmd.net.settings(),
        wmmse_iterations: cmd.iterations,
    };
    let dir = root.join(&cmd.name);
    let rows = run(&config, &dir)?;
    print!("{}", format_summary(&rows));
    println!("results written to {}", dir.display());
    Ok(())
}

fn report_cmd(cmd: &ReportCmd) -> Result<()> {
    let rows = read_metrics(&cmd.run.join("metrics.csv"))?;
    let Some(first) = rows.first() else {
        bail!("{} holds no metrics", cmd.run.display());
    };
    let variable: SweepVariable = first.variable.parse().map_err(|e: String| anyhow!(e))?;
    write_charts(&rows, variable, &cmd.run)?;
    print!("{}", format_summary(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(c) => gen_data(&cli.out, c),
        Command::Train(c) => train_cmd(&cli.out, c),
        Command::Certify(c) => certify_cmd(&cli.out, c),
        Command::Baseline(c) => baseline_cmd(&cli.out, c),
        Command::Sweep(c) => sweep_cmd(&cli.out, c),
        Command::Report(c) => report_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
