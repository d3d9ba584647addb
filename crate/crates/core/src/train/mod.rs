//! Unsupervised training of the clustering/beamforming network.
//!
//! The loss is the batch mean of `−Σ_i log₂(1 + γ̃_i) + λ‖V‖₁` where `γ̃`
//! is the analytic worst-case SINR surrogate. The LMI certificate is only
//! used to report the certified worst-case sum rate on held-out data.

mod adam;
mod gradcheck;
mod loss;

pub use adam::Adam;
pub use gradcheck::{check_gradient, relative_error, GradCheckReport, RELATIVE_FLOOR};
pub use loss::{batch_loss, l1_gradient, surrogate_gamma, surrogate_rate, BatchLoss, LossReport, SampleRate};

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};

use crate::certifier::{certify, worst_case_sum_rate};
use crate::metrics::{q_ave, zero_tolerance};
use crate::nn::{backward, forward_batch, validate_architecture, Forward, Mode, NetParams, NetworkSpec};
use crate::sysmodel::{sample_pair, ChannelPair, SystemConfig};
use crate::{CTensor3, Error, Result};

/// Channel pairs drawn from one system configuration, each on a fresh
/// topology.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub config: SystemConfig,
    pub error_level: f64,
    pub samples: Vec<ChannelPair>,
}

impl Dataset {
    pub fn generate<R: Rng + ?Sized>(config: &SystemConfig, eta: f64, count: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let samples = (0..count).map(|_| sample_pair(config, eta, rng)).collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            config: config.clone(),
            error_level: eta,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `at` samples and the rest.
    pub fn split(mut self, at: usize) -> (Dataset, Dataset) {
        let rest = self.samples.split_off(at.min(self.samples.len()));
        let tail = Dataset {
            config: self.config.clone(),
            error_level: self.error_level,
            samples: rest,
        };
        (self, tail)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Sparsity weight `λ`.
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Held-out samples evaluated after each epoch (`None` = all).
    pub eval_samples: Option<usize>,
    /// Run the LMI certifier during per-epoch evaluation.
    pub certify: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            eval_samples: None,
            certify: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be a finite nonnegative number".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean training-batch loss over the epoch.
    pub train_loss: f64,
    /// Held-out evaluation.
    pub eval: LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub curve: Vec<EpochReport>,
}

/// Training stopped early; `last_good` holds the parameters before the
/// failing step.
#[derive(Debug, Clone, thiserror::Error)]
#[error("training aborted in epoch {epoch}: {error}")]
pub struct TrainFailure {
    pub epoch: usize,
    pub error: Error,
    pub last_good: NetParams,
    pub curve: Vec<EpochReport>,
}

/// Loss, parameter gradient and forward trace of one batch.
pub struct Step {
    pub loss: BatchLoss,
    pub grad: Vec<f64>,
    pub forward: Forward,
}

impl Step {
    /// Kink signature of the network and the loss together.
    pub fn signature(&self, spec: &NetworkSpec) -> Vec<u64> {
        let mut sig = self.forward.kink_signature(spec);
        sig.extend_from_slice(&self.loss.signature);
        sig
    }
}

pub fn loss_and_gradient(
    spec: &NetworkSpec,
    params: &NetParams,
    batch: &[&ChannelPair],
    system: &SystemConfig,
    lambda: f64,
    mode: Mode,
) -> Result<Step> {
    let est: Vec<&CTensor3> = batch.iter().map(|p| &p.est_h).collect();
    let eps: Vec<&[f64]> = batch.iter().map(|p| p.per_user_eps.as_slice()).collect();
    let forward = forward_batch(&est, spec, params, system.max_power, mode)?;
    let loss = batch_loss(&est, &forward.beamformers, &eps, &system.noise_power, lambda)?;
    let grad = backward(spec, params, &forward, &loss.grads)?;
    Ok(Step { loss, grad, forward })
}

/// Projected beamformers of `samples` in evaluation mode.
pub fn infer(spec: &NetworkSpec, params: &NetParams, samples: &[ChannelPair], max_power: f64) -> Result<Vec<CTensor3>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let est: Vec<&CTensor3> = chunk.iter().map(|p| &p.est_h).collect();
        out.extend(forward_batch(&est, spec, params, max_power, Mode::Eval)?.beamformers);
    }
    Ok(out)
}

/// Certified worst-case sum rate of each beamformer.
pub fn certified_rates(samples: &[ChannelPair], beamformers: &[CTensor3], noise: &[f64]) -> Result<Vec<f64>> {
    samples
        .iter()
        .zip(beamformers)
        .map(|(p, v)| Ok(worst_case_sum_rate(&certify(&p.est_h, v, &p.per_user_eps, noise)?)))
        .collect()
}

/// Loss components of given beamformers, with optional certification.
pub fn report_for(
    samples: &[ChannelPair],
    beamformers: &[CTensor3],
    system: &SystemConfig,
    lambda: f64,
    certified: bool,
) -> Result<LossReport> {
    if samples.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let est: Vec<&CTensor3> = samples.iter().map(|p| &p.est_h).collect();
    let eps: Vec<&[f64]> = samples.iter().map(|p| p.per_user_eps.as_slice()).collect();
    let mut report = batch_loss(&est, beamformers, &eps, &system.noise_power, lambda)?.report;
    let tol = zero_tolerance(system.max_power);
    report.q_ave = beamformers.iter().map(|v| q_ave(v, tol)).sum::<f64>() / beamformers.len() as f64;
    if certified {
        let rates = certified_rates(samples, beamformers, &system.noise_power)?;
        report.certified_rate = Some(rates.iter().sum::<f64>() / rates.len() as f64);
    }
    Ok(report)
}

/// Evaluation-mode loss report (hard gate, running statistics).
pub fn evaluate(
    spec: &NetworkSpec,
    params: &NetParams,
    samples: &[ChannelPair],
    system: &SystemConfig,
    lambda: f64,
    certified: bool,
) -> Result<LossReport> {
    let v = infer(spec, params, samples, system.max_power)?;
    report_for(samples, &v, system, lambda, certified)
}

/// Glorot-initialized parameters for `spec` from `seed`.
pub fn initial_params(spec: &NetworkSpec, antennas: usize, seed: u64) -> NetParams {
    NetParams::init(spec, antennas, &mut crate::seeded_rng(seed))
}

/// Mini-batch Adam on the surrogate loss. `observer` sees every epoch
/// report and the parameters after that epoch.
pub fn train(
    train_set: &Dataset,
    test_set: &Dataset,
    spec: &NetworkSpec,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochReport, &NetParams),
) -> core::result::Result<TrainOutcome, Box<TrainFailure>> {
    let system = &train_set.config;
    let m = system.num_antennas;
    let init = initial_params(spec, m, config.seed);
    let fail = |epoch, error, last_good: &NetParams, curve: &Vec<EpochReport>| {
        Box::new(TrainFailure {
            epoch,
            error,
            last_good: last_good.clone(),
            curve: curve.clone(),
        })
    };
    let mut curve = Vec::new();
    let setup = config
        .validate()
        .and_then(|_| system.validate())
        .and_then(|_| validate_architecture(spec, system.num_aps, system.num_users, m).map_err(Error::Architecture))
        .and_then(|_| {
            if train_set.is_empty() || test_set.is_empty() {
                Err(Error::Config("training and test sets must be non-empty".into()))
            } else {
                Ok(())
            }
        });
    if let Err(e) = setup {
        return Err(fail(0, e, &init, &curve));
    }

    let mut params = init;
    let mut adam = Adam::new(params.values.len());
    // shuffling stream is separate from the initialization stream
    let mut rng = crate::Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let eval_count = config.eval_samples.unwrap_or(test_set.len()).min(test_set.len()).max(1);
    let eval_set = &test_set.samples[..eval_count];

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&ChannelPair> = chunk.iter().map(|&k| &train_set.samples[k]).collect();
            let step = match loss_and_gradient(spec, &params, &batch, system, config.lambda, Mode::Train) {
                Ok(s) => s,
                Err(e) => return Err(fail(epoch, e, &params, &curve)),
            };
            if !step.loss.report.total.is_finite() {
                let e = Error::NonFinite(alloc::format!("batch loss {}", step.loss.report.total));
                return Err(fail(epoch, e, &params, &curve));
            }
            let mut next = params.clone();
            if let Err(e) = adam.update(&mut next.values, &step.grad, config.learning_rate) {
                return Err(fail(epoch, e, &params, &curve));
            }
            next.running_mean = step.forward.running_mean;
            next.running_var = step.forward.running_var;
            if !next.is_finite() {
                let e = Error::NonFinite("parameters diverged".into());
                return Err(fail(epoch, e, &params, &curve));
            }
            params = next;
            total += step.loss.report.total;
            batches += 1;
        }
        let eval = match evaluate(spec, &params, eval_set, system, config.lambda, config.certify) {
            Ok(r) => r,
            Err(e) => return Err(fail(epoch, e, &params, &curve)),
        };
        let report = EpochReport {
            epoch,
            train_loss: total / batches.max(1) as f64,
            eval,
        };
        observer(&report, &params);
        curve.push(report);
    }
    Ok(TrainOutcome { params, curve })
}

/// Finite-difference check of the full training loss on `probes`
/// randomly chosen parameters.
pub fn gradient_check<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &NetParams,
    batch: &[&ChannelPair],
    system: &SystemConfig,
    lambda: f64,
    probes: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let base = loss_and_gradient(spec, params, batch, system, lambda, Mode::Train)?;
    let n = params.values.len();
    let picks = index::sample(rng, n, probes.min(n)).into_vec();
    let mut trial = params.clone();
    check_gradient(
        |theta| {
            trial.values.copy_from_slice(theta);
            let s = loss_and_gradient(spec, &trial, batch, system, lambda, Mode::Train)?;
            Ok((s.loss.report.total, s.signature(spec)))
        },
        &params.values,
        &base.grad,
        &picks,
    )
}
