//! Monte-Carlo evaluation shared by the command line and the tests. Trial i
//! always draws from `SimRng::new(seed).split(i)`, and per-trial results
//! are merged in trial order, so every figure is independent of the
//! thread count.

use rayon::prelude::*;

use crate::analytics::{rate_with_csi, AnalyticsError};
use crate::channel::{gen_episode_with_g, ConfigError, SystemConfig};
use crate::dataset::Deployment;
use crate::estimation::{estimate_block, run_direct_step, EstimationError, EstimationReport, PilotPlan};
use crate::numerics::{ComplexMatrix, SimRng};
use crate::pipeline::{predict_next, predict_online, OnlineConfig, PipelineError};
use crate::sclstm::Checkpoint;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

/// Pooled squared error and truth energy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorEnergy {
    pub error: f64,
    pub energy: f64,
}

impl ErrorEnergy {
    pub fn nmse(&self) -> f64 {
        self.error / self.energy
    }

    pub fn nmse_db(&self) -> f64 {
        crate::numerics::linear_to_db(self.nmse())
    }

    fn add(&mut self, estimate: &[ComplexMatrix], truth: &[ComplexMatrix]) {
        for (e, t) in estimate.iter().zip(truth) {
            self.error += e.sub(t).expect("same shape").norm_sqr();
            self.energy += t.norm_sqr();
        }
    }

    fn merge(&mut self, other: ErrorEnergy) {
        self.error += other.error;
        self.energy += other.energy;
    }
}

/// Cascaded-channel NMSE of step S+1 for the predictor and the
/// pilot-based alternatives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PredictionScores {
    /// Model prediction from the S estimated steps.
    pub sclstm: Option<ErrorEnergy>,
    /// The step-S estimate reused for step S+1.
    pub last_estimate: ErrorEnergy,
    /// Reduced-phase estimate at step S+1 with the block's Ĝ.
    pub reduced_ls: ErrorEnergy,
    /// Per-user LS estimate at step S+1 with N·K slots.
    pub direct_ls: ErrorEnergy,
    pub trials: usize,
}

fn check_trials(trials: usize) -> Result<(), ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::Invalid("at least one trial is required".into()));
    }
    Ok(())
}

fn prediction_trial(
    ckpt: Option<&Checkpoint>,
    cfg: &SystemConfig,
    deployment: &Deployment,
    plan: &PilotPlan,
    rng: &mut SimRng,
) -> Result<PredictionScores, ExperimentError> {
    let s = cfg.window;
    let sigma2 = cfg.noise_variance();
    let episode = gen_episode_with_g(cfg, deployment.g.clone(), deployment.paths.clone(), s + 1, rng)?;
    let block = estimate_block(&episode, plan, 1, s + 1, sigma2, rng)?;
    let truth = episode.cascaded_at(s + 1);
    let history: Vec<Vec<ComplexMatrix>> = block.cascaded.iter().map(|c| c[..s].to_vec()).collect();
    let last: Vec<ComplexMatrix> = history.iter().map(|c| c[s - 1].clone()).collect();
    let reduced: Vec<ComplexMatrix> = block.cascaded.iter().map(|c| c[s].clone()).collect();
    let direct = run_direct_step(&truth, plan, sigma2, rng)?;
    let mut out = PredictionScores {
        trials: 1,
        ..Default::default()
    };
    if let Some(ckpt) = ckpt {
        let (_, _, predicted) = predict_next(ckpt, &history)?;
        let mut e = ErrorEnergy::default();
        e.add(&predicted, &truth);
        out.sclstm = Some(e);
    }
    out.last_estimate.add(&last, &truth);
    out.reduced_ls.add(&reduced, &truth);
    out.direct_ls.add(&direct, &truth);
    Ok(out)
}

/// Scores `trials` fresh episodes of the deployment of `deployment_seed`
/// at the SNR of `cfg`.
pub fn score_prediction(
    ckpt: Option<&Checkpoint>,
    cfg: &SystemConfig,
    deployment_seed: u64,
    trials: usize,
    seed: u64,
) -> Result<PredictionScores, ExperimentError> {
    cfg.validate()?;
    check_trials(trials)?;
    if let Some(c) = ckpt {
        crate::pipeline::check_compatible(c, cfg)?;
    }
    let deployment = Deployment::for_seed(cfg, deployment_seed);
    let plan = PilotPlan::for_config(cfg)?;
    let root = SimRng::new(seed);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|i| prediction_trial(ckpt, cfg, &deployment, &plan, &mut root.split(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = PredictionScores {
        sclstm: ckpt.map(|_| ErrorEnergy::default()),
        ..Default::default()
    };
    for t in per_trial {
        if let (Some(acc), Some(e)) = (total.sclstm.as_mut(), t.sclstm) {
            acc.merge(e);
        }
        total.last_estimate.merge(t.last_estimate);
        total.reduced_ls.merge(t.reduced_ls);
        total.direct_ls.merge(t.direct_ls);
        total.trials += 1;
    }
    Ok(total)
}

/// Per-trial stage-2 NMSE (cascaded channel over S steps) averaged over
/// `trials` independent episodes, each with its own deployment.
pub fn mean_stage2_nmse(cfg: &SystemConfig, trials: usize, seed: u64) -> Result<f64, ExperimentError> {
    cfg.validate()?;
    check_trials(trials)?;
    let plan = PilotPlan::for_config(cfg)?;
    let root = SimRng::new(seed);
    let values = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i as u64);
            let episode = crate::channel::gen_episode(cfg, cfg.window + 1, &mut rng)?;
            let block = estimate_block(&episode, &plan, 1, cfg.window, cfg.noise_variance(), &mut rng)?;
            Ok(EstimationReport::score(&episode, &plan, block)?.nmse.cascaded)
        })
        .collect::<Result<Vec<f64>, ExperimentError>>()?;
    Ok(values.iter().sum::<f64>() / trials as f64)
}

/// Pooled NMSE of the i-th prediction step of a block, over `trials`
/// online runs of `horizon` steps with one block of `block_len` steps
/// or more.
pub fn online_error_by_offset(
    ckpt: &Checkpoint,
    cfg: &SystemConfig,
    deployment_seed: u64,
    oc: &OnlineConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<ErrorEnergy>, ExperimentError> {
    cfg.validate()?;
    check_trials(trials)?;
    let deployment = Deployment::for_seed(cfg, deployment_seed);
    let root = SimRng::new(seed);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i as u64);
            let episode = gen_episode_with_g(cfg, deployment.g.clone(), deployment.paths.clone(), oc.horizon, &mut rng)?;
            Ok(predict_online(ckpt, cfg, &episode, oc, &mut rng)?.error_by_offset(cfg.window))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let mut acc: Vec<ErrorEnergy> = Vec::new();
    for curve in per_trial {
        if acc.len() < curve.len() {
            acc.resize(curve.len(), ErrorEnergy::default());
        }
        for (a, (error, energy)) in acc.iter_mut().zip(curve) {
            a.merge(ErrorEnergy { error, energy });
        }
    }
    Ok(acc)
}

/// Mean spectral efficiency `Σ_k log₂(1 + SINR_k)` at step S+1 when the
/// BS designs Θ and ZF precoding from each kind of CSI.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateScores {
    pub perfect: f64,
    pub sclstm: Option<f64>,
    pub reduced_ls: f64,
    pub direct_ls: f64,
    pub trials: usize,
}

pub fn score_sum_rate(
    ckpt: Option<&Checkpoint>,
    cfg: &SystemConfig,
    deployment_seed: u64,
    trials: usize,
    seed: u64,
) -> Result<RateScores, ExperimentError> {
    cfg.validate()?;
    check_trials(trials)?;
    if let Some(c) = ckpt {
        crate::pipeline::check_compatible(c, cfg)?;
    }
    let deployment = Deployment::for_seed(cfg, deployment_seed);
    let plan = PilotPlan::for_config(cfg)?;
    let s = cfg.window;
    let sigma2 = cfg.noise_variance();
    let root = SimRng::new(seed);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i as u64);
            let episode = gen_episode_with_g(cfg, deployment.g.clone(), deployment.paths.clone(), s + 1, &mut rng)?;
            let block = estimate_block(&episode, &plan, 1, s + 1, sigma2, &mut rng)?;
            let truth = episode.cascaded_at(s + 1);
            let reduced: Vec<ComplexMatrix> = block.cascaded.iter().map(|c| c[s].clone()).collect();
            let direct = run_direct_step(&truth, &plan, sigma2, &mut rng)?;
            let predicted = match ckpt {
                Some(c) => {
                    let history: Vec<Vec<ComplexMatrix>> = block.cascaded.iter().map(|c| c[..s].to_vec()).collect();
                    Some(rate_with_csi(&truth, &predict_next(c, &history)?.2, sigma2, 1.0)?)
                }
                None => None,
            };
            Ok(RateScores {
                perfect: rate_with_csi(&truth, &truth, sigma2, 1.0)?,
                sclstm: predicted,
                reduced_ls: rate_with_csi(&truth, &reduced, sigma2, 1.0)?,
                direct_ls: rate_with_csi(&truth, &direct, sigma2, 1.0)?,
                trials: 1,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let mut total = RateScores {
        sclstm: ckpt.map(|_| 0.0),
        ..Default::default()
    };
    for t in &per_trial {
        total.perfect += t.perfect;
        total.reduced_ls += t.reduced_ls;
        total.direct_ls += t.direct_ls;
        if let (Some(a), Some(v)) = (total.sclstm.as_mut(), t.sclstm) {
            *a += v;
        }
    }
    let n = trials as f64;
    total.perfect /= n;
    total.reduced_ls /= n;
    total.direct_ls /= n;
    total.sclstm = total.sclstm.map(|v| v / n);
    total.trials = trials;
    Ok(total)
}
