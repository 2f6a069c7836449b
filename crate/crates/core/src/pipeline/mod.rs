//! Online continuous prediction: stages 1-2 at the start of every large
//! coherence block, then SCLSTM predictions that feed back into the
//! sliding window, anchored to `ĝ₁` after each step.

mod refine;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Episode, SystemConfig};
use crate::estimation::{estimate_block, EstimationError, PilotPlan};
use crate::numerics::{ComplexMatrix, NumericsError, SimRng};
use crate::sclstm::{sclstm_forward, Checkpoint, Dims, SampleInput, SclstmError};

pub use refine::{decision_directed_refine, qpsk, synth_data_block, RefineOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("scaling correction is ill-conditioned at element {index}")]
    IllConditioned { index: usize },
    #[error("checkpoint incompatible with the configuration: {0}")]
    Incompatible(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Model(#[from] SclstmError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Relative modulus below which an anchor entry counts as zero.
pub const ANCHOR_TOLERANCE: f64 = 1e-12;

/// Removes the diagonal ambiguity of `(G̃, h̃_k)` by forcing the first row
/// of G to equal `ĝ₁`: `Δ[n] = G̃[0,n]/ĝ₁[n]`, `Ĝ = G̃Δ⁻¹`, `ĥ_k = Δh̃_k`.
pub fn correct_scaling(
    g_tilde: &ComplexMatrix,
    h_tilde: &[ComplexMatrix],
    g1_hat: &ComplexMatrix,
) -> Result<(ComplexMatrix, Vec<ComplexMatrix>), PipelineError> {
    let (m, n) = g_tilde.shape();
    if m == 0 || g1_hat.len() != n || h_tilde.iter().any(|h| h.len() != n) {
        return Err(PipelineError::Invalid(format!(
            "G̃ is {m}x{n}, ĝ₁ has {} entries",
            g1_hat.len()
        )));
    }
    let g1 = g1_hat.as_slice();
    let row_max = (0..n).map(|c| g_tilde[(0, c)].norm()).fold(0.0, f64::max);
    let g1_max = g1.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut delta = Vec::with_capacity(n);
    for (c, &g1c) in g1.iter().enumerate() {
        let top = g_tilde[(0, c)];
        if top.norm() <= ANCHOR_TOLERANCE * row_max || g1c.norm() <= ANCHOR_TOLERANCE * g1_max || row_max == 0.0 {
            return Err(PipelineError::IllConditioned { index: c });
        }
        delta.push(top / g1c);
    }
    let g_hat = ComplexMatrix::from_fn(m, n, |r, c| if r == 0 { g1[c] } else { g_tilde[(r, c)] / delta[c] });
    let h_hat = h_tilde
        .iter()
        .map(|h| ComplexMatrix::column(h.iter().zip(&delta).map(|(z, d)| z * d).collect()))
        .collect();
    Ok((g_hat, h_hat))
}

/// Where the anchor `ĝ₁` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum G1Source {
    Genie,
    Stage1,
    /// True `g₁` plus circular Gaussian error of the given NMSE.
    Perturbed { nmse: f64 },
}

/// Source of the S channels that open each block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    Stage2,
    /// True cascaded channels, for isolating the model.
    Genie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    /// Steps to run, T_C.
    pub horizon: usize,
    /// Steps per large coherence block, T_L.
    pub block_len: usize,
    pub g1_source: G1Source,
    pub estimates: EstimateSource,
    /// Data slots per step for decision-directed refinement; none disables it.
    pub refine_slots: Option<usize>,
    /// Feed refined rather than predicted channels back into the window.
    pub refill_refined: bool,
}

impl OnlineConfig {
    pub fn new(horizon: usize, block_len: usize) -> Self {
        Self {
            horizon,
            block_len,
            g1_source: G1Source::Stage1,
            estimates: EstimateSource::Stage2,
            refine_slots: None,
            refill_refined: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Estimate,
    Predict,
}

impl StepKind {
    fn as_str(self) -> &'static str {
        match self {
            StepKind::Estimate => "estimate",
            StepKind::Predict => "predict",
        }
    }
}

/// One (step, user) row of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub k: usize,
    /// 1-based large-block index.
    pub block: usize,
    pub kind: StepKind,
    pub error_energy: f64,
    pub truth_energy: f64,
    pub nmse_cascaded: f64,
    pub nmse_g: f64,
    pub nmse_h: f64,
    pub refined: bool,
    pub nmse_refined: Option<f64>,
    pub pilots_cumulative: usize,
}

/// Per-block outputs: the anchored `Ĝ` of the block's first prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSummary {
    pub start: usize,
    pub g1_hat: ComplexMatrix,
    pub g_hat: Option<ComplexMatrix>,
    pub pilot_slots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub records: Vec<StepRecord>,
    pub blocks: Vec<BlockSummary>,
    /// `cascaded[t-1][k]`: the channel the receiver holds at step t.
    pub cascaded: Vec<Vec<ComplexMatrix>>,
    pub pilots_total: usize,
}

impl PredictionTrace {
    /// Steps at which stages 1-2 ran.
    pub fn reruns(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.start).collect()
    }

    /// Pooled NMSE of the i-th prediction step of every block (i from 0).
    pub fn error_by_offset(&self, window: usize) -> Vec<(f64, f64)> {
        let mut acc: Vec<(f64, f64)> = Vec::new();
        for r in self.records.iter().filter(|r| r.kind == StepKind::Predict) {
            let start = self.blocks[r.block - 1].start;
            let i = r.t - start - window;
            if acc.len() <= i {
                acc.resize(i + 1, (0.0, 0.0));
            }
            acc[i].0 += r.error_energy;
            acc[i].1 += r.truth_energy;
        }
        acc
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn nmse_single(est: &ComplexMatrix, truth: &ComplexMatrix) -> f64 {
    ratio(est.sub(truth).map(|d| d.norm_sqr()).unwrap_or(f64::NAN), truth.norm_sqr())
}

/// Checks the checkpoint against the scenario dimensions.
pub fn check_compatible(ckpt: &Checkpoint, cfg: &SystemConfig) -> Result<(), PipelineError> {
    let want = Dims::from_config(cfg);
    let have = ckpt.params.dims;
    if want != have {
        return Err(PipelineError::Incompatible(format!(
            "model is M={} N={} K={} S={}, scenario is M={} N={} K={} S={}",
            have.antennas, have.elements, have.users, have.window, want.antennas, want.elements, want.users, want.window
        )));
    }
    Ok(())
}

/// Runs the model on unscaled history `window[k][s]` and returns
/// `(G̃, h̃_k, H̃_k)` in channel units.
pub fn predict_next(
    ckpt: &Checkpoint,
    window: &[Vec<ComplexMatrix>],
) -> Result<(ComplexMatrix, Vec<ComplexMatrix>, Vec<ComplexMatrix>), PipelineError> {
    let input = SampleInput::from_history(window, ckpt.scale);
    let out = sclstm_forward(&ckpt.params, &input)?;
    let inv = 1.0 / ckpt.scale;
    let cascaded = out.cascaded.iter().map(|c| c.scale_real(inv)).collect();
    Ok((out.g_tilde.scale_real(inv), out.h_tilde, cascaded))
}

fn anchor(g1: &ComplexMatrix, source: G1Source, stage1: &ComplexMatrix, rng: &mut SimRng) -> ComplexMatrix {
    match source {
        G1Source::Genie => g1.clone(),
        G1Source::Stage1 => stage1.clone(),
        G1Source::Perturbed { nmse } => {
            let var = nmse * g1.norm_sqr() / g1.len() as f64;
            let noisy = g1.iter().map(|&z| z + rng.complex_normal(var)).collect();
            ComplexMatrix::new(g1.rows(), g1.cols(), noisy).expect("same shape")
        }
    }
}

/// The online state machine over steps `1..=horizon` of `episode`.
///
/// Block b starts at step `1 + (b-1)·T_L`. Its first S steps come from
/// stages 1-2 (or the genie); every later step of the block is predicted
/// from the window of the S most recent channels, which then slides to
/// include the new prediction. The block's `Ĝ` is the first decomposition
/// that `ĝ₁` can anchor; until then the G and h errors are undefined (NaN).
pub fn predict_online(
    ckpt: &Checkpoint,
    cfg: &SystemConfig,
    episode: &Episode,
    oc: &OnlineConfig,
    rng: &mut SimRng,
) -> Result<PredictionTrace, PipelineError> {
    check_compatible(ckpt, cfg)?;
    let s = cfg.window;
    if oc.horizon < s + 1 {
        return Err(PipelineError::Invalid(format!("horizon {} is shorter than S+1 = {}", oc.horizon, s + 1)));
    }
    if oc.block_len < s + 1 {
        return Err(PipelineError::Invalid(format!("block length {} is shorter than S+1 = {}", oc.block_len, s + 1)));
    }
    if episode.steps() < oc.horizon {
        return Err(PipelineError::Invalid(format!(
            "episode has {} steps, horizon is {}",
            episode.steps(),
            oc.horizon
        )));
    }
    if episode.users() != cfg.users {
        return Err(PipelineError::Invalid("episode user count differs from the configuration".into()));
    }
    let plan = PilotPlan::for_config(cfg)?;
    let sigma2 = cfg.noise_variance();
    let users = cfg.users;
    let g1_true = episode.g.row_at(0);
    let data_patterns = oc.refine_slots.map(|t| plan.patterns(t));
    let constellation = qpsk();

    let mut records = Vec::new();
    let mut blocks = Vec::new();
    let mut held: Vec<Vec<ComplexMatrix>> = Vec::with_capacity(oc.horizon);
    let mut pilots = 0usize;
    let mut t = 1;
    while t <= oc.horizon {
        let start = t;
        let block = blocks.len() + 1;
        let est_len = s.min(oc.horizon - t + 1);
        let slots = plan.block_slots(est_len);
        let (mut window, g_est, g1_stage1) = match oc.estimates {
            EstimateSource::Stage2 => {
                let est = estimate_block(episode, &plan, start, est_len, sigma2, rng)?;
                (est.cascaded, est.g_hat, est.g1_hat)
            }
            EstimateSource::Genie => {
                let truth = (0..users)
                    .map(|k| (start..start + est_len).map(|i| episode.cascaded(k, i).clone()).collect())
                    .collect();
                (truth, episode.g.clone(), g1_true.clone())
            }
        };
        pilots += slots;
        let g1_hat = anchor(&g1_true, oc.g1_source, &g1_stage1, rng);
        let nmse_g_est = nmse_single(&g_est, &episode.g);
        for i in 0..est_len {
            let step = start + i;
            held.push((0..users).map(|k| window[k][i].clone()).collect());
            for (k, w) in window.iter().enumerate() {
                let truth = episode.cascaded(k, step);
                let err = w[i].sub(truth).map_err(|e| PipelineError::Invalid(e.to_string()))?.norm_sqr();
                records.push(StepRecord {
                    t: step,
                    k,
                    block,
                    kind: StepKind::Estimate,
                    error_energy: err,
                    truth_energy: truth.norm_sqr(),
                    nmse_cascaded: ratio(err, truth.norm_sqr()),
                    nmse_g: nmse_g_est,
                    nmse_h: f64::NAN,
                    refined: false,
                    nmse_refined: None,
                    pilots_cumulative: pilots,
                });
            }
        }
        t += est_len;
        let mut summary = BlockSummary {
            start,
            g1_hat: g1_hat.clone(),
            g_hat: None,
            pilot_slots: slots,
        };
        while t <= oc.horizon && t < start + oc.block_len {
            let (g_tilde, h_tilde, predicted) = predict_next(ckpt, &window)?;
            let h_hat = match correct_scaling(&g_tilde, &h_tilde, &g1_hat) {
                Ok((g_hat, h_hat)) => {
                    summary.g_hat.get_or_insert(g_hat);
                    Some(h_hat)
                }
                Err(PipelineError::IllConditioned { .. }) => None,
                Err(e) => return Err(e),
            };
            let nmse_g = summary.g_hat.as_ref().map_or(f64::NAN, |g| nmse_single(g, &episode.g));
            let truth = episode.cascaded_at(t);
            let refinement = match &data_patterns {
                Some(patterns) => {
                    let sent = refine::random_symbols(users, patterns.len(), &constellation, rng);
                    let y = synth_data_block(&truth, patterns, &sent, sigma2, rng)?;
                    Some(decision_directed_refine(&predicted, &y, patterns, &constellation, &sent)?)
                }
                None => None,
            };
            for k in 0..users {
                let err = predicted[k].sub(&truth[k]).map_err(|e| PipelineError::Invalid(e.to_string()))?.norm_sqr();
                records.push(StepRecord {
                    t,
                    k,
                    block,
                    kind: StepKind::Predict,
                    error_energy: err,
                    truth_energy: truth[k].norm_sqr(),
                    nmse_cascaded: ratio(err, truth[k].norm_sqr()),
                    nmse_g,
                    nmse_h: h_hat.as_ref().map_or(f64::NAN, |h| nmse_single(&h[k], episode.h(k, t))),
                    refined: refinement.as_ref().is_some_and(|r| r.reliable),
                    nmse_refined: refinement.as_ref().map(|r| nmse_single(&r.refined[k], &truth[k])),
                    pilots_cumulative: pilots,
                });
            }
            let next = match refinement {
                Some(r) if oc.refill_refined && r.reliable => r.refined,
                _ => predicted,
            };
            for (w, h) in window.iter_mut().zip(&next) {
                w.remove(0);
                w.push(h.clone());
            }
            held.push(next);
            t += 1;
        }
        blocks.push(summary);
    }
    Ok(PredictionTrace {
        records,
        blocks,
        cascaded: held,
        pilots_total: pilots,
    })
}

fn fmt_opt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

/// Writes `t,k,nmse_H,nmse_G,nmse_h,refined,pilots_cumulative,block,kind,nmse_refined`.
/// Undefined values are left empty.
pub fn write_trace_csv<W: Write>(trace: &PredictionTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "t,k,nmse_H,nmse_G,nmse_h,refined,pilots_cumulative,block,kind,nmse_refined")?;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.k,
            fmt_opt(r.nmse_cascaded),
            fmt_opt(r.nmse_g),
            fmt_opt(r.nmse_h),
            u8::from(r.refined),
            r.pilots_cumulative,
            r.block,
            r.kind.as_str(),
            r.nmse_refined.map_or(String::new(), fmt_opt)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
