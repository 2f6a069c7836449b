//! Offline training sets: windows of stage-2 estimates paired with the true
//! cascaded channels one step later, all drawn from one fixed deployment.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic "RISDSET1", version u32 (= 1)
//! config                      u32 length + JSON text
//! M, N, K, S, train, val      6 × u32
//! snr_db, scale               2 × f64
//! G                           M·N complex (re, im f64 pairs), row-major
//! per sample:
//!   history[k][s]             K·S matrices M×N
//!   target[k]                 K matrices M×N
//! ```

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::channel::{gen_bs_ris_channel, gen_episode_with_g, BsRisPath, ConfigError, SystemConfig};
use crate::estimation::{estimate_block, EstimationError, PilotPlan};
use crate::format::{BinReader, BinWriter, FormatError};
use crate::numerics::{ComplexMatrix, SimRng};
use crate::sclstm::{Dims, SampleInput, TrainingSample};

const MAGIC: &[u8; 8] = b"RISDSET1";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid dataset request: {0}")]
    Invalid(String),
}

/// Unscaled estimate window and the true next-step channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    /// `history[k][s]`: stage-2 estimate of user k at step s+1.
    pub history: Vec<Vec<ComplexMatrix>>,
    /// True cascaded channels at step S+1.
    pub target: Vec<ComplexMatrix>,
}

impl RawSample {
    pub fn to_training(&self, scale: f64) -> TrainingSample {
        TrainingSample {
            input: SampleInput::from_history(&self.history, scale),
            target: self.target.iter().map(|t| t.scale_real(scale)).collect(),
        }
    }
}

/// A fixed BS-RIS deployment shared by every sample of a dataset and by
/// the evaluation episodes of the model trained on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub g: ComplexMatrix,
    pub paths: Vec<BsRisPath>,
}

impl Deployment {
    /// Draws the deployment from its own stream of `seed`.
    pub fn for_seed(cfg: &SystemConfig, seed: u64) -> Self {
        let (g, paths) = gen_bs_ris_channel(cfg, &mut SimRng::new(seed).split(0xD3));
        Self { g, paths }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cfg: SystemConfig,
    pub g: ComplexMatrix,
    /// Multiplier applied to inputs and targets before training.
    pub scale: f64,
    pub train: Vec<RawSample>,
    pub val: Vec<RawSample>,
}

/// Root-mean-square modulus over every entry of every target.
fn target_rms(samples: &[RawSample]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for s in samples {
        for t in &s.target {
            acc += t.norm_sqr();
            count += t.rows() * t.cols();
        }
    }
    (acc / count as f64).sqrt()
}

/// One sample: a fresh set of user trajectories over S+1 steps, stages 1-2
/// at the configured SNR over the first S steps.
pub fn draw_sample(cfg: &SystemConfig, deployment: &Deployment, rng: &mut SimRng) -> Result<RawSample, DatasetError> {
    let s = cfg.window;
    let episode = gen_episode_with_g(cfg, deployment.g.clone(), deployment.paths.clone(), s + 1, rng)?;
    let plan = PilotPlan::for_config(cfg)?;
    let block = estimate_block(&episode, &plan, 1, s, cfg.noise_variance(), rng)?;
    Ok(RawSample {
        history: block.cascaded,
        target: episode.cascaded_at(s + 1),
    })
}

/// Draws `train + val` samples for the deployment of `cfg.seed`. Sample i
/// uses its own split of the seed, so the result is independent of the
/// thread count.
pub fn generate_dataset(cfg: &SystemConfig, train: usize, val: usize) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    if train == 0 || val == 0 {
        return Err(DatasetError::Invalid("train and validation sizes must be positive".into()));
    }
    let deployment = Deployment::for_seed(cfg, cfg.seed);
    let root = SimRng::new(cfg.seed);
    let samples = (0..train + val)
        .into_par_iter()
        .map(|i| draw_sample(cfg, &deployment, &mut root.split(1 + i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut train_set = samples;
    let val_set = train_set.split_off(train);
    let rms = target_rms(&train_set);
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(DatasetError::Invalid("targets have zero energy".into()));
    }
    Ok(Dataset {
        cfg: cfg.clone(),
        g: deployment.g,
        scale: 1.0 / rms,
        train: train_set,
        val: val_set,
    })
}

impl Dataset {
    pub fn dims(&self) -> Dims {
        Dims::from_config(&self.cfg)
    }

    pub fn training_samples(&self) -> Vec<TrainingSample> {
        self.train.iter().map(|s| s.to_training(self.scale)).collect()
    }

    pub fn validation_samples(&self) -> Vec<TrainingSample> {
        self.val.iter().map(|s| s.to_training(self.scale)).collect()
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), FormatError> {
        let d = self.dims();
        let mut w = BinWriter::new(out);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.string(&serde_json::to_string(&self.cfg).map_err(|e| FormatError::Corrupt(e.to_string()))?)?;
        for v in [d.antennas, d.elements, d.users, d.window, self.train.len(), self.val.len()] {
            w.len(v)?;
        }
        w.f64(self.cfg.snr_db)?;
        w.f64(self.scale)?;
        w.matrix_entries(&self.g)?;
        for s in self.train.iter().chain(&self.val) {
            for m in s.history.iter().flatten().chain(&s.target) {
                w.matrix_entries(m)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self, FormatError> {
        let mut r = BinReader::new(input);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let cfg: SystemConfig = serde_json::from_str(&r.string()?).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let mut v = [0usize; 6];
        for x in &mut v {
            *x = r.len()?;
        }
        let [m, n, k, s, train, val] = v;
        let d = Dims::from_config(&cfg);
        if (m, n, k, s) != (d.antennas, d.elements, d.users, d.window) {
            return Err(FormatError::Corrupt("header dimensions disagree with the embedded config".into()));
        }
        let snr = r.f64()?;
        if snr.to_bits() != cfg.snr_db.to_bits() {
            return Err(FormatError::Corrupt("header SNR disagrees with the embedded config".into()));
        }
        let scale = r.f64()?;
        let g = r.matrix(m, n)?;
        let mut samples = Vec::with_capacity(train + val);
        for _ in 0..train + val {
            let mut history = Vec::with_capacity(k);
            for _ in 0..k {
                history.push((0..s).map(|_| r.matrix(m, n)).collect::<Result<Vec<_>, _>>()?);
            }
            let target = (0..k).map(|_| r.matrix(m, n)).collect::<Result<Vec<_>, _>>()?;
            samples.push(RawSample { history, target });
        }
        let val_set = samples.split_off(train);
        Ok(Self {
            cfg,
            g,
            scale,
            train: samples,
            val: val_set,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::desk();
        cfg.window = 2;
        cfg.seed = 9;
        cfg
    }

    #[test]
    fn shapes_and_scale() {
        let ds = generate_dataset(&small_cfg(), 6, 2).unwrap();
        assert_eq!(ds.train.len(), 6);
        assert_eq!(ds.val.len(), 2);
        let s = &ds.train[0];
        assert_eq!(s.history.len(), 2);
        assert_eq!(s.history[0].len(), 2);
        assert_eq!(s.target[0].shape(), (2, 8));
        let scaled: Vec<RawSample> = ds.train.iter().map(|s| RawSample { history: s.history.clone(), target: s.target.iter().map(|t| t.scale_real(ds.scale)).collect() }).collect();
        assert!((target_rms(&scaled) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deployment_shared_across_samples() {
        let cfg = small_cfg();
        let ds = generate_dataset(&cfg, 3, 1).unwrap();
        assert_eq!(ds.g, Deployment::for_seed(&cfg, cfg.seed).g);
        // Noiseless targets factor through the shared G: column n of each
        // target is proportional to column n of G.
        for s in &ds.train {
            for t in &s.target {
                for n in 0..8 {
                    let ratio = t[(0, n)] / ds.g[(0, n)];
                    assert!((t[(1, n)] - ratio * ds.g[(1, n)]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_round_trips() {
        let cfg = small_cfg();
        let a = generate_dataset(&cfg, 4, 2).unwrap();
        let b = generate_dataset(&cfg, 4, 2).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        assert_eq!(Dataset::read(buf.as_slice()).unwrap(), a);
        buf[8] = 2;
        assert!(Dataset::read(buf.as_slice()).is_err());
    }

    #[test]
    fn rejects_empty_split() {
        assert!(matches!(generate_dataset(&small_cfg(), 0, 1), Err(DatasetError::Invalid(_))));
    }
}
