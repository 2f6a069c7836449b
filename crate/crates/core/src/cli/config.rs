//! Run configuration: a JSON or TOML file, an optional preset for the
//! system block, and `--set key=value` overrides.
//!
//! Keys are dotted paths such as `train.epochs` or `eval.snr_db`; a bare
//! key addresses the `system` block (`snr_db=10`, `ris_elements=16`).
//! Values are parsed as JSON when possible and taken as strings otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::SystemConfig;
use crate::pipeline::{EstimateSource, G1Source, OnlineConfig};
use crate::sclstm::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: usize,
    pub val: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train: 2000, val: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub train: u64,
    pub predict: u64,
    pub eval: u64,
    pub sumrate: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            train: 17,
            predict: 23,
            eval: 29,
            sumrate: 31,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    /// Steps of the online run, T_C.
    pub horizon: usize,
    /// Steps per large block, T_L.
    pub block_len: usize,
    pub g1_source: G1Source,
    pub estimates: EstimateSource,
    pub refine_slots: Option<usize>,
    pub refill_refined: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        let oc = OnlineConfig::new(40, 20);
        Self {
            horizon: oc.horizon,
            block_len: oc.block_len,
            g1_source: oc.g1_source,
            estimates: oc.estimates,
            refine_slots: oc.refine_slots,
            refill_refined: oc.refill_refined,
        }
    }
}

impl PredictConfig {
    pub fn online(&self) -> OnlineConfig {
        OnlineConfig {
            horizon: self.horizon,
            block_len: self.block_len,
            g1_source: self.g1_source,
            estimates: self.estimates,
            refine_slots: self.refine_slots,
            refill_refined: self.refill_refined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub trials: usize,
    /// Test SNRs; empty means `system.snr_db`.
    pub snr_db: Vec<f64>,
    /// Prediction steps of the NMSE-versus-time curve; 0 skips it.
    pub steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            snr_db: Vec::new(),
            steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SumrateConfig {
    pub trials: usize,
    /// T_L in slots.
    pub large_slots: u64,
    /// Number of evenly spaced T_S values in `(0, T_L]`.
    pub points: u64,
}

impl Default for SumrateConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            large_slots: 5000,
            points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverheadConfig {
    /// T_L in slots.
    pub large_slots: u64,
    /// PARAFAC-VAMP pilot count P; none takes ⌈N/M⌉.
    pub parafac_p: Option<u64>,
    /// Number of evenly spaced T_S values in `(0, T_L]`.
    pub points: u64,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        Self {
            large_slots: 5000,
            parafac_p: None,
            points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub predict: PredictConfig,
    pub eval: EvalConfig,
    pub sumrate: SumrateConfig,
    pub overhead: OverheadConfig,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::table3(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            predict: PredictConfig::default(),
            eval: EvalConfig::default(),
            sumrate: SumrateConfig::default(),
            overhead: OverheadConfig::default(),
            seeds: Seeds::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigLoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("bad override `{assignment}`: {reason}")]
    Override { assignment: String, reason: String },
    #[error(transparent)]
    System(#[from] crate::channel::ConfigError),
}

fn parse_text(path: &str, text: &str) -> Result<Value, ConfigLoadError> {
    let is_toml = Path::new(path).extension().is_some_and(|e| e == "toml");
    let parsed = if is_toml {
        toml::from_str::<Value>(text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str::<Value>(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|reason| ConfigLoadError::Parse {
        path: path.to_string(),
        reason,
    })
}

/// Reads a config file, or the `config` block of a run manifest.
pub fn read_config_value(path: &str) -> Result<Value, ConfigLoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigLoadError::Io {
        path: path.to_string(),
        source,
    })?;
    let mut value = parse_text(path, &text)?;
    if value.get("manifest_version").is_some() {
        value = value.get_mut("config").map(Value::take).unwrap_or(Value::Null);
    }
    if !value.is_object() {
        return Err(ConfigLoadError::Parse {
            path: path.to_string(),
            reason: "expected a table of sections".into(),
        });
    }
    Ok(value)
}

/// Recursively overlays the tables of `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies one `key=value` override.
pub fn apply_override(cfg: &mut RunConfig, assignment: &str) -> Result<(), ConfigLoadError> {
    let bad = |reason: String| ConfigLoadError::Override {
        assignment: assignment.to_string(),
        reason,
    };
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad("expected key=value".into()))?;
    let key = key.trim();
    let raw = raw.trim();
    let path: Vec<&str> = match key.split_once('.') {
        None => return Ok(cfg.system.set(assignment)?),
        Some(("system", rest)) if !rest.contains('.') => return Ok(cfg.system.set(&format!("{rest}={raw}"))?),
        Some(_) => key.split('.').collect(),
    };
    let mut root = serde_json::to_value(&*cfg).map_err(|e| bad(e.to_string()))?;
    let mut slot = &mut root;
    for part in &path {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(*part))
            .ok_or_else(|| bad(format!("unknown key `{key}`")))?;
    }
    *slot = parse_value(raw);
    *cfg = serde_json::from_value(root).map_err(|e| bad(e.to_string()))?;
    Ok(())
}

/// Defaults, then the preset, then the file, then the overrides.
pub fn resolve(preset: Option<&str>, file: Option<&str>, overrides: &[String]) -> Result<RunConfig, ConfigLoadError> {
    let mut cfg = RunConfig::default();
    if let Some(name) = preset {
        cfg.system = SystemConfig::preset(name)?;
    }
    if let Some(path) = file {
        let mut value = serde_json::to_value(&cfg).expect("config serialises");
        merge(&mut value, read_config_value(path)?);
        cfg = serde_json::from_value(value).map_err(|e| ConfigLoadError::Parse {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
    }
    for o in overrides {
        apply_override(&mut cfg, o)?;
    }
    cfg.system.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_every_section() {
        let mut cfg = RunConfig::default();
        apply_override(&mut cfg, "snr_db=10").unwrap();
        apply_override(&mut cfg, "system.window=3").unwrap();
        apply_override(&mut cfg, "train.epochs=5").unwrap();
        apply_override(&mut cfg, "train.adam.lr=0.01").unwrap();
        apply_override(&mut cfg, "eval.snr_db=[0,10]").unwrap();
        apply_override(&mut cfg, "predict.g1_source=genie").unwrap();
        apply_override(&mut cfg, "ris_elements=16").unwrap();
        assert_eq!(cfg.system.snr_db, 10.0);
        assert_eq!(cfg.system.window, 3);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.adam.lr, 0.01);
        assert_eq!(cfg.eval.snr_db, vec![0.0, 10.0]);
        assert_eq!(cfg.predict.g1_source, G1Source::Genie);
        assert_eq!((cfg.system.ris_nx, cfg.system.ris_ny), (4, 4));
    }

    #[test]
    fn bad_overrides_rejected() {
        let mut cfg = RunConfig::default();
        assert!(apply_override(&mut cfg, "train.nope=1").is_err());
        assert!(apply_override(&mut cfg, "train.epochs=many").is_err());
        assert!(apply_override(&mut cfg, "nope=1").is_err());
        assert!(apply_override(&mut cfg, "epochs").is_err());
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn files_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("run.json");
        let mut cfg = RunConfig::default();
        cfg.system = SystemConfig::desk();
        cfg.train.epochs = 3;
        std::fs::write(&json, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(resolve(None, Some(json.to_str().unwrap()), &[]).unwrap(), cfg);

        let toml_path = dir.path().join("run.toml");
        std::fs::write(&toml_path, "[system]\nsnr_db = 5.0\n[train]\nepochs = 4\n[train.adam]\nlr = 0.01\n[eval]\nsnr_db = [0.0, 30.0]\n").unwrap();
        let t = resolve(Some("desk"), Some(toml_path.to_str().unwrap()), &[]).unwrap();
        assert_eq!(t.system.antennas, 2);
        assert_eq!(t.system.snr_db, 5.0);
        assert_eq!(t.train.epochs, 4);
        assert_eq!(t.train.adam.lr, 0.01);
        assert_eq!(t.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(t.eval.snr_db, vec![0.0, 30.0]);

        std::fs::write(&toml_path, "[system]\nwarp = 9\n").unwrap();
        assert!(matches!(resolve(None, Some(toml_path.to_str().unwrap()), &[]), Err(ConfigLoadError::Parse { .. })));
        let manifest = dir.path().join("manifest.json");
        std::fs::write(&manifest, format!("{{\"manifest_version\":1,\"config\":{}}}", serde_json::to_string(&cfg).unwrap())).unwrap();
        assert_eq!(resolve(None, Some(manifest.to_str().unwrap()), &[]).unwrap(), cfg);
    }

    #[test]
    fn precedence() {
        let cfg = resolve(Some("desk"), None, &["snr_db=0".into()]).unwrap();
        assert_eq!(cfg.system.antennas, 2);
        assert_eq!(cfg.system.snr_db, 0.0);
        assert!(resolve(Some("big"), None, &[]).is_err());
        assert!(resolve(None, None, &["users=0".into()]).is_err());
    }
}
