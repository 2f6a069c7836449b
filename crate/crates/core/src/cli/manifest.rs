//! `manifest.json`: everything needed to rerun a command, and the hashes
//! of what it read and wrote. Contains no timestamps, so reruns produce
//! identical manifests.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::channel::SystemConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Scenario parameters under their usual symbols.
#[derive(Debug, Clone, Serialize)]
pub struct Parameters {
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "N")]
    pub elements: usize,
    #[serde(rename = "L")]
    pub paths: usize,
    #[serde(rename = "L_G")]
    pub paths_bs_ris: usize,
    #[serde(rename = "S")]
    pub window: usize,
    pub f_c_ghz: f64,
    pub v_mps: f64,
    pub f_max_hz: f64,
    pub step_s: f64,
    pub tau: usize,
    pub snr_db: f64,
}

impl Parameters {
    pub fn of(cfg: &SystemConfig) -> Self {
        Self {
            antennas: cfg.antennas,
            users: cfg.users,
            elements: cfg.ris_elements(),
            paths: cfg.paths_ris_ue,
            paths_bs_ris: cfg.paths_bs_ris,
            window: cfg.window,
            f_c_ghz: cfg.carrier_hz / 1e9,
            v_mps: cfg.max_speed_mps,
            f_max_hz: cfg.max_doppler_hz(),
            step_s: cfg.step_duration_s(),
            tau: cfg.tau,
            snr_db: cfg.snr_db,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub build: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<&'static str, u64>,
    pub parameters: Parameters,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let canonical = serde_json::to_vec(config).expect("config serialises");
        let seeds = BTreeMap::from([
            ("system", config.system.seed),
            ("train", config.seeds.train),
            ("predict", config.seeds.predict),
            ("eval", config.seeds.eval),
            ("sumrate", config.seeds.sumrate),
        ]);
        Self {
            manifest_version: 1,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            build: if cfg!(debug_assertions) { "debug" } else { "release" },
            command: command.to_string(),
            config_sha256: sha256_hex(&canonical),
            seeds,
            parameters: Parameters::of(&config.system),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn input(&mut self, label: &str, bytes: &[u8]) {
        self.inputs.push(FileHash {
            file: label.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn output(&mut self, file: &str, bytes: &[u8]) {
        self.outputs.push(FileHash {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn parameter_block_of_reference_scenario() {
        let v = serde_json::to_value(Parameters::of(&SystemConfig::table3_desk())).unwrap();
        assert_eq!(v["M"], 4);
        assert_eq!(v["K"], 4);
        assert_eq!(v["L"], 3);
        assert_eq!(v["f_c_ghz"], 28.0);
        assert_eq!(v["v_mps"], 3.0);
    }

    #[test]
    fn manifest_is_stable() {
        let cfg = RunConfig::default();
        let a = Manifest::new("gen", &cfg).to_json();
        assert_eq!(a, Manifest::new("gen", &cfg).to_json());
        assert!(a.contains("\"config_sha256\""));
    }
}
