use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Propagation speed used to turn UE velocity into a Doppler shift.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("unknown preset `{0}` (expected one of: table3, table3-desk, desk)")]
    UnknownPreset(String),
}

/// Scenario parameters of one RIS-assisted uplink deployment.
///
/// `slots_per_step` is the number of slots in a small-timescale step and
/// `tau` the integer ratio between the large and small coherence times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// BS antennas M, arranged as a `bs_mx × bs_my` planar array.
    pub antennas: usize,
    pub bs_mx: usize,
    pub bs_my: usize,
    /// Single-antenna users K.
    pub users: usize,
    /// RIS grid; N = `ris_nx · ris_ny`.
    pub ris_nx: usize,
    pub ris_ny: usize,
    pub paths_bs_ris: usize,
    pub paths_ris_ue: usize,
    pub carrier_hz: f64,
    pub max_speed_mps: f64,
    pub slots_per_step: usize,
    pub slot_duration_s: f64,
    pub tau: usize,
    /// Prediction window S.
    pub window: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::table3()
    }
}

/// Splits `n` RIS elements into an `nx × ny` grid with `ny` the largest
/// divisor not exceeding `√n`.
pub fn ris_grid_for(n: usize) -> (usize, usize) {
    assert!(n > 0);
    let mut ny = 1;
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            ny = d;
        }
        d += 1;
    }
    (n / ny, ny)
}

impl SystemConfig {
    /// Full-size channel parameters of the reference scenario.
    pub fn table3() -> Self {
        Self {
            antennas: 4,
            bs_mx: 4,
            bs_my: 1,
            users: 4,
            ris_nx: 8,
            ris_ny: 5,
            paths_bs_ris: 3,
            paths_ris_ue: 3,
            carrier_hz: 28e9,
            max_speed_mps: 3.0,
            slots_per_step: 2,
            slot_duration_s: 1e-4,
            tau: 100,
            window: 4,
            snr_db: 20.0,
            seed: 1,
        }
    }

    /// Reference channel parameters with the smallest RIS size.
    pub fn table3_desk() -> Self {
        Self {
            ris_nx: 5,
            ris_ny: 4,
            ..Self::table3()
        }
    }

    /// Two-antenna, two-user, 8-element scenario that trains in minutes.
    pub fn desk() -> Self {
        Self {
            antennas: 2,
            bs_mx: 2,
            bs_my: 1,
            users: 2,
            ris_nx: 4,
            ris_ny: 2,
            ..Self::table3()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "table3" => Ok(Self::table3()),
            "table3-desk" => Ok(Self::table3_desk()),
            "desk" => Ok(Self::desk()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    /// Number of RIS elements N.
    pub fn ris_elements(&self) -> usize {
        self.ris_nx * self.ris_ny
    }

    /// Resizes the RIS, re-deriving the grid factorisation.
    pub fn with_ris_elements(mut self, n: usize) -> Self {
        let (nx, ny) = ris_grid_for(n);
        self.ris_nx = nx;
        self.ris_ny = ny;
        self
    }

    /// Resizes the BS as a uniform linear array.
    pub fn with_antennas(mut self, m: usize) -> Self {
        self.antennas = m;
        self.bs_mx = m;
        self.bs_my = 1;
        self
    }

    pub fn max_doppler_hz(&self) -> f64 {
        self.carrier_hz * self.max_speed_mps / SPEED_OF_LIGHT
    }

    /// Wall-clock length of one small-timescale step.
    pub fn step_duration_s(&self) -> f64 {
        self.slots_per_step as f64 * self.slot_duration_s
    }

    /// Large-timescale coherence time T_L in slots.
    pub fn large_coherence_slots(&self) -> usize {
        self.tau * self.slots_per_step
    }

    pub fn noise_variance(&self) -> f64 {
        crate::numerics::db_to_linear(-self.snr_db)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("antennas", self.antennas),
            ("bs_mx", self.bs_mx),
            ("bs_my", self.bs_my),
            ("users", self.users),
            ("ris_nx", self.ris_nx),
            ("ris_ny", self.ris_ny),
            ("paths_bs_ris", self.paths_bs_ris),
            ("paths_ris_ue", self.paths_ris_ue),
            ("slots_per_step", self.slots_per_step),
            ("tau", self.tau),
            ("window", self.window),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.bs_mx * self.bs_my != self.antennas {
            return Err(ConfigError::Invalid(format!(
                "BS array {}x{} does not hold {} antennas",
                self.bs_mx, self.bs_my, self.antennas
            )));
        }
        if !(self.carrier_hz > 0.0) || !self.carrier_hz.is_finite() {
            return Err(ConfigError::Invalid("carrier_hz must be positive".into()));
        }
        if !(self.max_speed_mps >= 0.0) || !self.max_speed_mps.is_finite() {
            return Err(ConfigError::Invalid("max_speed_mps must be non-negative".into()));
        }
        if !(self.slot_duration_s > 0.0) || !self.slot_duration_s.is_finite() {
            return Err(ConfigError::Invalid("slot_duration_s must be positive".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(ConfigError::Invalid("snr_db must be finite".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::BadValue {
                key: assignment.to_string(),
                reason: "expected key=value".into(),
            })?;
        let key = key.trim();
        let value = value.trim();
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                reason: e.to_string(),
            })
        }
        match key {
            "antennas" => *self = self.clone().with_antennas(parse(key, value)?),
            "bs_mx" => self.bs_mx = parse(key, value)?,
            "bs_my" => self.bs_my = parse(key, value)?,
            "users" => self.users = parse(key, value)?,
            "ris_elements" => *self = self.clone().with_ris_elements(parse(key, value)?),
            "ris_nx" => self.ris_nx = parse(key, value)?,
            "ris_ny" => self.ris_ny = parse(key, value)?,
            "paths_bs_ris" => self.paths_bs_ris = parse(key, value)?,
            "paths_ris_ue" => self.paths_ris_ue = parse(key, value)?,
            "carrier_hz" => self.carrier_hz = parse(key, value)?,
            "max_speed_mps" => self.max_speed_mps = parse(key, value)?,
            "slots_per_step" => self.slots_per_step = parse(key, value)?,
            "slot_duration_s" => self.slot_duration_s = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "snr_db" => self.snr_db = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_factorisation() {
        assert_eq!(ris_grid_for(40), (8, 5));
        assert_eq!(ris_grid_for(20), (5, 4));
        assert_eq!(ris_grid_for(100), (10, 10));
        assert_eq!(ris_grid_for(8), (4, 2));
        assert_eq!(ris_grid_for(7), (7, 1));
        assert_eq!(ris_grid_for(1), (1, 1));
    }

    #[test]
    fn doppler_of_reference_scenario() {
        let cfg = SystemConfig::table3();
        assert!((cfg.max_doppler_hz() - 280.0).abs() < 1e-9);
        let still = SystemConfig {
            max_speed_mps: 0.0,
            ..cfg
        };
        assert_eq!(still.max_doppler_hz(), 0.0);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = SystemConfig::desk();
        assert!(cfg.validate().is_ok());
        cfg.window = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::desk();
        cfg.bs_mx = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::desk();
        cfg.carrier_hz = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let mut cfg = SystemConfig::desk();
        cfg.set("ris_elements=40").unwrap();
        assert_eq!((cfg.ris_nx, cfg.ris_ny), (8, 5));
        cfg.set("snr_db = 7.5").unwrap();
        assert_eq!(cfg.snr_db, 7.5);
        assert!(matches!(cfg.set("bogus=1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.set("tau=x"), Err(ConfigError::BadValue { .. })));
        assert!(cfg.set("tau").is_err());
    }
}
