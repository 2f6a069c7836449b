use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::{cascade, eval_ris_ue_channel, gen_bs_ris_channel, gen_ris_ue_paths};
use super::{BsRisPath, ConfigError, Path, PathSet, SystemConfig};
use crate::format::{BinReader, BinWriter, FormatError};
use crate::numerics::{ComplexMatrix, SimRng};

const EPISODE_MAGIC: &[u8; 8] = b"RISEPSD1";
const EPISODE_VERSION: u32 = 1;
/// dtype code for interleaved complex f64.
pub const DTYPE_C64: u8 = 1;

/// One two-timescale realisation: a single `G` for the whole episode and
/// per-step RIS-UE and cascaded channels for every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub g: ComplexMatrix,
    pub bs_ris_paths: Vec<BsRisPath>,
    pub user_paths: Vec<PathSet>,
    /// `h[k][s-1]` for steps `s = 1..=steps`.
    h: Vec<Vec<ComplexMatrix>>,
    cascaded: Vec<Vec<ComplexMatrix>>,
}

impl Episode {
    /// Evaluates every user's channel at steps `1..=total_steps` against a
    /// given BS-RIS channel.
    pub fn from_paths(
        cfg: &SystemConfig,
        g: ComplexMatrix,
        bs_ris_paths: Vec<BsRisPath>,
        user_paths: Vec<PathSet>,
        total_steps: usize,
    ) -> Self {
        let mut h = Vec::with_capacity(user_paths.len());
        let mut cascaded = Vec::with_capacity(user_paths.len());
        for paths in &user_paths {
            let hk: Vec<_> = (1..=total_steps)
                .map(|s| eval_ris_ue_channel(paths, s, cfg))
                .collect();
            let ck = hk
                .iter()
                .map(|v| cascade(&g, v).expect("generated shapes agree"))
                .collect();
            h.push(hk);
            cascaded.push(ck);
        }
        Self {
            g,
            bs_ris_paths,
            user_paths,
            h,
            cascaded,
        }
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn steps(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    /// RIS-UE channel of user `k` (0-based) at step `s` (1-based).
    pub fn h(&self, k: usize, s: usize) -> &ComplexMatrix {
        assert!(s >= 1, "steps are numbered from 1");
        &self.h[k][s - 1]
    }

    /// Cascaded channel of user `k` (0-based) at step `s` (1-based).
    pub fn cascaded(&self, k: usize, s: usize) -> &ComplexMatrix {
        assert!(s >= 1, "steps are numbered from 1");
        &self.cascaded[k][s - 1]
    }

    /// All users' cascaded channels at step `s`.
    pub fn cascaded_at(&self, s: usize) -> Vec<ComplexMatrix> {
        (0..self.users()).map(|k| self.cascaded(k, s).clone()).collect()
    }

    pub fn h_at(&self, s: usize) -> Vec<ComplexMatrix> {
        (0..self.users()).map(|k| self.h(k, s).clone()).collect()
    }

    /// Little-endian binary form: header (magic, version, dtype, dims),
    /// then `G`, path tables, every `h` and every cascaded channel with
    /// real/imag interleaved.
    pub fn write_binary<W: Write>(&self, out: W) -> Result<(), FormatError> {
        let mut w = BinWriter::new(out);
        let (m, n) = self.g.shape();
        w.bytes(EPISODE_MAGIC)?;
        w.u32(EPISODE_VERSION)?;
        w.u8(DTYPE_C64)?;
        w.bytes(&[0, 0, 0])?;
        w.len(m)?;
        w.len(n)?;
        w.len(self.users())?;
        w.len(self.steps())?;
        w.len(self.bs_ris_paths.len())?;
        w.matrix_entries(&self.g)?;
        for p in &self.bs_ris_paths {
            w.complex(p.gain)?;
            w.f64(p.arrival_azimuth)?;
            w.f64(p.arrival_elevation)?;
            w.f64(p.departure_azimuth)?;
            w.f64(p.departure_elevation)?;
        }
        for set in &self.user_paths {
            w.len(set.paths.len())?;
            for p in &set.paths {
                w.complex(p.gain)?;
                w.f64(p.azimuth)?;
                w.f64(p.elevation)?;
                w.f64(p.doppler_hz)?;
            }
        }
        for hk in &self.h {
            for v in hk {
                w.matrix_entries(v)?;
            }
        }
        for ck in &self.cascaded {
            for c in ck {
                w.matrix_entries(c)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(input: R) -> Result<Self, FormatError> {
        let mut r = BinReader::new(input);
        r.magic(EPISODE_MAGIC)?;
        let version = r.u32()?;
        if version != EPISODE_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let dtype = r.u8()?;
        if dtype != DTYPE_C64 {
            return Err(FormatError::Corrupt(format!("unknown dtype {dtype}")));
        }
        r.bytes(3)?;
        let m = r.len()?;
        let n = r.len()?;
        let users = r.len()?;
        let steps = r.len()?;
        let lg = r.len()?;
        let g = r.matrix(m, n)?;
        let mut bs_ris_paths = Vec::with_capacity(lg);
        for _ in 0..lg {
            bs_ris_paths.push(BsRisPath {
                gain: r.complex()?,
                arrival_azimuth: r.f64()?,
                arrival_elevation: r.f64()?,
                departure_azimuth: r.f64()?,
                departure_elevation: r.f64()?,
            });
        }
        let mut user_paths = Vec::with_capacity(users);
        for _ in 0..users {
            let count = r.len()?;
            let mut paths = Vec::with_capacity(count);
            for _ in 0..count {
                paths.push(Path {
                    gain: r.complex()?,
                    azimuth: r.f64()?,
                    elevation: r.f64()?,
                    doppler_hz: r.f64()?,
                });
            }
            user_paths.push(PathSet { paths });
        }
        let mut h = Vec::with_capacity(users);
        for _ in 0..users {
            h.push((0..steps).map(|_| r.matrix(n, 1)).collect::<Result<Vec<_>, _>>()?);
        }
        let mut cascaded = Vec::with_capacity(users);
        for _ in 0..users {
            cascaded.push((0..steps).map(|_| r.matrix(m, n)).collect::<Result<Vec<_>, _>>()?);
        }
        Ok(Self {
            g,
            bs_ris_paths,
            user_paths,
            h,
            cascaded,
        })
    }

    /// Lossless JSON dump (shortest round-trip float formatting).
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("episode serialises")
    }

    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        serde_json::from_str(text).map_err(|e| FormatError::Corrupt(e.to_string()))
    }
}

/// Generates an episode with `total_steps ≥ S+1` steps.
pub fn gen_episode(cfg: &SystemConfig, total_steps: usize, rng: &mut SimRng) -> Result<Episode, ConfigError> {
    cfg.validate()?;
    let (g, bs_paths) = gen_bs_ris_channel(cfg, rng);
    gen_episode_with_g(cfg, g, bs_paths, total_steps, rng)
}

/// Like [`gen_episode`] but reuses an existing BS-RIS channel, as in a
/// fixed deployment where only the users move.
pub fn gen_episode_with_g(
    cfg: &SystemConfig,
    g: ComplexMatrix,
    bs_paths: Vec<BsRisPath>,
    total_steps: usize,
    rng: &mut SimRng,
) -> Result<Episode, ConfigError> {
    if total_steps < cfg.window + 1 {
        return Err(ConfigError::Invalid(format!(
            "episode needs at least S+1 = {} steps, got {total_steps}",
            cfg.window + 1
        )));
    }
    if g.shape() != (cfg.antennas, cfg.ris_elements()) {
        return Err(ConfigError::Invalid("BS-RIS channel shape does not match config".into()));
    }
    let user_paths = (0..cfg.users).map(|_| gen_ris_ue_paths(cfg, rng)).collect();
    Ok(Episode::from_paths(cfg, g, bs_paths, user_paths, total_steps))
}
