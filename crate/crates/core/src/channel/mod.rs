//! Two-timescale channel generation: the quasi-static BS-RIS channel `G`,
//! Doppler-varying RIS-UE channels `h_k(s)` and their cascade.

mod config;
mod episode;
mod model;

pub use config::{ris_grid_for, ConfigError, SystemConfig, SPEED_OF_LIGHT};
pub use episode::{gen_episode, gen_episode_with_g, Episode, DTYPE_C64};
pub use model::{
    cascade, eval_ris_ue_channel, gen_bs_ris_channel, gen_ris_ue_paths, steering_vector, BsRisPath,
    Path, PathSet,
};
