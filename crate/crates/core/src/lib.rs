//! Two-timescale channel estimation and prediction for RIS-assisted
//! multi-user MISO uplinks.
//!
//! The crate is organised bottom-up: [`numerics`] holds complex linear
//! algebra and sampling, [`channel`] generates channel realisations,
//! [`estimation`] implements the pilot-based estimators, [`sclstm`] is the
//! sparse-connected LSTM, [`pipeline`] runs online prediction, and
//! [`analytics`] evaluates overhead, complexity and sum-rate formulas.

pub mod analytics;
pub mod channel;
pub mod cli;
pub mod dataset;
pub mod estimation;
pub mod experiments;
pub mod format;
pub mod numerics;
pub mod pipeline;
pub mod sclstm;
