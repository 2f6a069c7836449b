use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use super::PipelineError;
use crate::estimation::synth_uplink_rx;
use crate::numerics::{ls_solve, ComplexMatrix, PivotedQr, SimRng};

/// Unit-energy QPSK points.
pub fn qpsk() -> Vec<Complex64> {
    [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .into_iter()
        .map(|(re, im)| Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2))
        .collect()
}

pub(super) fn random_symbols(users: usize, slots: usize, constellation: &[Complex64], rng: &mut SimRng) -> ComplexMatrix {
    ComplexMatrix::from_fn(users, slots, |_, _| constellation[rng.below(constellation.len())])
}

/// Data block `M×T`: slot j uses reflection `patterns[j]` and carries
/// `sent[k, j]` from every user.
pub fn synth_data_block(
    cascaded: &[ComplexMatrix],
    patterns: &[ComplexMatrix],
    sent: &ComplexMatrix,
    sigma2: f64,
    rng: &mut SimRng,
) -> Result<ComplexMatrix, PipelineError> {
    if sent.cols() != patterns.len() {
        return Err(PipelineError::Invalid("one reflection pattern per data slot is required".into()));
    }
    let cols = patterns
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let x = ComplexMatrix::from_fn(sent.rows(), 1, |k, _| sent[(k, j)]);
            synth_uplink_rx(cascaded, v, &x, sigma2, rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComplexMatrix::hstack(&cols)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub refined: Vec<ComplexMatrix>,
    pub detected: ComplexMatrix,
    pub symbol_errors: usize,
    /// False when detection or the re-estimate was degenerate, or the
    /// symbol-error rate is at least half of chance level.
    pub reliable: bool,
}

fn nearest(z: Complex64, constellation: &[Complex64]) -> Complex64 {
    let mut best = constellation[0];
    let mut dist = (z - best).norm_sqr();
    for &c in &constellation[1..] {
        let d = (z - c).norm_sqr();
        if d < dist {
            best = c;
            dist = d;
        }
    }
    best
}

/// Detects the data of `y` with the predicted channels (zero-forcing on
/// `[H̃_1 v_j … H̃_K v_j]`, then nearest point), and re-estimates all
/// cascaded channels by LS with the decisions as pilots.
///
/// Degenerate detection or re-estimation returns `h_tilde` unchanged with
/// `reliable = false`.
pub fn decision_directed_refine(
    h_tilde: &[ComplexMatrix],
    y: &ComplexMatrix,
    patterns: &[ComplexMatrix],
    constellation: &[Complex64],
    sent: &ComplexMatrix,
) -> Result<RefineOutcome, PipelineError> {
    let users = h_tilde.len();
    let slots = patterns.len();
    if users == 0 || slots == 0 || y.cols() == 0 {
        return Err(PipelineError::Invalid("empty data block".into()));
    }
    if constellation.is_empty() {
        return Err(PipelineError::Invalid("empty constellation".into()));
    }
    let (m, n) = h_tilde[0].shape();
    if y.shape() != (m, slots) || sent.shape() != (users, slots) || h_tilde.iter().any(|h| h.shape() != (m, n)) {
        return Err(PipelineError::Invalid("data block shapes are inconsistent".into()));
    }
    let mut detected = ComplexMatrix::zeros(users, slots);
    let mut degenerate = false;
    for (j, v) in patterns.iter().enumerate() {
        let cols = h_tilde.iter().map(|h| h.matmul(v)).collect::<Result<Vec<_>, _>>()?;
        let a = ComplexMatrix::hstack(&cols)?;
        let yj = y.col(j);
        let xhat = match PivotedQr::new(&a) {
            Ok(qr) if qr.is_full_rank() => Some(qr.solve(&yj)?),
            _ => None,
        };
        for k in 0..users {
            detected[(k, j)] = match &xhat {
                Some(x) => nearest(x[(k, 0)], constellation),
                None => {
                    degenerate = true;
                    constellation[0]
                }
            };
        }
    }
    let symbol_errors = detected.iter().zip(sent.iter()).filter(|(a, b)| (*a - *b).norm() > 1e-9).count();

    // Regressor row (k·N + n) at slot j is v_j[n]·x̂_k(j), so Yᵀ = Φᵀ·[H_1 … H_K]ᵀ.
    let phi_t = ComplexMatrix::from_fn(slots, users * n, |j, c| patterns[j].as_slice()[c % n] * detected[(c / n, j)]);
    let solved = match PivotedQr::new(&phi_t) {
        Ok(qr) if qr.is_full_rank() && !degenerate => Some(ls_solve(&phi_t, &y.transpose())?),
        _ => None,
    };
    let chance = 1.0 - 1.0 / constellation.len() as f64;
    let ser = symbol_errors as f64 / (users * slots) as f64;
    match solved {
        Some(x) => {
            let refined = (0..users)
                .map(|k| ComplexMatrix::from_fn(m, n, |r, c| x[(k * n + c, r)]))
                .collect();
            Ok(RefineOutcome {
                refined,
                detected,
                symbol_errors,
                reliable: ser < 0.5 * chance,
            })
        }
        None => Ok(RefineOutcome {
            refined: h_tilde.to_vec(),
            detected,
            symbol_errors,
            reliable: false,
        }),
    }
}
