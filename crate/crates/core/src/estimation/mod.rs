//! Pilot-based estimation: the full-duplex-antenna estimate of `g₁` (the
//! first row of `G`) and the cascaded-channel estimators that share one
//! reference decomposition across a large coherence block.

mod report;

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::Episode;
use crate::numerics::{dft_matrix, principal_sqrt, sample_cn, ComplexMatrix, NumericsError, PivotedQr, SimRng};

pub use report::{write_estimation_csv, EstimationReport, EstimationRow, Stage2Nmse};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("NMSE undefined for an all-zero reference")]
    UndefinedMetric,
}

fn dim_err(msg: String) -> EstimationError {
    EstimationError::Numerics(NumericsError::InvalidDimension(msg))
}

/// QR of a pattern system. Underdetermined systems are zero-padded to
/// square so the failure carries their true rank.
fn factor(a: &ComplexMatrix) -> Result<PivotedQr, EstimationError> {
    if a.rows() >= a.cols() {
        return Ok(PivotedQr::new(a)?);
    }
    let pad = ComplexMatrix::zeros(a.cols() - a.rows(), a.cols());
    let qr = PivotedQr::new(&ComplexMatrix::vstack(&[a.clone(), pad])?)?;
    Err(NumericsError::RankDeficient {
        rank: qr.rank(),
        required: a.cols(),
    }
    .into())
}

/// Pilot and reflection-pattern design shared by every estimation phase.
///
/// User pilots are the rows of the K-point DFT (so `x_i x_jᴴ = K·δ_ij` at
/// unit power) and reflection patterns are DFT columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    antennas: usize,
    elements: usize,
    users: usize,
    pilots: ComplexMatrix,
    patterns: Vec<ComplexMatrix>,
}

impl PilotPlan {
    pub fn new(antennas: usize, elements: usize, users: usize) -> Result<Self, EstimationError> {
        if antennas == 0 || elements == 0 || users == 0 {
            return Err(dim_err("plan sizes must be positive".into()));
        }
        let pilots = dft_matrix(users)?;
        let v = dft_matrix(elements)?;
        let patterns = (0..elements).map(|j| v.col(j)).collect();
        Ok(Self {
            antennas,
            elements,
            users,
            pilots,
            patterns,
        })
    }

    pub fn for_config(cfg: &crate::channel::SystemConfig) -> Result<Self, EstimationError> {
        Self::new(cfg.antennas, cfg.ris_elements(), cfg.users)
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// K×K pilot matrix; row k is user k's pilot sequence.
    pub fn pilots(&self) -> &ComplexMatrix {
        &self.pilots
    }

    pub fn pilot_power(&self) -> f64 {
        1.0
    }

    /// Reflection pattern `j`, cycling through the N DFT columns.
    pub fn pattern(&self, j: usize) -> &ComplexMatrix {
        &self.patterns[j % self.elements]
    }

    pub fn patterns(&self, count: usize) -> Vec<ComplexMatrix> {
        (0..count).map(|j| self.pattern(j).clone()).collect()
    }

    /// Patterns of the reduced phase: ⌈N/M⌉ DFT columns spread evenly over
    /// the N available, so the normal equations split into M×M blocks when
    /// M divides N.
    pub fn reduced_patterns(&self) -> Vec<ComplexMatrix> {
        let q = self.reduced_slots_per_user();
        (0..q).map(|j| self.pattern(j * self.elements / q).clone()).collect()
    }

    /// ⌈N/M⌉, the per-user, per-step slot count of the reduced estimator.
    pub fn reduced_slots_per_user(&self) -> usize {
        self.elements.div_ceil(self.antennas)
    }

    pub fn stage1_slots(&self) -> usize {
        self.elements
    }

    pub fn reference_slots(&self) -> usize {
        2 * (self.elements + 1)
    }

    pub fn reduced_slots(&self, window: usize) -> usize {
        self.users * window * self.reduced_slots_per_user()
    }

    pub fn direct_slots_per_step(&self) -> usize {
        self.elements * self.users
    }

    /// Total pilot slots of one large coherence block, 3N + 2 + K·S·⌈N/M⌉.
    pub fn block_slots(&self, window: usize) -> usize {
        self.stage1_slots() + self.reference_slots() + self.reduced_slots(window)
    }
}

/// Uplink observation `Y = Σ_k H_k v x_k + N` over the T columns of `x`
/// (K×T, row k is user k's symbol sequence).
pub fn synth_uplink_rx(
    cascaded: &[ComplexMatrix],
    v: &ComplexMatrix,
    x: &ComplexMatrix,
    sigma2: f64,
    rng: &mut SimRng,
) -> Result<ComplexMatrix, EstimationError> {
    if cascaded.len() != x.rows() {
        return Err(dim_err(format!("{} users but {} pilot rows", cascaded.len(), x.rows())));
    }
    let first = cascaded
        .first()
        .ok_or_else(|| EstimationError::InvalidInput("no users".into()))?;
    let m = first.rows();
    let mut y = sample_cn(m, x.cols(), sigma2, rng)?;
    for (k, hk) in cascaded.iter().enumerate() {
        if hk.shape() != first.shape() {
            return Err(dim_err("cascaded channels differ in shape".into()));
        }
        let hv = hk.matmul(v)?;
        for t in 0..x.cols() {
            let xt = x[(k, t)];
            for r in 0..m {
                y[(r, t)] += hv[(r, 0)] * xt;
            }
        }
    }
    Ok(y)
}

/// Self-reflected observations at the full-duplex antenna,
/// `y_t = (g₁⊙g₁) v_t x_t + e_t`, one per pattern.
pub fn synth_fda_rx(
    g1: &ComplexMatrix,
    patterns: &[ComplexMatrix],
    x: &[Complex64],
    sigma2: f64,
    rng: &mut SimRng,
) -> Result<Vec<Complex64>, EstimationError> {
    if patterns.len() != x.len() {
        return Err(dim_err("one pilot symbol per pattern is required".into()));
    }
    let n = g1.len();
    let mut out = Vec::with_capacity(x.len());
    for (v, &xt) in patterns.iter().zip(x) {
        if v.len() != n {
            return Err(dim_err(format!("pattern of length {} for {n} elements", v.len())));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let g = g1.as_slice()[i];
            acc += g * g * v.as_slice()[i];
        }
        out.push(acc * xt + rng.complex_normal(sigma2));
    }
    Ok(out)
}

/// LS estimate of `g₁⊙g₁` and its elementwise principal square root.
/// Both are returned as 1×N rows, `(g1_hat, g1sq_hat)`.
pub fn estimate_g1(
    y: &[Complex64],
    patterns: &[ComplexMatrix],
    x: &[Complex64],
) -> Result<(ComplexMatrix, ComplexMatrix), EstimationError> {
    if y.len() != patterns.len() || x.len() != patterns.len() || patterns.is_empty() {
        return Err(dim_err("observation, pattern and pilot counts differ".into()));
    }
    let n = patterns[0].len();
    let a = ComplexMatrix::from_fn(patterns.len(), n, |t, i| x[t] * patterns[t].as_slice()[i]);
    let b = ComplexMatrix::column(y.to_vec());
    let sq = factor(&a)?.solve(&b)?;
    let g1sq = ComplexMatrix::row(sq.into_vec());
    let g1 = g1sq.map(principal_sqrt);
    Ok((g1, g1sq))
}

/// Full LS estimate of every user's cascaded channel from pattern blocks.
///
/// Block `j` is the M×T observation under pattern `j`, with users separated
/// by the orthogonal rows of `pilots` (K×T). Returns one M×N estimate per
/// pilot row.
pub fn estimate_cascaded_reference(
    blocks: &[ComplexMatrix],
    patterns: &[ComplexMatrix],
    pilots: &ComplexMatrix,
    power: f64,
) -> Result<Vec<ComplexMatrix>, EstimationError> {
    if blocks.len() != patterns.len() || blocks.is_empty() {
        return Err(dim_err("one observation block per pattern is required".into()));
    }
    let n = patterns[0].len();
    let m = blocks[0].rows();
    let users = pilots.rows();
    let t = pilots.cols();
    let energy = t as f64 * power;
    // rows of the LS system are the transposed patterns: Vᵀ Hᵀ = Rᵀ
    let vt = ComplexMatrix::from_fn(patterns.len(), n, |j, i| patterns[j].as_slice()[i]);
    let pilot_h = pilots.adjoint();
    let mut decorrelated = vec![ComplexMatrix::zeros(patterns.len(), m); users];
    for (j, y) in blocks.iter().enumerate() {
        if y.shape() != (m, t) {
            return Err(dim_err(format!("block {j} is {}x{}, expected {m}x{t}", y.rows(), y.cols())));
        }
        let r = y.matmul(&pilot_h)?;
        for (k, dk) in decorrelated.iter_mut().enumerate() {
            for row in 0..m {
                dk[(j, row)] = r[(row, k)] / energy;
            }
        }
    }
    let qr = factor(&vt)?;
    decorrelated
        .iter()
        .map(|rk| Ok(qr.solve(rk)?.transpose()))
        .collect()
}

/// Columns of `Ĝ` from the reference estimate of user 1, anchored so the
/// first row equals `ĝ₁`.
pub fn g_from_reference(h1_ref: &ComplexMatrix, g1_hat: &ComplexMatrix) -> Result<ComplexMatrix, EstimationError> {
    let (m, n) = h1_ref.shape();
    if g1_hat.len() != n {
        return Err(dim_err("g1 length does not match reference columns".into()));
    }
    let max_first = (0..n).map(|c| h1_ref[(0, c)].norm()).fold(0.0, f64::max);
    let mut g = ComplexMatrix::zeros(m, n);
    for c in 0..n {
        let anchor = h1_ref[(0, c)];
        if anchor.norm() <= crate::numerics::RANK_TOLERANCE * max_first || anchor.norm() == 0.0 {
            return Err(EstimationError::InvalidInput(format!(
                "reference entry (0, {c}) vanishes; column scale is unidentifiable"
            )));
        }
        let s = g1_hat.as_slice()[c] / anchor;
        for r in 0..m {
            g[(r, c)] = h1_ref[(r, c)] * s;
        }
    }
    Ok(g)
}

/// Estimates one user's RIS-UE channel at one step from ⌈N/M⌉ single-slot
/// observations `y_j = Ĝ·diag(v_j)·h·x + n`, using every stacked row.
/// Returns `(ĥ, Ĝ·diag(ĥ))`.
///
/// `ridge` is the noise-to-prior variance ratio σ²/σ_h². Zero gives the
/// plain LS solution; a positive value gives the linear MMSE estimate
/// under an i.i.d. prior on `h`.
pub fn estimate_cascaded_reduced(
    observations: &[ComplexMatrix],
    g_hat: &ComplexMatrix,
    patterns: &[ComplexMatrix],
    x: Complex64,
    ridge: f64,
) -> Result<(ComplexMatrix, ComplexMatrix), EstimationError> {
    if !(ridge >= 0.0) {
        return Err(EstimationError::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    let (m, n) = g_hat.shape();
    if observations.len() != patterns.len() || observations.is_empty() {
        return Err(dim_err("one observation per pattern is required".into()));
    }
    let q = observations.len();
    let mut a = ComplexMatrix::zeros(m * q, n);
    let mut b = ComplexMatrix::zeros(m * q, 1);
    for (j, (y, v)) in observations.iter().zip(patterns).enumerate() {
        if y.shape() != (m, 1) || v.len() != n {
            return Err(dim_err(format!("slot {j} has inconsistent shapes")));
        }
        for r in 0..m {
            for c in 0..n {
                a[(j * m + r, c)] = g_hat[(r, c)] * v.as_slice()[c] * x;
            }
            b[(j * m + r, 0)] = y[(r, 0)];
        }
    }
    let h = if ridge > 0.0 {
        let reg = ComplexMatrix::identity(n).scale_real(ridge.sqrt());
        let a_aug = ComplexMatrix::vstack(&[a, reg])?;
        let b_aug = ComplexMatrix::vstack(&[b, ComplexMatrix::zeros(n, 1)])?;
        factor(&a_aug)?.solve(&b_aug)?
    } else {
        factor(&a)?.solve(&b)?
    };
    let cascaded = crate::channel::cascade(g_hat, &h)?;
    Ok((h, cascaded))
}

/// Per-step full LS estimate over all N patterns with K orthogonal pilots
/// per pattern (N·K slots).
pub fn estimate_cascaded_direct(blocks: &[ComplexMatrix], plan: &PilotPlan) -> Result<Vec<ComplexMatrix>, EstimationError> {
    let patterns = plan.patterns(plan.elements());
    estimate_cascaded_reference(blocks, &patterns, plan.pilots(), plan.pilot_power())
}

/// `Σ‖est_k − true_k‖² / Σ‖true_k‖²`.
pub fn nmse(estimate: &[ComplexMatrix], truth: &[ComplexMatrix]) -> Result<f64, EstimationError> {
    if estimate.len() != truth.len() {
        return Err(dim_err(format!("{} estimates for {} references", estimate.len(), truth.len())));
    }
    let mut err = 0.0;
    let mut den = 0.0;
    for (e, t) in estimate.iter().zip(truth) {
        if e.shape() != t.shape() {
            return Err(dim_err("estimate and reference shapes differ".into()));
        }
        err += e.sub(t)?.norm_sqr();
        den += t.norm_sqr();
    }
    if den == 0.0 {
        return Err(EstimationError::UndefinedMetric);
    }
    Ok(err / den)
}

pub fn nmse_db(estimate: &[ComplexMatrix], truth: &[ComplexMatrix]) -> Result<f64, EstimationError> {
    nmse(estimate, truth).map(crate::numerics::linear_to_db)
}

/// Simulated stage 1: N self-reflected pilots with unit symbols.
pub fn run_stage1(
    g1: &ComplexMatrix,
    plan: &PilotPlan,
    sigma2: f64,
    rng: &mut SimRng,
) -> Result<(ComplexMatrix, ComplexMatrix), EstimationError> {
    let patterns = plan.patterns(plan.stage1_slots());
    let x = vec![Complex64::new(1.0, 0.0); patterns.len()];
    let y = synth_fda_rx(g1, &patterns, &x, sigma2, rng)?;
    estimate_g1(&y, &patterns, &x)
}

/// Simulated reference phase: user 1 alone over 2(N+1) slots, one pattern
/// per slot. Returns the LS estimate of `H₁`.
pub fn run_reference(h1: &ComplexMatrix, plan: &PilotPlan, sigma2: f64, rng: &mut SimRng) -> Result<ComplexMatrix, EstimationError> {
    let patterns = plan.patterns(plan.reference_slots());
    let one = ComplexMatrix::row(vec![Complex64::new(1.0, 0.0)]);
    let blocks = patterns
        .iter()
        .map(|v| synth_uplink_rx(std::slice::from_ref(h1), v, &one, sigma2, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mut est = estimate_cascaded_reference(&blocks, &patterns, &one, 1.0)?;
    Ok(est.remove(0))
}

/// Simulated reduced phase for one step: each user in turn sends ⌈N/M⌉
/// unit pilots. Returns per-user `(ĥ_k, Ĥ_k)`.
pub fn run_reduced_step(
    cascaded: &[ComplexMatrix],
    g_hat: &ComplexMatrix,
    plan: &PilotPlan,
    sigma2: f64,
    rng: &mut SimRng,
) -> Result<Vec<(ComplexMatrix, ComplexMatrix)>, EstimationError> {
    let patterns = plan.reduced_patterns();
    let one = ComplexMatrix::row(vec![Complex64::new(1.0, 0.0)]);
    cascaded
        .iter()
        .map(|hk| {
            let obs = patterns
                .iter()
                .map(|v| synth_uplink_rx(std::slice::from_ref(hk), v, &one, sigma2, rng))
                .collect::<Result<Vec<_>, _>>()?;
            estimate_cascaded_reduced(&obs, g_hat, &patterns, Complex64::new(1.0, 0.0), sigma2)
        })
        .collect()
}

/// Simulated direct estimation for one step (N·K slots).
pub fn run_direct_step(
    cascaded: &[ComplexMatrix],
    plan: &PilotPlan,
    sigma2: f64,
    rng: &mut SimRng,
) -> Result<Vec<ComplexMatrix>, EstimationError> {
    let patterns = plan.patterns(plan.elements());
    let blocks = patterns
        .iter()
        .map(|v| synth_uplink_rx(cascaded, v, plan.pilots(), sigma2, rng))
        .collect::<Result<Vec<_>, _>>()?;
    estimate_cascaded_direct(&blocks, plan)
}

/// Output of stages 1 and 2 for a block: `ĝ₁`, the anchored `Ĝ`, and the
/// reduced estimates for steps `first..first+window`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate {
    pub g1_hat: ComplexMatrix,
    pub g1sq_hat: ComplexMatrix,
    pub g_hat: ComplexMatrix,
    pub first_step: usize,
    /// `h_hat[k][i]` and `cascaded[k][i]` belong to step `first_step + i`.
    pub h_hat: Vec<Vec<ComplexMatrix>>,
    pub cascaded: Vec<Vec<ComplexMatrix>>,
    pub pilot_slots: usize,
}

/// Runs stage 1, the reference phase at `first_step`, and the reduced
/// phase for `window` consecutive steps of `episode`.
pub fn estimate_block(
    episode: &Episode,
    plan: &PilotPlan,
    first_step: usize,
    window: usize,
    sigma2: f64,
    rng: &mut SimRng,
) -> Result<BlockEstimate, EstimationError> {
    if first_step == 0 || first_step + window - 1 > episode.steps() {
        return Err(EstimationError::InvalidInput(format!(
            "steps {first_step}..{} outside episode of {} steps",
            first_step + window,
            episode.steps()
        )));
    }
    let g1 = episode.g.row_at(0);
    let (g1_hat, g1sq_hat) = run_stage1(&g1, plan, sigma2, rng)?;
    let h1_ref = run_reference(episode.cascaded(0, first_step), plan, sigma2, rng)?;
    let g_hat = g_from_reference(&h1_ref, &g1_hat)?;
    let users = episode.users();
    let mut h_hat = vec![Vec::with_capacity(window); users];
    let mut cascaded = vec![Vec::with_capacity(window); users];
    for s in first_step..first_step + window {
        let est = run_reduced_step(&episode.cascaded_at(s), &g_hat, plan, sigma2, rng)?;
        for (k, (h, c)) in est.into_iter().enumerate() {
            h_hat[k].push(h);
            cascaded[k].push(c);
        }
    }
    Ok(BlockEstimate {
        g1_hat,
        g1sq_hat,
        g_hat,
        first_step,
        h_hat,
        cascaded,
        pilot_slots: plan.block_slots(window),
    })
}
