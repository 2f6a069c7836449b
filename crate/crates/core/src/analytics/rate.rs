use num_complex::Complex64;

use super::AnalyticsError;
use crate::numerics::{ComplexMatrix, PivotedQr};

const UNIT_MODULUS_TOLERANCE: f64 = 1e-9;

fn check_phases(theta: &[Complex64]) -> Result<(), AnalyticsError> {
    match theta.iter().position(|t| (t.norm() - 1.0).abs() > UNIT_MODULUS_TOLERANCE) {
        Some(n) => Err(AnalyticsError::Invalid(format!("reflection coefficient {n} is not unit modulus"))),
        None => Ok(()),
    }
}

/// Downlink row `h_kᴴ Θ Gᴴ` (1×M) written through the cascaded channel
/// `H_k = G·diag(h_k)`: it equals `(H_k θ̄)ᴴ`.
pub fn effective_channel(cascaded: &ComplexMatrix, theta: &[Complex64]) -> Result<ComplexMatrix, AnalyticsError> {
    let (m, n) = cascaded.shape();
    if theta.len() != n {
        return Err(AnalyticsError::Invalid(format!("{} phases for {n} RIS elements", theta.len())));
    }
    check_phases(theta)?;
    Ok(ComplexMatrix::from_fn(1, m, |_, r| {
        (0..n).map(|c| cascaded[(r, c)] * theta[c].conj()).sum::<Complex64>().conj()
    }))
}

/// Rate with the cascaded channels; see [`sum_rate`].
pub fn sum_rate_cascaded(
    cascaded: &[ComplexMatrix],
    w: &ComplexMatrix,
    theta: &[Complex64],
    sigma2: f64,
    lambda_d: f64,
) -> Result<f64, AnalyticsError> {
    let users = cascaded.len();
    if users == 0 {
        return Err(AnalyticsError::Invalid("no users".into()));
    }
    let m = cascaded[0].rows();
    if w.shape() != (m, users) {
        return Err(AnalyticsError::Invalid(format!("precoder is {:?}, expected {m}x{users}", w.shape())));
    }
    if !(sigma2 >= 0.0) {
        return Err(AnalyticsError::Invalid("noise variance must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&lambda_d) {
        return Err(AnalyticsError::Invalid("lambda_d must lie in [0, 1]".into()));
    }
    let mut total = 0.0;
    for (k, h) in cascaded.iter().enumerate() {
        if h.rows() != m {
            return Err(AnalyticsError::Invalid("cascaded channels differ in shape".into()));
        }
        let gains = effective_channel(h, theta)?.matmul(w)?;
        let signal = gains[(0, k)].norm_sqr();
        let interference: f64 = (0..users).filter(|&j| j != k).map(|j| gains[(0, j)].norm_sqr()).sum();
        let denom = interference + sigma2;
        if signal == 0.0 {
            continue;
        }
        if denom == 0.0 {
            return Err(AnalyticsError::InfiniteSinr { user: k });
        }
        total += (1.0 + signal / denom).log2();
    }
    Ok(lambda_d * total)
}

/// `λ_d·Σ_k log₂(1 + SINR_k)` for unit-energy symbols; `w` holds one
/// precoding column per user.
pub fn sum_rate(
    g: &ComplexMatrix,
    h: &[ComplexMatrix],
    w: &ComplexMatrix,
    theta: &[Complex64],
    sigma2: f64,
    lambda_d: f64,
) -> Result<f64, AnalyticsError> {
    let cascaded = h
        .iter()
        .map(|hk| crate::channel::cascade(g, hk))
        .collect::<Result<Vec<_>, _>>()?;
    sum_rate_cascaded(&cascaded, w, theta, sigma2, lambda_d)
}

/// Zero-forcing precoder `Aᴴ(AAᴴ)⁻¹` for the stacked rows `A`, scaled to
/// unit total power.
pub fn zf_precoder(effective: &[ComplexMatrix]) -> Result<ComplexMatrix, AnalyticsError> {
    if effective.is_empty() {
        return Err(AnalyticsError::Invalid("no users".into()));
    }
    let m = effective[0].cols();
    if effective.iter().any(|a| a.shape() != (1, m)) {
        return Err(AnalyticsError::Invalid("effective channels must be 1xM rows".into()));
    }
    let a = ComplexMatrix::vstack(effective)?;
    let users = a.rows();
    let a_h = a.adjoint();
    let rank = if users > m { m } else { PivotedQr::new(&a_h)?.rank() };
    if rank < users {
        return Err(AnalyticsError::RankDeficient { rank, required: users });
    }
    let gram = a.matmul(&a_h)?;
    let inv = PivotedQr::new(&gram)?.solve(&ComplexMatrix::identity(users))?;
    let w = a_h.matmul(&inv)?;
    Ok(w.scale_real(1.0 / w.frobenius_norm()))
}

/// Reflection phases maximising the strongest user's received energy one
/// element at a time: element n rotates column n of `H_k` onto the sum of
/// the columns already chosen.
pub fn greedy_theta(cascaded: &[ComplexMatrix]) -> Result<Vec<Complex64>, AnalyticsError> {
    let strongest = cascaded
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(k, _)| k)
        .ok_or_else(|| AnalyticsError::Invalid("no users".into()))?;
    let h = &cascaded[strongest];
    let (m, n) = h.shape();
    let mut acc = vec![Complex64::new(0.0, 0.0); m];
    let mut theta = Vec::with_capacity(n);
    for c in 0..n {
        let inner: Complex64 = (0..m).map(|r| h[(r, c)].conj() * acc[r]).sum();
        // θ̄_n = e^{j·arg(inner)}
        let bar = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
        for (r, a) in acc.iter_mut().enumerate() {
            *a += h[(r, c)] * bar;
        }
        theta.push(bar.conj());
    }
    Ok(theta)
}

/// Sum rate on the true channels when Θ and the ZF precoder are designed
/// from `estimated` channels.
pub fn rate_with_csi(
    truth: &[ComplexMatrix],
    estimated: &[ComplexMatrix],
    sigma2: f64,
    lambda_d: f64,
) -> Result<f64, AnalyticsError> {
    let theta = greedy_theta(estimated)?;
    let eff = estimated
        .iter()
        .map(|h| effective_channel(h, &theta))
        .collect::<Result<Vec<_>, _>>()?;
    let w = zf_precoder(&eff)?;
    sum_rate_cascaded(truth, &w, &theta, sigma2, lambda_d)
}
