//! Closed-form pilot overhead, feasibility thresholds, parameter counts and
//! the downlink sum rate.
//!
//! Slot counts are integers and every ratio is an exact [`Rational64`].

mod rate;

use num_rational::Rational64;
use thiserror::Error;

pub use rate::{
    effective_channel, greedy_theta, rate_with_csi, sum_rate, sum_rate_cascaded, zf_precoder,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("infeasible baseline: {0}")]
    InfeasibleBaseline(String),
    #[error("rank deficient effective channel: rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("SINR of user {user} is unbounded (no noise and no interference)")]
    InfiniteSinr { user: usize },
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

fn rational(n: u64) -> Rational64 {
    Rational64::from_integer(n as i64)
}

/// Scenario of one overhead evaluation. `small_slots` is T_S, which need
/// not be an integer when sweeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadParams {
    pub antennas: u64,
    pub elements: u64,
    pub users: u64,
    pub window: u64,
    pub large_slots: u64,
    pub small_slots: Rational64,
    /// PARAFAC-VAMP pilot count P; `None` takes ⌈N/M⌉.
    pub parafac_p: Option<u64>,
}

impl OverheadParams {
    pub fn new(antennas: u64, elements: u64, users: u64, window: u64, large_slots: u64, small_slots: Rational64) -> Self {
        Self {
            antennas,
            elements,
            users,
            window,
            large_slots,
            small_slots,
            parafac_p: None,
        }
    }

    /// τ = T_L / T_S.
    pub fn tau(&self) -> Rational64 {
        rational(self.large_slots) / self.small_slots
    }

    fn validate(&self) -> Result<(), AnalyticsError> {
        for (name, v) in [
            ("M", self.antennas),
            ("N", self.elements),
            ("K", self.users),
            ("S", self.window),
            ("T_L", self.large_slots),
        ] {
            if v == 0 {
                return Err(AnalyticsError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.small_slots <= Rational64::from_integer(0) {
            return Err(AnalyticsError::Invalid("T_S must be positive".into()));
        }
        if self.small_slots > rational(self.large_slots) {
            return Err(AnalyticsError::Invalid("T_S cannot exceed T_L".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sclstm,
    Mvu,
    ParafacVamp,
    TwoTimescale,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sclstm => "sclstm",
            Method::Mvu => "mvu",
            Method::ParafacVamp => "parafac-vamp",
            Method::TwoTimescale => "two-timescale",
        }
    }
}

/// Average pilot slots per T_S of one method and its data coefficient.
/// `lambda_d` is `None` when the pilots do not fit into T_S.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOverhead {
    pub method: Method,
    pub p_a: Rational64,
    pub lambda_d: Option<Rational64>,
}

impl MethodOverhead {
    fn new(method: Method, p_a: Rational64, t_s: Rational64) -> Self {
        let lambda_d = (p_a <= t_s).then(|| (t_s - p_a) / t_s);
        Self { method, p_a, lambda_d }
    }

    pub fn is_feasible(&self) -> bool {
        self.lambda_d.is_some()
    }
}

/// τ thresholds above which the framework needs fewer pilots than a
/// baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauBounds {
    /// 3/K + S/M + S/N + 2/(NK).
    pub prop1_loose: Rational64,
    /// P_L/(NK): break-even against MVU and PARAFAC-VAMP.
    pub prop1_exact: Rational64,
    /// M/K + S.
    pub prop2: Rational64,
    /// (P_L − 2(N+1))/(K⌈N/M⌉): break-even against the two-timescale scheme.
    pub prop2_exact: Rational64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadReport {
    pub params: OverheadParams,
    /// Pilot slots per T_L.
    pub p_l: u64,
    pub tau: Rational64,
    pub sclstm: MethodOverhead,
    pub mvu: MethodOverhead,
    pub parafac_vamp: MethodOverhead,
    pub two_timescale: MethodOverhead,
    pub bounds: TauBounds,
}

impl OverheadReport {
    pub fn methods(&self) -> [&MethodOverhead; 4] {
        [&self.sclstm, &self.mvu, &self.parafac_vamp, &self.two_timescale]
    }

    pub fn p_a(&self) -> Rational64 {
        self.sclstm.p_a
    }

    /// λ_d of the framework, 1 − P_L/T_L.
    pub fn lambda_d(&self) -> Option<Rational64> {
        self.sclstm.lambda_d
    }
}

/// Slots per large block: 3N + 2 + K·S·⌈N/M⌉.
pub fn pilot_slots_per_block(antennas: u64, elements: u64, users: u64, window: u64) -> u64 {
    3 * elements + 2 + users * window * ceil_div(elements, antennas)
}

pub fn feasibility_tau_bounds(antennas: u64, elements: u64, users: u64, window: u64) -> Result<TauBounds, AnalyticsError> {
    if antennas == 0 || elements == 0 || users == 0 || window == 0 {
        return Err(AnalyticsError::Invalid("M, N, K and S must be at least 1".into()));
    }
    let (m, n, k, s) = (rational(antennas), rational(elements), rational(users), rational(window));
    let p_l = pilot_slots_per_block(antennas, elements, users, window);
    let q = ceil_div(elements, antennas);
    let bounds = TauBounds {
        prop1_loose: rational(3) / k + s / m + s / n + rational(2) / (n * k),
        prop1_exact: rational(p_l) / (n * k),
        prop2: m / k + s,
        prop2_exact: rational(p_l - 2 * (elements + 1)) / rational(users * q),
    };
    debug_assert!(bounds.prop1_loose >= bounds.prop1_exact);
    debug_assert!(bounds.prop2 >= bounds.prop2_exact);
    Ok(bounds)
}

pub fn pilot_overhead(params: &OverheadParams) -> Result<OverheadReport, AnalyticsError> {
    params.validate()?;
    let (m, n, k, s) = (params.antennas, params.elements, params.users, params.window);
    let p = params.parafac_p.unwrap_or_else(|| ceil_div(n, m));
    if m * p < n {
        return Err(AnalyticsError::InfeasibleBaseline(format!(
            "PARAFAC-VAMP needs M·P >= N, got {m}·{p} < {n}"
        )));
    }
    let p_l = pilot_slots_per_block(m, n, k, s);
    let tau = params.tau();
    let t_s = params.small_slots;
    let q = ceil_div(n, m);
    Ok(OverheadReport {
        params: params.clone(),
        p_l,
        tau,
        sclstm: MethodOverhead::new(Method::Sclstm, rational(p_l) / tau, t_s),
        mvu: MethodOverhead::new(Method::Mvu, rational(n * k), t_s),
        parafac_vamp: MethodOverhead::new(Method::ParafacVamp, rational(k * m * p), t_s),
        two_timescale: MethodOverhead::new(Method::TwoTimescale, rational(2 * (n + 1)) / tau + rational(k * q), t_s),
        bounds: feasibility_tau_bounds(m, n, k, s)?,
    })
}

/// Trainable parameters of stacked LSTM layers followed by a dense layer.
pub fn lstm_param_count(n_in: u64, cells: &[u64], n_out: u64) -> Result<u64, AnalyticsError> {
    if cells.is_empty() {
        return Err(AnalyticsError::Invalid("at least one LSTM layer is required".into()));
    }
    if n_in == 0 || n_out == 0 || cells.contains(&0) {
        return Err(AnalyticsError::Invalid("layer sizes must be at least 1".into()));
    }
    let mut total = 0;
    let mut prev = n_in;
    for &c in cells {
        total += 4 * (prev * c + c * c + c);
        prev = c;
    }
    Ok(total + prev * n_out + n_out)
}

/// Multiplications of one SCLSTM pass: 360KN² + (4KM + 4M + 42K)N.
pub fn sclstm_complexity(antennas: u64, elements: u64, users: u64) -> Result<u64, AnalyticsError> {
    if antennas == 0 || elements == 0 || users == 0 {
        return Err(AnalyticsError::Invalid("M, N and K must be at least 1".into()));
    }
    let (m, n, k) = (antennas, elements, users);
    Ok(360 * k * n * n + (4 * k * m + 4 * m + 42 * k) * n)
}

/// Exact rational to f64 for CSV output.
pub fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
