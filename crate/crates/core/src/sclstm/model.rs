use num_complex::Complex64;
use rayon::prelude::*;

use super::lstm::{lstm_sequence_backward, lstm_sequence_forward, Dense, LstmCache, LstmLayer};
use super::mask::{build_masks, stacked_index, MaskedLinear};
use super::SclstmError;
use crate::numerics::{ComplexMatrix, SimRng};

/// Problem sizes a parameter set is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub antennas: usize,
    pub elements: usize,
    pub users: usize,
    pub window: usize,
}

impl Dims {
    pub fn new(antennas: usize, elements: usize, users: usize, window: usize) -> Self {
        Self {
            antennas,
            elements,
            users,
            window,
        }
    }

    pub fn from_config(cfg: &crate::channel::SystemConfig) -> Self {
        Self::new(cfg.antennas, cfg.ris_elements(), cfg.users, cfg.window)
    }

    /// Length of one stacked cascaded channel, 2MN.
    pub fn stacked_len(&self) -> usize {
        2 * self.antennas * self.elements
    }
}

/// All trainable tensors of the network.
///
/// The G-layer and the h-layer are masked linear maps; the LSTM block
/// (LSTM of 6N cells, LSTM of 4N cells, dense 2N outputs) and the h-layer
/// are shared by every user.
#[derive(Debug, Clone, PartialEq)]
pub struct SclstmParams {
    pub dims: Dims,
    pub g_layer: MaskedLinear,
    pub h_layer: MaskedLinear,
    pub lstm1: LstmLayer,
    pub lstm2: LstmLayer,
    pub dense: Dense,
}

/// Real/imag-stacked network input for one sample: `x[k][s]` is the
/// 2MN-vector of user k's estimate at window step s.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput {
    pub x: Vec<Vec<Vec<f64>>>,
}

/// Network outputs in complex form.
#[derive(Debug, Clone, PartialEq)]
pub struct SclstmOutput {
    pub g_tilde: ComplexMatrix,
    pub h_tilde: Vec<ComplexMatrix>,
    pub cascaded: Vec<ComplexMatrix>,
}

/// Column-major real/imag stacking `[vec(Re X); vec(Im X)]`.
pub fn stack_complex(x: &ComplexMatrix, scale: f64) -> Vec<f64> {
    let (m, n) = x.shape();
    let mut out = vec![0.0; 2 * m * n];
    for c in 0..n {
        for r in 0..m {
            let i = stacked_index(r, c, m);
            let z = x[(r, c)] * scale;
            out[i] = z.re;
            out[m * n + i] = z.im;
        }
    }
    out
}

pub fn unstack_matrix(v: &[f64], m: usize, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(m, n, |r, c| {
        let i = stacked_index(r, c, m);
        Complex64::new(v[i], v[m * n + i])
    })
}

fn unstack_vector(v: &[f64], n: usize) -> ComplexMatrix {
    ComplexMatrix::column((0..n).map(|i| Complex64::new(v[i], v[n + i])).collect())
}

impl SampleInput {
    /// Builds the input from `history[k][s]` (M×N each), scaled by `scale`.
    pub fn from_history(history: &[Vec<ComplexMatrix>], scale: f64) -> Self {
        Self {
            x: history
                .iter()
                .map(|user| user.iter().map(|h| stack_complex(h, scale)).collect())
                .collect(),
        }
    }

    pub fn users(&self) -> usize {
        self.x.len()
    }

    pub fn window(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Average of every stacked entry over users and window steps.
    pub fn mean(&self) -> Result<Vec<f64>, SclstmError> {
        let count = self.users() * self.window();
        if count == 0 {
            return Err(SclstmError::InvalidInput("empty history".into()));
        }
        let len = self.x[0][0].len();
        let mut acc = vec![0.0; len];
        for user in &self.x {
            for step in user {
                if step.len() != len {
                    return Err(SclstmError::InvalidInput("history entries differ in length".into()));
                }
                for (a, v) in acc.iter_mut().zip(step) {
                    *a += v;
                }
            }
        }
        for a in &mut acc {
            *a /= count as f64;
        }
        Ok(acc)
    }
}

/// G-layer input: the elementwise mean over all K·S estimated cascaded
/// channels, real/imag stacked.
pub fn g_layer_input(history: &[Vec<ComplexMatrix>]) -> Result<Vec<f64>, SclstmError> {
    SampleInput::from_history(history, 1.0).mean()
}

impl SclstmParams {
    pub fn zeros(dims: Dims) -> Self {
        let (gm, hm) = build_masks(dims.antennas, dims.elements);
        let n = dims.elements;
        Self {
            dims,
            g_layer: MaskedLinear::zeros(gm),
            h_layer: MaskedLinear::zeros(hm),
            lstm1: LstmLayer::zeros(2 * n, 6 * n),
            lstm2: LstmLayer::zeros(6 * n, 4 * n),
            dense: Dense::zeros(4 * n, 2 * n),
        }
    }

    pub fn init(dims: Dims, rng: &mut SimRng) -> Self {
        let (gm, hm) = build_masks(dims.antennas, dims.elements);
        let n = dims.elements;
        Self {
            dims,
            g_layer: MaskedLinear::glorot(gm, rng),
            h_layer: MaskedLinear::glorot(hm, rng),
            lstm1: LstmLayer::glorot(2 * n, 6 * n, rng),
            lstm2: LstmLayer::glorot(6 * n, 4 * n, rng),
            dense: Dense::glorot(4 * n, 2 * n, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Trainable parameters of the shared LSTM block (both LSTMs and the
    /// dense layer).
    pub fn block_param_count(&self) -> usize {
        self.lstm1.param_count() + self.lstm2.param_count() + self.dense.param_count()
    }

    /// Allowed weights of the G-layer and the h-layer.
    pub fn sparse_weight_counts(&self) -> (usize, usize) {
        (self.g_layer.mask.nnz(), self.h_layer.mask.nnz())
    }

    /// Every tensor in a fixed order, paired with its name and shape.
    pub fn tensors(&self) -> Vec<(&'static str, [usize; 2], &[f64])> {
        let w = |m: &super::tensor::Mat| [m.rows, m.cols];
        vec![
            ("g_layer.weight", w(&self.g_layer.weight), &self.g_layer.weight.data[..]),
            ("g_layer.bias", [self.g_layer.bias.len(), 1], &self.g_layer.bias[..]),
            ("h_layer.weight", w(&self.h_layer.weight), &self.h_layer.weight.data[..]),
            ("h_layer.bias", [self.h_layer.bias.len(), 1], &self.h_layer.bias[..]),
            ("lstm1.w_z", w(&self.lstm1.w_z), &self.lstm1.w_z.data[..]),
            ("lstm1.w_u", w(&self.lstm1.w_u), &self.lstm1.w_u.data[..]),
            ("lstm1.b", [self.lstm1.b.len(), 1], &self.lstm1.b[..]),
            ("lstm2.w_z", w(&self.lstm2.w_z), &self.lstm2.w_z.data[..]),
            ("lstm2.w_u", w(&self.lstm2.w_u), &self.lstm2.w_u.data[..]),
            ("lstm2.b", [self.lstm2.b.len(), 1], &self.lstm2.b[..]),
            ("dense.weight", w(&self.dense.weight), &self.dense.weight.data[..]),
            ("dense.bias", [self.dense.bias.len(), 1], &self.dense.bias[..]),
        ]
    }

    /// Mutable views in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.g_layer.weight.data[..],
            &mut self.g_layer.bias[..],
            &mut self.h_layer.weight.data[..],
            &mut self.h_layer.bias[..],
            &mut self.lstm1.w_z.data[..],
            &mut self.lstm1.w_u.data[..],
            &mut self.lstm1.b[..],
            &mut self.lstm2.w_z.data[..],
            &mut self.lstm2.w_u.data[..],
            &mut self.lstm2.b[..],
            &mut self.dense.weight.data[..],
            &mut self.dense.bias[..],
        ]
    }

    pub fn apply_masks(&mut self) {
        self.g_layer.apply_mask();
        self.h_layer.apply_mask();
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Adds `scale·other` tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src: Vec<Vec<f64>> = other.tensors().into_iter().map(|(_, _, t)| t.to_vec()).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += scale * v;
            }
        }
    }

    fn check_input(&self, input: &SampleInput) -> Result<(), SclstmError> {
        let len = self.dims.stacked_len();
        if input.users() == 0 || input.window() == 0 {
            return Err(SclstmError::InvalidInput("empty history".into()));
        }
        for user in &input.x {
            if user.len() != input.window() || user.iter().any(|s| s.len() != len) {
                return Err(SclstmError::InvalidInput(format!(
                    "every user needs {} steps of length {len}",
                    input.window()
                )));
            }
        }
        Ok(())
    }
}

struct UserTrace {
    z: Vec<Vec<f64>>,
    c1: Vec<LstmCache>,
    c2: Vec<LstmCache>,
    u2_last: Vec<f64>,
    h: Vec<f64>,
}

struct Trace {
    xbar: Vec<f64>,
    g: Vec<f64>,
    users: Vec<UserTrace>,
}

fn forward_trace(p: &SclstmParams, input: &SampleInput) -> Result<Trace, SclstmError> {
    p.check_input(input)?;
    let xbar = input.mean()?;
    let mut g = vec![0.0; p.dims.stacked_len()];
    p.g_layer.forward_into(&xbar, &mut g);
    let n = p.dims.elements;
    let users = input
        .x
        .iter()
        .map(|steps| {
            let z: Vec<Vec<f64>> = steps
                .iter()
                .map(|x| {
                    let mut z = vec![0.0; 2 * n];
                    p.h_layer.forward_into(x, &mut z);
                    z
                })
                .collect();
            let (u1, c1) = lstm_sequence_forward(&p.lstm1, &z);
            let (u2, c2) = lstm_sequence_forward(&p.lstm2, &u1);
            let u2_last = u2.last().cloned().unwrap_or_default();
            let h = p.dense.forward(&u2_last);
            UserTrace { z, c1, c2, u2_last, h }
        })
        .collect();
    Ok(Trace { xbar, g, users })
}

fn complex_outputs(p: &SclstmParams, t: &Trace) -> SclstmOutput {
    let (m, n) = (p.dims.antennas, p.dims.elements);
    let g_tilde = unstack_matrix(&t.g, m, n);
    let h_tilde: Vec<ComplexMatrix> = t.users.iter().map(|u| unstack_vector(&u.h, n)).collect();
    let cascaded = h_tilde
        .iter()
        .map(|h| crate::channel::cascade(&g_tilde, h).expect("shapes from dims"))
        .collect();
    SclstmOutput {
        g_tilde,
        h_tilde,
        cascaded,
    }
}

/// Full forward pass: G-layer on the averaged history, shared h-layer on
/// every step, LSTM block per user, then `H̃_k = G̃·diag(h̃_k)`.
pub fn sclstm_forward(params: &SclstmParams, input: &SampleInput) -> Result<SclstmOutput, SclstmError> {
    if let Some((row, col)) = params.g_layer.mask_violation().or(params.h_layer.mask_violation()) {
        return Err(SclstmError::MaskViolation { row, col });
    }
    let trace = forward_trace(params, input)?;
    Ok(complex_outputs(params, &trace))
}

/// `(1/B)·Σ_b Σ_k ‖H̃_k − H_k‖²`.
pub fn loss_mse(predicted: &[Vec<ComplexMatrix>], targets: &[Vec<ComplexMatrix>]) -> Result<f64, SclstmError> {
    if predicted.len() != targets.len() || predicted.is_empty() {
        return Err(SclstmError::InvalidInput("prediction and target batches differ".into()));
    }
    let mut total = 0.0;
    for (p, t) in predicted.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(SclstmError::InvalidInput("user counts differ".into()));
        }
        for (a, b) in p.iter().zip(t) {
            total += a.sub(b).map_err(|e| SclstmError::InvalidInput(e.to_string()))?.norm_sqr();
        }
    }
    Ok(total / predicted.len() as f64)
}

/// One training pair: network input and the (normalised) true cascaded
/// channels at the prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: SampleInput,
    pub target: Vec<ComplexMatrix>,
}

impl TrainingSample {
    /// Rotates user k's history and target by the phase `phases[k]`.
    /// Circularly symmetric channels make the rotated pair equally likely.
    pub fn rotated(&self, phases: &[f64]) -> TrainingSample {
        let x = self
            .input
            .x
            .iter()
            .zip(phases)
            .map(|(steps, &phi)| {
                let (sin, cos) = phi.sin_cos();
                steps
                    .iter()
                    .map(|v| {
                        let half = v.len() / 2;
                        let mut out = vec![0.0; v.len()];
                        for i in 0..half {
                            out[i] = cos * v[i] - sin * v[half + i];
                            out[half + i] = sin * v[i] + cos * v[half + i];
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        let target = self
            .target
            .iter()
            .zip(phases)
            .map(|(t, &phi)| t.scale(Complex64::from_polar(1.0, phi)))
            .collect();
        TrainingSample {
            input: SampleInput { x },
            target,
        }
    }
}

/// Loss of one sample weighted by `weight`, accumulating `weight·∇loss`
/// into `grad`.
fn sample_gradient(p: &SclstmParams, sample: &TrainingSample, weight: f64, grad: &mut SclstmParams) -> Result<f64, SclstmError> {
    let trace = forward_trace(p, &sample.input)?;
    if sample.target.len() != trace.users.len() {
        return Err(SclstmError::InvalidInput("target user count differs from input".into()));
    }
    let (m, n) = (p.dims.antennas, p.dims.elements);
    let mn = m * n;
    let g = &trace.g;
    let mut dg = vec![0.0; 2 * mn];
    let mut loss = 0.0;
    for (k, user) in trace.users.iter().enumerate() {
        let target = &sample.target[k];
        let mut dh = vec![0.0; 2 * n];
        for c in 0..n {
            let h = Complex64::new(user.h[c], user.h[n + c]);
            let mut gh = Complex64::new(0.0, 0.0);
            for r in 0..m {
                let i = stacked_index(r, c, m);
                let gt = Complex64::new(g[i], g[mn + i]);
                let e = gt * h - target[(r, c)];
                loss += e.norm_sqr();
                let ge = e * (2.0 * weight);
                let dgt = ge * h.conj();
                dg[i] += dgt.re;
                dg[mn + i] += dgt.im;
                gh += ge * gt.conj();
            }
            dh[c] = gh.re;
            dh[n + c] = gh.im;
        }
        grad.dense.weight.outer_add(&dh, &user.u2_last);
        for (b, d) in grad.dense.bias.iter_mut().zip(&dh) {
            *b += d;
        }
        let window = user.c2.len();
        let mut du2 = vec![vec![0.0; p.lstm2.hidden]; window];
        p.dense.weight.matvec_t_add(&dh, &mut du2[window - 1]);
        let du1 = lstm_sequence_backward(&p.lstm2, &user.c2, &du2, &mut grad.lstm2);
        let dz = lstm_sequence_backward(&p.lstm1, &user.c1, &du1, &mut grad.lstm1);
        for (x, d) in sample.input.x[k].iter().zip(&dz) {
            p.h_layer.backward_params(x, d, &mut grad.h_layer);
        }
        debug_assert_eq!(user.z.len(), dz.len());
    }
    p.g_layer.backward_params(&trace.xbar, &dg, &mut grad.g_layer);
    Ok(loss * weight)
}

/// Samples per gradient work unit; fixed so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 8;

/// Batch loss and its exact gradient with respect to every parameter.
///
/// Samples are processed in fixed chunks that may run in parallel; chunk
/// results are summed in index order, so the result is bit-identical for
/// any number of threads.
pub fn sclstm_backward(params: &SclstmParams, batch: &[TrainingSample]) -> Result<(f64, SclstmParams), SclstmError> {
    let refs: Vec<&TrainingSample> = batch.iter().collect();
    backward_refs(params, &refs)
}

pub(crate) fn backward_refs(params: &SclstmParams, batch: &[&TrainingSample]) -> Result<(f64, SclstmParams), SclstmError> {
    if batch.is_empty() {
        return Err(SclstmError::InvalidInput("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let parts: Vec<Result<(f64, SclstmParams), SclstmError>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = params.zeros_like();
            let mut loss = 0.0;
            for s in chunk {
                loss += sample_gradient(params, s, weight, &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = params.zeros_like();
    for part in parts {
        let (l, g) = part?;
        total += l;
        grad.add_scaled(&g, 1.0);
    }
    Ok((total, grad))
}

/// Mean loss over a sample set without gradients.
pub fn batch_loss(params: &SclstmParams, samples: &[TrainingSample]) -> Result<f64, SclstmError> {
    if samples.is_empty() {
        return Err(SclstmError::InvalidInput("empty batch".into()));
    }
    let parts: Vec<Result<f64, SclstmError>> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for s in chunk {
                let out = complex_outputs(params, &forward_trace(params, &s.input)?);
                for (a, b) in out.cascaded.iter().zip(&s.target) {
                    acc += a.sub(b).map_err(|e| SclstmError::InvalidInput(e.to_string()))?.norm_sqr();
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / samples.len() as f64)
}
