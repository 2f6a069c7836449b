use super::tensor::{sigmoid, Mat};
use crate::numerics::SimRng;

/// Gate order inside the stacked weight matrices.
pub const GATES: [&str; 4] = ["f", "q", "i", "o"];

/// One LSTM layer. The four gate matrices are stacked row-wise in the order
/// forget, candidate, input, output, so `w_z` is 4H×In, `w_u` is 4H×H and
/// `b` has 4H entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    pub w_z: Mat,
    pub w_u: Mat,
    pub b: Vec<f64>,
}

/// Activations of one cell evaluation, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    pub z: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub q_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub q_cand: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_q: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w_z: Mat::zeros(4 * hidden, input),
            w_u: Mat::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Glorot-uniform gate weights, forget bias +1, other biases 0.
    pub fn glorot(input: usize, hidden: usize, rng: &mut SimRng) -> Self {
        let mut layer = Self::zeros(input, hidden);
        let lz = (6.0 / (input + hidden) as f64).sqrt();
        let lu = (6.0 / (2 * hidden) as f64).sqrt();
        for w in &mut layer.w_z.data {
            *w = rng.uniform_range(-lz, lz);
        }
        for w in &mut layer.w_u.data {
            *w = rng.uniform_range(-lu, lu);
        }
        layer.b[..hidden].fill(1.0);
        layer
    }

    pub fn param_count(&self) -> usize {
        self.w_z.data.len() + self.w_u.data.len() + self.b.len()
    }

    /// Bias slice of gate `g` (index into [`GATES`]).
    pub fn gate_bias_mut(&mut self, g: usize) -> &mut [f64] {
        let h = self.hidden;
        &mut self.b[g * h..(g + 1) * h]
    }
}

/// One step of the cell:
/// `f = σ(·)`, `q̃ = tanh(·)`, `i = σ(·)`, `q = q̃⊙i + q_prev⊙f`,
/// `o = σ(·)`, `u = tanh(q)⊙o`. Returns `(u, q, cache)`.
pub fn lstm_cell_forward(layer: &LstmLayer, z: &[f64], u_prev: &[f64], q_prev: &[f64]) -> (Vec<f64>, Vec<f64>, LstmCache) {
    let h = layer.hidden;
    let mut pre = layer.b.clone();
    layer.w_z.matvec_add(z, &mut pre);
    layer.w_u.matvec_add(u_prev, &mut pre);
    let f: Vec<f64> = pre[..h].iter().map(|&x| sigmoid(x)).collect();
    let q_cand: Vec<f64> = pre[h..2 * h].iter().map(|x| x.tanh()).collect();
    let i: Vec<f64> = pre[2 * h..3 * h].iter().map(|&x| sigmoid(x)).collect();
    let o: Vec<f64> = pre[3 * h..].iter().map(|&x| sigmoid(x)).collect();
    let mut q = vec![0.0; h];
    let mut tanh_q = vec![0.0; h];
    let mut u = vec![0.0; h];
    for j in 0..h {
        q[j] = q_cand[j] * i[j] + q_prev[j] * f[j];
        tanh_q[j] = q[j].tanh();
        u[j] = tanh_q[j] * o[j];
    }
    let cache = LstmCache {
        z: z.to_vec(),
        u_prev: u_prev.to_vec(),
        q_prev: q_prev.to_vec(),
        f,
        q_cand,
        i,
        o,
        tanh_q,
    };
    (u, q, cache)
}

/// Runs the layer over a sequence from zero initial states; returns the
/// per-step outputs and caches.
pub fn lstm_sequence_forward(layer: &LstmLayer, inputs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<LstmCache>) {
    let h = layer.hidden;
    let mut u = vec![0.0; h];
    let mut q = vec![0.0; h];
    let mut outs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for z in inputs {
        let (u_next, q_next, cache) = lstm_cell_forward(layer, z, &u, &q);
        u = u_next;
        q = q_next;
        outs.push(u.clone());
        caches.push(cache);
    }
    (outs, caches)
}

/// Backpropagation through time. `du_out[t]` is the loss gradient with
/// respect to the output at step `t`; parameter gradients accumulate into
/// `grad` and the gradients with respect to the inputs are returned.
pub fn lstm_sequence_backward(layer: &LstmLayer, caches: &[LstmCache], du_out: &[Vec<f64>], grad: &mut LstmLayer) -> Vec<Vec<f64>> {
    let h = layer.hidden;
    let mut du_next = vec![0.0; h];
    let mut dq_next = vec![0.0; h];
    let mut dz_all = vec![Vec::new(); caches.len()];
    let mut da = vec![0.0; 4 * h];
    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        for j in 0..h {
            let du = du_out[t][j] + du_next[j];
            let d_o = du * c.tanh_q[j];
            let dq = dq_next[j] + du * c.o[j] * (1.0 - c.tanh_q[j] * c.tanh_q[j]);
            let d_cand = dq * c.i[j];
            let d_i = dq * c.q_cand[j];
            let d_f = dq * c.q_prev[j];
            dq_next[j] = dq * c.f[j];
            da[j] = d_f * c.f[j] * (1.0 - c.f[j]);
            da[h + j] = d_cand * (1.0 - c.q_cand[j] * c.q_cand[j]);
            da[2 * h + j] = d_i * c.i[j] * (1.0 - c.i[j]);
            da[3 * h + j] = d_o * c.o[j] * (1.0 - c.o[j]);
        }
        grad.w_z.outer_add(&da, &c.z);
        grad.w_u.outer_add(&da, &c.u_prev);
        for (g, d) in grad.b.iter_mut().zip(&da) {
            *g += d;
        }
        let mut dz = vec![0.0; layer.input];
        layer.w_z.matvec_t_add(&da, &mut dz);
        du_next.fill(0.0);
        layer.w_u.matvec_t_add(&da, &mut du_next);
        dz_all[t] = dz;
    }
    dz_all
}

/// Fully connected output layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Mat::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn glorot(input: usize, output: usize, rng: &mut SimRng) -> Self {
        let mut d = Self::zeros(input, output);
        let l = (6.0 / (input + output) as f64).sqrt();
        for w in &mut d.weight.data {
            *w = rng.uniform_range(-l, l);
        }
        d
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        self.weight.matvec_add(x, &mut y);
        y
    }

    pub fn param_count(&self) -> usize {
        self.weight.data.len() + self.bias.len()
    }
}
