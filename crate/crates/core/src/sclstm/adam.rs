use serde::{Deserialize, Serialize};

use super::model::SclstmParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    /// Inverse-time decay: step t uses `lr / (1 + decay·(t−1))`.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate multiplier for the G-layer weights only.
    #[serde(default = "unit")]
    pub g_weight_lr_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            g_weight_lr_scale: 1.0,
        }
    }
}

impl AdamConfig {
    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr / (1.0 + self.decay * step.saturating_sub(1) as f64)
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &SclstmParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Applies one bias-corrected Adam update and re-imposes the sparse masks.
/// Returns the learning rate used.
pub fn adam_step(params: &mut SclstmParams, grads: &SclstmParams, state: &mut AdamState, cfg: &AdamConfig) -> f64 {
    state.step += 1;
    let t = state.step;
    let lr = cfg.lr_at(t);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let g_all = grads.tensors();
    for (ti, (((p, (_, _, g)), m), v)) in params.tensors_mut().into_iter().zip(g_all).zip(&mut state.m).zip(&mut state.v).enumerate() {
        let step = if ti == 0 { lr * cfg.g_weight_lr_scale } else { lr };
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= step * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    params.apply_masks();
    lr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SimRng;
    use crate::sclstm::Dims;

    #[test]
    fn first_step_magnitude() {
        let dims = Dims::new(1, 1, 1, 1);
        let mut p = SclstmParams::zeros(dims);
        let mut g = SclstmParams::zeros(dims);
        g.dense.bias[0] = 1.0;
        let mut st = AdamState::new(&p);
        let lr = adam_step(&mut p, &g, &mut st, &AdamConfig::default());
        assert_eq!(lr, 1e-3);
        let expect = 0.001 / (1.0 + 1e-8);
        assert!((p.dense.bias[0] + expect).abs() < 1e-18);
    }

    #[test]
    fn decay_schedule() {
        let cfg = AdamConfig::default();
        assert_eq!(cfg.lr_at(1), 1e-3);
        assert!((cfg.lr_at(100_001) - 1e-3 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let dims = Dims::new(2, 3, 1, 2);
        let mut rng = SimRng::new(1);
        let mut p = SclstmParams::init(dims, &mut rng);
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, &AdamConfig::default());
        }
        assert_eq!(p, before);
    }

    #[test]
    fn masks_survive_random_updates() {
        let dims = Dims::new(2, 3, 1, 2);
        let mut rng = SimRng::new(2);
        let mut p = SclstmParams::init(dims, &mut rng);
        let mut st = AdamState::new(&p);
        for _ in 0..100 {
            let mut g = p.zeros_like();
            for t in g.tensors_mut() {
                for x in t.iter_mut() {
                    *x = rng.standard_normal();
                }
            }
            adam_step(&mut p, &g, &mut st, &AdamConfig::default());
            assert!(p.g_layer.mask_violation().is_none());
            assert!(p.h_layer.mask_violation().is_none());
        }
    }
}
