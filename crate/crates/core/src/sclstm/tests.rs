use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::numerics::{ComplexMatrix, SimRng};

fn random_matrix(m: usize, n: usize, rng: &mut SimRng) -> ComplexMatrix {
    ComplexMatrix::from_fn(m, n, |_, _| rng.complex_normal(1.0))
}

fn random_sample(dims: Dims, rng: &mut SimRng) -> TrainingSample {
    let history: Vec<Vec<ComplexMatrix>> = (0..dims.users)
        .map(|_| (0..dims.window).map(|_| random_matrix(dims.antennas, dims.elements, rng)).collect())
        .collect();
    TrainingSample {
        input: SampleInput::from_history(&history, 0.5),
        target: (0..dims.users).map(|_| random_matrix(dims.antennas, dims.elements, rng).scale_real(0.5)).collect(),
    }
}

fn perturbed_params(dims: Dims, seed: u64) -> SclstmParams {
    let mut rng = SimRng::new(seed);
    let mut p = SclstmParams::init(dims, &mut rng);
    // Non-zero biases so every code path carries gradient.
    for t in p.tensors_mut() {
        for x in t.iter_mut() {
            *x += 0.05 * rng.standard_normal();
        }
    }
    p.apply_masks();
    p
}

#[test]
fn gradient_matches_finite_differences() {
    let dims = Dims::new(2, 4, 2, 3);
    let params = perturbed_params(dims, 11);
    let mut rng = SimRng::new(12);
    let batch: Vec<TrainingSample> = (0..3).map(|_| random_sample(dims, &mut rng)).collect();
    let (loss, grad) = sclstm_backward(&params, &batch).unwrap();
    assert!((loss - batch_loss(&params, &batch).unwrap()).abs() < 1e-10 * loss.max(1.0));

    let h = 1e-6;
    let analytic: Vec<(&str, Vec<f64>)> = grad.tensors().into_iter().map(|(n, _, t)| (n, t.to_vec())).collect();
    let masks = [params.g_layer.mask.clone(), params.h_layer.mask.clone()];
    for (ti, (name, g)) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; g.len()];
        for j in 0..g.len() {
            let masked_out = match ti {
                0 => !masks[0].bitmap()[j],
                2 => !masks[1].bitmap()[j],
                _ => false,
            };
            if masked_out {
                assert_eq!(g[j], 0.0, "{name}[{j}] is masked but has gradient");
                continue;
            }
            let mut plus = params.clone();
            plus.tensors_mut()[ti][j] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][j] -= h;
            numeric[j] = (batch_loss(&plus, &batch).unwrap() - batch_loss(&minus, &batch).unwrap()) / (2.0 * h);
        }
        let diff: f64 = g.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / scale <= 1e-5, "{name}: relative gradient error {}", diff / scale);
    }
}

#[test]
fn masked_weights_get_exactly_zero_gradient() {
    let dims = Dims::new(3, 4, 2, 2);
    let params = perturbed_params(dims, 3);
    let mut rng = SimRng::new(4);
    let batch: Vec<TrainingSample> = (0..4).map(|_| random_sample(dims, &mut rng)).collect();
    let (_, grad) = sclstm_backward(&params, &batch).unwrap();
    for (layer, g) in [(&params.g_layer, &grad.g_layer), (&params.h_layer, &grad.h_layer)] {
        for (allowed, v) in layer.mask.bitmap().iter().zip(&g.weight.data) {
            if !allowed {
                assert_eq!(*v, 0.0);
            }
        }
    }
}

#[test]
fn zero_gradient_at_exact_fit() {
    let dims = Dims::new(2, 3, 1, 2);
    let params = perturbed_params(dims, 8);
    let mut rng = SimRng::new(9);
    let mut sample = random_sample(dims, &mut rng);
    sample.target = sclstm_forward(&params, &sample.input).unwrap().cascaded;
    let (loss, grad) = sclstm_backward(&params, &[sample]).unwrap();
    assert!(loss < 1e-25);
    for (_, _, t) in grad.tensors() {
        assert!(t.iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn output_shapes_and_cascade_identity() {
    let dims = Dims::new(3, 5, 4, 6);
    let params = perturbed_params(dims, 1);
    let mut rng = SimRng::new(2);
    let sample = random_sample(dims, &mut rng);
    let out = sclstm_forward(&params, &sample.input).unwrap();
    assert_eq!(out.g_tilde.shape(), (3, 5));
    assert_eq!(out.h_tilde.len(), 4);
    assert_eq!(out.cascaded.len(), 4);
    for (h, c) in out.h_tilde.iter().zip(&out.cascaded) {
        assert_eq!(h.shape(), (5, 1));
        assert_eq!(c.shape(), (3, 5));
        for r in 0..3 {
            for n in 0..5 {
                let want = out.g_tilde[(r, n)] * h[(n, 0)];
                assert!((c[(r, n)] - want).norm() <= 1e-12);
            }
        }
    }
}

#[test]
fn users_are_permutation_equivariant() {
    let dims = Dims::new(2, 3, 3, 4);
    let params = perturbed_params(dims, 21);
    let mut rng = SimRng::new(22);
    let sample = random_sample(dims, &mut rng);
    let out = sclstm_forward(&params, &sample.input).unwrap();
    let perm = [2, 0, 1];
    let permuted = SampleInput {
        x: perm.iter().map(|&k| sample.input.x[k].clone()).collect(),
    };
    let out_p = sclstm_forward(&params, &permuted).unwrap();
    for (i, &k) in perm.iter().enumerate() {
        assert!(out_p.h_tilde[i].sub(&out.h_tilde[k]).unwrap().max_abs() < 1e-12);
    }
    assert!(out_p.g_tilde.sub(&out.g_tilde).unwrap().max_abs() < 1e-12);
}

#[test]
fn loss_invariant_to_diagonal_rescaling() {
    let mut rng = SimRng::new(30);
    let g = random_matrix(2, 3, &mut rng);
    let hs: Vec<ComplexMatrix> = (0..2).map(|_| random_matrix(3, 1, &mut rng)).collect();
    let targets = vec![(0..2).map(|_| random_matrix(2, 3, &mut rng)).collect::<Vec<_>>()];
    let d: Vec<Complex64> = (0..3).map(|_| Complex64::from_polar(0.5 + rng.uniform(), rng.uniform() * 6.0)).collect();
    let g2 = ComplexMatrix::from_fn(2, 3, |r, c| g[(r, c)] * d[c]);
    let hs2: Vec<ComplexMatrix> = hs.iter().map(|h| ComplexMatrix::from_fn(3, 1, |n, _| h[(n, 0)] / d[n])).collect();
    let pred = |g: &ComplexMatrix, hs: &[ComplexMatrix]| {
        vec![hs.iter().map(|h| crate::channel::cascade(g, h).unwrap()).collect::<Vec<_>>()]
    };
    let a = loss_mse(&pred(&g, &hs), &targets).unwrap();
    let b = loss_mse(&pred(&g2, &hs2), &targets).unwrap();
    assert!((a - b).abs() <= 1e-10 * a);
}

#[test]
fn block_parameter_count_formula() {
    for n in [1usize, 2, 8, 40] {
        let p = SclstmParams::zeros(Dims::new(1, n, 1, 1));
        assert_eq!(p.block_param_count(), 360 * n * n + 42 * n, "N = {n}");
    }
}

#[test]
fn sparse_weight_counts_match_masks() {
    for (m, n) in [(1, 1), (2, 3), (4, 8)] {
        let p = SclstmParams::zeros(Dims::new(m, n, 1, 1));
        let (g, h) = p.sparse_weight_counts();
        assert_eq!(g, 4 * m * n);
        assert_eq!(h, 4 * m * n);
    }
}

#[test]
fn g_layer_input_cases() {
    let one = ComplexMatrix::from_fn(1, 2, |_, c| Complex64::new(c as f64 + 1.0, -(c as f64)));
    assert_eq!(g_layer_input(&[vec![one.clone()]]).unwrap(), vec![1.0, 2.0, 0.0, -1.0]);

    let a = ComplexMatrix::from_fn(2, 1, |r, _| Complex64::new(r as f64, 1.0));
    let b = ComplexMatrix::from_fn(2, 1, |r, _| Complex64::new(3.0 * r as f64, -1.0));
    let mean = g_layer_input(&[vec![a.clone()], vec![b.clone()]]).unwrap();
    assert_eq!(mean, vec![0.0, 2.0, 0.0, 0.0]);

    let same = g_layer_input(&[vec![a.clone(), a.clone()], vec![a.clone(), a.clone()]]).unwrap();
    assert_eq!(same, stack_complex(&a, 1.0));

    assert!(g_layer_input(&[]).is_err());
}

#[test]
fn empty_or_misshapen_input_rejected() {
    let dims = Dims::new(2, 2, 1, 2);
    let params = SclstmParams::zeros(dims);
    assert!(matches!(sclstm_forward(&params, &SampleInput { x: vec![] }), Err(SclstmError::InvalidInput(_))));
    let short = SampleInput {
        x: vec![vec![vec![0.0; 3]; 2]],
    };
    assert!(matches!(sclstm_forward(&params, &short), Err(SclstmError::InvalidInput(_))));
}

#[test]
fn forward_rejects_mask_violation() {
    let dims = Dims::new(2, 2, 1, 1);
    let mut params = SclstmParams::zeros(dims);
    let (r, c) = (0..params.g_layer.weight.rows)
        .flat_map(|r| (0..params.g_layer.weight.cols).map(move |c| (r, c)))
        .find(|&(r, c)| !params.g_layer.mask.allows(r, c))
        .unwrap();
    *params.g_layer.weight.at_mut(r, c) = 1.0;
    let mut rng = SimRng::new(1);
    let s = random_sample(dims, &mut rng);
    assert_eq!(sclstm_forward(&params, &s.input), Err(SclstmError::MaskViolation { row: r, col: c }));
}

#[test]
fn overfits_a_tiny_set() {
    let dims = Dims::new(2, 2, 1, 2);
    let mut rng = SimRng::new(40);
    let data: Vec<TrainingSample> = (0..4).map(|_| random_sample(dims, &mut rng)).collect();
    let cfg = TrainConfig {
        epochs: 400,
        batch_size: 4,
        adam: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        phase_augment: false,
        zero_g_weights: false,
    };
    let out = train(&data, &data, dims, &cfg, &mut SimRng::new(41)).unwrap();
    assert_eq!(out.history.len(), 401);
    assert_eq!(out.history[0].epoch, 0);
    let first = out.history[0].val_loss;
    assert!(out.best_val_loss < 0.2 * first, "{} vs {}", out.best_val_loss, first);
    assert_eq!(batch_loss(&out.params, &data).unwrap(), out.best_val_loss);
}

#[test]
fn training_is_deterministic() {
    let dims = Dims::new(2, 2, 2, 2);
    let mut rng = SimRng::new(50);
    let data: Vec<TrainingSample> = (0..20).map(|_| random_sample(dims, &mut rng)).collect();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 6,
        adam: AdamConfig::default(),
        phase_augment: false,
        zero_g_weights: false,
    };
    let a = train(&data[..15], &data[15..], dims, &cfg, &mut SimRng::new(7)).unwrap();
    let b = train(&data[..15], &data[15..], dims, &cfg, &mut SimRng::new(7)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
}

#[test]
fn divergence_reported() {
    let dims = Dims::new(1, 1, 1, 1);
    let mut rng = SimRng::new(60);
    let mut s = random_sample(dims, &mut rng);
    s.target[0][(0, 0)] = Complex64::new(f64::NAN, 0.0);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 1,
        adam: AdamConfig::default(),
        phase_augment: false,
        zero_g_weights: false,
    };
    let err = train(&[s.clone()], &[s], dims, &cfg, &mut SimRng::new(1)).unwrap_err();
    assert_eq!(err, SclstmError::TrainingDiverged { epoch: 0 });
}

#[test]
fn history_csv_header() {
    let mut buf = Vec::new();
    write_history_csv(
        &[HistoryRow {
            epoch: 0,
            train_loss: 1.0,
            val_loss: 2.0,
            lr: 1e-3,
        }],
        &mut buf,
    )
    .unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("epoch,train_loss,val_loss,lr\n0,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cascade_identity_holds(m in 1usize..4, n in 1usize..5, k in 1usize..3, s in 1usize..4, seed in 0u64..1000) {
        let dims = Dims::new(m, n, k, s);
        let params = perturbed_params(dims, seed);
        let mut rng = SimRng::new(seed + 1);
        let sample = random_sample(dims, &mut rng);
        let out = sclstm_forward(&params, &sample.input).unwrap();
        for (h, c) in out.h_tilde.iter().zip(&out.cascaded) {
            let want = out.g_tilde.matmul(&ComplexMatrix::diag(h)).unwrap();
            prop_assert!(c.sub(&want).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn masks_preserved_by_training(seed in 0u64..100) {
        let dims = Dims::new(2, 3, 1, 2);
        let mut rng = SimRng::new(seed);
        let data: Vec<TrainingSample> = (0..4).map(|_| random_sample(dims, &mut rng)).collect();
        let cfg = TrainConfig { epochs: 2, batch_size: 2, adam: AdamConfig { lr: 0.05, ..AdamConfig::default() }, ..TrainConfig::default() };
        let out = train(&data, &data, dims, &cfg, &mut rng).unwrap();
        prop_assert!(out.params.g_layer.mask_violation().is_none());
        prop_assert!(out.params.h_layer.mask_violation().is_none());
    }

    #[test]
    fn stacking_round_trips(m in 1usize..5, n in 1usize..5, seed in 0u64..1000) {
        let mut rng = SimRng::new(seed);
        let x = random_matrix(m, n, &mut rng);
        prop_assert_eq!(unstack_matrix(&stack_complex(&x, 1.0), m, n), x);
    }
}

#[test]
fn rotated_sample_targets() {
    let dims = Dims::new(2, 3, 2, 3);
    let mut rng = SimRng::new(71);
    let s = random_sample(dims, &mut rng);
    let r = s.rotated(&[0.7, -2.0]);
    for (k, phi) in [0.7f64, -2.0].into_iter().enumerate() {
        let a = stack_complex(&s.target[k].scale(Complex64::from_polar(1.0, phi)), 1.0);
        let b = stack_complex(&r.target[k], 1.0);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }
    let target_energy: f64 = s.target.iter().map(|t| t.norm_sqr()).sum();
    let rotated_energy: f64 = r.target.iter().map(|t| t.norm_sqr()).sum();
    assert!((target_energy - rotated_energy).abs() < 1e-10);
    let x = unstack_matrix(&s.input.x[1][2], 2, 3).scale(Complex64::from_polar(1.0, -2.0));
    assert!(unstack_matrix(&r.input.x[1][2], 2, 3).sub(&x).unwrap().max_abs() < 1e-12);
}

#[test]
fn zero_g_weights_option_starts_from_bias_only() {
    let dims = Dims::new(2, 2, 1, 2);
    let mut rng = SimRng::new(80);
    let data: Vec<TrainingSample> = (0..4).map(|_| random_sample(dims, &mut rng)).collect();
    let cfg = TrainConfig {
        epochs: 0,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let out = train(&data, &data, dims, &cfg, &mut SimRng::new(1)).unwrap();
    assert!(out.params.g_layer.weight.data.iter().all(|&w| w == 0.0));
    assert_eq!(out.history.len(), 1);
}
