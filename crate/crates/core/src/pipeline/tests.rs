use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::channel::{gen_episode, SystemConfig};
use crate::numerics::sample_cn;
use crate::sclstm::{Dims, SclstmParams};

fn random_diag(n: usize, rng: &mut SimRng) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::from_polar(0.3 + 2.0 * rng.uniform(), rng.uniform_range(-3.0, 3.0))).collect()
}

fn ambiguous_pair(
    m: usize,
    n: usize,
    k: usize,
    rng: &mut SimRng,
) -> (ComplexMatrix, Vec<ComplexMatrix>, ComplexMatrix, Vec<ComplexMatrix>) {
    let g = sample_cn(m, n, 1.0, rng).unwrap();
    let hs: Vec<ComplexMatrix> = (0..k).map(|_| sample_cn(n, 1, 1.0, rng).unwrap()).collect();
    let d = random_diag(n, rng);
    let gt = ComplexMatrix::from_fn(m, n, |r, c| g[(r, c)] * d[c]);
    let ht = hs.iter().map(|h| ComplexMatrix::from_fn(n, 1, |i, _| h[(i, 0)] / d[i])).collect();
    (g, hs, gt, ht)
}

#[test]
fn correction_recovers_ground_truth() {
    let mut rng = SimRng::new(1);
    for _ in 0..20 {
        let (g, hs, gt, ht) = ambiguous_pair(3, 5, 2, &mut rng);
        let (gh, hh) = correct_scaling(&gt, &ht, &g.row_at(0)).unwrap();
        assert!(gh.sub(&g).unwrap().max_abs() <= 1e-10 * g.max_abs());
        for (a, b) in hh.iter().zip(&hs) {
            assert!(a.sub(b).unwrap().max_abs() <= 1e-10 * b.max_abs());
        }
    }
}

#[test]
fn identity_delta_is_a_no_op() {
    let mut rng = SimRng::new(2);
    let g = sample_cn(2, 4, 1.0, &mut rng).unwrap();
    let h = vec![sample_cn(4, 1, 1.0, &mut rng).unwrap()];
    let (gh, hh) = correct_scaling(&g, &h, &g.row_at(0)).unwrap();
    assert!(gh.sub(&g).unwrap().max_abs() < 1e-15);
    assert!(hh[0].sub(&h[0]).unwrap().max_abs() < 1e-15);
}

#[test]
fn correction_preserves_cascade_and_is_idempotent() {
    let mut rng = SimRng::new(3);
    let (_, _, gt, ht) = ambiguous_pair(2, 6, 3, &mut rng);
    let anchor = sample_cn(1, 6, 1.0, &mut rng).unwrap();
    let (gh, hh) = correct_scaling(&gt, &ht, &anchor).unwrap();
    for (a, b) in hh.iter().zip(&ht) {
        let lhs = crate::channel::cascade(&gh, a).unwrap();
        let rhs = crate::channel::cascade(&gt, b).unwrap();
        assert!(lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-12 * rhs.frobenius_norm().max(1.0));
    }
    let (g2, h2) = correct_scaling(&gh, &hh, &anchor).unwrap();
    assert!(g2.sub(&gh).unwrap().max_abs() < 1e-12);
    assert!(h2[0].sub(&hh[0]).unwrap().max_abs() < 1e-12);
}

#[test]
fn near_zero_anchor_rejected() {
    let mut rng = SimRng::new(4);
    let (g, _, gt, ht) = ambiguous_pair(2, 3, 1, &mut rng);
    let mut anchor = g.row_at(0);
    anchor[(0, 2)] = Complex64::new(1e-14, 0.0) * anchor.max_abs();
    assert_eq!(correct_scaling(&gt, &ht, &anchor), Err(PipelineError::IllConditioned { index: 2 }));
    let mut gz = gt.clone();
    gz[(0, 1)] = Complex64::new(0.0, 0.0);
    assert_eq!(correct_scaling(&gz, &ht, &g.row_at(0)), Err(PipelineError::IllConditioned { index: 1 }));
}

fn tiny_cfg() -> SystemConfig {
    let mut cfg = SystemConfig::desk();
    cfg.window = 2;
    cfg.snr_db = 20.0;
    cfg
}

fn zero_model(cfg: &SystemConfig) -> Checkpoint {
    let mut params = SclstmParams::init(Dims::from_config(cfg), &mut SimRng::new(5));
    params.g_layer.weight.data.fill(0.0);
    params.g_layer.bias.iter_mut().for_each(|b| *b = 1.0);
    Checkpoint { params, scale: 1.0 }
}

#[test]
fn single_block_runs_stages_once() {
    let cfg = tiny_cfg();
    let ep = gen_episode(&cfg, 12, &mut SimRng::new(6)).unwrap();
    let ckpt = zero_model(&cfg);
    let trace = predict_online(&ckpt, &cfg, &ep, &OnlineConfig::new(10, 10), &mut SimRng::new(7)).unwrap();
    assert_eq!(trace.reruns(), vec![1]);
    let plan = PilotPlan::for_config(&cfg).unwrap();
    assert_eq!(trace.pilots_total, plan.block_slots(cfg.window));
    assert_eq!(trace.cascaded.len(), 10);
    let predicted = trace.records.iter().filter(|r| r.kind == StepKind::Predict).count();
    assert_eq!(predicted, (10 - cfg.window) * cfg.users);
    assert_eq!(trace.blocks.len(), 1);
    assert!(trace.blocks[0].g_hat.is_some());
}

#[test]
fn two_blocks_rerun_once_at_boundary() {
    let cfg = tiny_cfg();
    let tl = 7;
    let ep = gen_episode(&cfg, 2 * tl, &mut SimRng::new(8)).unwrap();
    let ckpt = zero_model(&cfg);
    let trace = predict_online(&ckpt, &cfg, &ep, &OnlineConfig::new(2 * tl, tl), &mut SimRng::new(9)).unwrap();
    assert_eq!(trace.reruns(), vec![1, tl + 1]);
    let plan = PilotPlan::for_config(&cfg).unwrap();
    assert_eq!(trace.pilots_total, 2 * plan.block_slots(cfg.window));
    for b in &trace.blocks {
        assert_eq!(b.pilot_slots, plan.block_slots(cfg.window));
    }
    let last = trace.records.last().unwrap();
    assert_eq!(last.pilots_cumulative, trace.pilots_total);
    assert_eq!(last.block, 2);
}

#[test]
fn window_holds_the_most_recent_outputs() {
    // Genie estimates: the first S held channels are the truth, every
    // later one is the model's output only when fed its own predictions.
    let cfg = tiny_cfg();
    let ep = gen_episode(&cfg, 8, &mut SimRng::new(10)).unwrap();
    let ckpt = zero_model(&cfg);
    let mut oc = OnlineConfig::new(8, 8);
    oc.estimates = EstimateSource::Genie;
    oc.g1_source = G1Source::Genie;
    let trace = predict_online(&ckpt, &cfg, &ep, &oc, &mut SimRng::new(11)).unwrap();
    for t in 1..=cfg.window {
        assert_eq!(trace.cascaded[t - 1], ep.cascaded_at(t));
    }
    for t in cfg.window + 1..=8 {
        let window: Vec<Vec<ComplexMatrix>> = (0..cfg.users)
            .map(|k| (t - cfg.window..t).map(|i| trace.cascaded[i - 1][k].clone()).collect())
            .collect();
        let (_, _, expect) = predict_next(&ckpt, &window).unwrap();
        assert_eq!(trace.cascaded[t - 1], expect);
    }
}

#[test]
fn genie_plumbing_matches_bare_model() {
    let cfg = tiny_cfg();
    let ep = gen_episode(&cfg, 3, &mut SimRng::new(12)).unwrap();
    let ckpt = zero_model(&cfg);
    let mut oc = OnlineConfig::new(3, 3);
    oc.estimates = EstimateSource::Genie;
    oc.g1_source = G1Source::Genie;
    let trace = predict_online(&ckpt, &cfg, &ep, &oc, &mut SimRng::new(13)).unwrap();
    let history: Vec<Vec<ComplexMatrix>> = (0..cfg.users).map(|k| vec![ep.cascaded(k, 1).clone(), ep.cascaded(k, 2).clone()]).collect();
    let (_, _, bare) = predict_next(&ckpt, &history).unwrap();
    for k in 0..cfg.users {
        let rec = trace.records.iter().find(|r| r.t == 3 && r.k == k).unwrap();
        let expect = bare[k].sub(ep.cascaded(k, 3)).unwrap().norm_sqr() / ep.cascaded(k, 3).norm_sqr();
        assert_eq!(rec.nmse_cascaded, expect);
    }
}

#[test]
fn incompatible_checkpoint_rejected() {
    let cfg = tiny_cfg();
    let ep = gen_episode(&cfg, 5, &mut SimRng::new(14)).unwrap();
    let mut other = cfg.clone();
    other.window = 3;
    let ckpt = zero_model(&other);
    let err = predict_online(&ckpt, &cfg, &ep, &OnlineConfig::new(5, 5), &mut SimRng::new(1)).unwrap_err();
    assert!(matches!(err, PipelineError::Incompatible(_)));
}

#[test]
fn refinement_exact_when_noiseless() {
    let mut rng = SimRng::new(20);
    let (m, n, k) = (2, 4, 2);
    let h: Vec<ComplexMatrix> = (0..k).map(|_| sample_cn(m, n, 1.0, &mut rng).unwrap()).collect();
    let plan = PilotPlan::new(m, n, k).unwrap();
    let patterns = plan.patterns(3 * n * k);
    let c = qpsk();
    let sent = refine::random_symbols(k, patterns.len(), &c, &mut rng);
    let y = synth_data_block(&h, &patterns, &sent, 0.0, &mut rng).unwrap();
    let out = decision_directed_refine(&h, &y, &patterns, &c, &sent).unwrap();
    assert_eq!(out.symbol_errors, 0);
    assert!(out.reliable);
    for (a, b) in out.refined.iter().zip(&h) {
        assert!(a.sub(b).unwrap().max_abs() < 1e-10);
    }
}

#[test]
fn refinement_flags_degenerate_predictor() {
    let mut rng = SimRng::new(21);
    let (m, n, k) = (2, 4, 2);
    let h: Vec<ComplexMatrix> = (0..k).map(|_| sample_cn(m, n, 1.0, &mut rng).unwrap()).collect();
    let plan = PilotPlan::new(m, n, k).unwrap();
    let patterns = plan.patterns(100);
    let c = qpsk();
    let sent = refine::random_symbols(k, patterns.len(), &c, &mut rng);
    let y = synth_data_block(&h, &patterns, &sent, 0.01, &mut rng).unwrap();
    let zeros = vec![ComplexMatrix::zeros(m, n); k];
    let out = decision_directed_refine(&zeros, &y, &patterns, &c, &sent).unwrap();
    assert!(!out.reliable);
    let ser = out.symbol_errors as f64 / 200.0;
    assert!((ser - 0.75).abs() < 0.15, "SER {ser}");
    assert_eq!(out.refined, zeros);
}

#[test]
fn refinement_rejects_empty_block() {
    let h = vec![ComplexMatrix::zeros(2, 2)];
    let err = decision_directed_refine(&h, &ComplexMatrix::zeros(2, 1), &[], &qpsk(), &ComplexMatrix::zeros(1, 1)).unwrap_err();
    assert!(matches!(err, PipelineError::Invalid(_)));
}

#[test]
fn online_refinement_records_both_errors() {
    let cfg = tiny_cfg();
    let ep = gen_episode(&cfg, 6, &mut SimRng::new(30)).unwrap();
    let ckpt = zero_model(&cfg);
    let mut oc = OnlineConfig::new(6, 6);
    oc.refine_slots = Some(2 * cfg.ris_elements() * cfg.users);
    oc.refill_refined = true;
    let trace = predict_online(&ckpt, &cfg, &ep, &oc, &mut SimRng::new(31)).unwrap();
    for r in trace.records.iter().filter(|r| r.kind == StepKind::Predict) {
        assert!(r.nmse_refined.is_some());
    }
}

#[test]
fn trace_csv_layout_and_determinism() {
    let cfg = tiny_cfg();
    let ep = gen_episode(&cfg, 5, &mut SimRng::new(40)).unwrap();
    let ckpt = zero_model(&cfg);
    let run = || {
        let trace = predict_online(&ckpt, &cfg, &ep, &OnlineConfig::new(5, 5), &mut SimRng::new(41)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let mut lines = a.lines();
    assert_eq!(lines.next().unwrap(), "t,k,nmse_H,nmse_G,nmse_h,refined,pilots_cumulative,block,kind,nmse_refined");
    assert_eq!(a.lines().count(), 1 + 5 * cfg.users);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correction_inverts_any_diagonal(seed in 0u64..10_000, m in 1usize..4, n in 1usize..7) {
        let mut rng = SimRng::new(seed);
        let (g, hs, gt, ht) = ambiguous_pair(m, n, 2, &mut rng);
        let (gh, hh) = correct_scaling(&gt, &ht, &g.row_at(0)).unwrap();
        prop_assert!(gh.sub(&g).unwrap().max_abs() <= 1e-9 * g.max_abs());
        for (a, b) in hh.iter().zip(&hs) {
            prop_assert!(a.sub(b).unwrap().max_abs() <= 1e-9 * b.max_abs().max(1e-3));
        }
    }
}
