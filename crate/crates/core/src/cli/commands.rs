use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use num_rational::Rational64;

use super::config::{resolve, RunConfig};
use super::manifest::{sha256_hex, Manifest};
use super::{CliError, Common};
use crate::analytics::{
    feasibility_tau_bounds, lstm_param_count, pilot_overhead, sclstm_complexity, to_f64, MethodOverhead, OverheadParams,
    OverheadReport,
};
use crate::channel::{gen_episode_with_g, SystemConfig};
use crate::dataset::{generate_dataset, Dataset, Deployment};
use crate::estimation::nmse;
use crate::experiments::{online_error_by_offset, score_prediction, score_sum_rate, RateScores};
use crate::numerics::SimRng;
use crate::pipeline::{check_compatible, predict_online, write_trace_csv, OnlineConfig};
use crate::sclstm::{train as train_model, write_history_csv, Checkpoint, SclstmParams};

fn rt(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Shortest round-trip form; empty for non-finite values.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn start(common: &Common, name: &str) -> Result<(RunConfig, Run), CliError> {
        let cfg = resolve(common.preset.as_deref(), common.config.as_deref(), &common.set)?;
        let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
        fs::create_dir_all(&dir).map_err(|e| rt(format!("cannot create {}: {e}", dir.display())))?;
        let manifest = Manifest::new(name, &cfg);
        Ok((cfg, Run { dir, manifest }))
    }

    fn read_input(&mut self, label: &str, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| rt(format!("cannot read {}: {e}", path.display())))?;
        self.manifest.input(label, &bytes);
        Ok(bytes)
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).map_err(|e| rt(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.output(file, bytes);
        Ok(())
    }

    fn finish(self, config: &RunConfig) -> Result<(), CliError> {
        let mut manifest = Manifest::new(&self.manifest.command, config);
        manifest.inputs = self.manifest.inputs;
        manifest.outputs = self.manifest.outputs;
        let path = self.dir.join("manifest.json");
        fs::write(&path, manifest.to_json()).map_err(|e| rt(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn load_model(run: &mut Run, label: &str, path: &Path) -> Result<(Checkpoint, String), CliError> {
    let bytes = run.read_input(label, path)?;
    let ckpt = Checkpoint::read(bytes.as_slice()).map_err(|e| rt(format!("{}: {e}", path.display())))?;
    Ok((ckpt, sha256_hex(&bytes)[..12].to_string()))
}

pub fn gen(common: &Common) -> Result<(), CliError> {
    let (cfg, mut run) = Run::start(common, "gen")?;
    let ds = generate_dataset(&cfg.system, cfg.data.train, cfg.data.val).map_err(rt)?;
    let mut bin = Vec::new();
    ds.write(&mut bin).map_err(rt)?;
    run.write("dataset.bin", &bin)?;

    let mut csv = String::from("split,index,k,target_energy,last_estimate_nmse\n");
    for (split, samples) in [("train", &ds.train), ("val", &ds.val)] {
        for (i, s) in samples.iter().enumerate() {
            for (k, target) in s.target.iter().enumerate() {
                let last = s.history[k].last().expect("window >= 1");
                let err = nmse(std::slice::from_ref(last), std::slice::from_ref(target)).map_err(rt)?;
                writeln!(csv, "{split},{i},{k},{},{}", num(target.norm_sqr()), num(err)).unwrap();
            }
        }
    }
    run.write("samples.csv", csv.as_bytes())?;
    println!(
        "M={} K={} N={} L={} f_c={} GHz v={} m/s S={} SNR={} dB: {} train / {} val samples",
        cfg.system.antennas,
        cfg.system.users,
        cfg.system.ris_elements(),
        cfg.system.paths_ris_ue,
        cfg.system.carrier_hz / 1e9,
        cfg.system.max_speed_mps,
        cfg.system.window,
        cfg.system.snr_db,
        ds.train.len(),
        ds.val.len()
    );
    run.finish(&cfg)
}

pub fn train(common: &Common, data: &Path, zero_init: bool) -> Result<(), CliError> {
    let (mut cfg, mut run) = Run::start(common, "train")?;
    let bytes = run.read_input("dataset", data)?;
    let ds = Dataset::read(bytes.as_slice()).map_err(|e| rt(format!("{}: {e}", data.display())))?;
    cfg.system = ds.cfg.clone();
    let (params, history) = if zero_init {
        (SclstmParams::zeros(ds.dims()), Vec::new())
    } else {
        let outcome = train_model(
            &ds.training_samples(),
            &ds.validation_samples(),
            ds.dims(),
            &cfg.train,
            &mut SimRng::new(cfg.seeds.train),
        )
        .map_err(rt)?;
        println!(
            "best epoch {} with validation loss {}",
            outcome.best_epoch,
            num(outcome.best_val_loss)
        );
        (outcome.params, outcome.history)
    };
    let ckpt = Checkpoint {
        params,
        scale: ds.scale,
    };
    run.write("model.ckpt", &ckpt.to_bytes())?;
    let mut csv = Vec::new();
    write_history_csv(&history, &mut csv).map_err(rt)?;
    run.write("history.csv", &csv)?;
    run.finish(&cfg)
}

pub fn predict(common: &Common, model: &Path) -> Result<(), CliError> {
    let (cfg, mut run) = Run::start(common, "predict")?;
    let (ckpt, _) = load_model(&mut run, "model", model)?;
    check_compatible(&ckpt, &cfg.system).map_err(rt)?;
    let oc = cfg.predict.online();
    let deployment = Deployment::for_seed(&cfg.system, cfg.system.seed);
    let mut rng = SimRng::new(cfg.seeds.predict);
    let episode = gen_episode_with_g(&cfg.system, deployment.g, deployment.paths, oc.horizon, &mut rng).map_err(rt)?;
    let trace = predict_online(&ckpt, &cfg.system, &episode, &oc, &mut rng).map_err(rt)?;
    let mut csv = Vec::new();
    write_trace_csv(&trace, &mut csv).map_err(rt)?;
    run.write("trace.csv", &csv)?;
    println!(
        "{} steps, stages 1-2 at steps {:?}, {} pilot slots",
        oc.horizon,
        trace.reruns(),
        trace.pilots_total
    );
    run.finish(&cfg)
}

/// The scenario of `base` resized to the model's dimensions.
fn scenario_for(base: &SystemConfig, ckpt: &Checkpoint) -> SystemConfig {
    let d = ckpt.params.dims;
    let mut cfg = base.clone();
    if cfg.antennas != d.antennas {
        cfg = cfg.with_antennas(d.antennas);
    }
    if cfg.ris_elements() != d.elements {
        cfg = cfg.with_ris_elements(d.elements);
    }
    cfg.users = d.users;
    cfg.window = d.window;
    cfg
}

pub fn eval(common: &Common, models: &[PathBuf]) -> Result<(), CliError> {
    let (cfg, mut run) = Run::start(common, "eval")?;
    let snrs = if cfg.eval.snr_db.is_empty() {
        vec![cfg.system.snr_db]
    } else {
        cfg.eval.snr_db.clone()
    };
    let mut by_snr = String::from("model,M,N,K,S,snr_db,method,nmse,nmse_db,trials\n");
    let mut by_step = String::from("model,step,nmse,nmse_db,trials\n");
    for (i, path) in models.iter().enumerate() {
        let (ckpt, label) = load_model(&mut run, &format!("model{i}"), path)?;
        let scenario = scenario_for(&cfg.system, &ckpt);
        let d = ckpt.params.dims;
        for &snr in &snrs {
            let mut at = scenario.clone();
            at.snr_db = snr;
            let scores = score_prediction(Some(&ckpt), &at, at.seed, cfg.eval.trials, cfg.seeds.eval).map_err(rt)?;
            let rows = [
                ("sclstm", scores.sclstm.expect("model given")),
                ("last-estimate", scores.last_estimate),
                ("reduced-ls", scores.reduced_ls),
                ("direct-ls", scores.direct_ls),
            ];
            for (method, e) in rows {
                writeln!(
                    by_snr,
                    "{label},{},{},{},{},{},{method},{},{},{}",
                    d.antennas,
                    d.elements,
                    d.users,
                    d.window,
                    num(snr),
                    num(e.nmse()),
                    num(e.nmse_db()),
                    scores.trials
                )
                .unwrap();
            }
            println!("{label} at {snr} dB: NMSE {:.3} dB", rows[0].1.nmse_db());
        }
        if cfg.eval.steps > 0 {
            let horizon = d.window + cfg.eval.steps;
            let oc = OnlineConfig {
                horizon,
                block_len: horizon,
                ..cfg.predict.online()
            };
            let curve = online_error_by_offset(&ckpt, &scenario, scenario.seed, &oc, cfg.eval.trials, cfg.seeds.eval).map_err(rt)?;
            for (step, e) in curve.iter().enumerate() {
                writeln!(by_step, "{label},{},{},{},{}", step + 1, num(e.nmse()), num(e.nmse_db()), cfg.eval.trials).unwrap();
            }
        }
    }
    run.write("nmse_snr.csv", by_snr.as_bytes())?;
    run.write("nmse_step.csv", by_step.as_bytes())?;
    run.finish(&cfg)
}

pub struct OverheadArgs {
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub s: Option<usize>,
    pub n: Option<usize>,
    pub tl: Option<u64>,
    pub p: Option<u64>,
    pub points: Option<u64>,
}

fn r_int(n: u64) -> Rational64 {
    Rational64::from_integer(n as i64)
}

/// T_S grid `T_L·i/points` plus the two break-even points.
fn small_slot_grid(t_l: u64, points: u64, extra: &[Rational64]) -> Vec<Rational64> {
    let mut grid: Vec<Rational64> = (1..=points).map(|i| r_int(t_l * i) / r_int(points)).collect();
    grid.extend(extra.iter().copied().filter(|t| *t <= r_int(t_l)));
    grid.sort();
    grid.dedup();
    grid
}

fn lambda_cell(m: &MethodOverhead) -> String {
    m.lambda_d.map_or(String::new(), |l| num(to_f64(l)))
}

fn overhead_rows(grid: &[Rational64], template: &OverheadParams) -> Result<Vec<OverheadReport>, CliError> {
    grid.iter()
        .map(|&t_s| {
            let mut p = template.clone();
            p.small_slots = t_s;
            pilot_overhead(&p).map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}

pub fn overhead(common: &Common, a: OverheadArgs) -> Result<(), CliError> {
    let (mut cfg, mut run) = Run::start(common, "overhead")?;
    if let Some(m) = a.m {
        cfg.system = cfg.system.with_antennas(m);
    }
    if let Some(n) = a.n {
        cfg.system = cfg.system.with_ris_elements(n);
    }
    cfg.system.users = a.k.unwrap_or(cfg.system.users);
    cfg.system.window = a.s.unwrap_or(cfg.system.window);
    cfg.system.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let oc = &mut cfg.overhead;
    oc.large_slots = a.tl.unwrap_or(oc.large_slots);
    oc.parafac_p = a.p.or(oc.parafac_p);
    oc.points = a.points.unwrap_or(oc.points);
    let (tl, points) = (oc.large_slots, oc.points);
    let sys = &cfg.system;
    let (m, k, s, n) = (sys.antennas as u64, sys.users as u64, sys.window as u64, sys.ris_elements() as u64);
    if points == 0 || tl == 0 {
        return Err(CliError::Usage("T_L and the number of points must be positive".into()));
    }
    let bounds = feasibility_tau_bounds(m, n, k, s).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut template = OverheadParams::new(m, n, k, s, tl, r_int(tl));
    template.parafac_p = cfg.overhead.parafac_p;
    let base = pilot_overhead(&template).map_err(|e| CliError::Usage(e.to_string()))?;
    let t_l = r_int(tl);
    let break_even = [t_l / bounds.prop1_exact, t_l / bounds.prop2_exact];

    let block_params = lstm_param_count(2 * n, &[6 * n, 4 * n], 2 * n).map_err(rt)?;
    let mut summary = String::from("quantity,value\n");
    let lambda = base.lambda_d().map(to_f64).unwrap_or(f64::NAN);
    for (q, v) in [
        ("P_L", base.p_l as f64),
        ("lambda_d_sclstm", lambda),
        ("tau_prop1_loose", to_f64(bounds.prop1_loose)),
        ("tau_prop1_exact", to_f64(bounds.prop1_exact)),
        ("tau_prop2", to_f64(bounds.prop2)),
        ("tau_prop2_exact", to_f64(bounds.prop2_exact)),
        ("T_S_break_even_mvu", to_f64(break_even[0])),
        ("T_S_break_even_two_timescale", to_f64(break_even[1])),
        ("lstm_block_params", block_params as f64),
        ("sclstm_complexity", sclstm_complexity(m, n, k).map_err(rt)? as f64),
    ] {
        writeln!(summary, "{q},{}", num(v)).unwrap();
    }
    run.write("overhead.csv", summary.as_bytes())?;

    let grid = small_slot_grid(tl, points, &break_even);
    let mut sweep = String::from("T_S,tau,method,p_a,lambda_d,feasible\n");
    for rep in overhead_rows(&grid, &template)? {
        for method in rep.methods() {
            writeln!(
                sweep,
                "{},{},{},{},{},{}",
                num(to_f64(rep.params.small_slots)),
                num(to_f64(rep.tau)),
                method.method.name(),
                num(to_f64(method.p_a)),
                lambda_cell(method),
                method.is_feasible()
            )
            .unwrap();
        }
    }
    run.write("lambda_vs_ts.csv", sweep.as_bytes())?;
    println!("P_L = {} slots per T_L, lambda_d = {lambda}", base.p_l);
    println!(
        "break-even tau: {} against two-timescale (T_S = {}), {} against MVU/PARAFAC-VAMP (T_S = {})",
        to_f64(bounds.prop2_exact),
        to_f64(break_even[1]),
        to_f64(bounds.prop1_exact),
        to_f64(break_even[0])
    );
    run.finish(&cfg)
}

pub fn sumrate(common: &Common, model: Option<&Path>) -> Result<(), CliError> {
    let (cfg, mut run) = Run::start(common, "sumrate")?;
    let ckpt = match model {
        Some(p) => Some(load_model(&mut run, "model", p)?.0),
        None => None,
    };
    let sys = match &ckpt {
        Some(c) => scenario_for(&cfg.system, c),
        None => cfg.system.clone(),
    };
    let sr = &cfg.sumrate;
    if sr.points == 0 || sr.large_slots == 0 {
        return Err(CliError::Usage("sumrate.points and sumrate.large_slots must be positive".into()));
    }
    let rates: RateScores = score_sum_rate(ckpt.as_ref(), &sys, sys.seed, sr.trials, cfg.seeds.sumrate).map_err(rt)?;
    let (m, n, k, s) = (sys.antennas as u64, sys.ris_elements() as u64, sys.users as u64, sys.window as u64);
    let template = OverheadParams::new(m, n, k, s, sr.large_slots, r_int(sr.large_slots));
    pilot_overhead(&template).map_err(|e| CliError::Usage(e.to_string()))?;
    let grid = small_slot_grid(sr.large_slots, sr.points, &[]);
    let mut csv = String::from("T_S,tau,method,lambda_d,spectral_efficiency,sum_rate\n");
    for rep in overhead_rows(&grid, &template)? {
        let mut rows: Vec<(&str, Option<f64>, f64)> = vec![("perfect-csi", Some(1.0), rates.perfect)];
        if let Some(se) = rates.sclstm {
            rows.push(("sclstm", rep.lambda_d().map(to_f64), se));
        }
        rows.push(("mvu", rep.mvu.lambda_d.map(to_f64), rates.direct_ls));
        rows.push(("two-timescale", rep.two_timescale.lambda_d.map(to_f64), rates.reduced_ls));
        for (method, lambda, se) in rows {
            writeln!(
                csv,
                "{},{},{method},{},{},{}",
                num(to_f64(rep.params.small_slots)),
                num(to_f64(rep.tau)),
                lambda.map_or(String::new(), num),
                num(se),
                lambda.map_or(String::new(), |l| num(l * se))
            )
            .unwrap();
        }
    }
    run.write("rate_vs_ts.csv", csv.as_bytes())?;
    println!(
        "mean spectral efficiency at {} dB over {} trials: perfect {:.3}, two-timescale {:.3}, mvu {:.3}{}",
        sys.snr_db,
        rates.trials,
        rates.perfect,
        rates.reduced_ls,
        rates.direct_ls,
        rates.sclstm.map_or(String::new(), |v| format!(", sclstm {v:.3}"))
    );
    run.finish(&cfg)
}
