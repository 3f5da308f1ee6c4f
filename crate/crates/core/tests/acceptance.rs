//! End-to-end acceptance criteria. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout so it shows up even when output is captured.

use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use blp_core::baselines::BaselineKind;
use blp_core::data::{DatasetSpec, DATA_DIR_ENV};
use blp_core::harness::{
    emit, prepare, run_experiment, run_prepared, synthetic_optimism_trace, trap_plot_config, AlgoConfig,
    ExperimentConfig, RunResult, TrapConfig,
};
use blp_core::plot::{focus_dataset, optimistic_loss, PlotConfig};
use blp_core::scorer::{grad, loss, score};
use blp_core::theory::{run_suite, SuiteConfig};
use blp_core::{seeded_rng, Arch, FeatureVector, LabeledDataset, LabeledPoint, ScorerParams};
use rand::Rng as _;

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {verdict} ({detail})");
    let _ = out.flush();
}

fn data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

fn random_arch(rng: &mut impl rand::Rng, d: usize) -> Arch {
    match rng.random_range(0..3) {
        0 => Arch::Linear { input: d },
        1 => Arch::Affine { input: d },
        _ => Arch::mlp(d, rng.random_range(1..6), rng.random_range(1..6)),
    }
}

fn random_points(rng: &mut impl rand::Rng, n: usize, d: usize) -> Vec<FeatureVector> {
    (0..n)
        .map(|_| FeatureVector::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
        .collect()
}

/// Weighted cross-entropy written out from the definition.
fn reference_loss(params: &ScorerParams, data: &[(FeatureVector, u8, f64)], l2: f64) -> f64 {
    let mut total = 0.0;
    for (x, y, w) in data {
        let f = score(params, x).unwrap();
        // −log μ(f) = ln(1 + e^{−f}), −log(1 − μ(f)) = ln(1 + e^{f})
        let softplus = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        total += w * if *y == 1 { softplus(-f) } else { softplus(f) };
    }
    total + 0.5 * l2 * params.theta().iter().map(|t| t * t).sum::<f64>()
}

#[test]
fn criterion_1_loss_identity() {
    let start = Instant::now();
    let mut rng = seeded_rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(1..5);
        let arch = random_arch(&mut rng, d);
        let params = ScorerParams::init(arch, &mut rng);
        let n = rng.random_range(0..12);
        let xs = random_points(&mut rng, n, d);
        let data: LabeledDataset = xs
            .into_iter()
            .map(|x| LabeledPoint::new(x, rng.random_range(0..2)))
            .collect();
        let m = rng.random_range(1..5);
        let pseudo = random_points(&mut rng, m, d);
        let l2 = rng.random_range(0.0..0.1);

        let focus = focus_dataset(&data, &pseudo, f64::INFINITY);
        let got = optimistic_loss(&params, &focus, &pseudo, 1.0, l2);

        let mut union: LabeledDataset = data.clone();
        for x in &pseudo {
            union.push(LabeledPoint::new(x.clone(), 1));
        }
        let library = loss(&params, &union, l2);
        let explicit: Vec<(FeatureVector, u8, f64)> = union.iter().map(|p| (p.x.clone(), p.y, p.weight)).collect();
        let oracle = reference_loss(&params, &explicit, l2);
        worst = worst.max((got - library).abs()).max((got - oracle).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && elapsed < 1.0;
    report(1, pass, &format!("max abs difference {worst:.2e} over 50 instances, {elapsed:.2}s"));
    assert!(pass);
}

#[test]
fn criterion_2_gradient_correctness() {
    let start = Instant::now();
    let mut rng = seeded_rng(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..6);
        let arch = random_arch(&mut rng, d);
        let params = ScorerParams::init(arch, &mut rng);
        let n = rng.random_range(1..10);
        let data: LabeledDataset = random_points(&mut rng, n, d)
            .into_iter()
            .map(|x| LabeledPoint::weighted(x, rng.random_range(0..2), rng.random_range(0.1..3.0)))
            .collect();
        let l2 = rng.random_range(0.0..0.5);
        let analytic = grad(&params, &data, l2);
        let h = 1e-5;
        let numeric: Vec<f64> = (0..params.len())
            .map(|k| {
                let mut plus = params.theta().to_vec();
                let mut minus = plus.clone();
                plus[k] += h;
                minus[k] -= h;
                let lp = loss(&ScorerParams::new(arch, plus).unwrap(), &data, l2);
                let lm = loss(&ScorerParams::new(arch, minus).unwrap(), &data, l2);
                (lp - lm) / (2.0 * h)
            })
            .collect();
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-8);
        worst = worst.max(diff / scale);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && elapsed < 30.0;
    report(2, pass, &format!("max relative error {worst:.2e} over 100 instances, {elapsed:.2}s"));
    assert!(pass);
}

#[test]
fn criterion_3_theory_mode_regret_shape() {
    let start = Instant::now();
    let (tau, lipschitz, delta) = (0.2, 2.0, 0.1);
    let mut cfg = ExperimentConfig::new(
        DatasetSpec::SyntheticLogistic { d: 2, tau, lipschitz },
        AlgoConfig::Plot(PlotConfig::theory(tau, lipschitz, delta)),
    );
    cfg.horizon = 10_000;
    cfg.seeds = 5;
    cfg.record_trace = true;
    let sweep = run_experiment(&cfg).unwrap();
    assert!(sweep.all_ok());
    let mut lines = Vec::new();
    let mut pass = true;
    for run in sweep.successes() {
        let trace = run.trace.as_ref().unwrap();
        let late_false_rejections = trace
            .iter()
            .filter(|r| r.t >= 5000 && !r.accepted && r.oracle_score.unwrap() >= tau)
            .count();
        let r1k = run.regret_at(1000).unwrap();
        let rt = run.final_regret();
        pass &= late_false_rejections == 0 && rt < 2.0 * r1k;
        lines.push(format!("seed {} FR {} R(1000) {:.2} R(T) {:.2}", run.seed, late_false_rejections, r1k, rt));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 600.0;
    report(3, pass, &format!("{}; {elapsed:.0}s", lines.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_4_trap_separation() {
    let start = Instant::now();
    let trap = DatasetSpec::Trap(TrapConfig::default());
    let mut plot_cfg = ExperimentConfig::new(trap.clone(), AlgoConfig::Plot(trap_plot_config()));
    plot_cfg.horizon = 5000;
    let mut greedy_cfg = ExperimentConfig::new(trap, AlgoConfig::Baseline(BaselineKind::Greedy));
    greedy_cfg.horizon = 5000;
    greedy_cfg.batch_size = 1;

    let plot = run_experiment(&plot_cfg).unwrap();
    let greedy = run_experiment(&greedy_cfg).unwrap();
    let slope = |r: &RunResult| r.regret_slope(1000);
    let plot_runs = plot.successes();
    let greedy_runs = greedy.successes();
    assert_eq!(plot_runs.len(), 5);
    assert_eq!(greedy_runs.len(), 5);
    let mut separated = 0;
    let mut lines = Vec::new();
    for (p, g) in plot_runs.iter().zip(&greedy_runs) {
        assert_eq!(p.seed, g.seed);
        let (ps, gs) = (slope(p), slope(g));
        separated += usize::from(gs > 0.05 && ps < 0.005);
        lines.push(format!("seed {} greedy {gs:.4} plot {ps:.4}", p.seed));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = separated >= 4 && elapsed < 300.0;
    report(4, pass, &format!("{separated}/5 separated; {}; {elapsed:.0}s", lines.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_5_xor_demo() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(DatasetSpec::Xor, AlgoConfig::Plot(PlotConfig::experimental(0.5, 3)));
    cfg.horizon = 120;
    cfg.eval_every = 1;
    let sweep = run_experiment(&cfg).unwrap();
    let mut reached = 0;
    let mut lines = Vec::new();
    for run in sweep.successes() {
        let first = run.steps.iter().find(|s| s.holdout_accuracy.is_some_and(|a| a >= 0.95)).map(|s| s.t);
        reached += usize::from(first.is_some());
        let last = run.steps.last().and_then(|s| s.holdout_accuracy).unwrap_or(0.0);
        lines.push(format!("seed {} first batch {:?} final {:.3}", run.seed, first, last));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = reached >= 4 && elapsed < 120.0;
    report(5, pass, &format!("{reached}/5 reached 0.95; {}; {elapsed:.0}s", lines.join("; ")));
    assert!(pass);
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Criteria 6 and 7 share the Adult reference model and the PLOT runs.
#[test]
fn criteria_6_and_7_adult() {
    let start = Instant::now();
    let adult = DatasetSpec::adult_in(&data_root(), false).expect("Adult data under the dataset root");
    let plot_cfg = ExperimentConfig::new(adult.clone(), AlgoConfig::Plot(PlotConfig::experimental(0.05, 32)));
    let prep = prepare(&plot_cfg).unwrap();
    let plot = run_prepared(&plot_cfg, &prep);
    assert!(plot.all_ok());
    let plot_runs = plot.successes();

    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for r in &plot_runs {
        let (p, n) = r.breakdown_window(500).rates();
        pos.push(p.expect("pseudo-acted positives in the window"));
        neg.push(n.expect("pseudo-acted negatives in the window"));
    }
    let ratio = mean(&pos) / mean(&neg);
    let elapsed6 = start.elapsed().as_secs_f64();
    let pass6 = ratio >= 2.0 && elapsed6 < 1800.0;
    report(
        6,
        pass6,
        &format!(
            "p_pos {:.4} p_neg {:.4} ratio {ratio:.2}; {elapsed6:.0}s",
            mean(&pos),
            mean(&neg)
        ),
    );

    let plot_regret = mean(&plot_runs.iter().map(|r| r.final_regret()).collect::<Vec<_>>());
    let mut baselines = vec![
        ("greedy".to_string(), BaselineKind::Greedy),
        (
            "eps-greedy".to_string(),
            BaselineKind::EpsGreedy {
                eps0: 0.1,
                eps_floor: 0.001,
                horizon: 2000,
            },
        ),
    ];
    for gamma in [0.1, 1.0, 4.0, 10.0] {
        baselines.push((format!("neural-ucb g{gamma}"), BaselineKind::NeuralUcb { gamma }));
    }
    let mut lines = vec![format!("plot {plot_regret:.1}")];
    let mut best = f64::INFINITY;
    for (name, kind) in baselines {
        let mut cfg = plot_cfg.clone();
        cfg.algo = AlgoConfig::Baseline(kind);
        let sweep = run_prepared(&cfg, &prep);
        assert!(sweep.all_ok());
        let m = mean(&sweep.successes().iter().map(|r| r.final_regret()).collect::<Vec<_>>());
        lines.push(format!("{name} {m:.1}"));
        best = best.min(m);
    }
    let pass7 = plot_regret <= 1.5 * best;
    report(
        7,
        pass7,
        &format!("{}; plot/best {:.3}; {:.0}s", lines.join(", "), plot_regret / best, start.elapsed().as_secs_f64()),
    );
    assert!(pass6 && pass7);
}

#[test]
fn criterion_8_theory_suite() {
    let start = Instant::now();
    let trace = synthetic_optimism_trace(2000, 0).unwrap();
    let report_ = run_suite(&SuiteConfig::default(), &trace);
    let failures: usize = report_.checks.iter().map(|c| c.failures).sum();
    let elapsed = start.elapsed().as_secs_f64();
    let names: Vec<String> = report_
        .checks
        .iter()
        .map(|c| format!("{} {}", c.name, if c.passed { "ok" } else { "failed" }))
        .collect();
    let pass = report_.passed && failures == 0 && elapsed < 120.0;
    report(8, pass, &format!("{}; {failures} failures; {elapsed:.1}s", names.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_9_determinism() {
    let adult = DatasetSpec::adult_in(&data_root(), false).expect("Adult data under the dataset root");
    let mut configs = Vec::new();
    let mut xor = ExperimentConfig::new(DatasetSpec::Xor, AlgoConfig::Plot(PlotConfig::experimental(0.5, 3)));
    xor.horizon = 40;
    xor.seeds = 2;
    configs.push(("xor", xor));
    let mut theory = ExperimentConfig::new(
        DatasetSpec::SyntheticLogistic {
            d: 2,
            tau: 0.2,
            lipschitz: 2.0,
        },
        AlgoConfig::Plot(PlotConfig::theory(0.2, 2.0, 0.1)),
    );
    theory.horizon = 500;
    theory.seeds = 2;
    configs.push(("synth", theory));
    let mut ucb = ExperimentConfig::new(adult.clone(), AlgoConfig::Baseline(BaselineKind::NeuralUcb { gamma: 1.0 }));
    ucb.horizon = 30;
    ucb.seeds = 2;
    configs.push(("adult-ucb", ucb));
    let mut plot = ExperimentConfig::new(adult, AlgoConfig::Plot(PlotConfig::experimental(0.05, 32)));
    plot.horizon = 30;
    plot.seeds = 2;
    configs.push(("adult-plot", plot));

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut compared = 0;
    let mut identical = true;
    for (prefix, cfg) in &configs {
        let mut outputs = Vec::new();
        for dir in &dirs {
            let sweep = run_experiment(cfg).unwrap();
            assert!(sweep.all_ok());
            let files = emit(cfg, &sweep, dir.path(), prefix).unwrap();
            outputs.push(files);
        }
        for (a, b) in outputs[0].iter().zip(&outputs[1]) {
            compared += 1;
            identical &= std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
        }
    }
    report(9, identical, &format!("{compared} file pairs compared byte for byte"));
    assert!(identical);
}
