use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use blp_core::baselines::BaselineKind;
use blp_core::data::{DatasetSpec, DATA_DIR_ENV};
use blp_core::env::StreamMode;
use blp_core::harness::{self, AlgoConfig, ExperimentConfig, TrapConfig};
use blp_core::plot::{PlotConfig, WeightMode};
use blp_core::theory::{self, SuiteConfig};
use blp_core::scorer::{Minibatch, Optimizer};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blp", version, about = "Bank-loan-problem simulations: PLOT and baseline policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded sweep and write per-run CSVs plus a JSON summary.
    Run(Box<RunArgs>),
    /// Run the numeric checks and print a JSON report.
    TheoryCheck(TheoryArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetArg {
    Adult,
    Bank,
    Mnist5,
    Xor,
    Synth,
    Trap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Plot,
    Greedy,
    EpsGreedy,
    NeuralUcb,
}

#[derive(Clone, Copy, ValueEnum)]
enum StreamArg {
    Exhaust,
    Cycle,
    Replacement,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    dataset: DatasetArg,
    #[arg(long, value_enum, default_value = "plot")]
    algo: AlgoArg,
    /// Number of rounds.
    #[arg(long = "T", default_value_t = 2000)]
    horizon: usize,
    /// Points per round; defaults to 32, or 1 in theory mode and on the trap.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// PLOT exploration probability [default: 0.05, trap 0.1].
    #[arg(long)]
    epsilon: Option<f64>,
    /// PLOT pseudo-label weight [default: 1, trap 30].
    #[arg(long)]
    weight: Option<f64>,
    /// PLOT focus radius; `inf` keeps the whole buffer.
    #[arg(long, default_value_t = f64::INFINITY)]
    radius: f64,
    /// NeuralUCB bonus scale; a comma-separated list runs one sweep per value.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    eps0: f64,
    #[arg(long, default_value_t = 0.001)]
    eps_floor: f64,
    /// Round at which the epsilon-greedy schedule reaches its floor; defaults to T.
    #[arg(long)]
    eps_horizon: Option<u64>,
    /// PLOT with batch 1, ε = 1 and the theory radius and weight schedule.
    #[arg(long)]
    theory_mode: bool,
    /// Margin of the synthetic data and of the theory schedule.
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Norm of the synthetic parameter, used as the Lipschitz constant.
    #[arg(long, default_value_t = 2.0)]
    lipschitz: f64,
    /// Dimension of the synthetic data.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Append adult.test to the Adult training file.
    #[arg(long)]
    adult_test: bool,
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, value_enum)]
    stream: Option<StreamArg>,
    /// Optimizer steps per refit.
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    /// Minibatch size per step; 0 means full batch.
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 10_000)]
    pinsker_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    horizon: u64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rounds of the synthetic run feeding the optimism decomposition.
    #[arg(long, default_value_t = 2000)]
    trace_horizon: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dataset_spec(a: &RunArgs) -> anyhow::Result<DatasetSpec> {
    let root = &a.data_dir;
    let with_root = |r: blp_core::Result<DatasetSpec>| {
        r.with_context(|| format!("dataset root {} (set {DATA_DIR_ENV} or --data-dir)", root.display()))
    };
    Ok(match a.dataset {
        DatasetArg::Adult => with_root(DatasetSpec::adult_in(root, a.adult_test))?,
        DatasetArg::Bank => with_root(DatasetSpec::bank_in(root))?,
        DatasetArg::Mnist5 => with_root(DatasetSpec::mnist5_in(root))?,
        DatasetArg::Xor => DatasetSpec::Xor,
        DatasetArg::Synth => DatasetSpec::SyntheticLogistic {
            d: a.dim,
            tau: a.tau,
            lipschitz: a.lipschitz,
        },
        DatasetArg::Trap => DatasetSpec::Trap(TrapConfig::default()),
    })
}

fn plot_config(a: &RunArgs) -> PlotConfig {
    if a.theory_mode {
        return PlotConfig::theory(a.tau, a.lipschitz, a.delta);
    }
    let defaults = if a.dataset == DatasetArg::Trap {
        harness::trap_plot_config()
    } else {
        PlotConfig::experimental(0.05, 32)
    };
    let weight = match defaults.weight_mode {
        WeightMode::Constant { weight } => a.weight.unwrap_or(weight),
        WeightMode::Theory { .. } => a.weight.unwrap_or(1.0),
    };
    PlotConfig {
        weight_mode: WeightMode::Constant { weight },
        radius: a.radius,
        ..PlotConfig::experimental(
            a.epsilon.unwrap_or(defaults.epsilon),
            a.batch_size.unwrap_or(defaults.batch_size),
        )
    }
}

/// One sweep per entry: `(file prefix, config)`.
fn configs(a: &RunArgs) -> anyhow::Result<Vec<(String, ExperimentConfig)>> {
    if a.theory_mode && a.algo != AlgoArg::Plot {
        bail!("--theory-mode applies to --algo plot only");
    }
    if a.theory_mode && a.batch_size.is_some_and(|b| b != 1) {
        bail!("--theory-mode runs with batch size 1");
    }
    let dataset = dataset_spec(a)?;
    let name = a.dataset.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    let algos: Vec<(String, AlgoConfig)> = match a.algo {
        AlgoArg::Plot => {
            let tag = if a.theory_mode { "plot-theory" } else { "plot" };
            vec![(tag.into(), AlgoConfig::Plot(plot_config(a)))]
        }
        AlgoArg::Greedy => vec![("greedy".into(), AlgoConfig::Baseline(BaselineKind::Greedy))],
        AlgoArg::EpsGreedy => vec![(
            "eps-greedy".into(),
            AlgoConfig::Baseline(BaselineKind::EpsGreedy {
                eps0: a.eps0,
                eps_floor: a.eps_floor,
                horizon: a.eps_horizon.unwrap_or(a.horizon as u64),
            }),
        )],
        AlgoArg::NeuralUcb => a
            .gamma
            .iter()
            .map(|&gamma| {
                (
                    format!("neural-ucb-g{gamma}"),
                    AlgoConfig::Baseline(BaselineKind::NeuralUcb { gamma }),
                )
            })
            .collect(),
    };

    algos
        .into_iter()
        .map(|(tag, algo)| {
            let mut cfg = ExperimentConfig::new(dataset.clone(), algo);
            cfg.horizon = a.horizon;
            if let Some(b) = a.batch_size {
                cfg.batch_size = b;
            } else if a.dataset == DatasetArg::Trap {
                cfg.batch_size = 1;
            }
            cfg.seeds = a.seeds;
            cfg.seed_offset = a.seed_offset;
            if let Some(s) = a.stream {
                cfg.stream_mode = match s {
                    StreamArg::Exhaust => StreamMode::Exhaust,
                    StreamArg::Cycle => StreamMode::Cycle,
                    StreamArg::Replacement => StreamMode::Replacement,
                };
            }
            let tc = &mut cfg.train_cfg;
            if let Some(v) = a.train_steps {
                tc.steps = v;
            }
            if let Some(v) = a.lr {
                tc.learning_rate = v;
            }
            if let Some(v) = a.l2 {
                tc.l2_lambda = v;
            }
            if let Some(v) = a.minibatch {
                tc.minibatch = if v == 0 { Minibatch::Full } else { Minibatch::Size(v) };
            }
            if let Some(o) = a.optimizer {
                tc.optimizer = match o {
                    OptimizerArg::Sgd => Optimizer::Sgd,
                    OptimizerArg::Adam => Optimizer::Adam,
                };
            }
            cfg.validate().with_context(|| format!("invalid configuration for {tag}"))?;
            Ok((format!("{name}_{tag}"), cfg))
        })
        .collect()
}

fn run(a: &RunArgs) -> anyhow::Result<bool> {
    let sweeps = configs(a)?;
    let mut all_ok = true;
    let mut finals = Vec::new();
    for (prefix, cfg) in &sweeps {
        let prep = harness::prepare(cfg).with_context(|| format!("preparing {prefix}"))?;
        if prep.skipped_rows > 0 {
            eprintln!("{prefix}: dropped {} rows with missing values", prep.skipped_rows);
        }
        let sweep = harness::run_prepared(cfg, &prep);
        for (seed, r) in &sweep.runs {
            match r {
                Ok(run) => eprintln!("{prefix} seed {seed}: cumulative regret {:.3}", run.final_regret()),
                Err(e) => eprintln!("{prefix} seed {seed}: failed: {e}"),
            }
        }
        all_ok &= sweep.all_ok();
        let written = harness::emit(cfg, &sweep, &a.out, prefix)?;
        eprintln!("{prefix}: wrote {} files to {}", written.len(), a.out.display());
        let ok = sweep.successes();
        if !ok.is_empty() {
            let mean = ok.iter().map(|r| r.final_regret()).sum::<f64>() / ok.len() as f64;
            finals.push((prefix.clone(), mean));
        }
    }
    if finals.len() > 1 {
        if let Some((best, mean)) = finals.iter().min_by(|x, y| x.1.total_cmp(&y.1)) {
            eprintln!("lowest mean cumulative regret: {best} ({mean:.3})");
        }
    }
    Ok(all_ok)
}

fn theory_check(a: &TheoryArgs) -> anyhow::Result<bool> {
    let cfg = SuiteConfig {
        pinsker_samples: a.pinsker_samples,
        hoeffding_trials: a.trials,
        hoeffding_horizon: a.horizon,
        hoeffding_delta: a.delta,
        seed: a.seed,
        ..SuiteConfig::default()
    };
    let trace = harness::synthetic_optimism_trace(a.trace_horizon, a.seed)?;
    let report = theory::run_suite(&cfg, &trace);
    let json = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(path) => harness::write_atomic(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("{}: {} failures", c.name, c.failures);
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => run(a),
        Command::TheoryCheck(a) => theory_check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
