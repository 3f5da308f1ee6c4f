//! Experiment orchestration: seeded sweeps, regret and acceptance-breakdown
//! metrics, and CSV/JSON output.
//!
//! Each seed runs strictly sequentially; seeds run in parallel. The policy
//! only ever receives contexts and the labels `act` revealed. Ground truth
//! for metrics is read through [`EnvState::evaluation_truth`] after the
//! policy has committed to its decisions.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineConfig, BaselineKind};
use crate::data::{self, DatasetSpec};
use crate::env::{
    baseline_regret_from_decision, oracle_regret, ContextSource, Draw, EnvState, RegretMode, StreamMode,
    TableSource,
};
use crate::error::{Error, Result};
use crate::plot::{Plot, PlotConfig, WeightMode};
use crate::policy::Policy;
use crate::scorer::{
    self, score_many, Arch, FeatureVector, LabeledDataset, LabeledPoint, Minibatch, ScorerParams, TrainConfig,
};
use crate::theory::OptimismStep;
use crate::{seeded_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AlgoConfig {
    Plot(PlotConfig),
    Baseline(BaselineKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub algo: AlgoConfig,
    /// Scorer architecture; `None` picks the dataset default.
    pub arch: Option<Arch>,
    pub horizon: usize,
    pub batch_size: usize,
    pub seeds: usize,
    /// First seed of the sweep; runs use `seed_offset..seed_offset + seeds`.
    pub seed_offset: u64,
    pub train_cfg: TrainConfig,
    /// Training of the offline reference model for baseline-model regret.
    pub baseline_train: TrainConfig,
    pub stream_mode: StreamMode,
    /// Fraction of a real table held out from the reference model.
    pub holdout_fraction: f64,
    /// Evaluate held-out accuracy every this many rounds (0 disables).
    pub eval_every: usize,
    pub record_trace: bool,
    pub checkpoints: Vec<usize>,
}

impl ExperimentConfig {
    /// Defaults for a dataset: 2000 rounds, 5 seeds, and batch 32 unless a
    /// PLOT config fixes the batch size.
    pub fn new(dataset: DatasetSpec, algo: AlgoConfig) -> Self {
        let train_cfg = recommended_train_config(&dataset, &algo);
        let batch_size = match algo {
            AlgoConfig::Plot(p) => p.batch_size,
            AlgoConfig::Baseline(_) => 32,
        };
        Self {
            dataset,
            algo,
            arch: None,
            horizon: 2000,
            batch_size,
            seeds: 5,
            seed_offset: 0,
            train_cfg,
            baseline_train: TrainConfig {
                steps: 3000,
                minibatch: Minibatch::Size(256),
                ..TrainConfig::default()
            },
            stream_mode: StreamMode::default(),
            holdout_fraction: 0.0,
            eval_every: 0,
            record_trace: false,
            checkpoints: vec![500, 1000, 2000],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.seeds == 0 || self.batch_size == 0 {
            return Err(Error::Config("horizon, seeds and batch size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout fraction must lie in [0,1)".into()));
        }
        self.train_cfg.validate()?;
        self.baseline_train.validate()?;
        match self.algo {
            AlgoConfig::Plot(p) => {
                p.validate()?;
                if p.batch_size != self.batch_size {
                    return Err(Error::Config(format!(
                        "policy batch size {} differs from experiment batch size {}",
                        p.batch_size, self.batch_size
                    )));
                }
            }
            AlgoConfig::Baseline(k) => k.validate()?,
        }
        Ok(())
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed_offset + i).collect()
    }
}

/// Online training regime for a dataset and policy.
///
/// Tables use short minibatched refits, since full-batch passes over a
/// growing buffer do not fit a desk-scale budget. The trap uses a larger
/// step so a bounded number of Adam steps can lift a planted region.
/// Theory mode on synthetic data uses few steps and a ridge penalty strong
/// enough to keep an early run of negatives from sinking every score.
pub fn recommended_train_config(dataset: &DatasetSpec, algo: &AlgoConfig) -> TrainConfig {
    let base = TrainConfig::default();
    match (dataset, algo) {
        (DatasetSpec::Adult { .. } | DatasetSpec::Bank { .. } | DatasetSpec::Mnist5 { .. }, _) => TrainConfig {
            steps: 20,
            minibatch: Minibatch::Size(128),
            ..base
        },
        (DatasetSpec::Trap(_), _) => TrainConfig {
            learning_rate: 0.05,
            ..base
        },
        (
            DatasetSpec::SyntheticLogistic { .. },
            AlgoConfig::Plot(PlotConfig {
                weight_mode: WeightMode::Theory { .. },
                ..
            }),
        ) => TrainConfig {
            steps: 20,
            l2_lambda: 3.0,
            ..base
        },
        _ => base,
    }
}

/// PLOT settings for the trap scenario: a constant weight near what the
/// count branch of the theory schedule gives for the planted negatives.
pub fn trap_plot_config() -> PlotConfig {
    PlotConfig {
        weight_mode: WeightMode::Constant { weight: 30.0 },
        ..PlotConfig::experimental(0.1, 1)
    }
}

/// Greedy trap: a main region that is truly negative, a small trap region
/// that is truly positive, and `planted` false negatives from the trap
/// region pre-loaded into every policy's buffer.
///
/// The true score is `slope·(x₁ − boundary)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub trap_prob: f64,
    pub planted: usize,
    pub slope: f64,
    pub boundary: f64,
    pub main_radius: f64,
    pub trap_center: [f64; 2],
    pub trap_radius: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            trap_prob: 0.2,
            planted: 20,
            slope: 2.0,
            boundary: 1.5,
            main_radius: 1.0,
            trap_center: [3.0, 0.0],
            trap_radius: 0.5,
        }
    }
}

impl TrapConfig {
    pub fn f_star(&self, x: &[f64]) -> f64 {
        self.slope * (x[0] - self.boundary)
    }

    pub fn theta_star(&self) -> ScorerParams {
        ScorerParams::new(Arch::Affine { input: 2 }, vec![self.slope, 0.0, -self.slope * self.boundary]).unwrap()
    }

    fn disk(rng: &mut Rng, center: [f64; 2], radius: f64) -> FeatureVector {
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let r = radius * rng.random::<f64>().sqrt();
        FeatureVector::new(vec![center[0] + r * ang.cos(), center[1] + r * ang.sin()]).unwrap()
    }

    pub fn trap_point(&self, rng: &mut Rng) -> FeatureVector {
        Self::disk(rng, self.trap_center, self.trap_radius)
    }

    /// The planted false negatives for one seed.
    pub fn planted_points(&self, seed: u64) -> LabeledDataset {
        let mut rng = seeded_rng(seed);
        rng.set_stream(7);
        (0..self.planted)
            .map(|_| LabeledPoint::new(self.trap_point(&mut rng), 0))
            .collect()
    }
}

pub struct TrapSource {
    pub cfg: TrapConfig,
    theta_star: ScorerParams,
}

impl TrapSource {
    pub fn new(cfg: TrapConfig) -> Self {
        Self {
            theta_star: cfg.theta_star(),
            cfg,
        }
    }
}

impl ContextSource for TrapSource {
    fn dim(&self) -> usize {
        2
    }

    fn draw(&mut self, rng: &mut Rng) -> Result<Draw> {
        let x = if rng.random::<f64>() < self.cfg.trap_prob {
            self.cfg.trap_point(rng)
        } else {
            TrapConfig::disk(rng, [0.0, 0.0], self.cfg.main_radius)
        };
        let f = self.cfg.f_star(&x);
        Ok(Draw {
            label: u8::from(rng.random::<f64>() < scorer::link(f)),
            x,
            oracle_score: Some(f),
        })
    }

    fn theta_star(&self) -> Option<&ScorerParams> {
        Some(&self.theta_star)
    }
}

/// Loaded data and reference models shared read-only by every seed.
pub struct Prepared {
    pub dim: usize,
    pub arch: Arch,
    pub table: Option<Arc<LabeledDataset>>,
    pub holdout: Option<Arc<LabeledDataset>>,
    pub reference: Option<ScorerParams>,
    pub mode: RegretMode,
    /// Rows dropped by the loader for missing values.
    pub skipped_rows: usize,
}

/// Reference model for baseline-model regret, trained offline on labeled data.
pub fn pretrain_baseline(data: &LabeledDataset, arch: Arch, train_cfg: &TrainConfig, seed: u64) -> ScorerParams {
    let mut rng = seeded_rng(seed);
    let init = ScorerParams::init(arch, &mut rng);
    scorer::train(&init, data, train_cfg, &mut rng)
}

/// Fixed seed for reference-model training and evaluation samples.
pub const REFERENCE_SEED: u64 = 0x5eed;

fn split_holdout(data: LabeledDataset, fraction: f64) -> (LabeledDataset, Option<LabeledDataset>) {
    if fraction <= 0.0 {
        return (data, None);
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut idx[..], &mut seeded_rng(REFERENCE_SEED));
    let cut = ((data.len() as f64) * fraction).round() as usize;
    let pick = |ids: &[usize]| ids.iter().map(|&i| data.points[i].clone()).collect::<LabeledDataset>();
    (pick(&idx[cut..]), Some(pick(&idx[..cut])))
}

pub fn default_arch(spec: &DatasetSpec, dim: usize) -> Arch {
    match spec {
        DatasetSpec::SyntheticLogistic { .. } | DatasetSpec::Trap(_) => Arch::Affine { input: dim },
        _ => Arch::mlp(dim, 40, 40),
    }
}

/// Loads the dataset and trains the reference model once per sweep.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let table = match &cfg.dataset {
        DatasetSpec::Adult { path, test_path } => {
            let mut t = data::load_adult(path)?;
            if let Some(tp) = test_path {
                // Encode jointly so both files share one category table.
                let mut bytes = data::read_maybe_gz(path)?;
                if !bytes.ends_with(b"\n") {
                    bytes.push(b'\n');
                }
                bytes.extend(data::read_maybe_gz(tp)?);
                t = data::parse_adult(path, &bytes)?;
            }
            Some((t.data, t.skipped_rows.len()))
        }
        DatasetSpec::Bank { path } => {
            let t = data::load_bank(path)?;
            Some((t.data, t.skipped_rows.len()))
        }
        DatasetSpec::Mnist5 { images, labels } => Some((data::load_mnist(images, labels)?, 0)),
        DatasetSpec::Xor => None,
        DatasetSpec::SyntheticLogistic { d, .. } => {
            return Ok(Prepared {
                dim: *d,
                arch: cfg.arch.unwrap_or(Arch::Affine { input: *d }),
                table: None,
                holdout: None,
                reference: None,
                mode: RegretMode::Oracle,
                skipped_rows: 0,
            })
        }
        DatasetSpec::Trap(_) => {
            return Ok(Prepared {
                dim: 2,
                arch: cfg.arch.unwrap_or(Arch::Affine { input: 2 }),
                table: None,
                holdout: None,
                reference: None,
                mode: RegretMode::Oracle,
                skipped_rows: 0,
            })
        }
    };

    match table {
        Some((data, skipped)) => {
            let dim = data.dim().ok_or_else(|| Error::Config("dataset is empty".into()))?;
            let arch = cfg.arch.unwrap_or_else(|| default_arch(&cfg.dataset, dim));
            let (train, holdout) = split_holdout(data, cfg.holdout_fraction);
            let reference = pretrain_baseline(&train, arch, &cfg.baseline_train, REFERENCE_SEED);
            Ok(Prepared {
                dim,
                arch,
                table: Some(Arc::new(train)),
                holdout: holdout.map(Arc::new),
                reference: Some(reference),
                mode: RegretMode::Baseline,
                skipped_rows: skipped,
            })
        }
        None => {
            // XOR: the reference model and the test set come from fixed draws.
            let mut src = data::gen_xor();
            let train = src.sample(3000, REFERENCE_SEED);
            let holdout = src.sample(1000, REFERENCE_SEED + 1);
            let arch = cfg.arch.unwrap_or_else(|| default_arch(&cfg.dataset, 2));
            let reference = pretrain_baseline(&train, arch, &cfg.baseline_train, REFERENCE_SEED);
            Ok(Prepared {
                dim: 2,
                arch,
                table: None,
                holdout: Some(Arc::new(holdout)),
                reference: Some(reference),
                mode: RegretMode::Baseline,
                skipped_rows: 0,
            })
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}

const ENV_STREAM: u64 = 1;
const POLICY_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn make_source(cfg: &ExperimentConfig, prep: &Prepared, seed: u64, env_rng: &mut Rng) -> Result<Box<dyn ContextSource>> {
    Ok(match &cfg.dataset {
        DatasetSpec::SyntheticLogistic { d, tau, lipschitz } => {
            Box::new(data::gen_synthetic_logistic(*d, *tau, *lipschitz, seed)?)
        }
        DatasetSpec::Xor => Box::new(data::gen_xor()),
        DatasetSpec::Trap(t) => Box::new(TrapSource::new(*t)),
        _ => Box::new(TableSource::new(
            prep.table.clone().expect("real datasets are loaded in prepare"),
            cfg.stream_mode,
            env_rng,
        )?),
    })
}

pub fn make_policy(cfg: &ExperimentConfig, arch: Arch, seed: u64) -> Result<Box<dyn Policy>> {
    let policy_seed = seed ^ POLICY_SEED_SALT;
    Ok(match cfg.algo {
        AlgoConfig::Plot(p) => Box::new(Plot::new(p, cfg.train_cfg, arch, policy_seed)?),
        AlgoConfig::Baseline(kind) => Box::new(Baseline::new(
            BaselineConfig {
                kind,
                train_cfg: cfg.train_cfg,
            },
            arch,
            policy_seed,
        )?),
    })
}

/// Per-point record. `true_label` and `oracle_score` are evaluation-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: usize,
    pub x: FeatureVector,
    pub accepted: bool,
    pub revealed: Option<u8>,
    pub reward: f64,
    pub pseudo: bool,
    pub model_score: f64,
    pub true_label: u8,
    pub oracle_score: Option<f64>,
}

/// `(P[accept | positive], P[accept | negative])` among records that entered
/// the pseudo-label batch; `None` where a class is absent.
pub fn acceptance_breakdown(records: &[DecisionRecord]) -> (Option<f64>, Option<f64>) {
    let mut c = BreakdownCounts::default();
    for r in records.iter().filter(|r| r.pseudo) {
        c.add(r.true_label, r.accepted);
    }
    c.rates()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownCounts {
    pub positives: u64,
    pub positives_accepted: u64,
    pub negatives: u64,
    pub negatives_accepted: u64,
}

impl BreakdownCounts {
    fn add(&mut self, label: u8, accepted: bool) {
        if label == 1 {
            self.positives += 1;
            self.positives_accepted += u64::from(accepted);
        } else {
            self.negatives += 1;
            self.negatives_accepted += u64::from(accepted);
        }
    }

    pub fn rates(&self) -> (Option<f64>, Option<f64>) {
        let rate = |a: u64, n: u64| (n > 0).then(|| a as f64 / n as f64);
        (
            rate(self.positives_accepted, self.positives),
            rate(self.negatives_accepted, self.negatives),
        )
    }

    /// Counts accumulated strictly after `earlier`.
    pub fn since(&self, earlier: &BreakdownCounts) -> BreakdownCounts {
        BreakdownCounts {
            positives: self.positives - earlier.positives,
            positives_accepted: self.positives_accepted - earlier.positives_accepted,
            negatives: self.negatives - earlier.negatives,
            negatives_accepted: self.negatives_accepted - earlier.negatives_accepted,
        }
    }
}

/// Metrics after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub t: usize,
    pub regret: f64,
    pub cum_regret: f64,
    pub reward: f64,
    pub cum_reward: f64,
    pub accepts: usize,
    /// Cumulative pseudo-batch breakdown counts.
    pub breakdown: BreakdownCounts,
    pub holdout_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub policy: String,
    pub config: ExperimentConfig,
    pub steps: Vec<StepMetrics>,
    pub trace: Option<Vec<DecisionRecord>>,
}

impl RunResult {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cum_regret).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }

    /// Cumulative regret after round `t` (1-based).
    pub fn regret_at(&self, t: usize) -> Option<f64> {
        (t >= 1).then(|| self.steps.get(t - 1).map(|s| s.cum_regret)).flatten()
    }

    /// Breakdown rates over the last `window` rounds.
    pub fn breakdown_window(&self, window: usize) -> BreakdownCounts {
        let last = self.steps.last().map(|s| s.breakdown).unwrap_or_default();
        let n = self.steps.len();
        if window >= n {
            return last;
        }
        last.since(&self.steps[n - window - 1].breakdown)
    }

    /// Average regret per round over the last `window` rounds.
    pub fn regret_slope(&self, window: usize) -> f64 {
        let n = self.steps.len();
        let w = window.min(n);
        let start = if w == n { 0.0 } else { self.steps[n - w - 1].cum_regret };
        (self.final_regret() - start) / w as f64
    }

    /// Trace restricted to steps whose deciding model was at least as
    /// optimistic as the truth.
    pub fn optimism_trace(&self) -> Vec<OptimismStep> {
        self.trace
            .iter()
            .flatten()
            .filter_map(|r| {
                r.oracle_score.map(|f| OptimismStep {
                    model_score: r.model_score,
                    oracle_score: f,
                    accepted: r.accepted,
                })
            })
            .collect()
    }
}

/// Runs one seed to completion.
pub fn run_single(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<RunResult> {
    let mut env_rng = stream_rng(seed, ENV_STREAM);
    let source = make_source(cfg, prep, seed, &mut env_rng)?;
    if source.dim() != prep.dim {
        return Err(Error::DimensionMismatch {
            expected: prep.dim,
            actual: source.dim(),
        });
    }
    let mut env = EnvState::new(source, env_rng);
    let mut policy = make_policy(cfg, prep.arch, seed)?;
    if let DatasetSpec::Trap(t) = &cfg.dataset {
        policy.warm_start(&t.planted_points(seed));
    }
    drive(cfg, prep, &mut env, policy.as_mut(), seed)
}

/// The online loop: batch → decide → act → metrics → observe.
pub fn drive(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    env: &mut EnvState,
    policy: &mut dyn Policy,
    seed: u64,
) -> Result<RunResult> {
    let mut steps = Vec::with_capacity(cfg.horizon);
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut cum_regret = 0.0;
    let mut cum_reward = 0.0;
    let mut counts = BreakdownCounts::default();

    for t in 1..=cfg.horizon {
        let batch = env.next_batch(cfg.batch_size)?;
        let decision = policy.decide(&batch.contexts)?;
        let outcomes = env.act(&batch, &decision.accepts)?;
        let truth = env.evaluation_truth(&batch)?;
        let reference = match (&prep.reference, prep.mode) {
            (Some(r), RegretMode::Baseline) => Some(score_many(r, &batch.contexts)?),
            _ => None,
        };

        let mut regret = 0.0;
        let mut reward = 0.0;
        for j in 0..batch.len() {
            let accepted = decision.accepts[j];
            let inc = match (prep.mode, truth[j].oracle_score, &reference) {
                (RegretMode::Oracle, Some(f), _) => oracle_regret(f, accepted),
                (RegretMode::Baseline, _, Some(r)) => {
                    baseline_regret_from_decision(r[j] >= 0.0, truth[j].label, accepted)
                }
                _ => return Err(Error::Config("no regret reference for this dataset".into())),
            };
            regret += inc;
            reward += outcomes[j].reward;
            if decision.pseudo[j] {
                counts.add(truth[j].label, accepted);
            }
            if let Some(tr) = trace.as_mut() {
                tr.push(DecisionRecord {
                    t,
                    x: batch.contexts[j].clone(),
                    accepted,
                    revealed: outcomes[j].label,
                    reward: outcomes[j].reward,
                    pseudo: decision.pseudo[j],
                    model_score: decision.scores[j],
                    true_label: truth[j].label,
                    oracle_score: truth[j].oracle_score,
                });
            }
        }
        cum_regret += regret;
        cum_reward += reward;

        let revealed: Vec<Option<u8>> = outcomes.iter().map(|o| o.label).collect();
        policy.observe(&batch.contexts, &decision.accepts, &revealed)?;

        let holdout_accuracy = match (&prep.holdout, policy.model()) {
            (Some(h), Some(m)) if cfg.eval_every > 0 && (t % cfg.eval_every == 0 || t == cfg.horizon) => {
                Some(scorer::accuracy(m, h))
            }
            _ => None,
        };
        steps.push(StepMetrics {
            t,
            regret,
            cum_regret,
            reward,
            cum_reward,
            accepts: decision.accepts.iter().filter(|a| **a).count(),
            breakdown: counts,
            holdout_accuracy,
        });
    }
    Ok(RunResult {
        seed,
        policy: policy.name(),
        config: cfg.clone(),
        steps,
        trace,
    })
}

/// One result per seed, in seed order; a failed seed does not stop the others.
pub struct Sweep {
    pub runs: Vec<(u64, Result<RunResult>)>,
}

impl Sweep {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|(_, r)| r.is_ok())
    }

    pub fn successes(&self) -> Vec<&RunResult> {
        self.runs.iter().filter_map(|(_, r)| r.as_ref().ok()).collect()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Sweep> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    Ok(run_prepared(cfg, &prep))
}

pub fn run_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Sweep {
    let runs = cfg
        .run_seeds()
        .into_par_iter()
        .map(|seed| (seed, run_single(cfg, prep, seed)))
        .collect();
    Sweep { runs }
}

/// Decision trace of one PLOT theory-mode run on 2-d synthetic data
/// (τ = 0.2, L = 2, δ = 0.1), for the optimism decomposition check.
pub fn synthetic_optimism_trace(horizon: usize, seed: u64) -> Result<Vec<OptimismStep>> {
    let (tau, lipschitz) = (0.2, 2.0);
    let mut cfg = ExperimentConfig::new(
        DatasetSpec::SyntheticLogistic { d: 2, tau, lipschitz },
        AlgoConfig::Plot(PlotConfig::theory(tau, lipschitz, 0.1)),
    );
    cfg.horizon = horizon;
    cfg.seeds = 1;
    cfg.seed_offset = seed;
    cfg.record_trace = true;
    cfg.validate()?;
    let prep = prepare(&cfg)?;
    Ok(run_single(&cfg, &prep, seed)?.optimism_trace())
}

/// Width of the trailing window for the windowed reward column.
pub const REWARD_WINDOW: usize = 100;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text for one run.
pub fn run_csv(run: &RunResult) -> String {
    let mut out = String::from("t,cum_regret,cum_reward,accepts,p_accept_pos,p_accept_neg,window_reward\n");
    let mut window = 0.0;
    for (i, s) in run.steps.iter().enumerate() {
        window += s.reward;
        if i >= REWARD_WINDOW {
            window -= run.steps[i - REWARD_WINDOW].reward;
        }
        let (p, n) = s.breakdown.rates();
        let w = window / (i + 1).min(REWARD_WINDOW) as f64;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.t,
            s.cum_regret,
            s.cum_reward,
            s.accepts,
            fmt_opt(p),
            fmt_opt(n),
            w
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub t: usize,
    pub mean_cum_regret: f64,
    pub sd_cum_regret: f64,
    pub mean_cum_reward: f64,
    pub sd_cum_reward: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub checkpoints: Vec<CheckpointSummary>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

pub fn summarize(cfg: &ExperimentConfig, sweep: &Sweep) -> Summary {
    let ok = sweep.successes();
    let checkpoints = cfg
        .checkpoints
        .iter()
        .filter(|&&t| t >= 1 && t <= cfg.horizon && !ok.is_empty())
        .map(|&t| {
            let regrets: Vec<f64> = ok.iter().map(|r| r.steps[t - 1].cum_regret).collect();
            let rewards: Vec<f64> = ok.iter().map(|r| r.steps[t - 1].cum_reward).collect();
            let (mean_cum_regret, sd_cum_regret) = mean_sd(&regrets);
            let (mean_cum_reward, sd_cum_reward) = mean_sd(&rewards);
            CheckpointSummary {
                t,
                mean_cum_regret,
                sd_cum_regret,
                mean_cum_reward,
                sd_cum_reward,
                runs: ok.len(),
            }
        })
        .collect();
    Summary {
        policy: ok.first().map(|r| r.policy.clone()).unwrap_or_default(),
        config: cfg.clone(),
        seeds: ok.iter().map(|r| r.seed).collect(),
        failed_seeds: sweep.runs.iter().filter(|(_, r)| r.is_err()).map(|(s, _)| *s).collect(),
        checkpoints,
    }
}

/// Writes `contents` to `path` through a temporary sibling and a rename, so
/// readers see either the old file or the new one.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// File stem for a run: `<prefix>_seed<k>`.
pub fn run_file_name(prefix: &str, seed: u64) -> String {
    format!("{prefix}_seed{seed}.csv")
}

/// Writes one CSV per successful run and `<prefix>_summary.json`.
pub fn emit(cfg: &ExperimentConfig, sweep: &Sweep, out_dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for run in sweep.successes() {
        let path = out_dir.join(run_file_name(prefix, run.seed));
        write_atomic(&path, run_csv(run).as_bytes())?;
        written.push(path);
    }
    let path = out_dir.join(format!("{prefix}_summary.json"));
    let json = serde_json::to_string_pretty(&summarize(cfg, sweep))?;
    write_atomic(&path, json.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_cfg(algo: AlgoConfig, horizon: usize, batch: usize) -> ExperimentConfig {
        ExperimentConfig {
            horizon,
            batch_size: batch,
            seeds: 2,
            ..ExperimentConfig::new(
                DatasetSpec::SyntheticLogistic {
                    d: 2,
                    tau: 0.2,
                    lipschitz: 3.0,
                },
                algo,
            )
        }
    }

    fn rec(pseudo: bool, label: u8, accepted: bool) -> DecisionRecord {
        DecisionRecord {
            t: 1,
            x: FeatureVector::new(vec![0.0]).unwrap(),
            accepted,
            revealed: accepted.then_some(label),
            reward: 0.0,
            pseudo,
            model_score: 0.0,
            true_label: label,
            oracle_score: None,
        }
    }

    #[test]
    fn breakdown_examples() {
        assert_eq!(acceptance_breakdown(&[]), (None, None));
        assert_eq!(acceptance_breakdown(&[rec(false, 1, true)]), (None, None));
        let recs = [rec(true, 1, true), rec(true, 1, true), rec(true, 0, false), rec(false, 0, true)];
        assert_eq!(acceptance_breakdown(&recs), (Some(1.0), Some(0.0)));
    }

    #[test]
    fn one_round_accepts_everything() {
        let cfg = synth_cfg(AlgoConfig::Plot(PlotConfig::experimental(0.1, 4)), 1, 4);
        let sweep = run_experiment(&cfg).unwrap();
        for run in sweep.successes() {
            assert_eq!(run.steps.len(), 1);
            assert_eq!(run.steps[0].accepts, 4);
        }
        assert_eq!(sweep.runs.len(), 2);
    }

    #[test]
    fn regret_is_monotone_and_seeds_differ_only_in_draws() {
        let cfg = synth_cfg(AlgoConfig::Baseline(BaselineKind::Greedy), 30, 4);
        let sweep = run_experiment(&cfg).unwrap();
        let runs = sweep.successes();
        for r in &runs {
            assert!(r.cumulative_regret().windows(2).all(|w| w[1] >= w[0]));
        }
        assert_eq!(runs[0].config, runs[1].config);
        assert_ne!(runs[0].cumulative_regret(), runs[1].cumulative_regret());
    }

    #[test]
    fn trap_planted_points_are_false_negatives() {
        let t = TrapConfig::default();
        let planted = t.planted_points(3);
        assert_eq!(planted.len(), 20);
        assert!(planted.iter().all(|p| p.y == 0 && t.f_star(&p.x) >= 1.0));
        assert_eq!(planted, t.planted_points(3));
        let theta = t.theta_star();
        let x = [2.0, 0.3];
        assert!((scorer::score(&theta, &x).unwrap() - t.f_star(&x)).abs() < 1e-12);
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"old").unwrap();
        write_atomic(&p, b"new contents").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"new contents");
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn csv_has_one_row_per_round() {
        let cfg = synth_cfg(AlgoConfig::Plot(PlotConfig::experimental(0.5, 2)), 12, 2);
        let sweep = run_experiment(&cfg).unwrap();
        let text = run_csv(sweep.successes()[0]);
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("t,cum_regret,cum_reward,accepts,p_accept_pos,p_accept_neg"));
    }

    #[test]
    fn mismatched_batch_size_is_rejected() {
        let cfg = synth_cfg(AlgoConfig::Plot(PlotConfig::experimental(0.1, 8)), 5, 4);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
