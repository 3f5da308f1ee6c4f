//! Numeric checks of the inequalities behind the regret analysis.
//!
//! Every check is deterministic given its inputs and returns a
//! [`CheckReport`]; violations are reported, never panicked on.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::oracle_regret;
use crate::scorer::{self, link, Arch, FeatureVector, LabeledDataset, LabeledPoint, Minibatch, Optimizer, ScorerParams, TrainConfig};
use crate::seeded_rng;

/// Points strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub values: Vec<f64>,
}

impl Default for TauGrid {
    /// 0.01, 0.02, …, 0.99.
    fn default() -> Self {
        Self {
            values: (1..=99).map(|i| i as f64 / 100.0).collect(),
        }
    }
}

impl TauGrid {
    pub fn new(values: Vec<f64>) -> crate::Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(crate::Error::Domain(format!("grid value {bad} is outside (0,1)")));
        }
        Ok(Self { values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Smallest margin by which an inequality held (negative when violated).
    pub worst_slack: f64,
    /// Where the worst slack occurred, or another check-specific note.
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            passed: true,
            cases: 0,
            failures: 0,
            worst_slack: f64::INFINITY,
            detail: String::new(),
        }
    }

    fn case(&mut self, slack: f64, at: impl FnOnce() -> String) {
        self.cases += 1;
        if !(slack >= 0.0) {
            self.failures += 1;
            self.passed = false;
        }
        if !(slack >= self.worst_slack) {
            self.worst_slack = slack;
            self.detail = at();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

impl TheoryReport {
    pub fn new(checks: Vec<CheckReport>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

/// `e/(1+e)²`, the slope of the logistic lower bound on (0, 1).
pub fn logistic_lower_slope() -> f64 {
    let e = std::f64::consts::E;
    e / ((1.0 + e) * (1.0 + e))
}

/// `½ + c·x ≤ μ(x) ≤ ½ + x` at every grid point.
pub fn check_logistic_bounds(grid: &TauGrid) -> CheckReport {
    let c = logistic_lower_slope();
    let mut r = CheckReport::new("logistic_bounds");
    for &x in &grid.values {
        let m = link(x);
        let lower = m - (0.5 + c * x);
        let upper = 0.5 + x - m;
        r.case(lower.min(upper), || format!("x = {x}"));
    }
    r
}

/// The left side of the constant-classifier dominance inequality.
pub fn dominance_expression(tau: f64) -> f64 {
    let a = 0.5 + 49.0 * tau / 500.0;
    let k = 487.0 * tau / 6400.0;
    a * ((0.5 + k) / (0.5 + tau / 128.0)).ln()
        + (1.0 - a) * ((0.5 - k) / (0.5 - tau / 128.0 + tau * tau / 512.0)).ln()
}

/// `g_τ(z) = a·ln(1/z) + (1−a)·ln(1/(1 − z + τ²/512))` with `a = ½ + 49τ/500`.
pub fn g_tau(tau: f64, z: f64) -> f64 {
    let a = 0.5 + 49.0 * tau / 500.0;
    -a * z.ln() - (1.0 - a) * (1.0 - z + tau * tau / 512.0).ln()
}

/// The stationary point of `g_τ`: `a·(1 + τ²/512)`.
pub fn g_tau_stationary(tau: f64) -> f64 {
    (0.5 + 49.0 * tau / 500.0) * (1.0 + tau * tau / 512.0)
}

/// The closed-form minimizer as printed in the source derivation.
pub fn z_star_printed(tau: f64) -> f64 {
    (0.5 + tau * tau / 1024.0 + 49.0 * tau.powi(3) / 500.0 + 49.0 * tau * tau / (512.0 * 500.0))
        / (1.0 - 49.0 * tau / 250.0)
}

/// Number of interior points in the `z` scan.
pub const Z_SCAN_POINTS: usize = 2000;

/// Dominance bound `≥ 0.009τ² − 1e-6` on the grid, and that the minimum of
/// `g_τ` over `(0, ½ + τ/128]` sits at the right endpoint (`g_τ` strictly
/// decreasing there by finite differences, and both the stationary point and
/// the printed minimizer lying at or beyond the endpoint).
pub fn check_dominance_inequality(grid: &TauGrid) -> Vec<CheckReport> {
    let mut bound = CheckReport::new("dominance_inequality");
    let mut scan = CheckReport::new("dominance_boundary_minimizer");
    for &tau in &grid.values {
        let slack = dominance_expression(tau) - (0.009 * tau * tau - 1e-6);
        bound.case(slack, || format!("tau = {tau}, expression = {}", dominance_expression(tau)));

        let right = 0.5 + tau / 128.0;
        scan.case(g_tau_stationary(tau) - right, || format!("tau = {tau}: stationary point before endpoint"));
        scan.case(z_star_printed(tau) - right, || format!("tau = {tau}: printed minimizer before endpoint"));
        let lo = 1e-3;
        let h = (right - lo) / Z_SCAN_POINTS as f64;
        let mut prev = g_tau(tau, lo);
        let mut worst = f64::INFINITY;
        for i in 1..=Z_SCAN_POINTS {
            let z = lo + h * i as f64;
            let cur = g_tau(tau, z);
            worst = worst.min(prev - cur);
            prev = cur;
        }
        // A strictly decreasing scan has every drop positive.
        let drop = if worst > 0.0 { worst } else { worst.min(-f64::MIN_POSITIVE) };
        scan.case(drop, || format!("tau = {tau}: smallest drop between scan points"));
    }
    vec![bound, scan]
}

/// `KL(p‖q)` in bits for Bernoulli distributions.
pub fn bernoulli_kl_bits(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    (term(p, q) + term(1.0 - p, 1.0 - q)) / std::f64::consts::LN_2
}

/// `(2|p − q|)²/(2 ln 2)`, the L1 form of Pinsker for two-point laws.
pub fn pinsker_bound_bits(p: f64, q: f64) -> f64 {
    let l1 = 2.0 * (p - q).abs();
    l1 * l1 / (2.0 * std::f64::consts::LN_2)
}

pub fn check_pinsker(samples: usize, seed: u64) -> CheckReport {
    let mut r = CheckReport::new("pinsker");
    let mut rng = seeded_rng(seed);
    for _ in 0..samples {
        let p: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        let q: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        // Relative tolerance for rounding when p ≈ q.
        let slack = bernoulli_kl_bits(p, q) - pinsker_bound_bits(p, q) + 1e-12;
        r.case(slack, || format!("p = {p}, q = {q}"));
    }
    r
}

/// `2√(T·ln(max(1, 6 ln T/δ)))` for `T ≥ 2`.
pub fn anytime_bound(t: u64, delta: f64) -> f64 {
    let tf = t as f64;
    2.0 * (tf * (6.0 * tf.ln() / delta).max(1.0).ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Increments {
    /// Fair ±1 coin flips.
    Rademacher,
    /// All increments zero.
    Zero,
}

/// Fraction of simulated walks whose running sum ever crosses the anytime
/// bound, compared with `δ + 3σ` binomial slack.
pub fn check_anytime_hoeffding(trials: usize, horizon: u64, delta: f64, seed: u64, inc: Increments) -> CheckReport {
    let mut r = CheckReport::new("anytime_hoeffding");
    let bounds: Vec<f64> = (0..=horizon).map(|t| if t < 2 { f64::INFINITY } else { anytime_bound(t, delta) }).collect();
    let mut rng = seeded_rng(seed);
    let mut violations = 0usize;
    for _ in 0..trials {
        let mut s = 0i64;
        let mut bits = 0u64;
        let mut left = 0;
        for t in 1..=horizon {
            if inc == Increments::Rademacher {
                if left == 0 {
                    bits = rng.random();
                    left = 64;
                }
                s += if bits & 1 == 1 { 1 } else { -1 };
                bits >>= 1;
                left -= 1;
            }
            if s as f64 > bounds[t as usize] {
                violations += 1;
                break;
            }
        }
    }
    let rate = violations as f64 / trials.max(1) as f64;
    let allowed = delta + 3.0 * (delta * (1.0 - delta) / trials.max(1) as f64).sqrt();
    r.case(allowed - rate, || format!("violation rate {rate} vs allowed {allowed}"));
    r.detail = format!("violation rate {rate} ({violations}/{trials}), allowed {allowed}, bound at T=2 is {}", anytime_bound(2, delta));
    r
}

/// One step of a synthetic run: the deciding model's score, the true score
/// and the decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimismStep {
    pub model_score: f64,
    pub oracle_score: f64,
    pub accepted: bool,
}

/// Over the steps where the model was optimistic (`f_t ≥ f*`), the summed
/// pseudo-regret is at most `Σ 2·a_t·(μ(f_t) − μ(f*))`.
pub fn check_optimism_decomposition(trace: &[OptimismStep]) -> CheckReport {
    let mut r = CheckReport::new("optimism_decomposition");
    let mut regret = 0.0;
    let mut bound = 0.0;
    let mut kept = 0;
    for s in trace.iter().filter(|s| s.model_score >= s.oracle_score) {
        kept += 1;
        regret += oracle_regret(s.oracle_score, s.accepted);
        if s.accepted {
            bound += 2.0 * (link(s.model_score) - link(s.oracle_score));
        }
        r.case(bound - regret + 1e-12, || format!("after {kept} optimistic steps"));
    }
    r.detail = format!("{kept} of {} steps optimistic; regret {regret}, bound {bound}", trace.len());
    r
}

/// Trains an affine scorer on a dataset meeting the small-ball
/// conditions (diameter ≤ τ²/(128L), a point with f* > 0, positive fraction
/// ≥ ¼ + μ(τ)/2) and checks the fit scores every point positive.
pub fn check_small_ball_smoke(tau: f64, lipschitz: f64, n: usize, seed: u64) -> CheckReport {
    let mut r = CheckReport::new("small_ball_smoke");
    let mut rng = seeded_rng(seed);
    let radius = tau * tau / (128.0 * lipschitz) / 2.0;
    let center = [0.3, -0.2];
    let need = 0.25 + link(tau) / 2.0;
    let positives = (need * n as f64).ceil() as usize;
    let data: LabeledDataset = (0..n)
        .map(|i| {
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let rad = radius * rng.random::<f64>().sqrt();
            let x = FeatureVector::new(vec![center[0] + rad * ang.cos(), center[1] + rad * ang.sin()]).unwrap();
            LabeledPoint::new(x, u8::from(i < positives))
        })
        .collect();
    let cfg = TrainConfig {
        steps: 3000,
        learning_rate: 0.01,
        l2_lambda: 0.0,
        optimizer: Optimizer::Adam,
        minibatch: Minibatch::Full,
    };
    let params = scorer::train(&ScorerParams::zeros(Arch::Affine { input: 2 }), &data, &cfg, &mut rng);
    for p in data.iter() {
        let s = scorer::score(&params, &p.x).unwrap();
        r.case(s, || format!("score {s} at {:?}", p.x.as_slice()));
    }
    r
}

/// Options for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub grid: TauGrid,
    pub pinsker_samples: usize,
    pub hoeffding_trials: usize,
    pub hoeffding_horizon: u64,
    pub hoeffding_delta: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            grid: TauGrid::default(),
            pinsker_samples: 10_000,
            hoeffding_trials: 10_000,
            hoeffding_horizon: 1000,
            hoeffding_delta: 0.05,
            seed: 0,
        }
    }
}

/// Every closed-form check plus the decomposition on the supplied trace.
pub fn run_suite(cfg: &SuiteConfig, trace: &[OptimismStep]) -> TheoryReport {
    let mut checks = vec![check_logistic_bounds(&cfg.grid)];
    checks.extend(check_dominance_inequality(&cfg.grid));
    checks.push(check_pinsker(cfg.pinsker_samples, cfg.seed));
    checks.push(check_anytime_hoeffding(
        cfg.hoeffding_trials,
        cfg.hoeffding_horizon,
        cfg.hoeffding_delta,
        cfg.seed,
        Increments::Rademacher,
    ));
    checks.push(check_optimism_decomposition(trace));
    checks.push(check_small_ball_smoke(0.2, 1.0, 200, cfg.seed));
    TheoryReport::new(checks)
}
