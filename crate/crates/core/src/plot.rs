//! Pseudo-labels for optimism (PLOT).
//!
//! Each round the policy refits its maximum-likelihood model on the accepted
//! buffer, picks the points that model would reject (thinned by ε-coins),
//! labels them positive, refits a clone of the model on those pseudo-labels
//! plus the nearby real data, and accepts whatever the optimistic clone
//! scores non-negative. Pseudo-labels are discarded after the round.

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::policy::{check_feedback, Decision, Policy};
use crate::scorer::{
    self, link, score_many, Arch, FeatureVector, LabeledDataset, LabeledPoint, ScorerParams,
    TrainConfig,
};
use crate::{seeded_rng, Rng};

/// How the pseudo-label weight is chosen each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightMode {
    Constant { weight: f64 },
    /// The high-probability schedule for the logistic-linear setting with gap `tau`.
    Theory { tau: f64, lipschitz: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotConfig {
    pub epsilon: f64,
    pub weight_mode: WeightMode,
    /// Focus radius; `f64::INFINITY` keeps the whole buffer.
    #[serde(with = "radius_serde")]
    pub radius: f64,
    pub batch_size: usize,
}

mod radius_serde {
    use super::*;

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if r.is_finite() {
            s.serialize_some(r)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self::experimental(0.05, 32)
    }
}

impl PlotConfig {
    /// Weight 1 and an unbounded focus radius.
    pub fn experimental(epsilon: f64, batch_size: usize) -> Self {
        Self {
            epsilon,
            weight_mode: WeightMode::Constant { weight: 1.0 },
            radius: f64::INFINITY,
            batch_size,
        }
    }

    /// ε = 1, batch size 1, `R = τ²/(128L)` and the theory weight schedule.
    pub fn theory(tau: f64, lipschitz: f64, delta: f64) -> Self {
        Self {
            epsilon: 1.0,
            weight_mode: WeightMode::Theory {
                tau,
                lipschitz,
                delta,
            },
            radius: radius_theory(tau, lipschitz),
            batch_size: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0,1], got {}", self.epsilon)));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        match self.weight_mode {
            WeightMode::Constant { weight } if !(weight >= 0.0 && weight.is_finite()) => {
                Err(Error::Config(format!("weight must be finite and ≥ 0, got {weight}")))
            }
            WeightMode::Theory {
                tau,
                lipschitz,
                delta,
            } => {
                if !(tau > 0.0 && tau < 1.0) || !(delta > 0.0 && delta < 1.0) || !(lipschitz > 0.0) {
                    return Err(Error::Config(
                        "theory mode needs tau, delta in (0,1) and lipschitz > 0".into(),
                    ));
                }
                if self.batch_size != 1 || self.epsilon != 1.0 {
                    return Err(Error::Config("theory mode runs with batch size 1 and epsilon 1".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `x_j` for which the base model says reject and the ε-coin came up 1.
pub fn filter_pseudo_batch(
    base: &ScorerParams,
    batch: &[FeatureVector],
    eps_draws: &[bool],
) -> Result<Vec<FeatureVector>> {
    let scores = score_many(base, batch)?;
    Ok(pseudo_mask(&scores, eps_draws)?
        .into_iter()
        .zip(batch)
        .filter(|(m, _)| *m)
        .map(|(_, x)| x.clone())
        .collect())
}

fn pseudo_mask(base_scores: &[f64], eps_draws: &[bool]) -> Result<Vec<bool>> {
    if eps_draws.len() != base_scores.len() {
        return Err(Error::LengthMismatch {
            what: "eps_draws",
            expected: base_scores.len(),
            actual: eps_draws.len(),
        });
    }
    Ok(base_scores
        .iter()
        .zip(eps_draws)
        .map(|(s, &e)| *s < 0.0 && e)
        .collect())
}

/// Buffer points within `radius` of at least one pseudo point, in buffer order.
pub fn focus_dataset(buffer: &LabeledDataset, pseudo: &[FeatureVector], radius: f64) -> LabeledDataset {
    if radius == f64::INFINITY {
        return buffer.clone();
    }
    buffer
        .iter()
        .filter(|p| pseudo.iter().any(|q| p.x.distance(q) <= radius))
        .cloned()
        .collect()
}

/// `focus` followed by every pseudo point as a label-1 example of weight `weight`.
pub fn optimistic_dataset(focus: &LabeledDataset, pseudo: &[FeatureVector], weight: f64) -> LabeledDataset {
    let mut out = focus.clone();
    for x in pseudo {
        out.push(LabeledPoint::weighted(x.clone(), 1, weight));
    }
    out
}

/// Cross-entropy over `focus` plus `W·Σ −log μ(f(x))` over the pseudo points,
/// plus `(l2/2)‖θ‖²`.
pub fn optimistic_loss(
    params: &ScorerParams,
    focus: &LabeledDataset,
    pseudo: &[FeatureVector],
    weight: f64,
    l2: f64,
) -> f64 {
    scorer::loss(params, &optimistic_dataset(focus, pseudo, weight), l2)
}

/// Past points near the current context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoryCounters {
    /// Buffer points within the focus ball.
    pub accepted_near: usize,
    /// Positives among them.
    pub positive_near: usize,
}

impl TheoryCounters {
    pub fn count(buffer: &LabeledDataset, x: &[f64], radius: f64) -> Self {
        let mut c = Self::default();
        for p in buffer.iter() {
            if p.x.distance(x) <= radius {
                c.accepted_near += 1;
                c.positive_near += usize::from(p.y == 1);
            }
        }
        c
    }
}

/// `max(4√(t ln(6t² ln t/δ)), ((μ(τ)/2 + 1/4)A − D)/(3/4 − μ(τ)/2))`, defined for `t ≥ 2`.
pub fn weight_schedule_theory(t: u64, tau: f64, delta: f64, counters: TheoryCounters) -> Result<f64> {
    if t < 2 {
        return Err(Error::Domain(format!("weight schedule needs t ≥ 2, got {t}")));
    }
    if !(tau > 0.0 && tau < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain("tau and delta must lie in (0,1)".into()));
    }
    let tf = t as f64;
    let first = 4.0 * (tf * (6.0 * tf * tf * tf.ln() / delta).ln()).sqrt();
    let m = link(tau);
    let second = ((m / 2.0 + 0.25) * counters.accepted_near as f64 - counters.positive_near as f64)
        / (0.75 - m / 2.0);
    Ok(first.max(second))
}

/// `τ²/(128L)`.
pub fn radius_theory(tau: f64, lipschitz: f64) -> f64 {
    tau * tau / (128.0 * lipschitz)
}

/// Everything a PLOT run carries between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotState {
    pub buffer: LabeledDataset,
    pub base_params: ScorerParams,
    pub optimistic_params: ScorerParams,
    /// Rounds completed so far.
    pub t: u64,
    pub rng: Rng,
}

impl PlotState {
    pub fn new(arch: Arch, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let base = ScorerParams::initial(arch, &mut rng);
        Self {
            buffer: LabeledDataset::new(),
            optimistic_params: base.clone(),
            base_params: base,
            t: 0,
            rng,
        }
    }
}

/// Diagnostics of the most recent round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub pseudo_count: usize,
    pub weight: Option<f64>,
    pub counters: Option<TheoryCounters>,
}

pub struct Plot {
    pub cfg: PlotConfig,
    pub train_cfg: TrainConfig,
    pub state: PlotState,
    pub last: StepInfo,
}

impl Plot {
    pub fn new(cfg: PlotConfig, train_cfg: TrainConfig, arch: Arch, seed: u64) -> Result<Self> {
        Self::from_state(cfg, train_cfg, PlotState::new(arch, seed))
    }

    pub fn from_state(cfg: PlotConfig, train_cfg: TrainConfig, state: PlotState) -> Result<Self> {
        cfg.validate()?;
        train_cfg.validate()?;
        Ok(Self {
            cfg,
            train_cfg,
            state,
            last: StepInfo::default(),
        })
    }

    /// One round of decisions. Accepts everything while the buffer is empty.
    pub fn plot_step(&mut self, batch: &[FeatureVector]) -> Result<Decision> {
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        self.last = StepInfo::default();
        let st = &mut self.state;
        if st.buffer.is_empty() {
            return Ok(Decision::accept_all(batch.len()));
        }

        st.base_params = scorer::train(&st.base_params, &st.buffer, &self.train_cfg, &mut st.rng);
        let base_scores = score_many(&st.base_params, batch)?;
        let draws: Vec<bool> = (0..batch.len())
            .map(|_| st.rng.random::<f64>() < self.cfg.epsilon)
            .collect();
        let mask = pseudo_mask(&base_scores, &draws)?;
        let pseudo: Vec<FeatureVector> = batch
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(x, _)| x.clone())
            .collect();

        if pseudo.is_empty() {
            st.optimistic_params = st.base_params.clone();
        } else {
            let weight = match self.cfg.weight_mode {
                WeightMode::Constant { weight } => weight,
                WeightMode::Theory { tau, delta, .. } => {
                    let counters = TheoryCounters::count(&st.buffer, &pseudo[0], self.cfg.radius);
                    self.last.counters = Some(counters);
                    // A warm-started buffer can reach the schedule before t = 2.
                    weight_schedule_theory((st.t + 1).max(2), tau, delta, counters)?
                }
            };
            self.last.weight = Some(weight);
            self.last.pseudo_count = pseudo.len();
            let focus = focus_dataset(&st.buffer, &pseudo, self.cfg.radius);
            let pinned = optimistic_dataset(&LabeledDataset::default(), &pseudo, weight);
            st.optimistic_params =
                scorer::train_pinned(&st.base_params, &focus, &pinned, &self.train_cfg, &mut st.rng);
        }

        let scores = if pseudo.is_empty() {
            base_scores
        } else {
            score_many(&st.optimistic_params, batch)?
        };
        Ok(Decision {
            accepts: scores.iter().map(|s| *s >= 0.0).collect(),
            pseudo: mask,
            scores,
        })
    }

    /// Appends revealed labels to the buffer and advances time.
    pub fn record_outcomes(
        &mut self,
        batch: &[FeatureVector],
        accepts: &[bool],
        revealed: &[Option<u8>],
    ) -> Result<()> {
        check_feedback(batch, accepts, revealed)?;
        for (x, y) in batch.iter().zip(revealed) {
            if let Some(y) = y {
                self.state.buffer.push(LabeledPoint::new(x.clone(), *y));
            }
        }
        self.state.t += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.state)?)
    }
}

impl Policy for Plot {
    fn name(&self) -> String {
        match self.cfg.weight_mode {
            WeightMode::Constant { weight } => format!("plot(eps={},W={weight})", self.cfg.epsilon),
            WeightMode::Theory { .. } => "plot(theory)".into(),
        }
    }

    fn decide(&mut self, batch: &[FeatureVector]) -> Result<Decision> {
        self.plot_step(batch)
    }

    fn observe(&mut self, batch: &[FeatureVector], accepts: &[bool], revealed: &[Option<u8>]) -> Result<()> {
        self.record_outcomes(batch, accepts, revealed)
    }

    fn warm_start(&mut self, points: &LabeledDataset) {
        self.state.buffer.points.extend(points.iter().cloned());
    }

    fn model(&self) -> Option<&ScorerParams> {
        Some(&self.state.base_params)
    }
}
