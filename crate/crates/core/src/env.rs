//! The one-sided-feedback environment.
//!
//! [`EnvState`] serves batches of contexts, draws (or looks up) each label
//! once when the batch is served, and reveals a label only through [`EnvState::act`]
//! for points that were accepted. Regret bookkeeping lives here too.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::{self, link, FeatureVector, LabeledDataset, ScorerParams};
use crate::Rng;

/// One context drawn from a source together with its hidden label.
#[derive(Debug, Clone)]
pub struct Draw {
    pub x: FeatureVector,
    pub label: u8,
    /// `f*(x)` when the source knows the true label model.
    pub oracle_score: Option<f64>,
}

/// Anything that can produce contexts with hidden labels.
pub trait ContextSource: Send {
    fn dim(&self) -> usize;

    fn draw(&mut self, rng: &mut Rng) -> Result<Draw>;

    /// True label model, when known (synthetic sources).
    fn theta_star(&self) -> Option<&ScorerParams> {
        None
    }
}

/// What a finite table does once every row has been served.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// Fail with [`Error::Exhausted`].
    Exhaust,
    /// Reshuffle and start over.
    Cycle,
    /// Every draw is an independent uniform pick from the table.
    #[default]
    Replacement,
}

/// A fixed labeled table streamed in a seed-dependent order.
pub struct TableSource {
    data: Arc<LabeledDataset>,
    order: Vec<usize>,
    cursor: usize,
    served: usize,
    mode: StreamMode,
}

impl TableSource {
    /// Shuffles the row order once with `rng`.
    pub fn new(data: Arc<LabeledDataset>, mode: StreamMode, rng: &mut Rng) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("cannot stream an empty table".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        Ok(Self {
            data,
            order,
            cursor: 0,
            served: 0,
            mode,
        })
    }
}

impl ContextSource for TableSource {
    fn dim(&self) -> usize {
        self.data.dim().unwrap_or(0)
    }

    fn draw(&mut self, rng: &mut Rng) -> Result<Draw> {
        let idx = match self.mode {
            StreamMode::Replacement => rng.random_range(0..self.data.len()),
            StreamMode::Exhaust | StreamMode::Cycle => {
                if self.cursor == self.order.len() {
                    if self.mode == StreamMode::Exhaust {
                        return Err(Error::Exhausted {
                            served: self.served,
                        });
                    }
                    self.order.shuffle(rng);
                    self.cursor = 0;
                }
                self.cursor += 1;
                self.order[self.cursor - 1]
            }
        };
        self.served += 1;
        let p = &self.data.points[idx];
        Ok(Draw {
            x: p.x.clone(),
            label: p.y,
            oracle_score: None,
        })
    }
}

/// A batch of contexts; labels stay inside the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub id: u64,
    pub contexts: Vec<FeatureVector>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}

/// Result of acting on one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub reward: f64,
    pub label: Option<u8>,
}

/// Ground truth for a served point, for evaluation code only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalInfo {
    pub label: u8,
    pub oracle_score: Option<f64>,
}

struct Pending {
    id: u64,
    truth: Vec<EvalInfo>,
    acted: bool,
}

pub struct EnvState {
    source: Box<dyn ContextSource>,
    rng: Rng,
    pending: Option<Pending>,
    next_id: u64,
    revealed_count: usize,
}

impl EnvState {
    pub fn new(source: Box<dyn ContextSource>, rng: Rng) -> Self {
        Self {
            source,
            rng,
            pending: None,
            next_id: 0,
            revealed_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn theta_star(&self) -> Option<&ScorerParams> {
        self.source.theta_star()
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed_count
    }

    /// Serves `batch_size` contexts. Their labels are fixed now and never change.
    pub fn next_batch(&mut self, batch_size: usize) -> Result<Batch> {
        let mut contexts = Vec::with_capacity(batch_size);
        let mut truth = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let d = self.source.draw(&mut self.rng)?;
            truth.push(EvalInfo {
                label: d.label,
                oracle_score: d.oracle_score,
            });
            contexts.push(d.x);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.pending = Some(Pending {
            id,
            truth,
            acted: false,
        });
        Ok(Batch { id, contexts })
    }

    fn pending_for(&self, batch: &Batch) -> Result<&Pending> {
        match &self.pending {
            Some(p) if p.id == batch.id => Ok(p),
            other => Err(Error::StaleBatch {
                got: batch.id,
                pending: other.as_ref().map(|p| p.id),
            }),
        }
    }

    /// Accepting reveals the label and pays `2y − 1`; rejecting pays 0.
    pub fn act(&mut self, batch: &Batch, accepts: &[bool]) -> Result<Vec<Outcome>> {
        let pending = self.pending_for(batch)?;
        if pending.acted {
            return Err(Error::StaleBatch {
                got: batch.id,
                pending: None,
            });
        }
        if accepts.len() != pending.truth.len() {
            return Err(Error::LengthMismatch {
                what: "accepts",
                expected: pending.truth.len(),
                actual: accepts.len(),
            });
        }
        let outcomes: Vec<Outcome> = pending
            .truth
            .iter()
            .zip(accepts)
            .map(|(t, &a)| {
                if a {
                    Outcome {
                        reward: 2.0 * t.label as f64 - 1.0,
                        label: Some(t.label),
                    }
                } else {
                    Outcome {
                        reward: 0.0,
                        label: None,
                    }
                }
            })
            .collect();
        self.revealed_count += accepts.iter().filter(|a| **a).count();
        if let Some(p) = self.pending.as_mut() {
            p.acted = true;
        }
        Ok(outcomes)
    }

    /// Evaluation-only view of the truth behind an already-acted batch.
    ///
    /// This is for regret and breakdown metrics in the harness. Nothing
    /// returned here may be passed to a policy.
    pub fn evaluation_truth(&self, batch: &Batch) -> Result<&[EvalInfo]> {
        let pending = self.pending_for(batch)?;
        if !pending.acted {
            return Err(Error::Domain(
                "evaluation truth is only available after act".into(),
            ));
        }
        Ok(&pending.truth)
    }
}

/// Pseudo-regret of one decision given the true score `f*(x)`:
/// `max(0, 2μ(f*) − 1) − a·(2μ(f*) − 1)`.
pub fn oracle_regret(f_star: f64, accepted: bool) -> f64 {
    let gain = 2.0 * link(f_star) - 1.0;
    let taken = if accepted { gain } else { 0.0 };
    (gain.max(0.0) - taken).max(0.0)
}

/// Expected reward `a·(2μ(f*) − 1)` of one decision.
pub fn oracle_reward(f_star: f64, accepted: bool) -> f64 {
    if accepted {
        2.0 * link(f_star) - 1.0
    } else {
        0.0
    }
}

pub fn pseudo_regret_increment(theta_star: &ScorerParams, x: &[f64], accepted: bool) -> Result<f64> {
    Ok(oracle_regret(scorer::score(theta_star, x)?, accepted))
}

/// Realized reward the baseline's decision would have earned minus the
/// reward earned, floored at zero.
pub fn baseline_regret_increment(
    baseline: &ScorerParams,
    x: &[f64],
    label: u8,
    accepted: bool,
) -> Result<f64> {
    let baseline_accepts = scorer::score(baseline, x)? >= 0.0;
    Ok(baseline_regret_from_decision(baseline_accepts, label, accepted))
}

pub fn baseline_regret_from_decision(baseline_accepts: bool, label: u8, accepted: bool) -> f64 {
    let reward = |a: bool| if a { 2.0 * label as f64 - 1.0 } else { 0.0 };
    (reward(baseline_accepts) - reward(accepted)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegretMode {
    Oracle,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub mode: RegretMode,
    pub cumulative: f64,
    pub per_step: Vec<f64>,
}

impl RegretLedger {
    pub fn new(mode: RegretMode) -> Self {
        Self {
            mode,
            cumulative: 0.0,
            per_step: Vec::new(),
        }
    }

    pub fn record(&mut self, increment: f64) {
        debug_assert!(increment >= 0.0);
        self.per_step.push(increment);
        self.cumulative += increment;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{Arch, LabeledPoint};
    use crate::seeded_rng;
    use approx::assert_relative_eq;

    fn table(n: usize) -> Arc<LabeledDataset> {
        Arc::new(
            (0..n)
                .map(|i| LabeledPoint::new(FeatureVector::new(vec![i as f64]).unwrap(), (i % 2) as u8))
                .collect(),
        )
    }

    fn env(n: usize, mode: StreamMode, seed: u64) -> EnvState {
        let mut rng = seeded_rng(seed);
        let src = TableSource::new(table(n), mode, &mut rng).unwrap();
        EnvState::new(Box::new(src), rng)
    }

    #[test]
    fn rewards_and_label_secrecy() {
        let mut e = env(10, StreamMode::Exhaust, 0);
        let b = e.next_batch(4).unwrap();
        let accepts = [true, false, true, false];
        let out = e.act(&b, &accepts).unwrap();
        for (o, (a, x)) in out.iter().zip(accepts.iter().zip(&b.contexts)) {
            let y = (x[0] as usize % 2) as u8;
            if *a {
                assert_eq!(o.label, Some(y));
                assert_eq!(o.reward, 2.0 * y as f64 - 1.0);
            } else {
                assert_eq!(o.label, None);
                assert_eq!(o.reward, 0.0);
            }
        }
        assert_eq!(e.revealed_count(), 2);
    }

    #[test]
    fn act_errors() {
        let mut e = env(10, StreamMode::Exhaust, 0);
        let b = e.next_batch(3).unwrap();
        assert!(matches!(
            e.act(&b, &[true]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(e.evaluation_truth(&b).is_err());
        e.act(&b, &[true, true, true]).unwrap();
        assert!(e.act(&b, &[true, true, true]).is_err());
        let b2 = e.next_batch(1).unwrap();
        assert!(matches!(e.act(&b, &[true, true, true]), Err(Error::StaleBatch { .. })));
        assert!(e.act(&b2, &[false]).is_ok());
    }

    #[test]
    fn exhaustion_and_cycling() {
        let mut e = env(5, StreamMode::Exhaust, 1);
        e.next_batch(5).unwrap();
        assert!(matches!(e.next_batch(1), Err(Error::Exhausted { served: 5 })));

        let mut c = env(5, StreamMode::Cycle, 1);
        let first = c.next_batch(5).unwrap();
        let mut seen: Vec<f64> = first.contexts.iter().map(|x| x[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.next_batch(7).unwrap().len(), 7);

        let mut r = env(5, StreamMode::Replacement, 1);
        assert_eq!(r.next_batch(32).unwrap().len(), 32);
    }

    #[test]
    fn oracle_regret_examples() {
        let p = ScorerParams::new(Arch::Linear { input: 1 }, vec![1.0]).unwrap();
        assert_eq!(pseudo_regret_increment(&p, &[0.5], true).unwrap(), 0.0);
        assert_eq!(pseudo_regret_increment(&p, &[-0.5], false).unwrap(), 0.0);
        // 1 − 2μ(−0.5) with μ(−0.5) = 1/(1+e^{0.5})
        let expected = 1.0 - 2.0 / (1.0 + 0.5f64.exp());
        assert_relative_eq!(
            pseudo_regret_increment(&p, &[-0.5], true).unwrap(),
            expected,
            epsilon = 1e-15
        );
        assert_relative_eq!(expected, 0.2449186624, epsilon = 1e-9);
        assert_eq!(oracle_regret(0.0, true), 0.0);
        assert_eq!(oracle_regret(0.0, false), 0.0);
    }

    #[test]
    fn baseline_regret_examples() {
        assert_eq!(baseline_regret_from_decision(false, 0, false), 0.0);
        assert_eq!(baseline_regret_from_decision(false, 1, false), 0.0);
        assert_eq!(baseline_regret_from_decision(true, 1, false), 1.0);
        assert_eq!(baseline_regret_from_decision(false, 0, true), 1.0);
        // Doing better than the baseline is floored at zero.
        assert_eq!(baseline_regret_from_decision(true, 0, false), 0.0);
        let b = ScorerParams::new(Arch::Linear { input: 1 }, vec![1.0]).unwrap();
        assert_eq!(baseline_regret_increment(&b, &[2.0], 1, false).unwrap(), 1.0);
    }

    #[test]
    fn ledger_sums() {
        let mut l = RegretLedger::new(RegretMode::Oracle);
        for v in [0.1, 0.0, 0.25] {
            l.record(v);
        }
        assert_relative_eq!(l.cumulative, l.per_step.iter().sum::<f64>());
    }
}
