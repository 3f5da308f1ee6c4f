//! Comparison policies: greedy, decayed ε-greedy and a diagonal NeuralUCB
//! surrogate. They share the buffer/retrain loop and differ only in the
//! accept rule.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{check_feedback, Decision, Policy};
use crate::scorer::{
    self, score_gradient, score_many, Arch, FeatureVector, LabeledDataset, LabeledPoint, ScorerParams,
    TrainConfig,
};
use crate::{seeded_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Greedy,
    EpsGreedy {
        eps0: f64,
        eps_floor: f64,
        horizon: u64,
    },
    /// Diagonal-design NeuralUCB surrogate.
    NeuralUcb { gamma: f64 },
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineKind::Greedy => Ok(()),
            BaselineKind::EpsGreedy {
                eps0,
                eps_floor,
                horizon,
            } => {
                if !(eps_floor > 0.0 && eps_floor <= eps0 && eps0 <= 1.0) {
                    return Err(Error::Config(format!(
                        "need 0 < eps_floor ≤ eps0 ≤ 1, got floor {eps_floor}, eps0 {eps0}"
                    )));
                }
                if horizon == 0 {
                    return Err(Error::Config("eps-greedy horizon must be positive".into()));
                }
                Ok(())
            }
            BaselineKind::NeuralUcb { gamma } if !(gamma >= 0.0 && gamma.is_finite()) => {
                Err(Error::Config(format!("gamma must be finite and ≥ 0, got {gamma}")))
            }
            BaselineKind::NeuralUcb { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub train_cfg: TrainConfig,
}

/// `max(floor, eps0·(floor/eps0)^{t/horizon})`.
pub fn eps_schedule(eps0: f64, eps_floor: f64, horizon: u64, t: u64) -> f64 {
    let frac = t as f64 / horizon as f64;
    (eps0 * (eps_floor / eps0).powf(frac)).max(eps_floor)
}

/// `γ·√(Σ_k g_k²/Z_k)`.
pub fn ucb_bonus(gamma: f64, grad: &[f64], z: &[f64]) -> f64 {
    gamma * grad.iter().zip(z).map(|(g, z)| g * g / z).sum::<f64>().sqrt()
}

/// Buffer and MLE model shared by every baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub buffer: LabeledDataset,
    pub params: ScorerParams,
    pub t: u64,
    pub rng: Rng,
}

impl Learner {
    pub fn new(arch: Arch, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        Self {
            buffer: LabeledDataset::new(),
            params: ScorerParams::initial(arch, &mut rng),
            t: 0,
            rng,
        }
    }

    fn refit(&mut self, cfg: &TrainConfig) {
        self.params = scorer::train(&self.params, &self.buffer, cfg, &mut self.rng);
    }

    fn record(&mut self, batch: &[FeatureVector], accepts: &[bool], revealed: &[Option<u8>]) -> Result<()> {
        check_feedback(batch, accepts, revealed)?;
        for (x, y) in batch.iter().zip(revealed) {
            if let Some(y) = y {
                self.buffer.push(LabeledPoint::new(x.clone(), *y));
            }
        }
        self.t += 1;
        Ok(())
    }
}

pub struct Baseline {
    pub cfg: BaselineConfig,
    pub learner: Learner,
    /// Diagonal design accumulator, one entry per parameter (NeuralUCB only).
    pub design: Vec<f64>,
    last_grads: Vec<Vec<f64>>,
}

impl Baseline {
    pub fn new(cfg: BaselineConfig, arch: Arch, seed: u64) -> Result<Self> {
        cfg.kind.validate()?;
        cfg.train_cfg.validate()?;
        let learner = Learner::new(arch, seed);
        let design = match cfg.kind {
            BaselineKind::NeuralUcb { .. } => vec![1.0; learner.params.len()],
            _ => Vec::new(),
        };
        Ok(Self {
            cfg,
            learner,
            design,
            last_grads: Vec::new(),
        })
    }

    pub fn greedy(train_cfg: TrainConfig, arch: Arch, seed: u64) -> Result<Self> {
        Self::new(
            BaselineConfig {
                kind: BaselineKind::Greedy,
                train_cfg,
            },
            arch,
            seed,
        )
    }

    /// Current exploration rate (ε-greedy only).
    pub fn epsilon(&self) -> Option<f64> {
        match self.cfg.kind {
            BaselineKind::EpsGreedy {
                eps0,
                eps_floor,
                horizon,
            } => Some(eps_schedule(eps0, eps_floor, horizon, self.learner.t)),
            _ => None,
        }
    }

    /// UCB bonus at `x` under the current model and design.
    pub fn bonus(&self, x: &[f64]) -> Result<f64> {
        let gamma = match self.cfg.kind {
            BaselineKind::NeuralUcb { gamma } => gamma,
            _ => return Ok(0.0),
        };
        Ok(ucb_bonus(gamma, &score_gradient(&self.learner.params, x)?, &self.design))
    }

    fn step(&mut self, batch: &[FeatureVector]) -> Result<Decision> {
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let cold = self.learner.buffer.is_empty();
        if !cold {
            self.learner.refit(&self.cfg.train_cfg);
        }
        let mut scores = score_many(&self.learner.params, batch)?;
        if let BaselineKind::NeuralUcb { gamma } = self.cfg.kind {
            self.last_grads = batch
                .iter()
                .map(|x| score_gradient(&self.learner.params, x))
                .collect::<Result<_>>()?;
            for (s, g) in scores.iter_mut().zip(&self.last_grads) {
                *s += ucb_bonus(gamma, g, &self.design);
            }
        }
        if cold {
            return Ok(Decision {
                accepts: vec![true; batch.len()],
                pseudo: vec![false; batch.len()],
                scores,
            });
        }
        let accepts = match self.epsilon() {
            Some(eps) => scores
                .iter()
                .map(|s| self.learner.rng.random::<f64>() < eps || *s >= 0.0)
                .collect(),
            None => scores.iter().map(|s| *s >= 0.0).collect(),
        };
        Ok(Decision {
            accepts,
            pseudo: vec![false; batch.len()],
            scores,
        })
    }
}

impl Policy for Baseline {
    fn name(&self) -> String {
        match self.cfg.kind {
            BaselineKind::Greedy => "greedy".into(),
            BaselineKind::EpsGreedy { eps0, eps_floor, .. } => format!("eps-greedy({eps0}->{eps_floor})"),
            BaselineKind::NeuralUcb { gamma } => format!("neural-ucb-diag(gamma={gamma})"),
        }
    }

    fn decide(&mut self, batch: &[FeatureVector]) -> Result<Decision> {
        self.step(batch)
    }

    fn observe(&mut self, batch: &[FeatureVector], accepts: &[bool], revealed: &[Option<u8>]) -> Result<()> {
        self.learner.record(batch, accepts, revealed)?;
        if !self.design.is_empty() {
            if self.last_grads.len() != batch.len() {
                return Err(Error::Domain("observe must follow decide on the same batch".into()));
            }
            for (g, _) in self.last_grads.iter().zip(accepts).filter(|(_, a)| **a) {
                for (z, gk) in self.design.iter_mut().zip(g) {
                    *z += gk * gk;
                }
            }
            self.last_grads.clear();
        }
        Ok(())
    }

    fn warm_start(&mut self, points: &LabeledDataset) {
        self.learner.buffer.points.extend(points.iter().cloned());
    }

    fn model(&self) -> Option<&ScorerParams> {
        Some(&self.learner.params)
    }
}
