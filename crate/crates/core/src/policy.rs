//! The interface every acceptance policy implements.
//!
//! A policy only ever sees contexts and the labels the environment revealed
//! for points it accepted; it holds no handle to the environment itself.

use crate::error::{Error, Result};
use crate::scorer::{FeatureVector, LabeledDataset, ScorerParams};

/// Per-batch output of a policy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decision {
    pub accepts: Vec<bool>,
    /// Whether each point entered the pseudo-label filtered batch.
    pub pseudo: Vec<bool>,
    /// Score of the model that made each decision.
    pub scores: Vec<f64>,
}

impl Decision {
    pub fn accept_all(n: usize) -> Self {
        Self {
            accepts: vec![true; n],
            pseudo: vec![false; n],
            scores: vec![f64::INFINITY; n],
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> String;

    fn decide(&mut self, batch: &[FeatureVector]) -> Result<Decision>;

    /// Feeds back the labels revealed for accepted points. `revealed[j]` must
    /// be present exactly when `accepts[j]` is true.
    fn observe(
        &mut self,
        batch: &[FeatureVector],
        accepts: &[bool],
        revealed: &[Option<u8>],
    ) -> Result<()>;

    /// Seeds the accepted buffer with labeled points before the first round.
    fn warm_start(&mut self, points: &LabeledDataset);

    /// The model whose held-out accuracy describes the policy, if any.
    fn model(&self) -> Option<&ScorerParams> {
        None
    }
}

pub(crate) fn check_feedback(
    batch: &[FeatureVector],
    accepts: &[bool],
    revealed: &[Option<u8>],
) -> Result<()> {
    for (what, len) in [("accepts", accepts.len()), ("revealed", revealed.len())] {
        if len != batch.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: batch.len(),
                actual: len,
            });
        }
    }
    for (index, (a, r)) in accepts.iter().zip(revealed).enumerate() {
        match (a, r) {
            (false, Some(_)) => return Err(Error::LabelForRejected { index }),
            (true, None) => return Err(Error::MissingLabel { index }),
            _ => {}
        }
    }
    Ok(())
}
