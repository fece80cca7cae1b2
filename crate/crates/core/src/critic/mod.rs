//! The process reward scorer: a pairwise-trained linear critic over text
//! features, the contrastive loss it is trained with, and a client for
//! externally hosted critic endpoints.
//!
//! The loss for a preference tuple `(s, a+, a-)` is
//! `-log σ(r(s, a+) - r(s, a-))` with `σ` the logistic sigmoid, computed
//! through a numerically stable log-sigmoid so it stays finite for any
//! finite score gap.

pub mod endpoint;
pub mod features;
pub mod persist;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::render_state_text;
use crate::mdp::{Action, State};

pub use endpoint::EndpointCritic;
pub use features::{FeatureExtractor, FeatureScheme, SparseFeatures, DEFAULT_DIMENSION};
pub use persist::{load_critic, save_critic};
pub use train::{
    eval_pairwise_accuracy, gradient, objective, prepare_dataset, train, PreparedTuple,
    TrainConfig, TrainError, TrainOutput,
};

/// Scoring failures.
#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("critic endpoint failed: {0}")]
    Endpoint(String),

    #[error("critic produced a non-finite score")]
    NonFinite,
}

/// Where a preference tuple came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TupleSource {
    LlmAnnotation,
    Rollout,
    HumanFile,
}

/// One element of the preference dataset: a state with a preferred and a
/// less-preferred action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTuple {
    pub state: State,
    pub preferred: Action,
    pub rejected: Action,
    pub source: TupleSource,
}

impl PreferenceTuple {
    /// Preferred and rejected actions must differ (as trimmed strings).
    pub fn validate(&self) -> Result<(), String> {
        let same_kind = self.preferred.is_search() == self.rejected.is_search();
        if same_kind && self.preferred.payload().trim() == self.rejected.payload().trim() {
            return Err(format!(
                "preferred and rejected actions are identical: {:?}",
                self.preferred
            ));
        }
        Ok(())
    }
}

/// Anything that can score a state-action pair.
pub trait ActionScorer: Send + Sync {
    fn score(&self, state: &State, action: &Action) -> Result<f64, ScoreError>;

    fn describe(&self) -> String {
        "scorer".into()
    }
}

/// A linear scorer: `score = weights · features(state, action) + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCritic {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub extractor: FeatureExtractor,
}

impl LinearCritic {
    /// Zero-initialized critic for the given extractor.
    pub fn zeroed(extractor: FeatureExtractor) -> Self {
        LinearCritic {
            weights: vec![0.0; extractor.dimension],
            bias: 0.0,
            extractor,
        }
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.weights.len() != self.extractor.dimension {
            return Err(ScoreError::Endpoint(format!(
                "critic has {} weights for dimension {}",
                self.weights.len(),
                self.extractor.dimension
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(ScoreError::NonFinite);
        }
        Ok(())
    }
}

impl ActionScorer for LinearCritic {
    fn score(&self, state: &State, action: &Action) -> Result<f64, ScoreError> {
        let features = self.extractor.extract(state, action)?;
        let score = features.dot(&self.weights) + self.bias;
        if !score.is_finite() {
            return Err(ScoreError::NonFinite);
        }
        Ok(score)
    }

    fn describe(&self) -> String {
        format!("linear critic (dimension {})", self.extractor.dimension)
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable `-log σ(gap)`: the pairwise loss as a function of the score gap.
/// `loss_from_gap(0) = ln 2`; the loss is strictly decreasing in the gap and
/// stays finite for finite gaps.
pub fn loss_from_gap(gap: f64) -> f64 {
    // -log σ(g) = softplus(-g) = max(-g, 0) + ln(1 + e^{-|g|})
    (-gap).max(0.0) + (-gap.abs()).exp().ln_1p()
}

/// The pairwise contrastive loss of one tuple under a scorer.
pub fn pairwise_loss(
    scorer: &dyn ActionScorer,
    tuple: &PreferenceTuple,
) -> Result<f64, ScoreError> {
    let preferred = scorer.score(&tuple.state, &tuple.preferred)?;
    let rejected = scorer.score(&tuple.state, &tuple.rejected)?;
    Ok(loss_from_gap(preferred - rejected))
}

/// Renders the state text the critic consumes; also the `state_text` field
/// of reward-model exports and the critic endpoint wire contract.
pub fn critic_state_text(state: &State) -> String {
    render_state_text(state)
}

/// Renders the action text the critic consumes.
pub fn critic_action_text(action: &Action) -> String {
    format!("{}: {}", action.kind_str(), action.payload())
}
