//! Feature extraction for the linear critic.
//!
//! The default scheme is a signed hashed bag-of-words over the rendered
//! state text and the action text, with separate hash namespaces for state
//! and action tokens. Extraction is deterministic for a fixed scheme and
//! dimension (the hash is FNV-1a, stable across platforms). An embedding
//! endpoint can be substituted when lexical features are not enough.

use serde::{Deserialize, Serialize};

use crate::agents::render_state_text;
use crate::mdp::{Action, State};
use crate::text::{fnv1a64, tokenize};

use super::ScoreError;

/// Default hashed bag-of-words dimension (2^18).
pub const DEFAULT_DIMENSION: usize = 1 << 18;

/// Sparse feature vector: strictly increasing indices with summed values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    pub entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| weights[i as usize] * v)
            .sum()
    }

    /// Elementwise difference `self - other`, merged on indices.
    pub fn minus(&self, other: &SparseFeatures) -> SparseFeatures {
        let mut entries = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() || j < other.entries.len() {
            match (self.entries.get(i), other.entries.get(j)) {
                (Some(&(ia, va)), Some(&(ib, vb))) if ia == ib => {
                    let v = va - vb;
                    if v != 0.0 {
                        entries.push((ia, v));
                    }
                    i += 1;
                    j += 1;
                }
                (Some(&(ia, va)), Some(&(ib, _))) if ia < ib => {
                    entries.push((ia, va));
                    i += 1;
                }
                (Some(_), Some(&(ib, vb))) => {
                    entries.push((ib, -vb));
                    j += 1;
                }
                (Some(&(ia, va)), None) => {
                    entries.push((ia, va));
                    i += 1;
                }
                (None, Some(&(ib, vb))) => {
                    entries.push((ib, -vb));
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        SparseFeatures { entries }
    }
}

/// Feature scheme. `HashedBow` is in-process and deterministic;
/// `EndpointEmbedding` delegates to an external embedding service
/// (`POST {text}` returning `{embedding: [number; dimension]}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum FeatureScheme {
    HashedBow,
    EndpointEmbedding { url: String },
}

/// Deterministic featurizer for `(state, action)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    #[serde(flatten)]
    pub scheme: FeatureScheme,
    pub dimension: usize,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor {
            scheme: FeatureScheme::HashedBow,
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl FeatureExtractor {
    pub fn hashed_bow(dimension: usize) -> Self {
        FeatureExtractor {
            scheme: FeatureScheme::HashedBow,
            dimension,
        }
    }

    /// Features for a state-action pair.
    pub fn extract(&self, state: &State, action: &Action) -> Result<SparseFeatures, ScoreError> {
        match &self.scheme {
            FeatureScheme::HashedBow => Ok(self.hashed_features(state, action)),
            FeatureScheme::EndpointEmbedding { url } => self.endpoint_features(url, state, action),
        }
    }

    fn hashed_features(&self, state: &State, action: &Action) -> SparseFeatures {
        let state_text = render_state_text(state);
        let action_text = format!("{}: {}", action.kind_str(), action.payload());
        let mut accum: std::collections::HashMap<u32, f64> = std::collections::HashMap::new();
        for (namespace, text) in [("s", state_text.as_str()), ("a", action_text.as_str())] {
            for token in tokenize(text) {
                let h = fnv1a64(format!("{namespace}:{token}").as_bytes());
                let index = ((h >> 1) % self.dimension as u64) as u32;
                let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
                *accum.entry(index).or_insert(0.0) += sign;
            }
        }
        let mut entries: Vec<(u32, f64)> = accum
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        SparseFeatures { entries }
    }

    fn endpoint_features(
        &self,
        url: &str,
        state: &State,
        action: &Action,
    ) -> Result<SparseFeatures, ScoreError> {
        #[derive(Serialize)]
        struct Request<'a> {
            text: &'a str,
        }
        #[derive(Deserialize)]
        struct Response {
            embedding: Vec<f64>,
        }
        let text = format!(
            "{}\naction {}: {}",
            render_state_text(state),
            action.kind_str(),
            action.payload()
        );
        let client = reqwest::blocking::Client::new();
        let response: Response = client
            .post(url)
            .json(&Request { text: &text })
            .send()
            .map_err(|e| ScoreError::Endpoint(e.to_string()))?
            .json()
            .map_err(|e| ScoreError::Endpoint(format!("malformed embedding response: {e}")))?;
        if response.embedding.len() != self.dimension {
            return Err(ScoreError::Endpoint(format!(
                "embedding dimension {} does not match extractor dimension {}",
                response.embedding.len(),
                self.dimension
            )));
        }
        if response.embedding.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::Endpoint("non-finite embedding value".into()));
        }
        Ok(SparseFeatures {
            entries: response
                .embedding
                .into_iter()
                .enumerate()
                .filter(|&(_, v)| v != 0.0)
                .map(|(i, v)| (i as u32, v))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{initial_state, Question, TaskKind};

    fn state() -> State {
        initial_state(&Question {
            id: "q".into(),
            text: "alpha beta".into(),
            task_kind: TaskKind::OpenQa,
            choices: Vec::new(),
            gold: None,
        })
        .unwrap()
    }

    #[test]
    fn extraction_is_deterministic() {
        let extractor = FeatureExtractor::hashed_bow(1 << 10);
        let action = Action::Search("gamma".into());
        let a = extractor.extract(&state(), &action).unwrap();
        let b = extractor.extract(&state(), &action).unwrap();
        assert_eq!(a, b);
        assert!(!a.entries.is_empty());
    }

    #[test]
    fn state_and_action_tokens_use_distinct_namespaces() {
        let extractor = FeatureExtractor::hashed_bow(1 << 12);
        let as_action = extractor
            .extract(&state(), &Action::Search("alpha".into()))
            .unwrap();
        let other = extractor
            .extract(&state(), &Action::Search("unrelated".into()))
            .unwrap();
        assert_ne!(as_action, other);
    }

    #[test]
    fn minus_merges_indices() {
        let a = SparseFeatures {
            entries: vec![(1, 2.0), (3, 1.0)],
        };
        let b = SparseFeatures {
            entries: vec![(1, 2.0), (2, 1.0)],
        };
        let d = a.minus(&b);
        assert_eq!(d.entries, vec![(2, -1.0), (3, 1.0)]);
    }

    #[test]
    fn indices_stay_within_dimension() {
        let dim = 64;
        let extractor = FeatureExtractor::hashed_bow(dim);
        let features = extractor
            .extract(&state(), &Action::Answer("many words to spread across buckets".into()))
            .unwrap();
        assert!(features.entries.iter().all(|&(i, _)| (i as usize) < dim));
    }
}
