//! Client for externally hosted critic endpoints.
//!
//! Wire contract: `POST {state_text, action_text}` returning
//! `{score: number}`. A non-finite or missing score is a scoring error; the
//! episode policy decides what happens next.

use serde::{Deserialize, Serialize};

use crate::mdp::{Action, State};

use super::{critic_action_text, critic_state_text, ActionScorer, ScoreError};

/// A process-reward scorer served over HTTP.
pub struct EndpointCritic {
    url: String,
    client: reqwest::blocking::Client,
}

impl EndpointCritic {
    pub fn new(url: &str) -> Result<Self, ScoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| ScoreError::Endpoint(format!("client build failed: {e}")))?;
        Ok(EndpointCritic {
            url: url.to_string(),
            client,
        })
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    state_text: &'a str,
    action_text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

impl ActionScorer for EndpointCritic {
    fn score(&self, state: &State, action: &Action) -> Result<f64, ScoreError> {
        let state_text = critic_state_text(state);
        let action_text = critic_action_text(action);
        let response = self
            .client
            .post(&self.url)
            .json(&ScoreRequest {
                state_text: &state_text,
                action_text: &action_text,
            })
            .send()
            .map_err(|e| ScoreError::Endpoint(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ScoreError::Endpoint(format!(
                "status {}",
                response.status()
            )));
        }
        let parsed: ScoreResponse = response
            .json()
            .map_err(|e| ScoreError::Endpoint(format!("malformed response: {e}")))?;
        if !parsed.score.is_finite() {
            return Err(ScoreError::NonFinite);
        }
        Ok(parsed.score)
    }

    fn describe(&self) -> String {
        format!("critic endpoint {}", self.url)
    }
}
