//! Ranking annotators: LLM ranking over rendered candidates, rollout-based
//! success scoring, and offline human annotation files.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::parse::extract_last_json;
use crate::gateway::{ChatRequest, GenerationConfig, RoleKind};
use crate::inference::{EpisodeError, EpisodeRunner, InferenceConfig};
use crate::mdp::{
    outcome_reward, transition, Action, AnnotatorLabel, MdpError, RankingAnnotation, State,
    TransitionResult,
};
use crate::seed::derive_seed;

/// Annotation failures. A failing annotator makes the whole trajectory
/// unusable; it is never silently patched.
#[derive(Debug, Error)]
pub enum AnnotatorError {
    #[error("annotator returned an invalid ranking after retries: {0}")]
    InvalidRanking(String),

    #[error(transparent)]
    Episode(#[from] Box<EpisodeError>),

    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),

    #[error("human annotation file {path}: {reason}")]
    HumanFile { path: String, reason: String },

    #[error("no human annotation for question {question_id} step {step_index}")]
    MissingHumanAnnotation {
        question_id: String,
        step_index: usize,
    },
}

impl From<EpisodeError> for AnnotatorError {
    fn from(e: EpisodeError) -> Self {
        AnnotatorError::Episode(Box::new(e))
    }
}

/// Annotator configuration, as selected on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotatorKind {
    Llm,
    Rollout {
        rollouts_per_candidate: usize,
        #[serde(default = "default_rollout_temperature")]
        temperature: f64,
    },
    HumanFile { path: PathBuf },
}

fn default_rollout_temperature() -> f64 {
    1.0
}

impl AnnotatorKind {
    pub fn label(&self) -> AnnotatorLabel {
        match self {
            AnnotatorKind::Llm => AnnotatorLabel::Llm,
            AnnotatorKind::Rollout { .. } => AnnotatorLabel::Rollout,
            AnnotatorKind::HumanFile { .. } => AnnotatorLabel::HumanFile,
        }
    }

    /// Loads whatever the annotator needs up front (the human file).
    pub fn resolve(&self) -> Result<Annotator, AnnotatorError> {
        Ok(match self {
            AnnotatorKind::Llm => Annotator::Llm,
            AnnotatorKind::Rollout {
                rollouts_per_candidate,
                temperature,
            } => {
                if *rollouts_per_candidate < 1 {
                    return Err(AnnotatorError::InvalidRanking(
                        "rollouts_per_candidate must be >= 1".into(),
                    ));
                }
                Annotator::Rollout {
                    rollouts_per_candidate: *rollouts_per_candidate,
                    temperature: *temperature,
                }
            }
            AnnotatorKind::HumanFile { path } => Annotator::Human(HumanAnnotations::load(path)?),
        })
    }
}

/// A resolved annotator ready to rank candidates.
pub enum Annotator {
    Llm,
    Rollout {
        rollouts_per_candidate: usize,
        temperature: f64,
    },
    Human(HumanAnnotations),
}

impl Annotator {
    pub fn label(&self) -> AnnotatorLabel {
        match self {
            Annotator::Llm => AnnotatorLabel::Llm,
            Annotator::Rollout { .. } => AnnotatorLabel::Rollout,
            Annotator::Human(_) => AnnotatorLabel::HumanFile,
        }
    }

    /// Ranks `candidates` at `state`, most to least appropriate.
    pub fn annotate(
        &self,
        runner: &EpisodeRunner<'_>,
        state: &State,
        candidates: &[Action],
        seed: u64,
        max_steps: usize,
    ) -> Result<RankingAnnotation, AnnotatorError> {
        match self {
            Annotator::Llm => rank_with_llm(runner, state, candidates),
            Annotator::Rollout {
                rollouts_per_candidate,
                temperature,
            } => rank_by_rollout(
                runner,
                state,
                candidates,
                *rollouts_per_candidate,
                *temperature,
                seed,
                max_steps,
            ),
            Annotator::Human(annotations) => annotations.annotate(state, candidates),
        }
    }
}

#[derive(Deserialize)]
struct RankedIndices {
    ranked_indices: Vec<usize>,
}

const MAX_RANK_RETRIES: usize = 2;

/// Ranks candidates with the annotator-role LLM.
///
/// Renders the ranking prompt (sufficiency/utility/redundancy criteria over
/// the indexed candidate list), parses `{"ranked_indices": [...]}`, and
/// validates that it is a bijection on the candidate indices. Invalid output
/// is retried up to two times with a repair instruction.
pub fn rank_with_llm(
    runner: &EpisodeRunner<'_>,
    state: &State,
    candidates: &[Action],
) -> Result<RankingAnnotation, AnnotatorError> {
    let prompts = &runner.agent.prompts;
    let base_user = prompts.rank_user(state, candidates)?;
    let system = prompts.rank_system()?;
    let mut user = base_user.clone();
    let mut last_error = String::new();
    for _attempt in 0..=MAX_RANK_RETRIES {
        let request = ChatRequest {
            system: system.clone(),
            user: user.clone(),
            generation: GenerationConfig::greedy(256),
        };
        let raw = match runner.gateway.complete(RoleKind::Annotator, &request) {
            Ok(completions) => completions.into_iter().next().expect("n_samples is 1"),
            Err(e) => {
                return Err(AnnotatorError::InvalidRanking(format!(
                    "annotator backend failed: {e}"
                )))
            }
        };
        match extract_last_json::<RankedIndices>(&raw) {
            Ok(parsed) => {
                let annotation = RankingAnnotation {
                    ranked_indices: parsed.ranked_indices,
                    annotator: AnnotatorLabel::Llm,
                    raw: raw.clone(),
                };
                match annotation.validate(candidates.len()) {
                    Ok(()) => return Ok(annotation),
                    Err(e) => last_error = e.to_string(),
                }
            }
            Err(e) => last_error = e.to_string(),
        }
        user = format!(
            "{base_user}\n\nYour previous ranking was invalid ({last_error}). Output a JSON \
             object with a \"ranked_indices\" list that is a permutation of the indices \
             0..{} shown above.",
            candidates.len() - 1,
        );
    }
    Err(AnnotatorError::InvalidRanking(last_error))
}

/// Ranks candidates by empirical rollout success.
///
/// Each candidate is executed from `state`; the episode is then completed
/// `rollouts_per_candidate` times and the candidate's score is the fraction
/// of completions whose final answer is correct. Ranking is by score
/// descending with ties broken by candidate index, so an all-zero scoring
/// degenerates to index order. Requires a gold answer.
pub fn rank_by_rollout(
    runner: &EpisodeRunner<'_>,
    state: &State,
    candidates: &[Action],
    rollouts_per_candidate: usize,
    temperature: f64,
    seed: u64,
    max_steps: usize,
) -> Result<RankingAnnotation, AnnotatorError> {
    let question = &state.question;
    let rollout_config = InferenceConfig {
        n_candidates: 1,
        max_steps,
        temperature,
        use_critic: false,
        force_answer_at_cap: true,
        ..InferenceConfig::default()
    };
    let mut scores = Vec::with_capacity(candidates.len());
    for (candidate_index, candidate) in candidates.iter().enumerate() {
        let score = match transition(state, candidate, runner.env)? {
            // An answer candidate terminates immediately: its score is just
            // the outcome of that answer.
            TransitionResult::Terminal(answer) => f64::from(outcome_reward(&answer, question)?),
            TransitionResult::Next(next) => {
                let next = runner.attach_summary(next).map_err(AnnotatorError::from)?;
                let mut successes = 0usize;
                for rollout in 0..rollouts_per_candidate {
                    let rollout_seed =
                        derive_seed(seed, &format!("rollout/{candidate_index}/{rollout}"));
                    let outcome =
                        runner.continue_from(next.clone(), &rollout_config, rollout_seed)?;
                    if let Some(answer) = &outcome.final_answer {
                        if outcome_reward(answer, question)? == 1 {
                            successes += 1;
                        }
                    }
                }
                successes as f64 / rollouts_per_candidate as f64
            }
        };
        scores.push(score);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(&b))
    });
    let raw = serde_json::to_string(&serde_json::json!({ "rollout_scores": scores }))
        .expect("scores serialize");
    Ok(RankingAnnotation {
        ranked_indices: order,
        annotator: AnnotatorLabel::Rollout,
        raw,
    })
}

/// One line of a human annotation file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumanAnnotationRecord {
    pub question_id: String,
    pub step_index: usize,
    pub ranked_indices: Vec<usize>,
}

/// Offline human rankings keyed by `(question id, step index)`.
pub struct HumanAnnotations {
    by_key: HashMap<(String, usize), HumanAnnotationRecord>,
    path: String,
}


impl HumanAnnotations {
    pub fn load(path: &Path) -> Result<Self, AnnotatorError> {
        let file = std::fs::File::open(path).map_err(|e| AnnotatorError::HumanFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut by_key = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| AnnotatorError::HumanFile {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: HumanAnnotationRecord =
                serde_json::from_str(&line).map_err(|e| AnnotatorError::HumanFile {
                    path: path.display().to_string(),
                    reason: format!("line {}: {e}", i + 1),
                })?;
            by_key.insert((record.question_id.clone(), record.step_index), record);
        }
        Ok(HumanAnnotations {
            by_key,
            path: path.display().to_string(),
        })
    }

    fn annotate(
        &self,
        state: &State,
        candidates: &[Action],
    ) -> Result<RankingAnnotation, AnnotatorError> {
        let key = (state.question.id.clone(), state.step_index);
        let record =
            self.by_key
                .get(&key)
                .ok_or_else(|| AnnotatorError::MissingHumanAnnotation {
                    question_id: key.0.clone(),
                    step_index: key.1,
                })?;
        let annotation = RankingAnnotation {
            ranked_indices: record.ranked_indices.clone(),
            annotator: AnnotatorLabel::HumanFile,
            raw: format!("{}:{}#{}", self.path, record.question_id, record.step_index),
        };
        annotation
            .validate(candidates.len())
            .map_err(|e| AnnotatorError::InvalidRanking(e.to_string()))?;
        Ok(annotation)
    }
}
