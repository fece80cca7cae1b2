//! The high-level decision process: states, macro-actions, transitions and
//! outcome rewards.
//!
//! A state pairs the original question with the ordered information-seeking
//! history (one record per executed search). A macro-action is either a
//! search query or a final answer. Transitions run against a retrieval
//! function; issuing an answer terminates the episode. All types are
//! immutable values, so episodes for different questions can be evaluated in
//! parallel while a single episode stays strictly sequential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::metrics::normalize_text;

/// Schema tag written into trajectory JSONL records.
pub const TRAJECTORY_SCHEMA: &str = "raggym.trajectory.v1";

/// Errors from state and transition operations.
#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error(transparent)]
    Environment(#[from] RetrievalFailure),

    #[error("cannot score answer: question {0} has no gold answer")]
    Unscorable(String),
}

/// A retrieval-side failure surfaced through [`transition`], carrying the
/// query that triggered it.
#[derive(Debug, Error)]
#[error("retrieval failed for query {query:?}: {reason}")]
pub struct RetrievalFailure {
    pub query: String,
    pub reason: String,
}

/// Whether a question expects free text or one of a fixed set of choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    OpenQa,
    MultipleChoice,
}

/// One answer option of a multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// A question posed to the agent. The gold answer, when present, is used
/// only for scoring and never rendered into prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl Question {
    /// Checks the structural invariants: multiple-choice questions carry a
    /// non-empty choice list with unique labels, and gold answers are
    /// non-empty when present.
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.text.trim().is_empty() {
            return Err(MdpError::InvalidInput(format!(
                "question {} has empty text",
                self.id
            )));
        }
        if self.task_kind == TaskKind::MultipleChoice {
            if self.choices.is_empty() {
                return Err(MdpError::InvalidInput(format!(
                    "multiple-choice question {} has no choices",
                    self.id
                )));
            }
            let mut labels: Vec<&str> = self.choices.iter().map(|c| c.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != self.choices.len() {
                return Err(MdpError::InvalidInput(format!(
                    "multiple-choice question {} has duplicate choice labels",
                    self.id
                )));
            }
        }
        if let Some(gold) = &self.gold {
            if gold.trim().is_empty() {
                return Err(MdpError::InvalidInput(format!(
                    "question {} has an empty gold answer",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A retrieved document with its retrieval score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
}

/// One executed search: the query, the fused ranking of retrieved documents
/// and, for summarizing agents, a query-focused summary of those documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub query: String,
    pub documents: Vec<Document>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// The decision-process state: the question plus the ordered history of
/// retrieval records. `step_index` is 1-based and always equals
/// `1 + history.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub question: Question,
    pub history: Vec<RetrievalRecord>,
    pub step_index: usize,
}

impl State {
    /// Returns a copy with `summary` attached to the most recent record.
    /// No-op on an empty history.
    pub fn with_summary_on_last(mut self, summary: String) -> State {
        if let Some(last) = self.history.last_mut() {
            last.summary = Some(summary);
        }
        self
    }

    /// Structural invariant: step index consistent with history length.
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.step_index != self.history.len() + 1 {
            return Err(MdpError::InvalidInput(format!(
                "state step_index {} does not match history length {}",
                self.step_index,
                self.history.len()
            )));
        }
        Ok(())
    }
}

/// A macro-action: issue a search query or commit to a final answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Action {
    Search(String),
    Answer(String),
}

impl Action {
    pub fn is_search(&self) -> bool {
        matches!(self, Action::Search(_))
    }

    pub fn is_answer(&self) -> bool {
        matches!(self, Action::Answer(_))
    }

    pub fn payload(&self) -> &str {
        match self {
            Action::Search(q) => q,
            Action::Answer(a) => a,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Action::Search(_) => "search",
            Action::Answer(_) => "answer",
        }
    }
}

/// Which annotator produced a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorLabel {
    Llm,
    Rollout,
    HumanFile,
}

/// A ranking over the (deduplicated) candidate actions of one step, from
/// most to least appropriate. `ranked_indices` is a permutation of
/// `0..n_candidates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingAnnotation {
    pub ranked_indices: Vec<usize>,
    pub annotator: AnnotatorLabel,
    pub raw: String,
}

impl RankingAnnotation {
    /// Checks that `ranked_indices` is a bijection on `0..n_candidates`.
    pub fn validate(&self, n_candidates: usize) -> Result<(), MdpError> {
        if self.ranked_indices.len() != n_candidates {
            return Err(MdpError::InvalidInput(format!(
                "ranking has {} indices for {} candidates",
                self.ranked_indices.len(),
                n_candidates
            )));
        }
        let mut seen = vec![false; n_candidates];
        for &i in &self.ranked_indices {
            if i >= n_candidates || seen[i] {
                return Err(MdpError::InvalidInput(format!(
                    "ranking {:?} is not a permutation of 0..{}",
                    self.ranked_indices, n_candidates
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Index of the top-ranked candidate.
    pub fn best(&self) -> usize {
        self.ranked_indices[0]
    }
}

/// Per-step annotation: a ranking permutation (data collection) or a list of
/// critic scores aligned with the candidates (critic-guided inference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepAnnotation {
    Ranking(RankingAnnotation),
    Scores { scores: Vec<f64> },
}

/// One executed step: the state it was taken in, the (deduplicated)
/// candidate actions, the annotation that ordered them, and the index of the
/// executed candidate. `multiplicities`, when present, records how many raw
/// samples collapsed into each deduplicated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state_snapshot: State,
    pub candidates: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicities: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<StepAnnotation>,
    pub chosen_index: usize,
}

/// A complete episode: the ordered step records plus the final answer and
/// its outcome reward when the episode terminated with an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question: Question,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_reward: Option<u8>,
    pub seed: u64,
    pub run_id: String,
}

impl Trajectory {
    /// Structural invariants: per-step indices and history lengths line up,
    /// history grows append-only, the chosen index is in bounds, rankings
    /// are bijections, and at most one answer action is executed — only at
    /// the last step, and exactly when `final_answer` is present.
    pub fn validate(&self) -> Result<(), MdpError> {
        for (k, step) in self.steps.iter().enumerate() {
            step.state_snapshot.validate()?;
            if step.state_snapshot.step_index != k + 1 {
                return Err(MdpError::InvalidInput(format!(
                    "step {} has state step_index {}",
                    k, step.state_snapshot.step_index
                )));
            }
            if step.chosen_index >= step.candidates.len() {
                return Err(MdpError::InvalidInput(format!(
                    "step {k} chose candidate {} of {}",
                    step.chosen_index,
                    step.candidates.len()
                )));
            }
            if let Some(m) = &step.multiplicities {
                if m.len() != step.candidates.len() {
                    return Err(MdpError::InvalidInput(format!(
                        "step {k} has {} multiplicities for {} candidates",
                        m.len(),
                        step.candidates.len()
                    )));
                }
            }
            if let Some(StepAnnotation::Ranking(r)) = &step.annotation {
                r.validate(step.candidates.len())?;
            }
            if let Some(StepAnnotation::Scores { scores }) = &step.annotation {
                if scores.len() != step.candidates.len() {
                    return Err(MdpError::InvalidInput(format!(
                        "step {k} has {} scores for {} candidates",
                        scores.len(),
                        step.candidates.len()
                    )));
                }
            }
            let chosen = &step.candidates[step.chosen_index];
            if chosen.is_answer() && k + 1 != self.steps.len() {
                return Err(MdpError::InvalidInput(format!(
                    "answer action executed at non-terminal step {k}"
                )));
            }
            // Append-only history: each state's history extends the previous
            // state's history by exactly the record for its executed search.
            if k > 0 {
                let prev = &self.steps[k - 1].state_snapshot.history;
                let curr = &step.state_snapshot.history;
                if curr.len() != prev.len() + 1
                    || curr
                        .iter()
                        .zip(prev.iter())
                        .any(|(c, p)| c.query != p.query)
                {
                    return Err(MdpError::InvalidInput(format!(
                        "step {k} history is not an append-only extension"
                    )));
                }
            }
        }
        if self.outcome_reward.is_some() && self.final_answer.is_none() {
            return Err(MdpError::InvalidInput(
                "outcome reward present without a final answer".into(),
            ));
        }
        if let Some(r) = self.outcome_reward {
            if r > 1 {
                return Err(MdpError::InvalidInput(format!(
                    "outcome reward {r} is not in {{0,1}}"
                )));
            }
        }
        if let Some(last) = self.steps.last() {
            let terminal = last.candidates[last.chosen_index].is_answer();
            if terminal != self.final_answer.is_some() {
                return Err(MdpError::InvalidInput(
                    "final answer inconsistent with last executed action".into(),
                ));
            }
        } else if self.final_answer.is_some() {
            return Err(MdpError::InvalidInput(
                "final answer present on an empty trajectory".into(),
            ));
        }
        Ok(())
    }

    /// Invariants for scored trajectories (the data-collection pipeline):
    /// everything in [`Trajectory::validate`] plus "outcome reward present
    /// iff final answer present".
    pub fn validate_scored(&self) -> Result<(), MdpError> {
        self.validate()?;
        if self.final_answer.is_some() != self.outcome_reward.is_some() {
            return Err(MdpError::InvalidInput(
                "scored trajectory must carry an outcome reward iff it has a final answer".into(),
            ));
        }
        Ok(())
    }

    /// Number of executed search actions.
    pub fn n_search_queries(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.candidates[s.chosen_index].is_search())
            .count()
    }
}

/// Serializes a trajectory as one JSONL record tagged with
/// [`TRAJECTORY_SCHEMA`].
pub fn trajectory_to_jsonl(trajectory: &Trajectory) -> serde_json::Result<String> {
    #[derive(Serialize)]
    struct Record<'a> {
        schema: &'static str,
        #[serde(flatten)]
        trajectory: &'a Trajectory,
    }
    serde_json::to_string(&Record {
        schema: TRAJECTORY_SCHEMA,
        trajectory,
    })
}

/// Parses one trajectory JSONL record, rejecting unknown schema tags.
pub fn trajectory_from_jsonl(line: &str) -> Result<Trajectory, MdpError> {
    #[derive(Deserialize)]
    struct Record {
        schema: String,
        #[serde(flatten)]
        trajectory: Trajectory,
    }
    let record: Record = serde_json::from_str(line)
        .map_err(|e| MdpError::InvalidInput(format!("malformed trajectory record: {e}")))?;
    if record.schema != TRAJECTORY_SCHEMA {
        return Err(MdpError::InvalidInput(format!(
            "unsupported trajectory schema {:?}",
            record.schema
        )));
    }
    Ok(record.trajectory)
}

/// Source of documents for search transitions.
pub trait Retriever {
    fn retrieve(&self, query: &str) -> Result<Vec<Document>, RetrievalFailure>;
}

impl<F> Retriever for F
where
    F: Fn(&str) -> Result<Vec<Document>, RetrievalFailure>,
{
    fn retrieve(&self, query: &str) -> Result<Vec<Document>, RetrievalFailure> {
        self(query)
    }
}

/// Result of applying an action to a state.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionResult {
    /// The action was a search; the episode continues from this state.
    Next(State),
    /// The action was an answer; the episode terminates with it.
    Terminal(String),
}

/// Builds the initial state for `question`: empty history, step index 1.
pub fn initial_state(question: &Question) -> Result<State, MdpError> {
    question.validate()?;
    Ok(State {
        question: question.clone(),
        history: Vec::new(),
        step_index: 1,
    })
}

/// Applies `action` to `state`.
///
/// A search extends the history by exactly one record built from the
/// retriever's results and increments the step index; an answer terminates
/// without touching the retriever. The input state is never mutated.
pub fn transition(
    state: &State,
    action: &Action,
    retriever: &dyn Retriever,
) -> Result<TransitionResult, MdpError> {
    match action {
        Action::Answer(answer) => Ok(TransitionResult::Terminal(answer.clone())),
        Action::Search(query) => {
            if query.trim().is_empty() {
                return Err(MdpError::InvalidAction("empty search query".into()));
            }
            let documents = retriever.retrieve(query)?;
            let mut next = state.clone();
            next.history.push(RetrievalRecord {
                query: query.clone(),
                documents,
                summary: None,
            });
            next.step_index += 1;
            Ok(TransitionResult::Next(next))
        }
    }
}

/// Scores a final answer against the question's gold answer: 1 for a match,
/// 0 otherwise.
///
/// Open questions use normalized exact match; multiple-choice questions
/// compare the normalized answer to the gold label.
pub fn outcome_reward(final_answer: &str, question: &Question) -> Result<u8, MdpError> {
    let gold = question
        .gold
        .as_deref()
        .ok_or_else(|| MdpError::Unscorable(question.id.clone()))?;
    let matches = normalize_text(final_answer) == normalize_text(gold);
    Ok(u8::from(matches))
}
