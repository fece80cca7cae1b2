//! Episode execution: greedy runs and critic-guided best-of-N selection.
//!
//! Each step proposes N candidate actions, deduplicates exact string
//! duplicates, picks one (the critic's argmax, or candidate 0 without a
//! critic), and either transitions on a search or terminates on an answer.
//! At the step cap the agent is re-prompted with searching disabled so every
//! capped episode still ends with an answer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, ParsedAction};
use crate::critic::{ActionScorer, ScoreError};
use crate::gateway::Gateway;
use crate::mdp::{
    initial_state, outcome_reward, transition, Action, MdpError, Question, Retriever, State,
    StepAnnotation, StepRecord, Trajectory, TransitionResult,
};
use crate::seed::derive_seed;

/// Episode failures. An episode that fails is marked unusable by its caller;
/// there is never a partial silent result.
#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Agent(#[from] AgentError),

    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error("critic scoring failed: {0}")]
    Critic(#[from] ScoreError),

    #[error("no candidates to select from")]
    NoCandidates,

    #[error("invalid inference config: {0}")]
    InvalidConfig(String),
}

/// What to do when critic scoring fails mid-episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticFailurePolicy {
    /// Abort the episode (default): a silent fallback would contaminate
    /// best-of-N measurements.
    Abort,
    /// Fall back to candidate 0 for that step.
    FallbackFirst,
}

/// Inference configuration. Tie-breaking is fixed: the lowest candidate
/// index wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub n_candidates: usize,
    pub max_steps: usize,
    pub temperature: f64,
    pub use_critic: bool,
    pub force_answer_at_cap: bool,
    pub critic_failure_policy: CriticFailurePolicy,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            n_candidates: 1,
            max_steps: 10,
            temperature: 0.0,
            use_critic: false,
            force_answer_at_cap: true,
            critic_failure_policy: CriticFailurePolicy::Abort,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.n_candidates < 1 {
            return Err(EpisodeError::InvalidConfig(
                "n_candidates must be >= 1".into(),
            ));
        }
        if self.max_steps < 1 {
            return Err(EpisodeError::InvalidConfig("max_steps must be >= 1".into()));
        }
        if self.n_candidates >= 2 && self.temperature <= 0.0 {
            return Err(EpisodeError::InvalidConfig(
                "sampling multiple candidates requires temperature > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub answered: bool,
    pub n_search_queries: usize,
    /// Critic scores per step (aligned with each step's candidates), when a
    /// critic was used.
    pub critic_scores: Option<Vec<Vec<f64>>>,
}

/// Picks the critic's argmax among candidates; ties go to the lowest index.
/// Returns the chosen index plus all scores.
pub fn select_best(
    scorer: &dyn ActionScorer,
    state: &State,
    candidates: &[Action],
) -> Result<(usize, Vec<f64>), EpisodeError> {
    if candidates.is_empty() {
        return Err(EpisodeError::NoCandidates);
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        scores.push(scorer.score(state, candidate)?);
    }
    let mut best = 0;
    for (i, &score) in scores.iter().enumerate().skip(1) {
        if score > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

/// Deduplicates exact duplicates preserving first-seen order; returns the
/// distinct actions and their multiplicities (which sum to the raw count).
pub fn dedup_candidates(proposals: &[ParsedAction]) -> (Vec<Action>, Vec<u32>) {
    let mut actions: Vec<Action> = Vec::new();
    let mut multiplicities: Vec<u32> = Vec::new();
    for proposal in proposals {
        match actions.iter().position(|a| *a == proposal.action) {
            Some(i) => multiplicities[i] += 1,
            None => {
                actions.push(proposal.action.clone());
                multiplicities.push(1);
            }
        }
    }
    (actions, multiplicities)
}

/// Everything an episode needs to run.
pub struct EpisodeRunner<'a> {
    pub agent: &'a Agent,
    pub gateway: &'a Gateway,
    pub env: &'a dyn Retriever,
    pub critic: Option<&'a dyn ActionScorer>,
}

/// Internal episode outcome shared by full runs and mid-state rollouts.
#[derive(Debug, Clone)]
pub(crate) struct EpisodeOutcome {
    pub steps: Vec<StepRecord>,
    pub final_answer: Option<String>,
    pub answered: bool,
    pub critic_scores: Option<Vec<Vec<f64>>>,
}

impl EpisodeRunner<'_> {
    /// Runs one full episode for `question`.
    ///
    /// The outcome reward is computed when the question carries a gold
    /// answer; unlabeled questions yield a trajectory without one.
    pub fn run(
        &self,
        question: &Question,
        config: &InferenceConfig,
        seed: u64,
        run_id: &str,
    ) -> Result<RunResult, EpisodeError> {
        config.validate()?;
        let state = initial_state(question)?;
        let outcome = self.continue_from(state, config, seed)?;
        let reward = match (&outcome.final_answer, &question.gold) {
            (Some(answer), Some(_)) => Some(outcome_reward(answer, question)?),
            _ => None,
        };
        let trajectory = Trajectory {
            question: question.clone(),
            steps: outcome.steps,
            final_answer: outcome.final_answer,
            outcome_reward: reward,
            seed,
            run_id: run_id.to_string(),
        };
        trajectory.validate()?;
        let n_search_queries = trajectory.n_search_queries();
        Ok(RunResult {
            trajectory,
            answered: outcome.answered,
            n_search_queries,
            critic_scores: outcome.critic_scores,
        })
    }

    /// Continues an episode from `state` until an answer, the step cap, or
    /// a non-answer stop with `force_answer_at_cap` disabled. Used both by
    /// [`EpisodeRunner::run`] and by rollout annotators resuming from
    /// mid-episode states.
    pub(crate) fn continue_from(
        &self,
        mut state: State,
        config: &InferenceConfig,
        seed: u64,
    ) -> Result<EpisodeOutcome, EpisodeError> {
        let mut steps = Vec::new();
        let mut all_scores: Vec<Vec<f64>> = Vec::new();
        let mut final_answer: Option<String> = None;

        while state.step_index <= config.max_steps {
            let t = state.step_index;
            let step_seed = derive_seed(seed, &format!("step/{t}"));
            let at_cap = t == config.max_steps;

            if at_cap && config.force_answer_at_cap {
                let parsed = self.agent.forced_answer(self.gateway, &state, step_seed)?;
                let answer = parsed.action.payload().to_string();
                steps.push(StepRecord {
                    state_snapshot: state.clone(),
                    candidates: vec![parsed.action],
                    multiplicities: Some(vec![1]),
                    annotation: None,
                    chosen_index: 0,
                });
                final_answer = Some(answer);
                break;
            }

            let proposals = self.agent.propose_actions(
                self.gateway,
                &state,
                config.n_candidates,
                config.temperature,
                step_seed,
            )?;
            let (candidates, multiplicities) = dedup_candidates(&proposals);
            if candidates.is_empty() {
                return Err(EpisodeError::NoCandidates);
            }

            let (chosen_index, annotation) = if config.use_critic {
                let critic = self.critic.ok_or_else(|| {
                    EpisodeError::InvalidConfig("use_critic set but no critic provided".into())
                })?;
                match select_best(critic, &state, &candidates) {
                    Ok((index, scores)) => {
                        all_scores.push(scores.clone());
                        (index, Some(StepAnnotation::Scores { scores }))
                    }
                    Err(EpisodeError::Critic(e))
                        if config.critic_failure_policy == CriticFailurePolicy::FallbackFirst =>
                    {
                        log::warn!("critic failed ({e}); falling back to candidate 0");
                        (0, None)
                    }
                    Err(e) => return Err(e),
                }
            } else {
                (0, None)
            };

            let action = candidates[chosen_index].clone();
            steps.push(StepRecord {
                state_snapshot: state.clone(),
                candidates,
                multiplicities: Some(multiplicities),
                annotation,
                chosen_index,
            });

            match transition(&state, &action, self.env)? {
                TransitionResult::Terminal(answer) => {
                    final_answer = Some(answer);
                    break;
                }
                TransitionResult::Next(next) => {
                    state = self.attach_summary(next)?;
                }
            }
        }

        let answered = final_answer.is_some();
        Ok(EpisodeOutcome {
            steps,
            final_answer,
            answered,
            critic_scores: (!all_scores.is_empty()).then_some(all_scores),
        })
    }

    /// Summarizes the newest retrieval record for summarizing architectures.
    pub(crate) fn attach_summary(&self, state: State) -> Result<State, EpisodeError> {
        if !self.agent.arch.name.summarizes_documents() {
            return Ok(state);
        }
        let Some(record) = state.history.last() else {
            return Ok(state);
        };
        let summary = self.agent.summarize_record(
            self.gateway,
            &state.question,
            &record.query,
            &record.documents,
        )?;
        Ok(state.with_summary_on_last(summary))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::ScoreError;

    struct FixedScorer(Vec<f64>);
    impl ActionScorer for FixedScorer {
        fn score(&self, _state: &State, action: &Action) -> Result<f64, ScoreError> {
            // Scores keyed by payload "c<i>".
            let index: usize = action.payload().trim_start_matches('c').parse().unwrap();
            Ok(self.0[index])
        }
    }

    fn test_state() -> State {
        initial_state(&Question {
            id: "q".into(),
            text: "Q?".into(),
            task_kind: crate::mdp::TaskKind::OpenQa,
            choices: Vec::new(),
            gold: None,
        })
        .unwrap()
    }

    fn candidates(n: usize) -> Vec<Action> {
        (0..n).map(|i| Action::Answer(format!("c{i}"))).collect()
    }

    #[test]
    fn select_best_is_argmax() {
        let scorer = FixedScorer(vec![0.1, 0.9, 0.3]);
        let (index, scores) = select_best(&scorer, &test_state(), &candidates(3)).unwrap();
        assert_eq!(index, 1);
        assert_eq!(scores, vec![0.1, 0.9, 0.3]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let scorer = FixedScorer(vec![0.5, 0.5]);
        let (index, _) = select_best(&scorer, &test_state(), &candidates(2)).unwrap();
        assert_eq!(index, 0);
    }

    #[test]
    fn argmax_is_invariant_under_increasing_transforms() {
        let base = vec![0.12, 0.7, 0.33, 0.7];
        let (index, _) = select_best(&FixedScorer(base.clone()), &test_state(), &candidates(4))
            .unwrap();
        let doubled: Vec<f64> = base.iter().map(|s| s * 2.0).collect();
        let (index2, _) = select_best(&FixedScorer(doubled), &test_state(), &candidates(4)).unwrap();
        let shifted: Vec<f64> = base.iter().map(|s| s.exp() + 3.0).collect();
        let (index3, _) = select_best(&FixedScorer(shifted), &test_state(), &candidates(4)).unwrap();
        assert_eq!(index, index2);
        assert_eq!(index, index3);
    }

    #[test]
    fn empty_candidates_error() {
        let scorer = FixedScorer(vec![]);
        assert!(matches!(
            select_best(&scorer, &test_state(), &[]),
            Err(EpisodeError::NoCandidates)
        ));
    }

    #[test]
    fn dedup_preserves_order_and_counts() {
        let mk = |action: Action| ParsedAction {
            action,
            predicted_answer: None,
            reasoning_text: String::new(),
            raw: String::new(),
        };
        let proposals = vec![
            mk(Action::Search("a".into())),
            mk(Action::Search("b".into())),
            mk(Action::Search("a".into())),
            mk(Action::Answer("a".into())),
            mk(Action::Search("a".into())),
        ];
        let (actions, multiplicities) = dedup_candidates(&proposals);
        assert_eq!(
            actions,
            vec![
                Action::Search("a".into()),
                Action::Search("b".into()),
                Action::Answer("a".into()),
            ]
        );
        assert_eq!(multiplicities, vec![3, 1, 1]);
        assert_eq!(multiplicities.iter().sum::<u32>() as usize, proposals.len());
    }

    #[test]
    fn config_requires_temperature_for_sampling() {
        let config = InferenceConfig {
            n_candidates: 4,
            temperature: 0.0,
            ..InferenceConfig::default()
        };
        assert!(config.validate().is_err());
    }
}
