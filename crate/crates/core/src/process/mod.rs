//! The process-reward data-collection pipeline.
//!
//! Per step of a sampled trajectory, candidate actions are proposed and
//! deduplicated, an annotator ranks them, and the top-ranked action is
//! executed. Finished trajectories are scored with the outcome reward and
//! only the correct ones are retained; preference pairs are then built from
//! each retained step's ranking. Exports serve the three post-training
//! consumers (supervised fine-tuning, preference optimization, reward
//! modeling).

pub mod annotate;
pub mod export;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::{PreferenceTuple, TupleSource};
use crate::inference::{dedup_candidates, EpisodeError, EpisodeRunner};
use crate::mdp::{
    initial_state, outcome_reward, transition, AnnotatorLabel, MdpError, Question,
    RankingAnnotation, StepAnnotation, StepRecord, Trajectory, TransitionResult,
};
use crate::seed::derive_seed;

pub use annotate::{Annotator, AnnotatorError, AnnotatorKind, HumanAnnotationRecord};
pub use export::{
    export_dataset, load_dpo, load_rm, load_sft, DpoRecord, ExportFormat, ExportStats, RmRecord,
    SftRecord,
};

/// Pipeline failures.
#[derive(Debug, Error)]
pub enum ProcessError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),

    #[error(transparent)]
    Annotator(#[from] AnnotatorError),

    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error("trajectory for question {0} is unscored; refusing to filter")]
    Unscored(String),

    #[error("collection produced no usable trajectories")]
    NothingCollected,

    #[error("export io: {0}")]
    Io(#[from] std::io::Error),

    #[error("output path {0} exists (pass force to overwrite)")]
    PathExists(String),

    #[error("export serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// How preference pairs are built from one ranked step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairingPolicy {
    /// Pair the top-ranked action with every lower-ranked distinct action.
    #[default]
    TopVsRest,
    /// Pair the top-ranked action with the bottom-ranked one only.
    TopVsLast,
}

/// Collection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionConfig {
    pub n_candidates: usize,
    pub max_steps: usize,
    pub temperature: f64,
    pub pairing: PairingPolicy,
    pub force_answer_at_cap: bool,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        CollectionConfig {
            n_candidates: 10,
            max_steps: 10,
            temperature: 1.0,
            pairing: PairingPolicy::TopVsRest,
            force_answer_at_cap: true,
        }
    }
}

/// Outcome-filter bookkeeping: `retained + dropped = sampled`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FilterStats {
    pub sampled: usize,
    pub retained: usize,
    pub dropped: usize,
}

/// The collected preference dataset plus its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectedDataset {
    pub tuples: Vec<PreferenceTuple>,
    /// Run manifest reference (the collecting run's id).
    pub provenance: String,
    pub filter_stats: FilterStats,
}

/// Samples one annotated trajectory for `question`.
///
/// At each step `n_candidates` actions are proposed and deduplicated (with
/// multiplicities recorded), the annotator ranks the distinct candidates,
/// and the rank-1 action is executed. A single distinct candidate is
/// trivially ranked `[0]` without consulting the annotator. At the step cap
/// the agent is forced to answer. The outcome reward is always computed, so
/// collection requires gold answers.
pub fn collect_trajectory(
    runner: &EpisodeRunner<'_>,
    annotator: &Annotator,
    question: &Question,
    config: &CollectionConfig,
    seed: u64,
    run_id: &str,
) -> Result<Trajectory, ProcessError> {
    let mut state = initial_state(question)?;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut final_answer: Option<String> = None;

    while state.step_index <= config.max_steps {
        let t = state.step_index;
        let step_seed = derive_seed(seed, &format!("step/{t}"));
        let at_cap = t == config.max_steps;

        if at_cap && config.force_answer_at_cap {
            let parsed = runner
                .agent
                .forced_answer(runner.gateway, &state, step_seed)
                .map_err(EpisodeError::from)?;
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

        let proposals = runner
            .agent
            .propose_actions(
                runner.gateway,
                &state,
                config.n_candidates,
                config.temperature,
                step_seed,
            )
            .map_err(EpisodeError::from)?;
        let (candidates, multiplicities) = dedup_candidates(&proposals);
        let annotation = if candidates.len() == 1 {
            RankingAnnotation {
                ranked_indices: vec![0],
                annotator: annotator.label(),
                raw: "trivial: single distinct candidate".into(),
            }
        } else {
            annotator.annotate(runner, &state, &candidates, step_seed, config.max_steps)?
        };
        let chosen_index = annotation.best();
        let action = candidates[chosen_index].clone();
        steps.push(StepRecord {
            state_snapshot: state.clone(),
            candidates,
            multiplicities: Some(multiplicities),
            annotation: Some(StepAnnotation::Ranking(annotation)),
            chosen_index,
        });

        match transition(&state, &action, runner.env)? {
            TransitionResult::Terminal(answer) => {
                final_answer = Some(answer);
                break;
            }
            TransitionResult::Next(next) => {
                state = runner.attach_summary(next)?;
            }
        }
    }

    let reward = match &final_answer {
        Some(answer) => Some(outcome_reward(answer, question)?),
        None => None,
    };
    let trajectory = Trajectory {
        question: question.clone(),
        steps,
        final_answer,
        outcome_reward: reward,
        seed,
        run_id: run_id.to_string(),
    };
    trajectory.validate()?;
    Ok(trajectory)
}

/// Keeps exactly the trajectories whose outcome reward is 1.
///
/// An unscored trajectory is an error, never silently dropped.
pub fn filter_by_outcome(
    trajectories: Vec<Trajectory>,
) -> Result<(Vec<Trajectory>, FilterStats), ProcessError> {
    let sampled = trajectories.len();
    let mut retained = Vec::new();
    for trajectory in trajectories {
        match trajectory.outcome_reward {
            Some(1) => retained.push(trajectory),
            Some(_) => {}
            None => return Err(ProcessError::Unscored(trajectory.question.id.clone())),
        }
    }
    let stats = FilterStats {
        sampled,
        retained: retained.len(),
        dropped: sampled - retained.len(),
    };
    Ok((retained, stats))
}

fn source_of(label: AnnotatorLabel) -> TupleSource {
    match label {
        AnnotatorLabel::Llm => TupleSource::LlmAnnotation,
        AnnotatorLabel::Rollout => TupleSource::Rollout,
        AnnotatorLabel::HumanFile => TupleSource::HumanFile,
    }
}

/// Builds preference tuples from one retained trajectory.
///
/// Each step with a ranking over at least two distinct candidates
/// contributes pairs: the top-ranked action against every lower-ranked one
/// (`TopVsRest`) or against the bottom-ranked one only (`TopVsLast`).
pub fn build_preference_pairs(
    trajectory: &Trajectory,
    pairing: PairingPolicy,
) -> Vec<PreferenceTuple> {
    let mut tuples = Vec::new();
    for step in &trajectory.steps {
        let Some(StepAnnotation::Ranking(ranking)) = &step.annotation else {
            continue;
        };
        if step.candidates.len() < 2 {
            continue;
        }
        let preferred = step.candidates[ranking.ranked_indices[0]].clone();
        let rest = &ranking.ranked_indices[1..];
        let losers: Vec<usize> = match pairing {
            PairingPolicy::TopVsRest => rest.to_vec(),
            PairingPolicy::TopVsLast => vec![*rest.last().expect("len >= 2")],
        };
        for loser in losers {
            tuples.push(PreferenceTuple {
                state: step.state_snapshot.clone(),
                preferred: preferred.clone(),
                rejected: step.candidates[loser].clone(),
                source: source_of(ranking.annotator),
            });
        }
    }
    tuples
}

/// Per-question collection failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectionFailure {
    pub question_id: String,
    pub error: String,
}

/// Output of a full collection run.
#[derive(Debug, Clone)]
pub struct CollectionOutput {
    pub dataset: CollectedDataset,
    /// All sampled trajectories, including the filtered-out ones.
    pub trajectories: Vec<Trajectory>,
    pub failures: Vec<CollectionFailure>,
}

/// Runs the full pipeline over a question set: sample one annotated
/// trajectory per question, filter by outcome, and build preference pairs
/// from the retained trajectories. Annotator failures exclude the affected
/// trajectory and are reported, not patched.
pub fn collect_dataset(
    runner: &EpisodeRunner<'_>,
    annotator: &Annotator,
    questions: &[Question],
    config: &CollectionConfig,
    root_seed: u64,
    run_id: &str,
) -> Result<CollectionOutput, ProcessError> {
    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    for question in questions {
        let seed = derive_seed(root_seed, &format!("collect/{}", question.id));
        match collect_trajectory(runner, annotator, question, config, seed, run_id) {
            Ok(trajectory) => trajectories.push(trajectory),
            Err(e) => failures.push(CollectionFailure {
                question_id: question.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    if trajectories.is_empty() {
        return Err(ProcessError::NothingCollected);
    }
    let all = trajectories.clone();
    let (retained, filter_stats) = filter_by_outcome(trajectories)?;
    let mut tuples = Vec::new();
    for trajectory in &retained {
        tuples.extend(build_preference_pairs(trajectory, config.pairing));
    }
    Ok(CollectionOutput {
        dataset: CollectedDataset {
            tuples,
            provenance: run_id.to_string(),
            filter_stats,
        },
        trajectories: all,
        failures,
    })
}
