//! Evaluation harness: metrics, per-dataset reports, cross-task
//! aggregation, search-query statistics and sweep runners.

pub mod metrics;
pub mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::RunResult;
use crate::mdp::{Question, TaskKind};

pub use metrics::{accuracy, cem, em, f1, normalize_text};
pub use sweep::{sweep, SweepAxis, SweepPoint, SweepTable};

/// Errors from report construction and aggregation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no inputs: {0}")]
    Empty(String),

    #[error("question {0} not found in the gold dataset")]
    UnknownQuestion(String),

    #[error("question {0} has no gold answer")]
    MissingGold(String),
}

/// Metrics for one question. Multiple-choice questions carry their accuracy
/// in `acc` and mirror it into `em`/`f1`/`cem` so that cross-task averaging
/// can treat accuracy as equivalent to both metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMetrics {
    pub question_id: String,
    pub em: f64,
    pub f1: f64,
    pub cem: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
}

/// Arithmetic means of the per-question metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregates {
    pub em: f64,
    pub f1: f64,
    pub cem: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
}

/// Per-dataset metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_manifest: Option<String>,
    pub per_question: Vec<QuestionMetrics>,
    pub aggregates: MetricAggregates,
}

/// Min/max/mean of per-trajectory search-query counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

/// Scores one prediction against its question.
pub fn score_prediction(prediction: &str, question: &Question) -> Result<QuestionMetrics, EvalError> {
    let gold = question
        .gold
        .as_deref()
        .ok_or_else(|| EvalError::MissingGold(question.id.clone()))?;
    Ok(match question.task_kind {
        TaskKind::OpenQa => QuestionMetrics {
            question_id: question.id.clone(),
            em: f64::from(em(prediction, gold)),
            f1: f1(prediction, gold),
            cem: f64::from(cem(prediction, gold)),
            acc: None,
        },
        TaskKind::MultipleChoice => {
            let acc = f64::from(accuracy(prediction, gold));
            QuestionMetrics {
                question_id: question.id.clone(),
                em: acc,
                f1: acc,
                cem: acc,
                acc: Some(acc),
            }
        }
    })
}

/// Builds a dataset report from `(question, prediction)` pairs.
///
/// A missing prediction (agent failed to answer) scores zero on every
/// metric.
pub fn build_report(
    dataset_id: &str,
    pairs: &[(Question, Option<String>)],
    run_manifest: Option<String>,
) -> Result<MetricReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty("no predictions to score".into()));
    }
    let mut per_question = Vec::with_capacity(pairs.len());
    for (question, prediction) in pairs {
        let metrics = match prediction {
            Some(p) => score_prediction(p, question)?,
            None => QuestionMetrics {
                question_id: question.id.clone(),
                em: 0.0,
                f1: 0.0,
                cem: 0.0,
                acc: (question.task_kind == TaskKind::MultipleChoice).then_some(0.0),
            },
        };
        per_question.push(metrics);
    }
    let aggregates = aggregates_of(&per_question);
    Ok(MetricReport {
        dataset_id: dataset_id.to_string(),
        run_manifest,
        per_question,
        aggregates,
    })
}

fn aggregates_of(per_question: &[QuestionMetrics]) -> MetricAggregates {
    let n = per_question.len() as f64;
    let acc_values: Vec<f64> = per_question.iter().filter_map(|m| m.acc).collect();
    MetricAggregates {
        em: per_question.iter().map(|m| m.em).sum::<f64>() / n,
        f1: per_question.iter().map(|m| m.f1).sum::<f64>() / n,
        cem: per_question.iter().map(|m| m.cem).sum::<f64>() / n,
        acc: (!acc_values.is_empty())
            .then(|| acc_values.iter().sum::<f64>() / acc_values.len() as f64),
    }
}

/// Cross-task averages over per-task reports.
///
/// Multiple-choice tasks contribute their accuracy to both the EM and F1
/// columns (their reports already mirror accuracy into those fields).
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricAggregates, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty("no reports to aggregate".into()));
    }
    let n = reports.len() as f64;
    let acc_values: Vec<f64> = reports.iter().filter_map(|r| r.aggregates.acc).collect();
    Ok(MetricAggregates {
        em: reports.iter().map(|r| r.aggregates.em).sum::<f64>() / n,
        f1: reports.iter().map(|r| r.aggregates.f1).sum::<f64>() / n,
        cem: reports.iter().map(|r| r.aggregates.cem).sum::<f64>() / n,
        acc: (!acc_values.is_empty())
            .then(|| acc_values.iter().sum::<f64>() / acc_values.len() as f64),
    })
}

/// Search-query statistics over run results.
pub fn query_stats(results: &[RunResult]) -> Result<QueryStats, EvalError> {
    let counts: Vec<usize> = results.iter().map(|r| r.n_search_queries).collect();
    query_stats_from_counts(&counts)
}

/// Search-query statistics over raw per-trajectory counts.
pub fn query_stats_from_counts(counts: &[usize]) -> Result<QueryStats, EvalError> {
    if counts.is_empty() {
        return Err(EvalError::Empty("no trajectories".into()));
    }
    let min = *counts.iter().min().expect("non-empty");
    let max = *counts.iter().max().expect("non-empty");
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
    Ok(QueryStats { min, max, mean })
}
