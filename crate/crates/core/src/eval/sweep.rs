//! Sweep runner for scaling studies.
//!
//! A sweep runs the experiment pipeline once per grid point (number of
//! sampled actions per step, or critic training-set size) under shared seed
//! discipline, records per-point failures without aborting the sweep, and
//! emits a CSV table plus a plot-ready JSON series.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{MetricAggregates, MetricReport};

/// The swept dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    InferenceN,
    TrainSize,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepAxis::InferenceN => write!(f, "inference_n"),
            SweepAxis::TrainSize => write!(f, "train_size"),
        }
    }
}

/// One grid point: either the aggregates of a successful run or the error
/// that failed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<MetricAggregates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Results of a sweep, one row per grid point in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

/// Runs `runner` once per grid point, collecting aggregates or failures.
pub fn sweep(
    axis: SweepAxis,
    grid: &[usize],
    mut runner: impl FnMut(usize) -> Result<MetricReport, String>,
) -> SweepTable {
    let points = grid
        .iter()
        .map(|&value| match runner(value) {
            Ok(report) => SweepPoint {
                value,
                aggregates: Some(report.aggregates),
                error: None,
            },
            Err(error) => {
                log::warn!("sweep point {axis}={value} failed: {error}");
                SweepPoint {
                    value,
                    aggregates: None,
                    error: Some(error),
                }
            }
        })
        .collect();
    SweepTable { axis, points }
}

impl SweepTable {
    /// CSV rendering: axis, value, em, f1, cem, acc, error.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["axis", "value", "em", "f1", "cem", "acc", "error"])?;
        for point in &self.points {
            let fmt_metric = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            writer.write_record([
                self.axis.to_string(),
                point.value.to_string(),
                fmt_metric(point.aggregates.as_ref().map(|a| a.em)),
                fmt_metric(point.aggregates.as_ref().map(|a| a.f1)),
                fmt_metric(point.aggregates.as_ref().map(|a| a.cem)),
                fmt_metric(point.aggregates.as_ref().and_then(|a| a.acc)),
                point.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = writer.into_inner().expect("csv writer over Vec cannot fail");
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Plot-ready series: `{x: [...], series: {metric: [values]}}`.
    /// Failed points contribute `null`.
    pub fn to_plot_json(&self) -> serde_json::Value {
        let metric = |f: fn(&MetricAggregates) -> Option<f64>| -> Vec<serde_json::Value> {
            self.points
                .iter()
                .map(|p| match p.aggregates.as_ref().and_then(f) {
                    Some(v) => json!(v),
                    None => serde_json::Value::Null,
                })
                .collect()
        };
        json!({
            "x": self.points.iter().map(|p| p.value).collect::<Vec<_>>(),
            "series": {
                "em": metric(|a| Some(a.em)),
                "f1": metric(|a| Some(a.f1)),
                "cem": metric(|a| Some(a.cem)),
                "acc": metric(|a| a.acc),
            },
        })
    }

    /// Writes `sweep.csv` and `sweep.json` into `dir`.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<()> {
        let csv = self
            .to_csv()
            .map_err(|e| std::io::Error::other(format!("csv render failed: {e}")))?;
        std::fs::write(dir.join("sweep.csv"), csv)?;
        let json = serde_json::to_string_pretty(&self.to_plot_json())?;
        std::fs::write(dir.join("sweep.json"), json + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::QuestionMetrics;

    fn report(em: f64) -> MetricReport {
        MetricReport {
            dataset_id: "fixture".into(),
            run_manifest: None,
            per_question: vec![QuestionMetrics {
                question_id: "q".into(),
                em,
                f1: em,
                cem: em,
                acc: None,
            }],
            aggregates: MetricAggregates {
                em,
                f1: em,
                cem: em,
                acc: None,
            },
        }
    }

    #[test]
    fn sweep_records_one_row_per_grid_point() {
        let table = sweep(SweepAxis::InferenceN, &[1, 2, 4], |n| Ok(report(n as f64)));
        assert_eq!(table.points.len(), 3);
        assert_eq!(
            table.points.iter().map(|p| p.value).collect::<Vec<_>>(),
            vec![1, 2, 4]
        );
    }

    #[test]
    fn sweep_continues_past_failures() {
        let table = sweep(SweepAxis::TrainSize, &[250, 500, 1000], |n| {
            if n == 500 {
                Err("boom".into())
            } else {
                Ok(report(0.5))
            }
        });
        assert!(table.points[0].aggregates.is_some());
        assert_eq!(table.points[1].error.as_deref(), Some("boom"));
        assert!(table.points[2].aggregates.is_some());
        let csv = table.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("boom"));
    }

    #[test]
    fn singleton_grid_equals_single_run() {
        let table = sweep(SweepAxis::InferenceN, &[4], |_| Ok(report(0.25)));
        assert_eq!(table.points.len(), 1);
        assert_eq!(table.points[0].aggregates.as_ref().unwrap().em, 0.25);
    }

    #[test]
    fn plot_json_has_x_and_series() {
        let table = sweep(SweepAxis::InferenceN, &[1, 2], |n| Ok(report(n as f64)));
        let v = table.to_plot_json();
        assert_eq!(v["x"], serde_json::json!([1, 2]));
        assert_eq!(v["series"]["em"], serde_json::json!([1.0, 2.0]));
    }
}
