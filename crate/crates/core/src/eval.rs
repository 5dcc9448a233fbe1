//! Evaluation protocol: per-class accuracy, remaining/forgotten averages,
//! recovery-speed traces, and report emission as CSV or JSON.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::Network;

const EVAL_BATCH: usize = 256;

/// Per-class accuracy report for one model on one test set.
///
/// `per_class_accuracy[k]` is `None` when class `k` has no test samples;
/// such classes are excluded from the averages and listed in
/// `undefined_classes`. `remaining_avg` is the unweighted mean over defined
/// non-forgotten classes; `forgotten_avg` the mean over defined forgotten
/// classes (absent when nothing was forgotten).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub per_class_counts: Vec<usize>,
    pub forgotten_classes: BTreeSet<usize>,
    pub remaining_avg: f64,
    pub forgotten_avg: Option<f64>,
    pub num_test_samples: usize,
    pub random_baseline: f64,
    pub undefined_classes: Vec<usize>,
}

impl EvalReport {
    /// Sample-weighted overall accuracy.
    pub fn overall_accuracy(&self) -> f64 {
        let correct: f64 = self
            .per_class_accuracy
            .iter()
            .zip(&self.per_class_counts)
            .filter_map(|(acc, &count)| acc.map(|a| a * count as f64))
            .sum();
        correct / self.num_test_samples as f64
    }
}

/// Predicted class per sample: argmax over logits, lowest index on ties.
pub fn predict(model: &Network, test: &Dataset) -> Result<Vec<usize>> {
    if test.is_empty() {
        return Err(Error::invalid("evaluate requires a nonempty test set"));
    }
    let n = test.len();
    let mut predictions = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (images, _) = test.gather(&indices)?;
        let logits = model.forward_eval(&images)?;
        for r in 0..indices.len() {
            let row = logits.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            predictions.push(best);
        }
        start = end;
    }
    Ok(predictions)
}

/// Evaluate a model on a test set, aggregating per the report invariants.
pub fn evaluate(
    model: &Network,
    test: &Dataset,
    forgotten: &BTreeSet<usize>,
    model_id: impl Into<String>,
) -> Result<EvalReport> {
    let num_classes = model.num_classes();
    if test.num_classes() > num_classes {
        return Err(Error::invalid(format!(
            "test set has {} classes but the model outputs {num_classes}",
            test.num_classes()
        )));
    }
    let predictions = predict(model, test)?;

    let mut counts = vec![0usize; num_classes];
    let mut correct = vec![0usize; num_classes];
    for (&pred, &label) in predictions.iter().zip(test.labels()) {
        counts[label] += 1;
        if pred == label {
            correct[label] += 1;
        }
    }

    let per_class_accuracy: Vec<Option<f64>> = counts
        .iter()
        .zip(&correct)
        .map(|(&n, &c)| (n > 0).then(|| c as f64 / n as f64))
        .collect();
    let undefined_classes: Vec<usize> = (0..num_classes).filter(|&k| counts[k] == 0).collect();

    let mean_over = |keep: &dyn Fn(usize) -> bool| -> Option<f64> {
        let values: Vec<f64> = (0..num_classes)
            .filter(|&k| keep(k))
            .filter_map(|k| per_class_accuracy[k])
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };

    let remaining_avg = mean_over(&|k| !forgotten.contains(&k)).ok_or_else(|| {
        Error::invalid("no non-forgotten class has test samples; remaining average undefined")
    })?;
    let forgotten_avg = if forgotten.is_empty() {
        None
    } else {
        mean_over(&|k| forgotten.contains(&k))
    };

    Ok(EvalReport {
        model_id: model_id.into(),
        per_class_accuracy,
        per_class_counts: counts,
        forgotten_classes: forgotten.clone(),
        remaining_avg,
        forgotten_avg,
        num_test_samples: test.len(),
        random_baseline: 1.0 / num_classes as f64,
        undefined_classes,
    })
}

/// One evaluated epoch in a recovery series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch: usize,
    pub remaining_avg: f64,
    pub forgotten_avg: Option<f64>,
    pub wall_seconds: f64,
}

/// Per-epoch accuracy series for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTrace {
    pub method: String,
    pub points: Vec<TracePoint>,
}

impl RecoveryTrace {
    pub fn new(method: impl Into<String>, points: Vec<TracePoint>) -> Result<Self> {
        if !points.windows(2).all(|w| w[0].epoch < w[1].epoch) {
            return Err(Error::invalid(
                "recovery trace epochs must be strictly increasing",
            ));
        }
        Ok(RecoveryTrace {
            method: method.into(),
            points,
        })
    }

    pub fn final_remaining(&self) -> Option<f64> {
        self.points.last().map(|p| p.remaining_avg)
    }

    pub fn total_seconds(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.wall_seconds)
    }

    /// First epoch whose remaining average reaches `threshold`.
    pub fn epochs_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.points
            .iter()
            .find(|p| p.remaining_avg >= threshold)
            .map(|p| p.epoch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// First epoch at or above the threshold; `None` when never reached.
    pub epochs_to_threshold: Option<usize>,
    pub final_remaining: f64,
    pub total_seconds: f64,
}

/// Side-by-side recovery comparison of this method versus retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub threshold: f64,
    pub ours: MethodSummary,
    pub retrain: MethodSummary,
    /// retrain epochs-to-threshold divided by ours, when both reached it.
    pub epoch_speedup: Option<f64>,
}

/// Compare recovery speed toward a remaining-accuracy threshold.
pub fn compare_methods(
    ours: &RecoveryTrace,
    retrain: &RecoveryTrace,
    threshold: f64,
) -> Result<ComparisonSummary> {
    if ours.points.is_empty() || retrain.points.is_empty() {
        return Err(Error::invalid("compare_methods requires nonempty traces"));
    }
    let summarize = |t: &RecoveryTrace| MethodSummary {
        method: t.method.clone(),
        epochs_to_threshold: t.epochs_to_threshold(threshold),
        final_remaining: t.final_remaining().unwrap(),
        total_seconds: t.total_seconds(),
    };
    let ours_summary = summarize(ours);
    let retrain_summary = summarize(retrain);
    let epoch_speedup = match (
        ours_summary.epochs_to_threshold,
        retrain_summary.epochs_to_threshold,
    ) {
        (Some(a), Some(b)) if a > 0 => Some(b as f64 / a as f64),
        _ => None,
    };
    Ok(ComparisonSummary {
        threshold,
        ours: ours_summary,
        retrain: retrain_summary,
        epoch_speedup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn percent(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}%", v * 100.0),
        None => "n/a".to_string(),
    }
}

/// Render the per-class table: one column per model, a row per class, then
/// `remaining` and `forgotten` summary rows. Percentages use two decimals.
pub fn render_class_report_csv(reports: &[EvalReport], class_names: Option<&[String]>) -> String {
    let mut out = String::from("class");
    for r in reports {
        let _ = write!(out, ",{}", csv_quote(&r.model_id));
    }
    out.push('\n');
    let num_classes = reports.first().map_or(0, |r| r.per_class_accuracy.len());
    for k in 0..num_classes {
        let name = class_names
            .and_then(|names| names.get(k).cloned())
            .unwrap_or_else(|| k.to_string());
        let _ = write!(out, "{}", csv_quote(&name));
        for r in reports {
            let _ = write!(out, ",{}", percent(r.per_class_accuracy[k]));
        }
        out.push('\n');
    }
    out.push_str("remaining");
    for r in reports {
        let _ = write!(out, ",{}", percent(Some(r.remaining_avg)));
    }
    out.push('\n');
    out.push_str("forgotten");
    for r in reports {
        let _ = write!(out, ",{}", percent(r.forgotten_avg));
    }
    out.push('\n');
    out
}

/// JSON container mirroring the CSV class table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub class_names: Option<Vec<String>>,
    pub reports: Vec<EvalReport>,
}

/// Write the combined per-class report for several models.
pub fn emit_report(
    reports: &[EvalReport],
    path: impl AsRef<Path>,
    format: ReportFormat,
    class_names: Option<&[String]>,
) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("emit_report requires at least one report"));
    }
    let content = match format {
        ReportFormat::Csv => render_class_report_csv(reports, class_names),
        ReportFormat::Json => {
            let bundle = ReportBundle {
                class_names: class_names.map(<[String]>::to_vec),
                reports: reports.to_vec(),
            };
            serde_json::to_string_pretty(&bundle)? + "\n"
        }
    };
    fs::write(path.as_ref(), content)?;
    Ok(())
}

/// Render recovery traces as CSV. With `zero_seconds` the timing column is
/// written as 0.000; that canonical form is what reproducibility hashes use,
/// since wall-clock time varies run to run.
pub fn render_trace_csv(traces: &[RecoveryTrace], zero_seconds: bool) -> String {
    let mut out = String::from("method,epoch,remaining_avg,forgotten_avg,seconds\n");
    for t in traces {
        for p in &t.points {
            let seconds = if zero_seconds { 0.0 } else { p.wall_seconds };
            let forgotten = p
                .forgotten_avg
                .map_or("n/a".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{:.3}",
                csv_quote(&t.method),
                p.epoch,
                p.remaining_avg,
                forgotten,
                seconds
            );
        }
    }
    out
}

/// Write recovery traces to a file.
pub fn emit_trace(
    traces: &[RecoveryTrace],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::invalid("emit_trace requires at least one trace"));
    }
    let content = match format {
        ReportFormat::Csv => render_trace_csv(traces, false),
        ReportFormat::Json => serde_json::to_string_pretty(traces)? + "\n",
    };
    fs::write(path.as_ref(), content)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::net::{build_conv_net, LayerSpec, Network};
    use crate::seed::RngSeed;
    use crate::tensor::Tensor;

    /// Model whose logits always prefer class 0: linear layer with zero
    /// weights and a biased first output.
    fn constant_class0_model(side: usize, classes: usize) -> Network {
        let layers = vec![
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: side * side,
                out_features: classes,
            },
        ];
        let mut net = Network::from_layers(layers, (1, side, side), classes).unwrap();
        net.init_random(RngSeed(0));
        net.param_slot_mut(0)
            .unwrap()
            .values_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        net.param_slot_mut(1).unwrap().values_mut()[0] = 1.0;
        net
    }

    #[test]
    fn constant_predictor_per_class_accuracies() {
        let test = synth_blobs(10, 5, 8, RngSeed(1)).unwrap();
        let net = constant_class0_model(8, 10);
        let report = evaluate(&net, &test, &BTreeSet::new(), "const").unwrap();
        assert_eq!(report.per_class_accuracy[0], Some(1.0));
        for k in 1..10 {
            assert_eq!(report.per_class_accuracy[k], Some(0.0));
        }
        assert!((report.remaining_avg - 0.1).abs() < 1e-12);
        assert_eq!(report.forgotten_avg, None);
        assert!((report.overall_accuracy() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ties_break_to_lowest_class() {
        // All-zero logits tie on every class; prediction must be class 0.
        let test = synth_blobs(3, 4, 4, RngSeed(2)).unwrap();
        let layers = vec![
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: 16,
                out_features: 3,
            },
        ];
        let mut net = Network::from_layers(layers, (1, 4, 4), 3).unwrap();
        net.init_random(RngSeed(0));
        net.param_slot_mut(0)
            .unwrap()
            .values_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let preds = predict(&net, &test).unwrap();
        assert!(preds.iter().all(|&p| p == 0));
    }

    #[test]
    fn zero_sample_class_is_flagged_and_excluded() {
        let full = synth_blobs(4, 3, 4, RngSeed(3)).unwrap();
        // Keep only classes 0..3 in the test subset; class 3 has no samples.
        let keep: Vec<usize> = (0..full.len())
            .filter(|&i| full.labels()[i] != 3)
            .collect();
        let test = full.subset(&keep, "no-class-3").unwrap();
        let net = constant_class0_model(4, 4);
        let report = evaluate(&net, &test, &BTreeSet::from([1]), "m").unwrap();
        assert_eq!(report.undefined_classes, vec![3]);
        assert_eq!(report.per_class_accuracy[3], None);
        // remaining classes with samples: 0 (acc 1) and 2 (acc 0).
        assert!((report.remaining_avg - 0.5).abs() < 1e-12);
        assert_eq!(report.forgotten_avg, Some(0.0));
    }

    #[test]
    fn evaluate_is_pure() {
        let test = synth_blobs(5, 6, 8, RngSeed(5)).unwrap();
        let mut net = build_conv_net((1, 8, 8), 5).unwrap();
        net.init_random(RngSeed(17));
        let forgotten = BTreeSet::from([2]);
        let a = evaluate(&net, &test, &forgotten, "m").unwrap();
        let b = evaluate(&net, &test, &forgotten, "m").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_threshold_logic() {
        let ours = RecoveryTrace::new(
            "ours",
            vec![
                TracePoint { epoch: 1, remaining_avg: 0.97, forgotten_avg: Some(0.1), wall_seconds: 1.0 },
            ],
        )
        .unwrap();
        let retrain = RecoveryTrace::new(
            "retrained",
            (1..=10)
                .map(|e| TracePoint {
                    epoch: e,
                    remaining_avg: 0.5 + 0.05 * e as f64,
                    forgotten_avg: Some(0.0),
                    wall_seconds: e as f64,
                })
                .collect(),
        )
        .unwrap();
        let summary = compare_methods(&ours, &retrain, 0.85).unwrap();
        assert_eq!(summary.ours.epochs_to_threshold, Some(1));
        assert_eq!(summary.retrain.epochs_to_threshold, Some(7));
        assert_eq!(summary.epoch_speedup, Some(7.0));

        let unreachable = compare_methods(&ours, &retrain, 1.01).unwrap();
        assert_eq!(unreachable.ours.epochs_to_threshold, None);
        assert_eq!(unreachable.retrain.epochs_to_threshold, None);
        assert_eq!(unreachable.epoch_speedup, None);
    }

    #[test]
    fn trace_epochs_must_increase() {
        let points = vec![
            TracePoint { epoch: 2, remaining_avg: 0.5, forgotten_avg: None, wall_seconds: 1.0 },
            TracePoint { epoch: 2, remaining_avg: 0.6, forgotten_avg: None, wall_seconds: 2.0 },
        ];
        assert!(RecoveryTrace::new("x", points).is_err());
    }

    #[test]
    fn class_report_csv_layout() {
        let report = EvalReport {
            model_id: "ours".into(),
            per_class_accuracy: vec![Some(0.8011), Some(0.114)],
            per_class_counts: vec![100, 100],
            forgotten_classes: BTreeSet::from([1]),
            remaining_avg: 0.8011,
            forgotten_avg: Some(0.114),
            num_test_samples: 200,
            random_baseline: 0.5,
            undefined_classes: vec![],
        };
        let names = vec!["plane".to_string(), "cat".to_string()];
        let csv = render_class_report_csv(&[report], Some(&names));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,ours");
        assert_eq!(lines[1], "plane,80.11%");
        assert_eq!(lines[2], "cat,11.40%");
        assert_eq!(lines[3], "remaining,80.11%");
        assert_eq!(lines[4], "forgotten,11.40%");
    }

    #[test]
    fn report_json_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let test = synth_blobs(4, 5, 8, RngSeed(8)).unwrap();
        let mut net = build_conv_net((1, 8, 8), 4).unwrap();
        net.init_random(RngSeed(8));
        let report = evaluate(&net, &test, &BTreeSet::from([1]), "m").unwrap();
        emit_report(&[report.clone()], &path, ReportFormat::Json, None).unwrap();
        let bundle: ReportBundle =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(bundle.reports, vec![report]);
    }

    #[test]
    fn trace_csv_canonical_form_zeroes_seconds() {
        let trace = RecoveryTrace::new(
            "ours",
            vec![TracePoint {
                epoch: 1,
                remaining_avg: 0.9,
                forgotten_avg: Some(0.1),
                wall_seconds: 3.25,
            }],
        )
        .unwrap();
        let real = render_trace_csv(&[trace.clone()], false);
        let canonical = render_trace_csv(&[trace], true);
        assert!(real.contains("3.250"));
        assert!(canonical.contains(",0.000"));
        assert_eq!(
            real.replace("3.250", "0.000"),
            canonical,
            "canonical form differs only in the seconds column"
        );
    }
}
