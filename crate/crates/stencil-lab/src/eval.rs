//! Evaluation: confusion matrix, per-class metrics, one-vs-rest ROC curves,
//! and the better-than-median analysis.
//!
//! Reports are rendered as deterministic text: fixed section order, fixed
//! float widths, no timestamps and no filesystem paths, so rerunning an
//! identical evaluation yields a byte-identical file.

use crate::error::{Error, Result};
use crate::labeling::{Dataset, Quartile, ALL_QUARTILES};
use crate::model::net::predict_batch;
use crate::model::ModelParams;
use crate::node_gen::Stencil;
use ndarray::Array2;
use std::fmt::Write as _;

/// Prediction counts; rows index the true class, columns the predicted one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, truth: Quartile, predicted: Quartile) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Quartile, Quartile)>) -> Self {
        let mut m = Self::new();
        for (t, p) in pairs {
            m.record(t, p);
        }
        m
    }

    pub fn count(&self, truth: Quartile, predicted: Quartile) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// True-class count (row sum).
    pub fn support(&self, truth: Quartile) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    /// Predicted-class count (column sum).
    pub fn predicted(&self, predicted: Quartile) -> u64 {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: u64 = (0..4).map(|i| self.counts[i][i]).sum();
        trace as f64 / total as f64
    }

    /// Shares within each predicted class: every non-empty column sums to 1.
    pub fn column_normalized(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for j in 0..4 {
            let col: u64 = self.counts.iter().map(|row| row[j]).sum();
            if col > 0 {
                for (out_row, count_row) in out.iter_mut().zip(&self.counts) {
                    out_row[j] = count_row[j] as f64 / col as f64;
                }
            }
        }
        out
    }
}

/// Precision, recall and F1 for one class, with the zero-denominator
/// convention of reporting 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn class_metrics(m: &ConfusionMatrix) -> [ClassMetrics; 4] {
    ALL_QUARTILES.map(|q| {
        let tp = m.count(q, q) as f64;
        let col = m.predicted(q) as f64;
        let row = m.support(q) as f64;
        let precision = if col > 0.0 { tp / col } else { 0.0 };
        let recall = if row > 0.0 { tp / row } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: m.support(q),
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve by descending-score sweep with tied scores collapsed into one
/// step, and the area by the trapezoidal rule. The area equals the
/// probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::Contract(format!(
            "{} scores against {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract("non-finite score".into()));
    }
    let p = positive.iter().filter(|&&b| b).count() as f64;
    let n = positive.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        points.push(RocPoint {
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
            threshold: s,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc / (p * n),
    })
}

/// Better-than-median counts for one stencil size: of the records predicted
/// Q1 (or Q4), how many have an error strictly below (or above) the size's
/// median error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MedianRow {
    pub size_s: usize,
    pub q1_below: u64,
    pub q1_total: u64,
    pub q4_above: u64,
    pub q4_total: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MedianAnalysis {
    pub rows: Vec<MedianRow>,
}

impl MedianAnalysis {
    /// Fraction of predicted-Q1 records below their size median, across all
    /// sizes. `None` when nothing was predicted Q1.
    pub fn q1_below_fraction(&self) -> Option<f64> {
        let total: u64 = self.rows.iter().map(|r| r.q1_total).sum();
        let below: u64 = self.rows.iter().map(|r| r.q1_below).sum();
        (total > 0).then(|| below as f64 / total as f64)
    }

    pub fn q4_above_fraction(&self) -> Option<f64> {
        let total: u64 = self.rows.iter().map(|r| r.q4_total).sum();
        let above: u64 = self.rows.iter().map(|r| r.q4_above).sum();
        (total > 0).then(|| above as f64 / total as f64)
    }
}

/// Runs the analysis for `indices` into the dataset, with `predicted`
/// aligned to `indices`. Uses the dataset's per-size median borders.
pub fn median_analysis(
    dataset: &Dataset,
    indices: &[usize],
    predicted: &[Quartile],
) -> Result<MedianAnalysis> {
    if indices.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "{} indices against {} predictions",
            indices.len(),
            predicted.len()
        )));
    }
    let mut rows: Vec<MedianRow> = dataset
        .borders
        .sizes()
        .map(|size_s| MedianRow {
            size_s,
            q1_below: 0,
            q1_total: 0,
            q4_above: 0,
            q4_total: 0,
        })
        .collect();
    for (&i, &pred) in indices.iter().zip(predicted) {
        let record = &dataset.records[i];
        let median = dataset
            .borders
            .median(record.size_s)
            .ok_or(Error::MissingBorders(record.size_s))?;
        let row = rows
            .iter_mut()
            .find(|r| r.size_s == record.size_s)
            .expect("every border size has a row");
        match pred {
            Quartile::Q1 => {
                row.q1_total += 1;
                if record.epsilon < median {
                    row.q1_below += 1;
                }
            }
            Quartile::Q4 => {
                row.q4_total += 1;
                if record.epsilon > median {
                    row.q4_above += 1;
                }
            }
            _ => {}
        }
    }
    Ok(MedianAnalysis { rows })
}

/// A full evaluation of a model over a set of dataset records.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub split_name: String,
    pub dataset_fingerprint: String,
    pub record_count: usize,
    pub model_summary: String,
    pub confusion: ConfusionMatrix,
    pub metrics: [ClassMetrics; 4],
    pub accuracy: f64,
    pub roc: [RocCurve; 4],
    pub median: MedianAnalysis,
}

fn widths(list: &[usize]) -> String {
    let parts: Vec<String> = list.iter().map(|w| w.to_string()).collect();
    parts.join(",")
}

/// Predicts every record in `indices` and assembles the report.
pub fn evaluate_indices(
    params: &ModelParams,
    dataset: &Dataset,
    indices: &[usize],
    split_name: &str,
    dataset_fingerprint: &str,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::InsufficientData("nothing to evaluate".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.records.len()) {
        return Err(Error::Contract(format!(
            "record index {bad} out of range ({} records)",
            dataset.records.len()
        )));
    }
    let stencils: Vec<&Stencil> = indices
        .iter()
        .map(|&i| &dataset.records[i].stencil)
        .collect();
    let truths: Vec<Quartile> = indices
        .iter()
        .map(|&i| {
            dataset.records[i]
                .quartile
                .ok_or_else(|| Error::Contract("record without a class label".into()))
        })
        .collect::<Result<_>>()?;
    let (predicted, probs) = predict_batch(params, &stencils)?;

    let confusion =
        ConfusionMatrix::from_pairs(truths.iter().copied().zip(predicted.iter().copied()));
    let metrics = class_metrics(&confusion);
    let roc = one_vs_rest_roc(&probs, &truths)?;
    let median = median_analysis(dataset, indices, &predicted)?;

    let config = &params.config;
    Ok(EvalReport {
        split_name: split_name.to_string(),
        dataset_fingerprint: dataset_fingerprint.to_string(),
        record_count: indices.len(),
        model_summary: format!(
            "point[{}] dense[{}] input={} classes={} dropout={}",
            widths(&config.point_widths),
            widths(&config.dense_widths),
            config.input_size,
            config.num_classes,
            config.dropout
        ),
        accuracy: confusion.accuracy(),
        confusion,
        metrics,
        roc,
        median,
    })
}

/// One ROC curve per class, scoring each record by that class's probability
/// and marking it positive when the true class matches.
pub fn one_vs_rest_roc(probs: &Array2<f64>, truths: &[Quartile]) -> Result<[RocCurve; 4]> {
    let mut curves = Vec::with_capacity(4);
    for q in ALL_QUARTILES {
        let scores: Vec<f64> = probs.column(q.index()).to_vec();
        let positive: Vec<bool> = truths.iter().map(|&t| t == q).collect();
        curves.push(roc_curve(&scores, &positive)?);
    }
    Ok(curves.try_into().expect("4 curves"))
}

impl EvalReport {
    /// Deterministic text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# stencil-lab evaluation").unwrap();
        writeln!(out, "split = {}", self.split_name).unwrap();
        writeln!(out, "records = {}", self.record_count).unwrap();
        writeln!(out, "dataset-fingerprint = {}", self.dataset_fingerprint).unwrap();
        writeln!(out, "model = {}", self.model_summary).unwrap();
        writeln!(out).unwrap();

        writeln!(out, "[accuracy]").unwrap();
        writeln!(out, "overall = {:.6}", self.accuracy).unwrap();
        writeln!(out).unwrap();

        writeln!(out, "[confusion]").unwrap();
        writeln!(out, "true\\pred        Q1        Q2        Q3        Q4").unwrap();
        for t in ALL_QUARTILES {
            write!(out, "{}       ", t.label()).unwrap();
            for p in ALL_QUARTILES {
                write!(out, "{:>10}", self.confusion.count(t, p)).unwrap();
            }
            writeln!(out).unwrap();
        }
        writeln!(out).unwrap();

        writeln!(out, "[confusion-normalized-by-predicted]").unwrap();
        let norm = self.confusion.column_normalized();
        writeln!(out, "true\\pred        Q1        Q2        Q3        Q4").unwrap();
        for (t, row) in ALL_QUARTILES.iter().zip(&norm) {
            write!(out, "{}       ", t.label()).unwrap();
            for v in row {
                write!(out, "{v:>10.4}").unwrap();
            }
            writeln!(out).unwrap();
        }
        writeln!(out).unwrap();

        writeln!(out, "[per-class]").unwrap();
        writeln!(out, "class  precision    recall        f1   support").unwrap();
        for (q, m) in ALL_QUARTILES.iter().zip(&self.metrics) {
            writeln!(
                out,
                "{}     {:>9.6} {:>9.6} {:>9.6} {:>9}",
                q.label(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            )
            .unwrap();
        }
        writeln!(out).unwrap();

        writeln!(out, "[roc-auc]").unwrap();
        for (q, curve) in ALL_QUARTILES.iter().zip(&self.roc) {
            writeln!(
                out,
                "{} = {:.6} ({} points)",
                q.label(),
                curve.auc,
                curve.points.len()
            )
            .unwrap();
        }
        writeln!(out).unwrap();

        writeln!(out, "[median-analysis]").unwrap();
        for row in &self.median.rows {
            let q1 = if row.q1_total > 0 {
                format!(
                    "{}/{} = {:.6}",
                    row.q1_below,
                    row.q1_total,
                    row.q1_below as f64 / row.q1_total as f64
                )
            } else {
                "0/0".to_string()
            };
            let q4 = if row.q4_total > 0 {
                format!(
                    "{}/{} = {:.6}",
                    row.q4_above,
                    row.q4_total,
                    row.q4_above as f64 / row.q4_total as f64
                )
            } else {
                "0/0".to_string()
            };
            writeln!(
                out,
                "size {}: predicted-Q1 below median {q1}; predicted-Q4 above median {q4}",
                row.size_s
            )
            .unwrap();
        }
        let q1 = self
            .median
            .q1_below_fraction()
            .map(|f| format!("{f:.6}"))
            .unwrap_or_else(|| "n/a".into());
        let q4 = self
            .median
            .q4_above_fraction()
            .map(|f| format!("{f:.6}"))
            .unwrap_or_else(|| "n/a".into());
        writeln!(
            out,
            "overall: predicted-Q1 below median {q1}; predicted-Q4 above median {q4}"
        )
        .unwrap();
        out
    }

    /// Full ROC point lists as CSV.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("class,fpr,tpr,threshold\n");
        for (q, curve) in ALL_QUARTILES.iter().zip(&self.roc) {
            for p in &curve.points {
                writeln!(
                    out,
                    "{},{:.16e},{:.16e},{:.16e}",
                    q.label(),
                    p.fpr,
                    p.tpr,
                    p.threshold
                )
                .unwrap();
            }
        }
        out
    }
}
