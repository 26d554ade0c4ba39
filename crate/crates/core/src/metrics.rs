//! Pixel-level evaluation of a predicted mask against ground truth.

use serde::{Deserialize, Serialize};

use crate::mask::{BinaryMask, MaskError};

/// Pixel confusion counts plus the derived scores.
///
/// A score is `None` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub iou: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            // Equals 2PR/(P+R); undefined unless both exist and tp > 0.
            f1: (tp > 0).then(|| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64),
            iou: ratio(tp, tp + fp + fn_),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `| name | 0.77 | 0.87 | 0.82 |`, with `n/a` for undefined scores.
    pub fn table_row(&self, name: &str) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
        format!(
            "| {name} | {} | {} | {} |",
            cell(self.precision),
            cell(self.recall),
            cell(self.f1)
        )
    }
}

/// Compares `pred` with `truth` pixel by pixel.
pub fn evaluate(pred: &BinaryMask, truth: &BinaryMask) -> Result<EvalMetrics, MaskError> {
    let tp = pred.intersection(truth)?.popcount();
    let fp = pred.popcount() - tp;
    let fn_ = truth.popcount() - tp;
    let tn = pred.area() - tp - fp - fn_;
    Ok(EvalMetrics::from_counts(tp, fp, fn_, tn))
}

/// Pools counts over all pairs before computing the scores.
pub fn micro_average<'a>(items: impl IntoIterator<Item = &'a EvalMetrics>) -> EvalMetrics {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for m in items {
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        tn += m.tn;
    }
    EvalMetrics::from_counts(tp, fp, fn_, tn)
}

/// Markdown table with one row per named result.
pub fn metrics_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a EvalMetrics)>) -> String {
    let mut out = String::from("| Scene | Precision | Recall | F1 |\n|---|---|---|---|\n");
    for (name, m) in rows {
        out.push_str(&m.table_row(name));
        out.push('\n');
    }
    out
}
