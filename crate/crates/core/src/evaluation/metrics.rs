use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Two-by-two table with true class in rows and prediction in columns,
    /// `True=1 / Predicted=1` top-left.
    pub fn render(&self) -> String {
        let cells = [self.tp, self.fn_, self.fp, self.tn].map(|c| c.to_string());
        let w = cells.iter().map(String::len).max().unwrap_or(1).max("Predicted=1".len());
        format!(
            "{:<8}{:>w$}  {:>w$}\n{:<8}{:>w$}  {:>w$}\n{:<8}{:>w$}  {:>w$}\n",
            "", "Predicted=1", "Predicted=0", "True=1", cells[0], cells[1], "True=0", cells[2], cells[3],
        )
    }
}

fn check_inputs(labels: &[bool], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::invalid(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    Ok(())
}

/// Counts with prediction `score > threshold`.
pub fn confusion_at(labels: &[bool], scores: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    check_inputs(labels, scores)?;
    let mut m = ConfusionMatrix::default();
    for (&y, &s) in labels.iter().zip(scores) {
        match (y, s > threshold) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (true, false) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

/// Cumulative `(threshold, tp, fp)` after each group of tied scores, highest first.
fn cumulative(labels: &[bool], scores: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            out.push((scores[i], tp, fp));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Points are predicted positive when `score >= threshold`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points over all distinct thresholds, from (0, 0) to (1, 1).
pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Result<Vec<RocPoint>> {
    check_inputs(labels, scores)?;
    let p = labels.iter().filter(|&&y| y).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::invalid("ROC needs both classes"));
    }
    let mut pts = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    for (threshold, tp, fp) in cumulative(labels, scores) {
        pts.push(RocPoint {
            threshold,
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    Ok(pts)
}

/// Trapezoidal area under the ROC curve.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let pts = roc_curve(labels, scores)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall at every distinct threshold, highest first.
pub fn pr_curve(labels: &[bool], scores: &[f64]) -> Result<Vec<PrPoint>> {
    check_inputs(labels, scores)?;
    let p = labels.iter().filter(|&&y| y).count();
    if p == 0 {
        return Err(Error::invalid("PR curve needs positive labels"));
    }
    Ok(cumulative(labels, scores)
        .into_iter()
        .map(|(threshold, tp, fp)| PrPoint {
            threshold,
            recall: tp as f64 / p as f64,
            precision: tp as f64 / (tp + fp) as f64,
        })
        .collect())
}

/// Step-wise area: each recall increment weighted by the precision reached there.
pub fn pr_auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let pts = pr_curve(labels, scores)?;
    let mut prev = 0.0;
    let mut area = 0.0;
    for pt in pts {
        area += (pt.recall - prev) * pt.precision;
        prev = pt.recall;
    }
    Ok(area)
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("roc csv: {e}"));
    w.write_record(["threshold", "fpr", "tpr"]).map_err(err)?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_pr_csv<W: Write>(points: &[PrPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("pr csv: {e}"));
    w.write_record(["threshold", "recall", "precision"]).map_err(err)?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.recall.to_string(), p.precision.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub confusion: ConfusionMatrix,
    pub fp_per_day: Option<f64>,
}
