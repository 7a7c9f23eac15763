//! Binary classification metrics, fall = positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub specificity: f64,
    pub recall: f64,
    pub precision: f64,
    pub fp_rate: f64,
    pub f1: f64,
    pub auc: f64,
    pub accuracy: f64,
    /// Metrics whose denominator was zero; those are reported as 0.
    pub degenerate: Vec<String>,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts at `threshold` (score ≥ threshold predicts a fall)
/// and every derived metric, including AUC.
pub fn compute_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Data("no samples to score".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("label {l} is not binary")));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut degenerate = Vec::new();
    let specificity = ratio(tn, tn + fp, "specificity", &mut degenerate);
    let recall = ratio(tp, tp + fn_, "recall", &mut degenerate);
    let precision = ratio(tp, tp + fp, "precision", &mut degenerate);
    let fp_rate = ratio(fp, fp + tn, "fp_rate", &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate.push("f1".into());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = (tp + tn) as f64 / scores.len() as f64;
    let auc = match roc_auc(scores, labels) {
        Ok(a) => a,
        Err(_) => {
            degenerate.push("auc".into());
            0.0
        }
    };
    Ok(MetricsReport {
        tp,
        fp,
        tn,
        fn_,
        specificity,
        recall,
        precision,
        fp_rate,
        f1,
        auc,
        accuracy,
        degenerate,
    })
}

/// Area under the ROC curve from the Mann–Whitney rank statistic; tied
/// scores receive their average rank, so each tied pair counts ½.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "{n_pos} positive and {n_neg} negative labels"
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum_pos += avg * order[i..j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
