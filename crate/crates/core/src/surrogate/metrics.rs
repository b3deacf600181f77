use serde::{Deserialize, Serialize};

use super::SurrogateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// Failed (1) is the positive class.
    pub fn from_labels(predictions: &[u8], labels: &[u8]) -> Result<Self, SurrogateError> {
        if predictions.len() != labels.len() {
            return Err(SurrogateError::LengthMismatch { expected: labels.len(), got: predictions.len() });
        }
        let mut c = Confusion::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p == 1, l == 1) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    /// `None` when the labels hold a single class.
    pub auc: Option<f64>,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn compute(probabilities: &[f64], labels: &[u8]) -> Result<Self, SurrogateError> {
        let predictions: Vec<u8> = probabilities.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let confusion = Confusion::from_labels(&predictions, labels)?;
        if confusion.total() == 0 {
            return Err(SurrogateError::EmptyInput);
        }
        Ok(Self { acc: confusion.accuracy(), auc: roc_auc(probabilities, labels).ok(), confusion })
    }
}

/// `(TP + TN) / total`.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64, SurrogateError> {
    let c = Confusion::from_labels(predictions, labels)?;
    if c.total() == 0 {
        return Err(SurrogateError::EmptyInput);
    }
    Ok(c.accuracy())
}

/// Mann-Whitney AUC with tied scores ranked at their midrank.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, SurrogateError> {
    if scores.len() != labels.len() {
        return Err(SurrogateError::LengthMismatch { expected: labels.len(), got: scores.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SurrogateError::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        rank_sum_pos += midrank * order[start..end].iter().filter(|&&i| labels[i] == 1).count() as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// `|predicted - reference|` in percentage points.
pub fn pf_error(predicted_pf: f64, reference_pf: f64) -> f64 {
    (predicted_pf - reference_pf).abs()
}
