//! Classification metrics: micro-averaged F1 and one-vs-rest AUROC.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("auroc undefined: every label column has a single class")]
    AllColumnsSingleClass,
    #[error("metrics need equal-length inputs: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// AUROC averaging across label columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AurocAverage {
    /// Mean of per-column AUROCs.
    #[default]
    Macro,
    /// One pooled binary problem over every (instance, column) pair.
    Micro,
}

/// One-hot decision rows from class indices.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Vec<Vec<bool>> {
    labels
        .iter()
        .map(|&l| (0..num_classes).map(|c| c == l).collect())
        .collect()
}

/// Argmax decision rows from score rows; the first maximum wins ties.
pub fn multiclass_decisions(scores: &[Vec<f64>]) -> Vec<Vec<bool>> {
    scores
        .iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            (0..row.len()).map(|c| c == best).collect()
        })
        .collect()
}

/// Threshold decision rows for multilabel scores.
pub fn multilabel_decisions(scores: &[Vec<f64>], threshold: f64) -> Vec<Vec<bool>> {
    scores
        .iter()
        .map(|row| row.iter().map(|&s| s >= threshold).collect())
        .collect()
}

/// Micro-averaged F1: true/false positives and false negatives pooled over
/// every (instance, label) decision. With no positive decisions or labels
/// anywhere the score is vacuously 1.
pub fn micro_f1(decisions: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64, MetricsError> {
    if decisions.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(decisions.len(), truth.len()));
    }
    let (mut tp, mut fp, mut fnc) = (0u64, 0u64, 0u64);
    for (d_row, t_row) in decisions.iter().zip(truth) {
        if d_row.len() != t_row.len() {
            return Err(MetricsError::LengthMismatch(d_row.len(), t_row.len()));
        }
        for (&d, &t) in d_row.iter().zip(t_row) {
            match (d, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnc += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fnc;
    Ok(if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    })
}

/// Binary AUROC by the midrank formula; `None` when only one class is
/// present.
pub fn binary_auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tied score runs.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Some(auc)
}

/// One-vs-rest AUROC over label columns. Columns with a single class are
/// skipped with a warning; an error is returned only when every column is
/// skipped.
pub fn auroc(
    scores: &[Vec<f64>],
    truth: &[Vec<bool>],
    average: AurocAverage,
) -> Result<f64, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), truth.len()));
    }
    let num_cols = scores.first().map_or(0, Vec::len);
    match average {
        AurocAverage::Macro => {
            let mut total = 0.0;
            let mut used = 0;
            for c in 0..num_cols {
                let col_scores: Vec<f64> = scores.iter().map(|r| r[c]).collect();
                let col_labels: Vec<bool> = truth.iter().map(|r| r[c]).collect();
                match binary_auroc(&col_scores, &col_labels) {
                    Some(v) => {
                        total += v;
                        used += 1;
                    }
                    None => eprintln!(
                        "warning: auroc column {c} has a single class; skipped"
                    ),
                }
            }
            if used == 0 {
                return Err(MetricsError::AllColumnsSingleClass);
            }
            Ok(total / used as f64)
        }
        AurocAverage::Micro => {
            let flat_scores: Vec<f64> = scores.iter().flatten().copied().collect();
            let flat_labels: Vec<bool> = truth.iter().flatten().copied().collect();
            binary_auroc(&flat_scores, &flat_labels)
                .ok_or(MetricsError::AllColumnsSingleClass)
        }
    }
}
