use crate::error::{Error, Result};

/// Per-class and macro F1 for binary labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Report {
    pub per_class: [f64; 2],
    pub macro_f1: f64,
    /// A class appeared in neither predictions nor labels and scored 0.
    pub absent_class: bool,
}

pub fn f1_report(predictions: &[u8], labels: &[u8]) -> Result<F1Report> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: predictions.len(),
            context: "predictions",
        });
    }
    if labels.is_empty() {
        return Err(Error::Config("macro F1 of an empty set".into()));
    }
    // counts[label][prediction]
    let mut counts = [[0usize; 2]; 2];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p > 1 || y > 1 {
            return Err(Error::Config(format!("labels must be 0 or 1, got {y} / {p}")));
        }
        counts[y as usize][p as usize] += 1;
    }
    let mut per_class = [0.0; 2];
    let mut absent_class = false;
    for c in 0..2 {
        let tp = counts[c][c];
        let fp = counts[1 - c][c];
        let fn_ = counts[c][1 - c];
        if tp + fp + fn_ == 0 {
            absent_class = true;
            continue;
        }
        per_class[c] = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    }
    Ok(F1Report {
        per_class,
        macro_f1: 0.5 * (per_class[0] + per_class[1]),
        absent_class,
    })
}

pub fn macro_f1(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(f1_report(predictions, labels)?.macro_f1)
}

pub fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
