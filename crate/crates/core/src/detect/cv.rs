use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

use super::classifier::{prior_sample, stratified_split, train_detector, DetectorHyper};
use super::features::FeatureRow;
use super::metrics::{f1_report, macro_f1, mean_stdev};

/// Candidate settings tried inside each training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub hidden: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            hidden: vec![32, 64],
            learning_rate: vec![1e-3, 3e-4],
        }
    }
}

impl HyperGrid {
    /// Expands the grid over `base`; each width is used for both hidden layers.
    pub fn candidates(&self, base: &DetectorHyper) -> Vec<DetectorHyper> {
        let depth = base.hidden.len().max(1);
        let mut out = Vec::new();
        for &h in &self.hidden {
            for &lr in &self.learning_rate {
                out.push(DetectorHyper {
                    hidden: vec![h; depth],
                    learning_rate: lr,
                    ..base.clone()
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_rows: usize,
    pub test_positive_rate: f64,
    pub macro_f1: f64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub inner_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub mean: f64,
    pub stdev: f64,
    pub folds: Vec<FoldResult>,
}

/// Deals each class's shuffled indices round-robin into `k` folds.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config("cross-validation needs k >= 2".into()));
    }
    let mut rng = seed::rng(seed, Stream::Folds, 0);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Degenerate(format!(
                "class {class} has {} rows, too few to stratify into {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            folds[(j + offset) % k].push(i);
        }
        // keep fold sizes balanced when class counts are not multiples of k
        offset = (offset + labels.iter().filter(|&&y| y == class).count()) % k;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn gather(rows: &[FeatureRow], labels: &[u8], idx: &[usize]) -> (Vec<FeatureRow>, Vec<u8>) {
    (idx.iter().map(|&i| rows[i]).collect(), idx.iter().map(|&i| labels[i]).collect())
}

/// Stratified k-fold evaluation. Inside each fold the grid is scored on an
/// inner validation split of the training rows; the winner is retrained on
/// all training rows and scored once on the test fold.
pub fn kfold_eval(
    rows: &[FeatureRow],
    labels: &[u8],
    k: usize,
    grid: &HyperGrid,
    base: &DetectorHyper,
    seed: u64,
) -> Result<CvReport> {
    crate::error::check_len(rows.len(), labels.len(), "dataset labels")?;
    let folds = stratified_folds(labels, k, seed)?;
    let candidates = grid.candidates(base);
    if candidates.is_empty() {
        return Err(Error::Config("detector hyperparameter grid is empty".into()));
    }
    let mut results = Vec::with_capacity(k);
    for (f, test_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let (train_rows, train_labels) = gather(rows, labels, &train_idx);
        let (test_rows, test_labels) = gather(rows, labels, test_idx);

        let mut split_rng = seed::rng(seed, Stream::Folds, 1 + f as u64);
        let (inner_fit, inner_val) = stratified_split(&train_labels, base.validation_fraction, &mut split_rng);
        let (fit_rows, fit_labels) = gather(&train_rows, &train_labels, &inner_fit);
        let (val_rows, val_labels) = gather(&train_rows, &train_labels, &inner_val);

        let scores = candidates
            .par_iter()
            .enumerate()
            .map(|(c, hyper)| {
                let hyper = DetectorHyper {
                    seed: seed::derive(seed, Stream::Detector, (f * 64 + c) as u64),
                    ..hyper.clone()
                };
                let trained = train_detector(&fit_rows, &fit_labels, &hyper)?;
                macro_f1(&trained.detector.predict_all(&val_rows)?, &val_labels)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (best, inner_f1) = scores
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        let chosen = DetectorHyper {
            seed: seed::derive(seed, Stream::Detector, (f * 64 + 63) as u64),
            ..candidates[best].clone()
        };
        let trained = train_detector(&train_rows, &train_labels, &chosen)?;
        let score = macro_f1(&trained.detector.predict_all(&test_rows)?, &test_labels)?;
        results.push(FoldResult {
            fold: f,
            test_rows: test_idx.len(),
            test_positive_rate: test_labels.iter().map(|&y| y as f64).sum::<f64>() / test_labels.len() as f64,
            macro_f1: score,
            hidden: chosen.hidden,
            learning_rate: chosen.learning_rate,
            inner_f1,
        });
    }
    let scores: Vec<f64> = results.iter().map(|r| r.macro_f1).collect();
    let (mean, stdev) = mean_stdev(&scores);
    Ok(CvReport {
        mean,
        stdev,
        folds: results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub mean: f64,
    pub stdev: f64,
    pub trials: usize,
    pub positive_rate: f64,
    /// Only one class is present in the labels.
    pub degenerate: bool,
}

/// Scores a predictor that samples each label independently from the
/// empirical class prior.
pub fn baseline_eval(labels: &[u8], seed: u64, trials: usize) -> Result<BaselineReport> {
    if labels.is_empty() {
        return Err(Error::Config("baseline needs at least one row".into()));
    }
    let trials = trials.max(1);
    let p = labels.iter().map(|&y| (y != 0) as u8 as f64).sum::<f64>() / labels.len() as f64;
    let mut rng = seed::rng(seed, Stream::Baseline, 0);
    let mut scores = Vec::with_capacity(trials);
    let mut degenerate = false;
    for _ in 0..trials {
        let preds: Vec<u8> = labels.iter().map(|_| prior_sample(p, &mut rng)).collect();
        let r = f1_report(&preds, labels)?;
        degenerate |= r.absent_class;
        scores.push(r.macro_f1);
    }
    let (mean, stdev) = mean_stdev(&scores);
    Ok(BaselineReport {
        mean,
        stdev,
        trials,
        positive_rate: p,
        degenerate: degenerate || p == 0.0 || p == 1.0,
    })
}
