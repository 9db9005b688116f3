use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    load_checkpoint, save_checkpoint, softmax, softmax_xent, Activation, Adam, AdamConfig,
    Checkpoint, Head, HeadRole, NetworkParams,
};
use crate::seed::{self, Stream};

use super::features::{FeatureRow, FEATURE_COUNT, FEATURE_SCHEMA_VERSION};
use super::metrics::macro_f1;

const DETECTOR_KIND: &str = "betrayal-detector";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorHyper {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub class_weighting: bool,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for DetectorHyper {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: 128,
            class_weighting: true,
            validation_fraction: 0.2,
            patience: 10,
            seed: 0,
        }
    }
}

impl DetectorHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("detector hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("detector learning_rate must be > 0".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "detector max_epochs, batch_size and patience must be >= 1".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("detector validation_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics over `rows`; constant columns get unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>) -> Self {
        let mut n = 0.0;
        let mut sum = [0.0; FEATURE_COUNT];
        let mut sq = [0.0; FEATURE_COUNT];
        for row in rows {
            n += 1.0;
            for j in 0..FEATURE_COUNT {
                sum[j] += row[j];
                sq[j] += row[j] * row[j];
            }
        }
        let n = f64::max(n, 1.0);
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = (0..FEATURE_COUNT)
            .map(|j| {
                let var = (sq[j] / n - mean[j] * mean[j]).max(0.0);
                let s = var.sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// A trained classifier: network plus the feature scaling it was fit with.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub network: NetworkParams<f64>,
    pub scaler: Standardizer,
}

impl Detector {
    pub fn logits(&self, row: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(FEATURE_COUNT, row.len(), "feature row")?;
        let cache = self.network.forward(&self.scaler.apply(row))?;
        Ok(cache.output().to_vec())
    }

    /// Probability of the betrayal class.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        Ok(softmax(&self.logits(row)?)[1])
    }

    pub fn predict(&self, row: &[f64]) -> Result<u8> {
        let z = self.logits(row)?;
        Ok((z[1] > z[0]) as u8)
    }

    pub fn predict_all(&self, rows: &[FeatureRow]) -> Result<Vec<u8>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint<f64> {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        Checkpoint::new(self.network.clone())
            .with_meta("kind", DETECTOR_KIND)
            .with_meta("schema", FEATURE_SCHEMA_VERSION)
            .with_meta("scaler_mean", join(&self.scaler.mean))
            .with_meta("scaler_std", join(&self.scaler.std))
    }

    pub fn from_checkpoint(ckpt: Checkpoint<f64>) -> Result<Self> {
        let get = |key: &str| {
            ckpt.meta
                .get(key)
                .ok_or_else(|| Error::Schema(format!("detector checkpoint lacks `{key}`")))
        };
        if get("kind")? != DETECTOR_KIND {
            return Err(Error::Schema("checkpoint is not a betrayal detector".into()));
        }
        let schema = get("schema")?;
        if schema != FEATURE_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "detector was trained on feature schema `{schema}`, this build uses `{FEATURE_SCHEMA_VERSION}`"
            )));
        }
        let parse = |key: &str| -> Result<Vec<f64>> {
            let v: Vec<f64> = get(key)?
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Schema(format!("bad `{key}`: {e}")))?;
            crate::error::check_len(FEATURE_COUNT, v.len(), "detector scaler")?;
            Ok(v)
        };
        let scaler = Standardizer {
            mean: parse("scaler_mean")?,
            std: parse("scaler_std")?,
        };
        let net = &ckpt.network;
        if net.input_len() != FEATURE_COUNT || net.output_len() != 2 {
            return Err(Error::Schema(format!(
                "detector network must map {FEATURE_COUNT} -> 2, got {} -> {}",
                net.input_len(),
                net.output_len()
            )));
        }
        Ok(Self {
            network: ckpt.network,
            scaler,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.to_checkpoint(), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(load_checkpoint(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDetector {
    pub detector: Detector,
    pub best_validation_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

fn class_counts(labels: &[u8]) -> [usize; 2] {
    let mut c = [0; 2];
    for &y in labels {
        c[(y != 0) as usize] += 1;
    }
    c
}

/// Splits indices into (train, held-out) keeping each class's share.
pub fn stratified_split<R: rand::Rng + ?Sized>(
    labels: &[u8],
    fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let mut take = (fraction * idx.len() as f64).round() as usize;
        if idx.len() >= 2 {
            take = take.clamp(1, idx.len() - 1);
        }
        held.extend_from_slice(&idx[..take.min(idx.len())]);
        train.extend_from_slice(&idx[take.min(idx.len())..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Trains a `33 -> hidden -> 2` relu classifier with early stopping on the
/// macro F1 of a stratified validation split; returns the best epoch's weights.
pub fn train_detector(rows: &[FeatureRow], labels: &[u8], hyper: &DetectorHyper) -> Result<TrainedDetector> {
    hyper.validate()?;
    crate::error::check_len(rows.len(), labels.len(), "detector labels")?;
    let counts = class_counts(labels);
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::Degenerate(format!(
            "detector training needs at least two examples of each class (got {} negative, {} positive); collect more episodes",
            counts[0], counts[1]
        )));
    }
    let mut rng = seed::rng(hyper.seed, Stream::Detector, 0);
    let mut dims = vec![FEATURE_COUNT];
    dims.extend_from_slice(&hyper.hidden);
    dims.push(2);
    let network = NetworkParams::init(&dims, Activation::Relu, Activation::Identity, &mut rng)?
        .with_heads(vec![Head {
            role: HeadRole::ClassLogits,
            offset: 0,
            len: 2,
        }])?;

    let (mut train_idx, val_idx) = stratified_split(labels, hyper.validation_fraction, &mut rng);
    let scaler = Standardizer::fit(train_idx.iter().map(|&i| &rows[i]));
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r)).collect();
    let train_counts = class_counts(&train_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let weights = if hyper.class_weighting {
        let n = train_idx.len() as f64;
        [n / (2.0 * train_counts[0] as f64), n / (2.0 * train_counts[1] as f64)]
    } else {
        [1.0, 1.0]
    };

    let mut detector = Detector { network, scaler };
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: hyper.learning_rate,
            ..AdamConfig::default()
        },
        detector.network.len(),
    );
    let val_labels: Vec<u8> = val_idx.iter().map(|&i| labels[i]).collect();
    let mut best = (f64::NEG_INFINITY, 0, detector.network.clone());
    let mut epochs_run = 0;
    for epoch in 1..=hyper.max_epochs {
        epochs_run = epoch;
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(hyper.batch_size) {
            let mut grads = detector.network.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let cache = detector.network.forward(&scaled[i])?;
                let (_, mut g) = softmax_xent(cache.output(), labels[i] as usize, Some(&weights))?;
                g.iter_mut().for_each(|v| *v *= scale);
                detector.network.backward(&cache, &g, &mut grads)?;
            }
            adam.step(detector.network.values_mut(), &grads);
        }
        if detector.network.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("detector weights diverged at epoch {epoch}")));
        }
        let preds = val_idx
            .iter()
            .map(|&i| {
                let z = detector.network.forward(&scaled[i])?;
                let z = z.output();
                Ok((z[1] > z[0]) as u8)
            })
            .collect::<Result<Vec<u8>>>()?;
        let f1 = macro_f1(&preds, &val_labels)?;
        if f1 > best.0 {
            best = (f1, epoch, detector.network.clone());
        } else if epoch - best.1 >= hyper.patience {
            break;
        }
    }
    detector.network = best.2;
    Ok(TrainedDetector {
        detector,
        best_validation_f1: best.0,
        best_epoch: best.1,
        epochs_run,
    })
}

/// Bernoulli draw used by the class-prior baseline.
pub(crate) fn prior_sample<R: rand::Rng + ?Sized>(p_positive: f64, rng: &mut R) -> u8 {
    (rng.random::<f64>() < p_positive) as u8
}
