//! Optimization loop for the regression models. Adam with fixed
//! hyperparameters, a seeded shuffle each epoch, no early stopping and no
//! schedule: the parameters after the last epoch are the model.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PairedDataset};
use crate::error::{Error, Result};
use crate::manifest::Band;
use crate::model::{BackboneName, MultispectralModel, NarrowBandModel};
use crate::nn::adam::{Adam, AdamConfig};
use crate::preprocess::{sample_rng, AugmentPolicy};
use crate::protocol::Scenario;
use crate::stats::{mean, sample_stdev};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    Mae,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Mse => write!(f, "mse"),
            LossKind::Mae => write!(f, "mae"),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::InvalidValue(format!(
                "loss must be `mse` or `mae`, got `{other}`"
            ))),
        }
    }
}

/// Every knob the loop honors. Each field can be overridden; nothing else
/// about the loop is configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    /// Train against z-scored PMI targets; predictions are mapped back to
    /// hours. Off by default: targets are raw hours.
    pub z_score_targets: bool,
    pub seed: u64,
    /// Training-time jitter; `None` trains on the plain crops.
    pub augment: Option<AugmentPolicy>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-6,
            batch_size: 32,
            epochs: 500,
            loss: LossKind::Mse,
            z_score_targets: false,
            seed: 0,
            augment: Some(AugmentPolicy::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be ≥ 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be ≥ 1".to_string()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be ≥ 1".to_string()));
        }
        if let Some(policy) = &self.augment {
            policy.validate()?;
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.learning_rate, self.weight_decay)
    }
}

/// Affine map applied to targets before the loss; predictions go through
/// the inverse, so the model always reports hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub mean: f64,
    pub std: f64,
}

impl TargetTransform {
    pub fn identity() -> Self {
        TargetTransform {
            mean: 0.0,
            std: 1.0,
        }
    }

    /// Fits mean and standard deviation to the training targets. A
    /// degenerate spread (single target, or all equal) falls back to unit
    /// scale so the map stays invertible.
    pub fn fit(targets: &[f64]) -> Self {
        let mu = mean(targets);
        let sd = sample_stdev(targets);
        TargetTransform {
            mean: mu,
            std: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, hours: f64) -> f64 {
        (hours - self.mean) / self.std
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        scaled * self.std + self.mean
    }
}

/// Loss over the whole run, one entry per epoch, in target space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
    pub wall_seconds: f64,
}

/// What a fit leaves behind besides the mutated model.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub history: TrainHistory,
    pub transform: TargetTransform,
}

/// One scored item, always in hours.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub y_true_hours: f64,
    pub y_pred_hours: f64,
}

/// The visiting order of the training set for one epoch: a fresh seeded
/// shuffle, reproducible from (seed, epoch) alone.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = sample_rng(seed, "epoch-order", epoch);
    order.shuffle(&mut rng);
    order
}

/// Loss value and its gradient with respect to each prediction, averaged
/// over the batch.
fn loss_and_grad(
    kind: LossKind,
    pred: &Array2<f64>,
    target: &Array1<f64>,
) -> (f64, Array2<f64>) {
    let n = pred.dim().0;
    let scale = 1.0 / n as f64;
    let mut grad = Array2::zeros((n, 1));
    let mut total = 0.0;
    for i in 0..n {
        let diff = pred[(i, 0)] - target[i];
        match kind {
            LossKind::Mse => {
                total += diff * diff;
                grad[(i, 0)] = 2.0 * diff * scale;
            }
            LossKind::Mae => {
                total += diff.abs();
                grad[(i, 0)] = diff.signum() * scale;
            }
        }
    }
    (total * scale, grad)
}

/// Runs the loop on a single-band model. Returns per-epoch training loss
/// and the target transform the model was fitted under.
pub fn fit(
    model: &mut NarrowBandModel,
    data: &mut Dataset,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".to_string()));
    }
    if data.band != model.spec.band {
        return Err(Error::InvalidConfig(format!(
            "model is {} but the training set is {}",
            model.spec.band.name(),
            data.band.name()
        )));
    }
    let transform = if config.z_score_targets {
        TargetTransform::fit(&data.targets())
    } else {
        TargetTransform::identity()
    };

    let started = Instant::now();
    let mut optimizer = Adam::new(config.adam());
    let n = data.len();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = epoch_order(config.seed, epoch as u64, n);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (x, y_hours) = data.batch(chunk, config.augment.as_ref(), epoch as u64);
            let y = y_hours.mapv(|h| transform.apply(h));
            let pred = model.forward(&x, true)?;
            let (loss, grad) = loss_and_grad(config.loss, &pred, &y);
            if !loss.is_finite() {
                return Err(Error::Other(format!(
                    "training loss became non-finite at epoch {epoch}"
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            model.zero_grads();
            model.backward(&grad);
            optimizer.step(|f| model.visit_params(f));
        }
        epoch_losses.push(epoch_loss / n as f64);
    }
    Ok(FitResult {
        history: TrainHistory {
            epoch_losses,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
        transform,
    })
}

/// Same loop over paired data and the fusion model.
pub fn fit_fusion(
    model: &mut MultispectralModel,
    data: &mut PairedDataset,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".to_string()));
    }
    let transform = if config.z_score_targets {
        TargetTransform::fit(&data.targets())
    } else {
        TargetTransform::identity()
    };

    let started = Instant::now();
    let mut optimizer = Adam::new(config.adam());
    let n = data.len();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = epoch_order(config.seed, epoch as u64, n);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (x_nir, x_rgb, y_hours) =
                data.batch(chunk, config.augment.as_ref(), epoch as u64);
            let y = y_hours.mapv(|h| transform.apply(h));
            let pred = model.forward(&x_nir, &x_rgb, true)?;
            let (loss, grad) = loss_and_grad(config.loss, &pred, &y);
            if !loss.is_finite() {
                return Err(Error::Other(format!(
                    "training loss became non-finite at epoch {epoch}"
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            model.zero_grads();
            model.backward(&grad);
            optimizer.step(|f| model.visit_params(f));
        }
        epoch_losses.push(epoch_loss / n as f64);
    }
    Ok(FitResult {
        history: TrainHistory {
            epoch_losses,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
        transform,
    })
}

/// Scores a dataset in eval mode. No augmentation is applied; the
/// dataset's own counter can prove it. A non-finite output aborts with
/// the offending item's id rather than writing a poisoned row.
pub fn predict(
    model: &mut NarrowBandModel,
    data: &mut Dataset,
    transform: &TargetTransform,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be ≥ 1".to_string()));
    }
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(batch_size) {
        let (x, y) = data.batch(chunk, None, 0);
        let pred = model.forward(&x, false)?;
        for (row, &idx) in chunk.iter().enumerate() {
            let id = data.items()[idx].id.clone();
            let hours = transform.invert(pred[(row, 0)]);
            if !hours.is_finite() {
                return Err(Error::NonFinitePrediction { id });
            }
            out.push(Prediction {
                id,
                y_true_hours: y[row],
                y_pred_hours: hours,
            });
        }
    }
    Ok(out)
}

/// Fusion-model scoring, same contract as `predict`.
pub fn predict_fusion(
    model: &mut MultispectralModel,
    data: &mut PairedDataset,
    transform: &TargetTransform,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be ≥ 1".to_string()));
    }
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(batch_size) {
        let (x_nir, x_rgb, y) = data.batch(chunk, None, 0);
        let pred = model.forward(&x_nir, &x_rgb, false)?;
        for (row, &idx) in chunk.iter().enumerate() {
            let id = data.items()[idx].id.clone();
            let hours = transform.invert(pred[(row, 0)]);
            if !hours.is_finite() {
                return Err(Error::NonFinitePrediction { id });
            }
            out.push(Prediction {
                id,
                y_true_hours: y[row],
                y_pred_hours: hours,
            });
        }
    }
    Ok(out)
}

/// Canonical checkpoint file name for one trained fold.
pub fn checkpoint_file_name(
    scenario: Scenario,
    band: Band,
    backbone: BackboneName,
    fold: usize,
) -> String {
    format!(
        "{}_{}_{}_{}.ckpt",
        scenario.short(),
        band.name(),
        backbone.as_str(),
        fold
    )
}

/// Writes predictions as `id,y_true_hours,y_pred_hours` with six decimal
/// places, enough for an exact numeric read-back at that precision.
pub fn write_predictions_csv(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::ManifestFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    writer
        .write_record(["id", "y_true_hours", "y_pred_hours"])
        .map_err(|e| Error::ManifestFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    for p in predictions {
        writer
            .write_record([
                p.id.as_str(),
                &format!("{:.6}", p.y_true_hours),
                &format!("{:.6}", p.y_pred_hours),
            ])
            .map_err(|e| Error::ManifestFormat {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a predictions file back into memory.
pub fn read_predictions_csv(path: &Path) -> Result<Vec<Prediction>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::ManifestFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::ManifestFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let expected = ["id", "y_true_hours", "y_pred_hours"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::ManifestFormat {
            path: path.to_path_buf(),
            message: format!("expected header {expected:?}, got {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::ManifestRow {
            path: path.to_path_buf(),
            row: row + 2,
            message: e.to_string(),
        })?;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::ManifestRow {
                    path: path.to_path_buf(),
                    row: row + 2,
                    message: format!("missing {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::ManifestRow {
                    path: path.to_path_buf(),
                    row: row + 2,
                    message: format!("{name}: {e}"),
                })
        };
        out.push(Prediction {
            id: record
                .get(0)
                .ok_or_else(|| Error::ManifestRow {
                    path: path.to_path_buf(),
                    row: row + 2,
                    message: "missing id".to_string(),
                })?
                .to_string(),
            y_true_hours: parse(1, "y_true_hours")?,
            y_pred_hours: parse(2, "y_pred_hours")?,
        });
    }
    Ok(out)
}
