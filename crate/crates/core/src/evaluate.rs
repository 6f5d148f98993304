//! Error metrics over PMI predictions and their cross-fold aggregation.
//! Everything here is pure arithmetic on hours; plotting and file layout
//! live elsewhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::balance::BalancingStrategy;
use crate::error::{Error, Result};
use crate::manifest::Band;
use crate::model::BackboneName;
use crate::protocol::Scenario;
use crate::stats::{mean, sample_stdev};
use crate::trainer::Prediction;

fn check_lengths(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput(
            "metrics need at least one prediction".to_string(),
        ));
    }
    if predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions against {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Root mean squared error, sqrt(mean((ŷ − y)²)).
pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((total / predictions.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Both errors for one test fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

/// Scores one fold's predictions.
pub fn fold_metrics(predictions: &[Prediction]) -> Result<FoldMetrics> {
    let preds: Vec<f64> = predictions.iter().map(|p| p.y_pred_hours).collect();
    let targets: Vec<f64> = predictions.iter().map(|p| p.y_true_hours).collect();
    Ok(FoldMetrics {
        rmse: rmse(&preds, &targets)?,
        mae: mae(&preds, &targets)?,
        n: predictions.len(),
    })
}

/// Mean and sample standard deviation (n − 1 denominator) of a per-fold
/// metric. A single fold has no spread: the deviation is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossFoldSummary {
    pub mean: f64,
    pub std: f64,
}

pub fn cross_fold_summary(values: &[f64]) -> Result<CrossFoldSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput(
            "cross-fold summary needs at least one fold".to_string(),
        ));
    }
    Ok(CrossFoldSummary {
        mean: mean(values),
        std: sample_stdev(values),
    })
}

/// What the evaluated model consumed: a single acquisition band or the
/// fused pair. Distinct from [`Band`], which tags individual samples; a
/// multispectral run reads both bands but produces one prediction per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "NIR")]
    Nir,
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "NIR+RGB")]
    Multispectral,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Nir => "NIR",
            Modality::Rgb => "RGB",
            Modality::Multispectral => "NIR+RGB",
        }
    }

    /// The band a single-band modality reads; None for the fused pair.
    pub fn single_band(self) -> Option<Band> {
        match self {
            Modality::Nir => Some(Band::Nir),
            Modality::Rgb => Some(Band::Rgb),
            Modality::Multispectral => None,
        }
    }
}

impl From<Band> for Modality {
    fn from(band: Band) -> Self {
        match band {
            Band::Nir => Modality::Nir,
            Band::Rgb => Modality::Rgb,
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nir" => Ok(Modality::Nir),
            "rgb" => Ok(Modality::Rgb),
            "multispectral" | "nir+rgb" => Ok(Modality::Multispectral),
            other => Err(Error::InvalidValue(format!(
                "unknown modality {other:?}; expected nir, rgb, or multispectral"
            ))),
        }
    }
}

/// The scored outcome of one experiment: what was run and how it did,
/// fold by fold and in aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub band: Modality,
    pub backbone: BackboneName,
    pub balancing: BalancingStrategy,
    pub folds: Vec<FoldMetrics>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
}

impl MetricsReport {
    pub fn from_folds(
        scenario: Scenario,
        band: impl Into<Modality>,
        backbone: BackboneName,
        balancing: BalancingStrategy,
        folds: Vec<FoldMetrics>,
    ) -> Result<Self> {
        let rmses: Vec<f64> = folds.iter().map(|f| f.rmse).collect();
        let maes: Vec<f64> = folds.iter().map(|f| f.mae).collect();
        let rmse_summary = cross_fold_summary(&rmses)?;
        let mae_summary = cross_fold_summary(&maes)?;
        Ok(MetricsReport {
            scenario,
            band: band.into(),
            backbone,
            balancing,
            folds,
            mean_rmse: rmse_summary.mean,
            std_rmse: rmse_summary.std,
            mean_mae: mae_summary.mean,
            std_mae: mae_summary.std,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::ManifestFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_matches_hand_arithmetic() {
        // Predicting zero for targets 3 and 4: squared errors 9 and 16
        // average to 12.5, absolute errors average to 3.5.
        let preds = [0.0, 0.0];
        let targets = [3.0, 4.0];
        let r = rmse(&preds, &targets).unwrap();
        let m = mae(&preds, &targets).unwrap();
        assert_eq!(r, 12.5f64.sqrt());
        assert!((r - 3.535534).abs() < 1e-6);
        assert_eq!(m, 3.5);
    }

    #[test]
    fn metrics_match_a_brute_force_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let preds: Vec<f64> = (0..n).map(|_| rng.random_range(-500.0..1700.0)).collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1700.0)).collect();

            let mut sq = 0.0;
            let mut ab = 0.0;
            for i in 0..n {
                sq += (preds[i] - targets[i]).powi(2);
                ab += (preds[i] - targets[i]).abs();
            }
            let want_rmse = (sq / n as f64).sqrt();
            let want_mae = ab / n as f64;

            let got_rmse = rmse(&preds, &targets).unwrap();
            let got_mae = mae(&preds, &targets).unwrap();
            assert!((got_rmse - want_rmse).abs() <= 1e-9 * want_rmse.max(1.0));
            assert!((got_mae - want_mae).abs() <= 1e-9 * want_mae.max(1.0));
        }
    }

    #[test]
    fn degenerate_and_mismatched_inputs_error() {
        assert!(rmse(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(cross_fold_summary(&[]).is_err());
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let y = [1.5, 2.5, 100.0];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn single_fold_summary_has_zero_spread() {
        let s = cross_fold_summary(&[4.2]).unwrap();
        assert_eq!(s.mean, 4.2);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn summary_matches_textbook_values() {
        let s = cross_fold_summary(&[3.0, 4.0, 5.0]).unwrap();
        assert!((s.mean - 4.0).abs() < 1e-12);
        assert!((s.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_aggregates_folds_and_round_trips_json() {
        let folds = vec![
            FoldMetrics {
                rmse: 3.0,
                mae: 2.0,
                n: 10,
            },
            FoldMetrics {
                rmse: 5.0,
                mae: 4.0,
                n: 12,
            },
        ];
        let report = MetricsReport::from_folds(
            Scenario::S2SubjectDisjoint,
            Band::Nir,
            BackboneName::ToyCnn,
            BalancingStrategy::None,
            folds,
        )
        .unwrap();
        assert_eq!(report.mean_rmse, 4.0);
        assert!((report.std_rmse - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(report.mean_mae, 3.0);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.json");
        report.save_json(&path).unwrap();
        let back = MetricsReport::load_json(&path).unwrap();
        assert_eq!(report, back);

        // The file is plain JSON with the documented field names.
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(value["scenario"], "S2_subject_disjoint");
        assert_eq!(value["band"], "NIR");
        assert_eq!(value["backbone"], "toy_cnn");
        assert_eq!(value["balancing"], "none");
        assert_eq!(value["folds"][0]["rmse"], 3.0);
        assert_eq!(value["folds"][1]["n"], 12);
        assert_eq!(value["mean_rmse"], 4.0);
        assert!(value.get("std_mae").is_some());
    }

    proptest! {
        #[test]
        fn rmse_never_drops_below_mae(
            pairs in proptest::collection::vec((-1000.0..1000.0f64, -1000.0..1000.0f64), 1..64)
        ) {
            let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let targets: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = rmse(&preds, &targets).unwrap();
            let m = mae(&preds, &targets).unwrap();
            // Quadratic means dominate arithmetic means of magnitudes;
            // allow only rounding slack.
            prop_assert!(r >= m - 1e-9 * m.abs().max(1.0));
        }

        #[test]
        fn metrics_ignore_the_order_of_items(
            pairs in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 2..32),
            seed in 0u64..1000
        ) {
            let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let targets: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            let preds_p: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
            let targets_p: Vec<f64> = order.iter().map(|&i| targets[i]).collect();

            let r0 = rmse(&preds, &targets).unwrap();
            let r1 = rmse(&preds_p, &targets_p).unwrap();
            let m0 = mae(&preds, &targets).unwrap();
            let m1 = mae(&preds_p, &targets_p).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-9 * r0.abs().max(1.0));
            prop_assert!((m0 - m1).abs() <= 1e-9 * m0.abs().max(1.0));
        }

        #[test]
        fn shifting_both_series_leaves_errors_alone(
            pairs in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..32),
            shift in -500.0..500.0f64
        ) {
            let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let targets: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let preds_s: Vec<f64> = preds.iter().map(|v| v + shift).collect();
            let targets_s: Vec<f64> = targets.iter().map(|v| v + shift).collect();

            let r0 = rmse(&preds, &targets).unwrap();
            let r1 = rmse(&preds_s, &targets_s).unwrap();
            let m0 = mae(&preds, &targets).unwrap();
            let m1 = mae(&preds_s, &targets_s).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-6 * r0.abs().max(1.0));
            prop_assert!((m0 - m1).abs() <= 1e-6 * m0.abs().max(1.0));
        }
    }
}
