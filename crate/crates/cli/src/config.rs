//! Run configuration: defaults, config file, and command-line flags, in
//! rising order of precedence. Whatever a command ends up using is written
//! into the run directory, so every artifact can name the exact settings
//! that produced it.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use pmiris_core::balance::BalancingStrategy;
use pmiris_core::evaluate::Modality;
use pmiris_core::model::{BackboneName, DEFAULT_FUSION_HIDDEN};
use pmiris_core::preprocess::AugmentPolicy;
use pmiris_core::protocol::Scenario;
use pmiris_core::trainer::{LossKind, TrainConfig};

/// Everything a run needs beyond the manifest itself. A config file can
/// set any field, flags override the file, and unset fields fall back to
/// the defaults here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub band: Modality,
    pub backbone: BackboneName,
    pub balancing: BalancingStrategy,
    /// Fold count for the k-fold scenarios; the cross-dataset scenario has
    /// exactly one fold and ignores this.
    pub k: usize,
    pub seed: u64,
    /// PMI gap allowed when pairing NIR and RGB acquisitions of one eye.
    pub pair_tolerance_hours: f64,
    /// Dataset ids for the cross-dataset scenario.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_dataset: Option<String>,
    /// Hidden width of the fusion perceptron (multispectral runs).
    pub fusion_hidden_dim: usize,
    /// Initial weights for the feature extractor, e.g. a domain-specific
    /// pretraining checkpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained_weights: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::S2SubjectDisjoint,
            band: Modality::Nir,
            backbone: BackboneName::ToyCnn,
            balancing: BalancingStrategy::None,
            k: 5,
            seed: 0,
            pair_tolerance_hours: 0.0,
            train_dataset: None,
            test_dataset: None,
            fusion_hidden_dim: DEFAULT_FUSION_HIDDEN,
            pretrained_weights: None,
            train: TrainConfig::default(),
        }
    }
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, pmiris_core::Error> {
    match s.to_ascii_lowercase().as_str() {
        "s1" => Ok(Scenario::S1SampleDisjoint),
        "s2" => Ok(Scenario::S2SubjectDisjoint),
        "s3" => Ok(Scenario::S3CrossDataset),
        _ => s.parse(),
    }
}

fn parse_modality(s: &str) -> std::result::Result<Modality, pmiris_core::Error> {
    s.parse()
}

fn parse_backbone(s: &str) -> std::result::Result<BackboneName, pmiris_core::Error> {
    s.parse()
}

fn parse_balancing(s: &str) -> std::result::Result<BalancingStrategy, pmiris_core::Error> {
    s.parse()
}

fn parse_loss(s: &str) -> std::result::Result<LossKind, pmiris_core::Error> {
    s.parse()
}

/// Shared configuration flags. Every value is optional: omitted flags defer
/// to the config file, which defers to the built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigFlags {
    /// TOML config file; flags given here override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluation protocol: s1 (sample-disjoint), s2 (subject-disjoint),
    /// or s3 (cross-dataset).
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    /// Input modality: nir, rgb, or multispectral.
    #[arg(long, value_parser = parse_modality)]
    pub band: Option<Modality>,
    /// Feature extractor architecture.
    #[arg(long, value_parser = parse_backbone)]
    pub backbone: Option<BackboneName>,
    /// Class balancing strategy: none, real_upsample, or
    /// synthetic_supplement.
    #[arg(long, value_parser = parse_balancing)]
    pub balancing: Option<BalancingStrategy>,
    /// Fold count for the k-fold scenarios.
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for splitting, balancing, initialization, and batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// PMI gap allowed when pairing NIR and RGB acquisitions.
    #[arg(long)]
    pub pair_tolerance: Option<f64>,
    /// Training-side dataset id (cross-dataset scenario).
    #[arg(long)]
    pub train_dataset: Option<String>,
    /// Test-side dataset id (cross-dataset scenario).
    #[arg(long)]
    pub test_dataset: Option<String>,
    /// Hidden width of the fusion perceptron.
    #[arg(long)]
    pub fusion_hidden: Option<usize>,
    /// Checkpoint to initialize the feature extractor from.
    #[arg(long)]
    pub pretrained_weights: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Training objective: mse or mae.
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Train against z-scored PMI targets.
    #[arg(long)]
    pub z_score_targets: Option<bool>,
    /// Turn training-time image jitter on or off.
    #[arg(long)]
    pub augment: Option<bool>,
}

impl ConfigFlags {
    /// Defaults, overlaid by the config file, overlaid by these flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.scenario {
            cfg.scenario = v;
        }
        if let Some(v) = self.band {
            cfg.band = v;
        }
        if let Some(v) = self.backbone {
            cfg.backbone = v;
        }
        if let Some(v) = self.balancing {
            cfg.balancing = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
            cfg.train.seed = v;
        }
        if let Some(v) = self.pair_tolerance {
            cfg.pair_tolerance_hours = v;
        }
        if let Some(v) = &self.train_dataset {
            cfg.train_dataset = Some(v.clone());
        }
        if let Some(v) = &self.test_dataset {
            cfg.test_dataset = Some(v.clone());
        }
        if let Some(v) = self.fusion_hidden {
            cfg.fusion_hidden_dim = v;
        }
        if let Some(v) = &self.pretrained_weights {
            cfg.pretrained_weights = Some(v.clone());
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.train.weight_decay = v;
        }
        if let Some(v) = self.loss {
            cfg.train.loss = v;
        }
        if let Some(v) = self.z_score_targets {
            cfg.train.z_score_targets = v;
        }
        match self.augment {
            Some(true) => {
                if cfg.train.augment.is_none() {
                    cfg.train.augment = Some(AugmentPolicy::default());
                }
            }
            Some(false) => cfg.train.augment = None,
            None => {}
        }
        Ok(cfg)
    }
}

/// Writes the configuration a command actually used into its run directory.
pub fn persist(cfg: &RunConfig, out_dir: &Path, command: &str) -> Result<()> {
    let body = toml::to_string_pretty(cfg).context("serializing resolved config")?;
    let text = format!("# settings resolved for `pmiris {command}`\n{body}");
    let path = out_dir.join(format!("resolved_{command}.toml"));
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
