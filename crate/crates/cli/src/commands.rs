//! One function per subcommand. Each loads its inputs, re-audits any plan
//! it is about to act on, does the work, and leaves artifacts plus the
//! resolved configuration in the run directory. Commands that consume a
//! split plan take the scenario from the plan itself; flags cannot retarget
//! a frozen split.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use pmiris_core::balance::{
    plan_real_upsampling, plan_synthetic_supplement, BalancingPlan, BalancingStrategy,
    SupplementConfig,
};
use pmiris_core::dataset::{Dataset, PairedDataset};
use pmiris_core::evaluate::{fold_metrics, FoldMetrics, MetricsReport, Modality};
use pmiris_core::manifest::{
    load_manifest, pair_multispectral, summarize, Band, Manifest, SampleRecord,
};
use pmiris_core::model::{
    build_multispectral_model, build_narrowband_model, load_multispectral_model,
    load_narrowband_model, BackboneSpec, MULTISPECTRAL_BAND_TAG,
};
use pmiris_core::nn::checkpoint::{read_checkpoint_header, CheckpointHeader};
use pmiris_core::plot::{distribution_boxplot, scatter_report};
use pmiris_core::preprocess::CropSpec;
use pmiris_core::protocol::{
    make_cross_dataset_split, make_sample_disjoint_folds, make_sample_disjoint_folds_paired,
    make_subject_disjoint_folds, make_subject_disjoint_folds_paired, paired_subset,
    verify_split, AuditReport, Scenario, SplitPlan,
};
use pmiris_core::synth::{load_inventory, write_stub_corpus, write_stub_inventory, StubCorpusSpec};
use pmiris_core::trainer::{
    checkpoint_file_name, fit, fit_fusion, predict, predict_fusion, read_predictions_csv,
    write_predictions_csv, Prediction, TargetTransform, TrainConfig,
};

use crate::config::{persist, ConfigFlags};

/// Loads a manifest, which runs every ingest check, then prints what the
/// corpus holds: one line per dataset × band cell plus the pairing yield.
pub fn validate(manifest_path: &Path) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    println!(
        "manifest {}: {} records pass validation",
        manifest_path.display(),
        manifest.records.len()
    );
    let summary = summarize(&manifest);
    for group in &summary.groups {
        println!(
            "  {} × {}: {} samples, {} subjects, PMI {:.1}-{:.1}h (median {:.1})",
            group.dataset_id,
            group.band.name(),
            group.pmi.n,
            group.subjects,
            group.pmi.min,
            group.pmi.max,
            group.pmi.median
        );
    }
    let pairing = pair_multispectral(&manifest, 0.0);
    println!(
        "  NIR/RGB pairing at zero PMI tolerance: {} pairs, {} records unpaired",
        pairing.pairs.len(),
        pairing.unpaired.len()
    );
    Ok(())
}

/// Freezes a split plan for the configured scenario and audits it before
/// anything downstream can see it.
pub fn split(manifest_path: &Path, out: &Path, flags: &ConfigFlags) -> Result<()> {
    let cfg = flags.resolve()?;
    let manifest = load_manifest(manifest_path)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let (plan, audit) = match cfg.scenario {
        Scenario::S3CrossDataset => {
            let (train_ds, test_ds) = match (&cfg.train_dataset, &cfg.test_dataset) {
                (Some(a), Some(b)) => (a.as_str(), b.as_str()),
                _ => bail!(
                    "the cross-dataset scenario trains on one dataset and tests on another; \
                     pass --train-dataset and --test-dataset"
                ),
            };
            let plan = make_cross_dataset_split(&manifest, train_ds, test_ds)?;
            let audit = verify_split(&plan, &manifest, None)?;
            (plan, audit)
        }
        scenario => {
            if cfg.band == Modality::Multispectral {
                let pairing = pair_multispectral(&manifest, cfg.pair_tolerance_hours);
                if pairing.pairs.is_empty() {
                    bail!(
                        "a multispectral split needs a pairable manifest, but no NIR/RGB \
                         pairs exist at a PMI tolerance of {}h",
                        cfg.pair_tolerance_hours
                    );
                }
                let paired = paired_subset(&manifest, &pairing.pairs);
                let plan = match scenario {
                    Scenario::S1SampleDisjoint => {
                        make_sample_disjoint_folds_paired(&paired, &pairing.pairs, cfg.k, cfg.seed)?
                    }
                    _ => make_subject_disjoint_folds_paired(
                        &paired,
                        &pairing.pairs,
                        cfg.k,
                        cfg.seed,
                    )?,
                };
                let audit = verify_split(&plan, &paired, Some(&pairing.pairs))?;
                (plan, audit)
            } else {
                let plan = match scenario {
                    Scenario::S1SampleDisjoint => {
                        make_sample_disjoint_folds(&manifest, cfg.k, cfg.seed)?
                    }
                    _ => make_subject_disjoint_folds(&manifest, cfg.k, cfg.seed)?,
                };
                let audit = verify_split(&plan, &manifest, None)?;
                (plan, audit)
            }
        }
    };
    print_audit(&audit)?;

    let path = out.join("split_plan.json");
    plan.save_json(&path)?;
    persist(&cfg, out, "split")?;
    println!(
        "split plan: {} ({}, {} folds)",
        path.display(),
        plan.scenario,
        plan.folds.len()
    );
    Ok(())
}

/// Plans class balancing for one fold's training half. Balancing exists to
/// counter the skew of field data in the cross-dataset protocol, so any
/// other scenario is refused.
pub fn balance(
    manifest_path: &Path,
    split_path: &Path,
    inventory: Option<&Path>,
    fold: usize,
    out: &Path,
    flags: &ConfigFlags,
) -> Result<()> {
    let mut cfg = flags.resolve()?;
    let manifest = load_manifest(manifest_path)?;
    let plan = SplitPlan::load_json(split_path)?;
    if plan.scenario != Scenario::S3CrossDataset {
        bail!(
            "class balancing applies to the cross-dataset scenario; this split plan is {}",
            plan.scenario
        );
    }
    cfg.scenario = plan.scenario;
    let audit = verify_split(&plan, &manifest, None)?;
    print_audit(&audit)?;

    let Some(fold_spec) = plan.folds.get(fold) else {
        bail!("fold {fold} is out of range: the plan has {} folds", plan.folds.len());
    };
    let records = records_for(&manifest, &fold_spec.train)?;

    let balancing_plan = match cfg.balancing {
        BalancingStrategy::None => bail!(
            "pick a strategy: --balancing real_upsample or --balancing synthetic_supplement"
        ),
        BalancingStrategy::RealUpsample => plan_real_upsampling(&records, cfg.seed)?,
        BalancingStrategy::SyntheticSupplement => {
            let Some(root) = inventory else {
                bail!("synthetic_supplement draws from a pre-generated inventory; pass --inventory");
            };
            let inv = load_inventory(root)?;
            plan_synthetic_supplement(&records, &inv, cfg.seed, &SupplementConfig::default())?
        }
    };

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("balancing_plan.json");
    balancing_plan.save_json(&path)?;
    persist(&cfg, out, "balance")?;
    let counts = balancing_plan.class_counts();
    println!(
        "balancing plan: {} ({}, {} per class, {} entries)",
        path.display(),
        balancing_plan.strategy,
        balancing_plan.target_count,
        counts.iter().sum::<usize>()
    );
    Ok(())
}

/// Trains one model per fold and writes checkpoints plus the loss history.
pub fn train(
    manifest_path: &Path,
    split_path: &Path,
    balance_path: Option<&Path>,
    out: &Path,
    flags: &ConfigFlags,
) -> Result<()> {
    let mut cfg = flags.resolve()?;
    let manifest = load_manifest(manifest_path)?;
    let plan = SplitPlan::load_json(split_path)?;
    cfg.scenario = plan.scenario;
    let crop = CropSpec::default();
    let checkpoints = out.join("checkpoints");
    std::fs::create_dir_all(&checkpoints)
        .with_context(|| format!("creating {}", checkpoints.display()))?;

    let mut fold_logs = Vec::new();
    match cfg.band.single_band() {
        Some(band) => {
            let balancing_plan = match balance_path {
                Some(path) => {
                    if plan.scenario != Scenario::S3CrossDataset {
                        bail!(
                            "--balance goes with a cross-dataset split plan; this one is {}",
                            plan.scenario
                        );
                    }
                    let loaded = BalancingPlan::load_json(path)?;
                    cfg.balancing = loaded.strategy;
                    Some(loaded)
                }
                None => None,
            };
            let audit = verify_split(&plan, &manifest, None)?;
            print_audit(&audit)?;
            for (fold_idx, fold) in plan.folds.iter().enumerate() {
                let mut train_set = match &balancing_plan {
                    Some(bplan) => Dataset::from_plan(&manifest, bplan, band, &crop)?,
                    None => Dataset::from_manifest(&manifest, &fold.train, band, &crop)?,
                };
                let mut model =
                    build_narrowband_model(&BackboneSpec::new(cfg.backbone, band), cfg.seed)?;
                if let Some(weights) = &cfg.pretrained_weights {
                    model.load_weights(weights)?;
                }
                let result = fit(&mut model, &mut train_set, &cfg.train)?;
                let name = checkpoint_file_name(plan.scenario, band, cfg.backbone, fold_idx);
                model.save(&checkpoints.join(&name), Some(train_echo(&cfg.train, &result.transform)))?;
                log_fold(&mut fold_logs, fold_idx, &name, train_set.len(), &result.history.epoch_losses, result.history.wall_seconds);
            }
        }
        None => {
            if balance_path.is_some() {
                bail!("class balancing is defined for single-band training; drop --balance for multispectral runs");
            }
            if cfg.pretrained_weights.is_some() {
                bail!("--pretrained-weights initializes a single-band extractor; it does not apply to multispectral training");
            }
            let pairing = pair_multispectral(&manifest, cfg.pair_tolerance_hours);
            if pairing.pairs.is_empty() {
                bail!(
                    "multispectral training needs a pairable manifest, but no NIR/RGB pairs \
                     exist at a PMI tolerance of {}h",
                    cfg.pair_tolerance_hours
                );
            }
            let paired = paired_subset(&manifest, &pairing.pairs);
            let audit = verify_split(&plan, &paired, Some(&pairing.pairs))?;
            print_audit(&audit)?;
            for (fold_idx, fold) in plan.folds.iter().enumerate() {
                let mut train_set =
                    PairedDataset::from_pairs(&manifest, &pairing.pairs, &fold.train, &crop)?;
                let mut model =
                    build_multispectral_model(cfg.backbone, cfg.fusion_hidden_dim, cfg.seed)?;
                let result = fit_fusion(&mut model, &mut train_set, &cfg.train)?;
                let name = fusion_checkpoint_file_name(plan.scenario, cfg.backbone, fold_idx);
                model.save(&checkpoints.join(&name), Some(train_echo(&cfg.train, &result.transform)))?;
                log_fold(&mut fold_logs, fold_idx, &name, train_set.len(), &result.history.epoch_losses, result.history.wall_seconds);
            }
        }
    }

    let history_path = out.join("train_history.json");
    let mut history = serde_json::to_string_pretty(&fold_logs).expect("history serializes");
    history.push('\n');
    std::fs::write(&history_path, history)
        .with_context(|| format!("writing {}", history_path.display()))?;
    persist(&cfg, out, "train")?;
    println!(
        "{} checkpoints in {} (history: {})",
        plan.folds.len(),
        checkpoints.display(),
        history_path.display()
    );
    Ok(())
}

/// Scores frozen checkpoints on their test folds, then writes per-fold
/// predictions and the aggregated metrics report.
pub fn evaluate(
    manifest_path: &Path,
    split_path: &Path,
    checkpoints: Option<&Path>,
    out: &Path,
    flags: &ConfigFlags,
) -> Result<()> {
    let mut cfg = flags.resolve()?;
    let manifest = load_manifest(manifest_path)?;
    let plan = SplitPlan::load_json(split_path)?;
    cfg.scenario = plan.scenario;
    let checkpoint_dir = checkpoints
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join("checkpoints"));
    let crop = CropSpec::default();
    let predictions_dir = out.join("predictions");
    std::fs::create_dir_all(&predictions_dir)
        .with_context(|| format!("creating {}", predictions_dir.display()))?;

    let mut folds: Vec<FoldMetrics> = Vec::new();
    match cfg.band.single_band() {
        Some(band) => {
            let audit = verify_split(&plan, &manifest, None)?;
            print_audit(&audit)?;
            for (fold_idx, fold) in plan.folds.iter().enumerate() {
                let name = checkpoint_file_name(plan.scenario, band, cfg.backbone, fold_idx);
                let path = checkpoint_dir.join(&name);
                let header = read_checkpoint_header(&path).with_context(|| {
                    format!("no readable checkpoint for fold {fold_idx}; looked for {}", path.display())
                })?;
                let transform = transform_from_header(&header, &path)?;
                let mut model = load_narrowband_model(&path)?;
                let mut test_set = Dataset::from_manifest(&manifest, &fold.test, band, &crop)?;
                let predictions =
                    predict(&mut model, &mut test_set, &transform, cfg.train.batch_size)?;
                score_fold(&predictions_dir, &name, fold_idx, &predictions, &mut folds)?;
            }
        }
        None => {
            let pairing = pair_multispectral(&manifest, cfg.pair_tolerance_hours);
            if pairing.pairs.is_empty() {
                bail!(
                    "multispectral evaluation needs a pairable manifest, but no NIR/RGB pairs \
                     exist at a PMI tolerance of {}h",
                    cfg.pair_tolerance_hours
                );
            }
            let paired = paired_subset(&manifest, &pairing.pairs);
            let audit = verify_split(&plan, &paired, Some(&pairing.pairs))?;
            print_audit(&audit)?;
            for (fold_idx, fold) in plan.folds.iter().enumerate() {
                let name = fusion_checkpoint_file_name(plan.scenario, cfg.backbone, fold_idx);
                let path = checkpoint_dir.join(&name);
                let header = read_checkpoint_header(&path).with_context(|| {
                    format!("no readable checkpoint for fold {fold_idx}; looked for {}", path.display())
                })?;
                let transform = transform_from_header(&header, &path)?;
                let mut model = load_multispectral_model(&path)?;
                let mut test_set =
                    PairedDataset::from_pairs(&manifest, &pairing.pairs, &fold.test, &crop)?;
                let predictions =
                    predict_fusion(&mut model, &mut test_set, &transform, cfg.train.batch_size)?;
                score_fold(&predictions_dir, &name, fold_idx, &predictions, &mut folds)?;
            }
        }
    }

    let report =
        MetricsReport::from_folds(plan.scenario, cfg.band, cfg.backbone, cfg.balancing, folds)?;
    let metrics_path = out.join("metrics.json");
    report.save_json(&metrics_path)?;
    persist(&cfg, out, "evaluate")?;
    println!(
        "metrics: {} (RMSE {:.2} ± {:.2}h, MAE {:.2} ± {:.2}h over {} folds)",
        metrics_path.display(),
        report.mean_rmse,
        report.std_rmse,
        report.mean_mae,
        report.std_mae,
        report.folds.len()
    );
    Ok(())
}

/// Lays evaluated runs side by side: a comparison table, one scatter per
/// run, and a shared absolute-error boxplot.
pub fn report(runs: &[PathBuf], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    struct Row {
        name: String,
        metrics: MetricsReport,
        predictions: usize,
        scatter_png: PathBuf,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut error_groups: Vec<(String, Vec<f64>)> = Vec::new();
    for run in runs {
        let name = run
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| run.display().to_string());
        if rows.iter().any(|r| r.name == name) {
            bail!("two run directories share the name `{name}`; rename one");
        }
        let metrics = MetricsReport::load_json(&run.join("metrics.json")).with_context(|| {
            format!("run {} has no readable metrics.json; evaluate it first", run.display())
        })?;
        let pooled = pooled_predictions(run)?;
        let scatter = scatter_report(&pooled, out, &format!("scatter_{name}"))?;
        error_groups.push((
            name.clone(),
            pooled
                .iter()
                .map(|p| (p.y_pred_hours - p.y_true_hours).abs())
                .collect(),
        ));
        rows.push(Row {
            name,
            metrics,
            predictions: pooled.len(),
            scatter_png: scatter.png,
        });
    }
    let boxplot = distribution_boxplot(&error_groups, out, "absolute_error")?;

    let mut body = String::from("# Run comparison\n\n");
    body.push_str("All values are hours of post-mortem interval; fold spread is one standard deviation.\n\n");
    body.push_str("| run | scenario | modality | backbone | balancing | folds | RMSE | MAE | predictions |\n");
    body.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for row in &rows {
        let m = &row.metrics;
        body.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {} |\n",
            row.name,
            m.scenario,
            m.band,
            m.backbone,
            m.balancing,
            m.folds.len(),
            m.mean_rmse,
            m.std_rmse,
            m.mean_mae,
            m.std_mae,
            row.predictions
        ));
    }
    body.push_str("\nPredicted-versus-true scatter, one per run:\n\n");
    for row in &rows {
        body.push_str(&format!(
            "- {}: {}\n",
            row.name,
            row.scatter_png.file_name().unwrap_or_default().to_string_lossy()
        ));
    }
    body.push_str(&format!(
        "\nAbsolute-error distribution across runs: {}\n",
        boxplot.png.file_name().unwrap_or_default().to_string_lossy()
    ));
    let path = out.join("report.md");
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("report: {} ({} runs)", path.display(), rows.len());
    Ok(())
}

/// Generates a labeled stub corpus: images, manifest, and nothing else.
pub fn stub_corpus(
    out: &Path,
    band: &str,
    per_class: usize,
    samples_per_subject: usize,
    dataset_id: &str,
    seed: u64,
) -> Result<()> {
    let band = parse_band(band)?;
    let spec = StubCorpusSpec::uniform(band, per_class, samples_per_subject, dataset_id, seed);
    let manifest = write_stub_corpus(out, &spec)?;
    println!(
        "stub corpus: {} samples ({} per class) -> {}",
        manifest.records.len(),
        per_class,
        manifest.source_path.display()
    );
    Ok(())
}

/// Generates a class-indexed synthetic inventory for balancing runs.
pub fn stub_inventory(out: &Path, bands: &str, per_class: usize, seed: u64) -> Result<()> {
    let bands: Vec<Band> = bands
        .split(',')
        .map(|s| parse_band(s.trim()))
        .collect::<Result<_>>()?;
    if bands.is_empty() {
        bail!("--bands needs at least one of nir, rgb");
    }
    write_stub_inventory(out, &bands, per_class, seed)?;
    println!(
        "synthetic inventory: {} image(s) across {} band(s) -> {}",
        bands.len() * usize::from(pmiris_core::balance::NUM_CLASSES) * per_class,
        bands.len(),
        out.display()
    );
    Ok(())
}

fn parse_band(s: &str) -> Result<Band> {
    s.to_ascii_uppercase()
        .parse::<Band>()
        .map_err(|e| anyhow!(e))
}

/// Prints every audit check and refuses to continue past a failure.
fn print_audit(audit: &AuditReport) -> Result<()> {
    for check in &audit.checks {
        if check.passed {
            println!("  audit {}: ok", check.name);
        } else {
            println!("  audit {}: FAIL ({})", check.name, check.detail);
        }
    }
    if !audit.all_passed() {
        let names: Vec<&str> = audit.failures().iter().map(|c| c.name.as_str()).collect();
        bail!("split audit failed: {}", names.join(", "));
    }
    Ok(())
}

fn records_for(manifest: &Manifest, ids: &[String]) -> Result<Vec<SampleRecord>> {
    ids.iter()
        .map(|id| {
            manifest
                .record_by_id(id)
                .cloned()
                .ok_or_else(|| anyhow!("split plan references unknown sample `{id}`"))
        })
        .collect()
}

/// Training settings and target transform, echoed into the checkpoint so
/// evaluation can undo the transform without the training run present.
fn train_echo(config: &TrainConfig, transform: &TargetTransform) -> serde_json::Value {
    json!({
        "train": config,
        "target_transform": { "mean": transform.mean, "std": transform.std },
    })
}

fn transform_from_header(header: &CheckpointHeader, path: &Path) -> Result<TargetTransform> {
    let missing = || {
        anyhow!(
            "checkpoint {} carries no target transform echo; it was not written by `pmiris train`",
            path.display()
        )
    };
    let echo = header.train_config.as_ref().ok_or_else(missing)?;
    let transform = echo.get("target_transform").ok_or_else(missing)?;
    let mean = transform.get("mean").and_then(|v| v.as_f64()).ok_or_else(missing)?;
    let std = transform.get("std").and_then(|v| v.as_f64()).ok_or_else(missing)?;
    Ok(TargetTransform { mean, std })
}

fn fusion_checkpoint_file_name(scenario: Scenario, backbone: pmiris_core::model::BackboneName, fold: usize) -> String {
    format!(
        "{}_{}_{}_{}.ckpt",
        scenario.short(),
        MULTISPECTRAL_BAND_TAG,
        backbone.as_str(),
        fold
    )
}

fn log_fold(
    logs: &mut Vec<serde_json::Value>,
    fold: usize,
    checkpoint: &str,
    train_size: usize,
    epoch_losses: &[f64],
    wall_seconds: f64,
) {
    let final_loss = epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "  fold {fold}: {} training items, {} epochs, final loss {final_loss:.6}, {wall_seconds:.1}s -> {checkpoint}",
        train_size,
        epoch_losses.len()
    );
    logs.push(json!({
        "fold": fold,
        "checkpoint": checkpoint,
        "train_size": train_size,
        "epoch_losses": epoch_losses,
        "wall_seconds": wall_seconds,
    }));
}

fn score_fold(
    predictions_dir: &Path,
    checkpoint_name: &str,
    fold: usize,
    predictions: &[Prediction],
    folds: &mut Vec<FoldMetrics>,
) -> Result<()> {
    let stem = checkpoint_name.strip_suffix(".ckpt").unwrap_or(checkpoint_name);
    let csv_path = predictions_dir.join(format!("{stem}.csv"));
    write_predictions_csv(&csv_path, predictions)?;
    let metrics = fold_metrics(predictions)?;
    println!(
        "  fold {fold}: RMSE {:.2}h, MAE {:.2}h over {} predictions -> {}",
        metrics.rmse,
        metrics.mae,
        metrics.n,
        csv_path.display()
    );
    folds.push(metrics);
    Ok(())
}

/// Every prediction CSV under `run/predictions`, pooled in file order.
fn pooled_predictions(run: &Path) -> Result<Vec<Prediction>> {
    let dir = run.join("predictions");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("run {} has no predictions directory", run.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    let mut pooled = Vec::new();
    for file in &files {
        pooled.extend(read_predictions_csv(file)?);
    }
    if pooled.is_empty() {
        bail!("run {} holds no predictions; evaluate it first", run.display());
    }
    Ok(pooled)
}
