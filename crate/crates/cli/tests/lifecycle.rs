//! Drives the compiled binary through the full study lifecycle on a
//! desk-scale stub corpus, and checks the refusals that keep a run from
//! drifting off protocol: a cross-dataset split of one dataset against
//! itself, balancing outside the cross-dataset scenario, and a
//! multispectral split over a manifest with nothing to pair.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pmiris_core::manifest::{load_manifest, Manifest};

fn pmiris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmiris"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = pmiris(args);
    assert!(
        out.status.success(),
        "pmiris {args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_err(args: &[&str]) -> String {
    let out = pmiris(args);
    assert!(
        !out.status.success(),
        "pmiris {args:?} unexpectedly succeeded\nstdout:\n{}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stub_corpus(dir: &Path, dataset_id: &str, per_class: usize, seed: u64) -> PathBuf {
    run_ok(&[
        "synth-stub",
        "corpus",
        "--out",
        dir.to_str().unwrap(),
        "--per-class",
        &per_class.to_string(),
        "--samples-per-subject",
        "1",
        "--dataset-id",
        dataset_id,
        "--seed",
        &seed.to_string(),
    ]);
    dir.join("manifest.csv")
}

#[test]
fn single_band_lifecycle_runs_end_to_end() {
    let scratch = tempfile::tempdir().unwrap();
    let manifest = stub_corpus(&scratch.path().join("corpus"), "deskset", 2, 5);
    let manifest = manifest.to_str().unwrap();

    let stdout = run_ok(&["validate", "--manifest", manifest]);
    assert!(stdout.contains("36 records"), "validate output:\n{stdout}");

    let run = scratch.path().join("run_s2");
    let run_str = run.to_str().unwrap().to_owned();
    run_ok(&[
        "split",
        "--manifest",
        manifest,
        "--out",
        &run_str,
        "--scenario",
        "s2",
        "--k",
        "2",
        "--seed",
        "9",
    ]);
    let split = run.join("split_plan.json");
    assert!(split.exists());
    assert!(run.join("resolved_split.toml").exists());
    let split_str = split.to_str().unwrap().to_owned();

    run_ok(&[
        "train",
        "--manifest",
        manifest,
        "--split",
        &split_str,
        "--out",
        &run_str,
        "--epochs",
        "2",
        "--learning-rate",
        "5e-3",
        "--seed",
        "9",
    ]);
    assert!(run.join("checkpoints/S2_NIR_toy_cnn_0.ckpt").exists());
    assert!(run.join("checkpoints/S2_NIR_toy_cnn_1.ckpt").exists());
    assert!(run.join("train_history.json").exists());

    run_ok(&["evaluate", "--manifest", manifest, "--split", &split_str, "--out", &run_str]);
    let metrics = run.join("metrics.json");
    assert!(metrics.exists());
    assert!(run.join("predictions/S2_NIR_toy_cnn_0.csv").exists());
    assert!(run.join("predictions/S2_NIR_toy_cnn_1.csv").exists());

    // Scoring frozen checkpoints is deterministic: a repeat evaluation must
    // reproduce the metrics file byte for byte.
    let first = std::fs::read(&metrics).unwrap();
    run_ok(&["evaluate", "--manifest", manifest, "--split", &split_str, "--out", &run_str]);
    let second = std::fs::read(&metrics).unwrap();
    assert_eq!(first, second, "repeat evaluation changed metrics.json");

    let report_dir = scratch.path().join("report");
    run_ok(&["report", "--run", &run_str, "--out", report_dir.to_str().unwrap()]);
    let report_md = std::fs::read_to_string(report_dir.join("report.md")).unwrap();
    assert!(report_md.contains("run_s2"), "report:\n{report_md}");
    assert!(report_dir.join("scatter_run_s2.png").exists());
    assert!(report_dir.join("absolute_error.png").exists());
}

#[test]
fn cross_dataset_balancing_flows_through_plans() {
    let scratch = tempfile::tempdir().unwrap();
    let field = load_manifest(&stub_corpus(&scratch.path().join("field"), "fieldset", 2, 5)).unwrap();
    let lab = load_manifest(&stub_corpus(&scratch.path().join("lab"), "labset", 1, 6)).unwrap();

    // One manifest spanning both datasets, with image paths made absolute
    // so the merged file can live anywhere.
    let merged_path = scratch.path().join("merged.csv");
    let mut records = Vec::new();
    for source in [&field, &lab] {
        for record in &source.records {
            let mut record = record.clone();
            record.image_path = source
                .resolve_image_path(&record)
                .to_string_lossy()
                .into_owned();
            records.push(record);
        }
    }
    Manifest {
        records,
        source_path: merged_path.clone(),
    }
    .save_csv(&merged_path)
    .unwrap();
    let manifest = merged_path.to_str().unwrap();

    let run = scratch.path().join("run_s3");
    let run_str = run.to_str().unwrap().to_owned();
    run_ok(&[
        "split",
        "--manifest",
        manifest,
        "--out",
        &run_str,
        "--scenario",
        "s3",
        "--train-dataset",
        "fieldset",
        "--test-dataset",
        "labset",
    ]);
    let split = run.join("split_plan.json");
    let split_str = split.to_str().unwrap().to_owned();

    let inventory = scratch.path().join("inventory");
    run_ok(&[
        "synth-stub",
        "inventory",
        "--out",
        inventory.to_str().unwrap(),
        "--bands",
        "nir",
        "--per-class",
        "3",
        "--seed",
        "7",
    ]);

    run_ok(&[
        "balance",
        "--manifest",
        manifest,
        "--split",
        &split_str,
        "--inventory",
        inventory.to_str().unwrap(),
        "--balancing",
        "synthetic_supplement",
        "--out",
        &run_str,
    ]);
    let balance = run.join("balancing_plan.json");
    assert!(balance.exists());
    let balance_str = balance.to_str().unwrap().to_owned();

    run_ok(&[
        "train",
        "--manifest",
        manifest,
        "--split",
        &split_str,
        "--balance",
        &balance_str,
        "--out",
        &run_str,
        "--epochs",
        "1",
    ]);
    assert!(run.join("checkpoints/S3_NIR_toy_cnn_0.ckpt").exists());

    run_ok(&[
        "evaluate",
        "--manifest",
        manifest,
        "--split",
        &split_str,
        "--out",
        &run_str,
        "--balancing",
        "synthetic_supplement",
    ]);
    let metrics = std::fs::read_to_string(run.join("metrics.json")).unwrap();
    assert!(metrics.contains("\"synthetic_supplement\""), "metrics:\n{metrics}");
    assert!(metrics.contains("\"S3_cross_dataset\""), "metrics:\n{metrics}");
}

#[test]
fn cross_dataset_split_refuses_one_dataset_twice() {
    let scratch = tempfile::tempdir().unwrap();
    let manifest = stub_corpus(&scratch.path().join("corpus"), "fieldset", 1, 3);
    let stderr = run_err(&[
        "split",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scratch.path().join("run").to_str().unwrap(),
        "--scenario",
        "s3",
        "--train-dataset",
        "fieldset",
        "--test-dataset",
        "fieldset",
    ]);
    assert!(stderr.contains("distinct"), "stderr:\n{stderr}");
}

#[test]
fn balance_refuses_subject_disjoint_plans() {
    let scratch = tempfile::tempdir().unwrap();
    let manifest = stub_corpus(&scratch.path().join("corpus"), "deskset", 1, 4);
    let manifest = manifest.to_str().unwrap();
    let run = scratch.path().join("run");
    let run_str = run.to_str().unwrap().to_owned();
    run_ok(&[
        "split", "--manifest", manifest, "--out", &run_str, "--scenario", "s2", "--k", "2",
    ]);
    let stderr = run_err(&[
        "balance",
        "--manifest",
        manifest,
        "--split",
        run.join("split_plan.json").to_str().unwrap(),
        "--balancing",
        "real_upsample",
        "--out",
        &run_str,
    ]);
    assert!(stderr.contains("cross-dataset"), "stderr:\n{stderr}");
}

#[test]
fn multispectral_split_needs_pairable_manifest() {
    let scratch = tempfile::tempdir().unwrap();
    let manifest = stub_corpus(&scratch.path().join("corpus"), "deskset", 1, 8);
    let stderr = run_err(&[
        "split",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scratch.path().join("run").to_str().unwrap(),
        "--band",
        "multispectral",
    ]);
    assert!(stderr.contains("pairable"), "stderr:\n{stderr}");
}
