//! `pmiris`: drive the PMI estimation pipeline from the shell. The
//! lifecycle mirrors how a study actually proceeds: validate the collected
//! manifest, freeze a split plan, optionally plan class balancing, train
//! per-fold models, score them, and lay the runs side by side in a report.
//! Every artifact lands in the run directory together with an echo of the
//! resolved configuration, so a run can be audited or repeated later.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::ConfigFlags;

#[derive(Parser)]
#[command(
    name = "pmiris",
    about = "Post-mortem interval estimation from forensic iris images",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArg {
    /// Sample manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct OutArg {
    /// Run directory for artifacts and the resolved configuration.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load a manifest, check its invariants, and print what it holds.
    Validate {
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Freeze a cross-validation split plan as JSON.
    Split {
        #[command(flatten)]
        manifest: ManifestArg,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Plan class balancing for one fold's training half.
    Balance {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Split plan JSON produced by `split`.
        #[arg(long)]
        split: PathBuf,
        /// Synthetic inventory directory (required for synthetic_supplement).
        #[arg(long)]
        inventory: Option<PathBuf>,
        /// Fold whose training half is balanced.
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Train one model per fold and write checkpoints plus loss history.
    Train {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Split plan JSON produced by `split`.
        #[arg(long)]
        split: PathBuf,
        /// Balancing plan JSON produced by `balance`; applies to training
        /// data only.
        #[arg(long)]
        balance: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Score checkpoints on their test folds; write predictions and metrics.
    Evaluate {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Split plan JSON produced by `split`.
        #[arg(long)]
        split: PathBuf,
        /// Directory holding the checkpoints (defaults to <out>/checkpoints).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Lay evaluated runs side by side: comparison table plus plots.
    Report {
        /// Run directories that contain metrics.json and predictions/.
        #[arg(long, required = true, num_args = 1..)]
        run: Vec<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Generate procedural stand-in data: a labeled corpus or a synthetic
    /// inventory.
    SynthStub {
        #[command(subcommand)]
        what: StubCommand,
    },
}

#[derive(Subcommand)]
enum StubCommand {
    /// A labeled image corpus with a manifest, for desk-scale experiments.
    Corpus {
        #[command(flatten)]
        out: OutArg,
        /// Acquisition band of the generated images.
        #[arg(long, default_value = "nir")]
        band: String,
        /// Samples per PMI class.
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// Samples sharing one synthetic subject.
        #[arg(long, default_value_t = 4)]
        samples_per_subject: usize,
        /// Dataset id stamped on every record.
        #[arg(long, default_value = "stubset")]
        dataset_id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// A class-indexed synthetic image inventory for balancing.
    Inventory {
        #[command(flatten)]
        out: OutArg,
        /// Comma-separated bands to cover.
        #[arg(long, default_value = "nir")]
        bands: String,
        /// Images per band and class.
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { manifest } => commands::validate(&manifest.manifest),
        Command::Split { manifest, out, flags } => {
            commands::split(&manifest.manifest, &out.out, &flags)
        }
        Command::Balance { manifest, split, inventory, fold, out, flags } => {
            commands::balance(&manifest.manifest, &split, inventory.as_deref(), fold, &out.out, &flags)
        }
        Command::Train { manifest, split, balance, out, flags } => {
            commands::train(&manifest.manifest, &split, balance.as_deref(), &out.out, &flags)
        }
        Command::Evaluate { manifest, split, checkpoints, out, flags } => commands::evaluate(
            &manifest.manifest,
            &split,
            checkpoints.as_deref(),
            &out.out,
            &flags,
        ),
        Command::Report { run, out } => commands::report(&run, &out.out),
        Command::SynthStub { what } => match what {
            StubCommand::Corpus {
                out,
                band,
                per_class,
                samples_per_subject,
                dataset_id,
                seed,
            } => commands::stub_corpus(&out.out, &band, per_class, samples_per_subject, &dataset_id, seed),
            StubCommand::Inventory { out, bands, per_class, seed } => {
                commands::stub_inventory(&out.out, &bands, per_class, seed)
            }
        },
    }
}
