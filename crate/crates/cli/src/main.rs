use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sra_core::config::{Arm, RunConfig};
use sra_core::corpus::{save_dataset, Split};
use sra_core::error::ErrorKind;
use sra_core::experiment::{compare_runs, inspect, Pipeline};
use sra_core::retrieval::build_sparse_index;
use sra_core::synthetic::{generate, SyntheticSpec};
use sra_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sra", version, about = "Selective retrieval-augmentation for long-tail text classification")]
struct Cli {
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (or file, for `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// `key=value` config override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label frequencies, buckets and length percentiles.
    Analyze,
    /// Build and save the sparse index over the train split.
    Index,
    /// Write augmented splits for the configured arm.
    Augment {
        #[arg(long)]
        arm: Option<Arm>,
    },
    /// Train and evaluate one arm.
    Run {
        #[arg(long)]
        arm: Option<Arm>,
    },
    /// Evaluate the selective arm at several cutoffs.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.5,0.8,1.0")]
        cutoffs: Vec<f64>,
    },
    /// Compare run B against run A on the shared test split.
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Show one sample with its retrieved clause and predictions.
    Inspect {
        run: PathBuf,
        id: String,
        /// Second run whose prediction is shown alongside.
        #[arg(long)]
        other: Option<PathBuf>,
    },
    /// Write the synthetic long-tail corpus as JSONL.
    Synth {
        #[arg(long, default_value_t = SyntheticSpec::default().seed)]
        corpus_seed: u64,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Load => 3,
        ErrorKind::Stage => 4,
        ErrorKind::Io => 5,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        config.set(o)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --out".into()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze => {
            let pipeline = Pipeline::prepare(load_config(cli)?)?;
            let report = pipeline.analyze()?;
            if let Some(dir) = &cli.out {
                write_json(&dir.join("analyze.json"), &report)?;
            }
            print_json(&report)
        }
        Command::Index => {
            let pipeline = Pipeline::prepare(load_config(cli)?)?;
            let out = out_dir(cli)?;
            let train: Vec<(&str, &str)> = pipeline
                .dataset()
                .split(Split::Train)
                .map(|s| (s.id.as_str(), s.text.as_str()))
                .collect();
            let index = build_sparse_index(&train, pipeline.config().tfidf_params())?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            index.save(out.join("index.json"))?;
            eprintln!(
                "indexed {} documents, {} terms, {} with empty vectors",
                index.len(),
                index.vectorizer().num_terms(),
                index.zero_vector_docs().len()
            );
            Ok(())
        }
        Command::Augment { arm } => {
            let mut config = load_config(cli)?;
            if let Some(arm) = arm {
                config.arm = *arm;
            }
            let out = out_dir(cli)?;
            let pipeline = Pipeline::prepare(config)?;
            let eligibility = pipeline.eligibility(pipeline.config().arm)?;
            let splits = pipeline.augment(&eligibility)?;
            splits.write(out, &eligibility, pipeline.config())?;
            print_json(&splits.coverage)
        }
        Command::Run { arm } => {
            let mut config = load_config(cli)?;
            if let Some(arm) = arm {
                config.arm = *arm;
            }
            let arm = config.arm;
            let out = out_dir(cli)?;
            let outcome = Pipeline::prepare(config)?.run_arm(arm)?;
            outcome.write(out)?;
            let r = &outcome.report;
            eprintln!(
                "{arm:?}: test micro-F1 {:.4}, macro-F1 {:.4}, coverage {:.4}, best epoch {}",
                r.test.micro_f1, r.test.macro_f1, r.pooled_coverage, r.best_epoch
            );
            Ok(())
        }
        Command::Sweep { cutoffs } => {
            let out = out_dir(cli)?;
            let pipeline = Pipeline::prepare(load_config(cli)?)?;
            let sweep = pipeline.sweep(cutoffs)?;
            for (row, run) in sweep.report.rows.iter().zip(&sweep.runs) {
                run.write(&out.join(format!("cutoff-{}", row.cutoff)))?;
            }
            sweep.report.write(out)?;
            print!("{}", sweep.report.to_csv(Split::Test));
            eprintln!("selected cutoff {}", sweep.report.selected_cutoff);
            Ok(())
        }
        Command::Compare { run_a, run_b } => {
            let config = load_config(cli)?;
            let report = compare_runs(run_a, run_b, &config.compare_params())?;
            if let Some(dir) = &cli.out {
                write_json(&dir.join("compare.json"), &report)?;
            }
            print_json(&report)
        }
        Command::Inspect { run, id, other } => {
            print!("{}", inspect(run, id, other.as_deref())?);
            Ok(())
        }
        Command::Synth { corpus_seed } => {
            let out = cli
                .out
                .as_deref()
                .ok_or_else(|| Error::Config("synth needs --out <file.jsonl>".into()))?;
            let spec = SyntheticSpec {
                seed: *corpus_seed,
                ..SyntheticSpec::default()
            };
            save_dataset(&generate(&spec)?, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
