use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use indzsl_core::dataset::generate_synthetic;
use indzsl_core::eval::Mode;

use crate::config::{resolve, ModeSelection, Profile, RunConfig};
use crate::formats::{import_csv, read_semantics, save_dataset};
use crate::pipeline::{cmd_refine_semantics, cmd_run, cmd_sweep, thread_budget, RunReport, SweepParam};

#[derive(Debug, Parser)]
#[command(name = "indzsl", version, about = "Inductive VAE feature synthesis for zero-shot learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove the dominant shared direction from a semantic matrix.
    RefineSemantics {
        /// Semantic vector file.
        #[arg(long)]
        semantics: PathBuf,
        #[arg(long, default_value_t = 1)]
        removed_components: usize,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Write the synthetic dataset as feature, semantics and split files.
    Generate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train, synthesize and evaluate.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// One run per value of a hyperparameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated grid.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Convert a `label,split,f0,f1,...` CSV into a feature file.
    ImportCsv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub n_syn: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub normalize_features: Option<bool>,
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeSelection>,
}

impl RunArgs {
    /// Flags as a TOML overlay, only for the ones given.
    pub fn overlay(&self) -> anyhow::Result<toml::Table> {
        let mut t = toml::Table::new();
        let mut put = |key: &str, value: toml::Value| {
            t.insert(key.to_string(), value);
        };
        if let Some(v) = self.seed {
            put("seed", toml::Value::Integer(i64::try_from(v).context("seed exceeds i64::MAX")?));
        }
        if let Some(v) = self.lambda {
            put("lambda", toml::Value::Float(v));
        }
        if let Some(v) = self.top_k {
            put("top_k", toml::Value::Integer(v as i64));
        }
        if let Some(v) = self.n_syn {
            put("n_syn", toml::Value::Integer(v as i64));
        }
        if let Some(v) = self.epochs {
            put("epochs", toml::Value::Integer(v as i64));
        }
        if let Some(v) = self.lr {
            put("learning_rate", toml::Value::Float(v));
        }
        if let Some(v) = self.latent_dim {
            put("latent_dim", toml::Value::Integer(v as i64));
        }
        if let Some(v) = self.normalize_features {
            put("normalize_features", toml::Value::Boolean(v));
        }
        if let Some(v) = &self.outdir {
            put("outdir", toml::Value::String(v.display().to_string()));
        }
        if let Some(v) = self.mode {
            put("mode", toml::Value::try_from(v)?);
        }
        Ok(t)
    }

    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        resolve(self.profile, self.config.as_deref(), self.overlay()?)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{:.1}", 100.0 * x))
}

fn print_report(report: &RunReport) {
    for r in &report.reports {
        match r.mode {
            Mode::Czsl => println!("czsl acc={}%", pct(r.acc)),
            Mode::Gzsl => println!("gzsl U={}% S={}% H={}%", pct(r.unseen), pct(r.seen), pct(r.harmonic)),
        }
    }
    if let Some(c) = report.ceiling {
        println!("ceiling acc={}%", pct(Some(c)));
    }
}

fn generate(config: &RunConfig) -> anyhow::Result<()> {
    anyhow::ensure!(config.uses_synthetic(), "generate only writes the synthetic dataset");
    let data = generate_synthetic(&config.synthetic_spec())?;
    let out = &config.outdir;
    save_dataset(
        &data.splits,
        &data.semantics,
        &out.join("features.bin"),
        &out.join("semantics.bin"),
        &out.join("splits.tsv"),
    )?;
    println!("wrote dataset to {}", out.display());
    Ok(())
}

fn refine(semantics: &Path, removed_components: usize, outdir: &Path) -> anyhow::Result<()> {
    let sem = read_semantics(semantics)?;
    let config = RunConfig {
        removed_components,
        ..RunConfig::default()
    };
    let out = cmd_refine_semantics(sem, &config, outdir)?;
    println!(
        "mean |cos| off-diagonal: {:.4} -> {:.4}",
        out.summary.mean_offdiag_before, out.summary.mean_offdiag_after
    );
    Ok(())
}

/// Executes a parsed command.
pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::RefineSemantics {
            semantics,
            removed_components,
            outdir,
        } => refine(&semantics, removed_components, &outdir),
        Command::Generate { run } => generate(&run.resolve()?),
        Command::Run { run } => {
            let config = run.resolve()?;
            let threads = thread_budget();
            let out = cmd_run(&config, threads)?;
            print_report(&out.report);
            println!("config_hash={} outdir={}", out.report.config_hash, config.outdir.display());
            Ok(())
        }
        Command::Sweep { run, param, values } => {
            let config = run.resolve()?;
            let rows = cmd_sweep(&config, param, &values, thread_budget())?;
            for row in &rows {
                match &row.outcome {
                    Ok(report) => {
                        println!("{}={}", param.key(), row.value);
                        print_report(report);
                    }
                    Err(e) => println!("{}={} failed: {e}", param.key(), row.value),
                }
            }
            println!("wrote {}", config.outdir.join("sweep.tsv").display());
            Ok(())
        }
        Command::ImportCsv { input, output } => {
            let file = import_csv(&input, &output)?;
            println!("imported {} samples of dimension {} into {}", file.len(), file.dim, output.display());
            Ok(())
        }
    }
}
