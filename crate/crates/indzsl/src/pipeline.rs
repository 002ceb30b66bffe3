//! refine → index → train → synthesize → classify → evaluate, plus the
//! artifacts each run leaves in its output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use indzsl_core::dataset::{generate_synthetic, ClassPools, DatasetSplits};
use indzsl_core::eval::{
    build_training_set, evaluate, mode_classes, per_class_top1, train_classifier, EvalReport, Mode,
};
use indzsl_core::ivae::{synthesize_class, train, LossBreakdown, SynthesizedClass, SynthesizedSet, TrainOutput};
use indzsl_core::nnkernel::Matrix;
use indzsl_core::semantics::{build_referent_index, similarity_report, ClassSemanticMatrix, ReferentIndex};
use indzsl_core::ClassId;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::StageError;
use crate::formats::{
    load_dataset, write_checkpoint, write_features, write_losses_csv, write_similarity_csv, Checkpoint, FeatureFile,
};

/// Environment variable capping the worker threads used for synthesis.
pub const THREADS_ENV: &str = "INDZSL_THREADS";

/// Worker count from `INDZSL_THREADS`, else the available parallelism.
pub fn thread_budget() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub mean_offdiag_before: f64,
    pub mean_offdiag_after: f64,
}

/// Everything `report.json` holds. Contains no timing or host information,
/// so reruns with the same configuration produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub reports: Vec<EvalReport>,
    /// CZSL accuracy of a classifier trained on real held-out unseen samples.
    pub ceiling: Option<f64>,
    pub initial_loss: Option<LossBreakdown>,
    pub final_loss: Option<LossBreakdown>,
    pub similarity: SimilaritySummary,
}

impl RunReport {
    pub fn report(&self, mode: Mode) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.mode == mode)
    }
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub splits: DatasetSplits,
    pub semantics: ClassSemanticMatrix,
    pub similarity_before: Matrix,
    pub similarity_after: Matrix,
    pub index: ReferentIndex,
    pub training: TrainOutput,
    pub synthesized: SynthesizedSet,
    pub report: RunReport,
    /// Wall-clock milliseconds per stage, in execution order.
    pub timings: Vec<(&'static str, f64)>,
}

struct Stages {
    timings: Vec<(&'static str, f64)>,
}

impl Stages {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> anyhow::Result<T>) -> Result<T, StageError> {
        let start = Instant::now();
        let out = f().map_err(|source| StageError { stage, source })?;
        self.timings.push((stage, start.elapsed().as_secs_f64() * 1e3));
        Ok(out)
    }
}

/// Loads the configured dataset, or generates the synthetic one.
pub fn load_data(config: &RunConfig) -> anyhow::Result<(DatasetSplits, ClassSemanticMatrix)> {
    let (mut splits, semantics) = match (&config.features, &config.semantics, &config.splits) {
        (Some(f), Some(s), Some(p)) => load_dataset(f, s, p)?,
        _ => {
            let data = generate_synthetic(&config.synthetic_spec())?;
            (data.splits, data.semantics)
        }
    };
    if config.normalize_features {
        splits.normalize_features();
    }
    splits.validate_semantics(&semantics)?;
    Ok((splits, semantics))
}

/// Synthesizes every unseen class, sharding classes over up to `threads`
/// scoped threads. Each class draws from its own stream, so the output does
/// not depend on the thread count.
pub fn synthesize_sharded(
    training: &TrainOutput,
    index: &ReferentIndex,
    pools: &ClassPools<'_>,
    semantics: &ClassSemanticMatrix,
    classes: &[ClassId],
    config: &RunConfig,
    threads: usize,
) -> anyhow::Result<SynthesizedSet> {
    let threads = threads.clamp(1, classes.len().max(1));
    let job = |c: ClassId| {
        synthesize_class(
            &training.params,
            index,
            pools,
            semantics,
            c,
            config.n_syn,
            config.seed,
            config.normalize_features,
        )
    };
    let mut done: BTreeMap<ClassId, SynthesizedClass> = BTreeMap::new();
    if threads == 1 {
        for &c in classes {
            done.insert(c, job(c)?);
        }
    } else {
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let job = &job;
                    scope.spawn(move || {
                        classes
                            .iter()
                            .skip(t)
                            .step_by(threads)
                            .map(|&c| job(c))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("synthesis worker panicked"))
                .collect()
        });
        for r in results {
            let class = r?;
            done.insert(class.class_id, class);
        }
    }
    Ok(SynthesizedSet {
        classes: classes.iter().map(|c| done.remove(c).expect("every class synthesized")).collect(),
    })
}

/// Runs every stage in memory.
pub fn run_pipeline(config: &RunConfig, threads: usize) -> Result<RunArtifacts, StageError> {
    let mut st = Stages { timings: Vec::new() };
    let (splits, mut semantics) = st.run("load", || load_data(config))?;

    let (before, after) = st.run("refine", || {
        let before = similarity_report(semantics.raw())?;
        semantics.refine(&config.cdp())?;
        let after = similarity_report(semantics.active())?;
        Ok((before, after))
    })?;

    let index = st.run("index", || {
        Ok(build_referent_index(
            &semantics,
            &splits.all_classes(),
            &splits.seen_classes,
            config.top_k,
            config.exclude_self,
        )?)
    })?;

    let training = st.run("train", || Ok(train(&splits, &semantics, &index, &config.training())?))?;

    let synthesized = st.run("synthesize", || {
        let pools = ClassPools::from_partition(&splits.seen_train)?;
        synthesize_sharded(&training, &index, &pools, &semantics, &splits.unseen_classes, config, threads)
    })?;

    let reports = st.run("classify", || {
        let clf_config = config.classifier();
        config
            .mode
            .modes()
            .iter()
            .map(|&mode| {
                let data = build_training_set(&splits, &synthesized, mode)?;
                let clf = train_classifier(&data, &mode_classes(&splits, mode), mode, &clf_config)
                    .with_context(|| format!("{} classifier", mode.as_str()))?;
                Ok(evaluate(&clf, &splits, &synthesized, mode)?)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;

    let ceiling = st.run("ceiling", || real_feature_ceiling(&splits, config))?;

    let report = RunReport {
        seed: config.seed,
        config_hash: config.hash(),
        reports,
        ceiling,
        initial_loss: (config.epochs > 0).then_some(training.initial),
        final_loss: training.history.last().map(|h| h.loss),
        similarity: SimilaritySummary {
            mean_offdiag_before: before.mean_offdiag_abs,
            mean_offdiag_after: after.mean_offdiag_abs,
        },
    };
    Ok(RunArtifacts {
        config: config.clone(),
        splits,
        semantics,
        similarity_before: before.cosine,
        similarity_after: after.cosine,
        index,
        training,
        synthesized,
        report,
        timings: st.timings,
    })
}

/// Accuracy on `unseen_test` of a classifier trained on the real held-out
/// unseen samples; `None` when some unseen class has none held out.
pub fn real_feature_ceiling(splits: &DatasetSplits, config: &RunConfig) -> anyhow::Result<Option<f64>> {
    let held = &splits.unseen_heldout;
    let covered = splits.unseen_classes.iter().all(|c| held.labels.contains(c));
    if !covered || splits.unseen_test.is_empty() {
        return Ok(None);
    }
    let clf = train_classifier(held, &splits.unseen_classes, Mode::Czsl, &config.classifier())?;
    Ok(Some(per_class_top1(&clf, &splits.unseen_test)?.mean))
}

pub const TSV_HEADER: &str = "mode\tacc_or_u\ts\th\tseed\tconfig_hash\tstatus";

/// One TSV row per evaluated mode, accuracies as fractions.
pub fn tsv_rows(report: &RunReport) -> String {
    let mut out = String::new();
    for r in &report.reports {
        let (a, s, h) = match r.mode {
            Mode::Czsl => (r.acc, None, None),
            Mode::Gzsl => (r.unseen, r.seen, r.harmonic),
        };
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\tok",
            r.mode.as_str(),
            f(a),
            f(s),
            f(h),
            report.seed,
            report.config_hash
        )
        .expect("write to String");
    }
    out
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: String,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    threads: usize,
    timings_ms: BTreeMap<&'static str, f64>,
    artifacts: Vec<&'static str>,
}

pub const ARTIFACTS: [&str; 9] = [
    "manifest.json",
    "checkpoint.bin",
    "synthesized.bin",
    "report.json",
    "report.tsv",
    "losses.csv",
    "similarity_before.csv",
    "similarity_after.csv",
    "similarity_summary.json",
];

/// `v<crate version>`, plus the commit when built with `INDZSL_GIT_DESCRIBE` set.
pub fn version_string() -> String {
    match option_env!("INDZSL_GIT_DESCRIBE") {
        Some(d) if !d.is_empty() => d.to_string(),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes every artifact of `run` into `outdir`.
pub fn write_artifacts(run: &RunArtifacts, outdir: &Path, threads: usize) -> anyhow::Result<()> {
    std::fs::create_dir_all(outdir).with_context(|| format!("creating {}", outdir.display()))?;
    let config_json = run.config.canonical_json();
    write_checkpoint(
        &outdir.join("checkpoint.bin"),
        &Checkpoint {
            config_json,
            params: run.training.params.clone(),
        },
    )?;
    let synth = run.synthesized.to_partition(run.splits.feature_dim)?;
    write_features(
        &outdir.join("synthesized.bin"),
        &FeatureFile {
            dim: run.splits.feature_dim,
            class_ids: run.splits.unseen_classes.clone(),
            test_flags: vec![false; synth.len()],
            features: synth.features,
            labels: synth.labels,
        },
    )?;
    write_json(&outdir.join("report.json"), &run.report)?;
    std::fs::write(
        outdir.join("report.tsv"),
        format!("{TSV_HEADER}\n{}", tsv_rows(&run.report)),
    )?;
    write_losses_csv(&outdir.join("losses.csv"), &run.training.history)?;
    let ids = run.semantics.class_ids();
    write_similarity_csv(&outdir.join("similarity_before.csv"), ids, &run.similarity_before)?;
    write_similarity_csv(&outdir.join("similarity_after.csv"), ids, &run.similarity_after)?;
    write_json(&outdir.join("similarity_summary.json"), &run.report.similarity)?;
    let manifest = Manifest {
        tool: "indzsl",
        version: version_string(),
        seed: run.config.seed,
        config_hash: run.report.config_hash.clone(),
        config: &run.config,
        threads,
        timings_ms: run.timings.iter().copied().collect(),
        artifacts: ARTIFACTS.to_vec(),
    };
    // written last: its presence marks a complete run
    write_json(&outdir.join("manifest.json"), &manifest)
}

/// Runs the pipeline and writes its artifacts to `config.outdir`.
pub fn cmd_run(config: &RunConfig, threads: usize) -> anyhow::Result<RunArtifacts> {
    let run = run_pipeline(config, threads)?;
    write_artifacts(&run, &config.outdir, threads).map_err(|source| StageError { stage: "write", source })?;
    Ok(run)
}

/// Hyperparameter swept by [`cmd_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Lambda,
    TopK,
    NSyn,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::TopK => "top_k",
            SweepParam::NSyn => "n_syn",
        }
    }

    fn apply(self, config: &mut RunConfig, value: &str) -> anyhow::Result<()> {
        match self {
            SweepParam::Lambda => config.lambda = value.parse().with_context(|| format!("lambda `{value}`"))?,
            SweepParam::TopK => config.top_k = value.parse().with_context(|| format!("top_k `{value}`"))?,
            SweepParam::NSyn => config.n_syn = value.parse().with_context(|| format!("n_syn `{value}`"))?,
        }
        config.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub outcome: Result<RunReport, String>,
}

/// One run per grid value (shared base seed) in `<outdir>/<key>_<value>/`,
/// with all TSV rows concatenated into `<outdir>/sweep.tsv`. A failing point
/// becomes an error row and the sweep continues.
pub fn cmd_sweep(base: &RunConfig, param: SweepParam, values: &[String], threads: usize) -> anyhow::Result<Vec<SweepRow>> {
    anyhow::ensure!(!values.is_empty(), "sweep grid is empty");
    let mut rows = Vec::with_capacity(values.len());
    let mut tsv = format!("{TSV_HEADER}\n");
    for value in values {
        let mut config = base.clone();
        config.outdir = base.outdir.join(format!("{}_{value}", param.key()));
        let outcome = param
            .apply(&mut config, value)
            .and_then(|()| cmd_run(&config, threads))
            .map(|run| run.report)
            .map_err(|e| format!("{e:#}"));
        match &outcome {
            Ok(report) => tsv.push_str(&tsv_rows(report)),
            Err(msg) => {
                let hash = config.hash();
                let msg = msg.replace(['\t', '\n'], " ");
                writeln!(tsv, "-\t-\t-\t-\t{}\t{hash}\terror: {msg}", config.seed).expect("write to String");
            }
        }
        rows.push(SweepRow {
            value: value.clone(),
            outcome,
        });
    }
    std::fs::create_dir_all(&base.outdir)?;
    std::fs::write(base.outdir.join("sweep.tsv"), tsv)?;
    Ok(rows)
}

/// Output of `refine-semantics`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutput {
    pub summary: SimilaritySummary,
    pub refined_path: PathBuf,
}

/// Refines a semantic matrix and writes the before/after similarity tables,
/// the JSON summary and the refined vectors.
pub fn cmd_refine_semantics(
    mut semantics: ClassSemanticMatrix,
    config: &RunConfig,
    outdir: &Path,
) -> anyhow::Result<RefineOutput> {
    let before = similarity_report(semantics.raw())?;
    semantics.refine(&config.cdp())?;
    let after = similarity_report(semantics.active())?;
    std::fs::create_dir_all(outdir)?;
    let ids = semantics.class_ids();
    write_similarity_csv(&outdir.join("similarity_before.csv"), ids, &before.cosine)?;
    write_similarity_csv(&outdir.join("similarity_after.csv"), ids, &after.cosine)?;
    let summary = SimilaritySummary {
        mean_offdiag_before: before.mean_offdiag_abs,
        mean_offdiag_after: after.mean_offdiag_abs,
    };
    write_json(&outdir.join("similarity_summary.json"), &summary)?;
    let refined_path = outdir.join("refined_semantics.bin");
    crate::formats::write_semantics(&refined_path, ids, semantics.active())?;
    Ok(RefineOutput { summary, refined_path })
}
