//! Run configuration: defaults, dataset profiles, TOML files and flags.
//!
//! Layers are merged key by key in the order defaults < profile < config
//! file < command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use indzsl_core::dataset::SyntheticSpec;
use indzsl_core::eval::{ClassifierConfig, Mode};
use indzsl_core::ivae::{BoostCandidates, TrainingConfig};
use indzsl_core::semantics::CdpOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Cub,
    Sun,
    Awa2,
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Czsl,
    Gzsl,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> &'static [Mode] {
        match self {
            ModeSelection::Czsl => &[Mode::Czsl],
            ModeSelection::Gzsl => &[Mode::Gzsl],
            ModeSelection::Both => &[Mode::Czsl, Mode::Gzsl],
        }
    }
}

/// Every effective parameter of a run. Without `features`, `semantics` and
/// `splits` the run uses the synthetic generator with the `synthetic_*` keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Option<Profile>,
    pub seed: u64,
    pub outdir: PathBuf,
    pub mode: ModeSelection,

    pub features: Option<PathBuf>,
    pub semantics: Option<PathBuf>,
    pub splits: Option<PathBuf>,

    pub synthetic_seen: usize,
    pub synthetic_unseen: usize,
    pub synthetic_dim: usize,
    pub synthetic_samples_per_class: usize,
    pub synthetic_spread: f64,
    pub synthetic_semantic_noise: f64,
    pub synthetic_shared_strength: f64,
    /// Rank of the subspace holding the class means; 0 draws them in full dimension.
    pub synthetic_latent_rank: usize,
    pub synthetic_min_separation: f64,
    pub synthetic_test_fraction: f64,

    pub removed_components: usize,

    pub lambda: f64,
    pub tau: f64,
    pub top_k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub normalize_features: bool,
    pub boost_candidates: BoostCandidates,
    pub exclude_self: bool,

    /// Synthesized samples per unseen class.
    pub n_syn: usize,

    pub classifier_lr: f64,
    pub classifier_epochs: usize,
    pub classifier_batch_size: usize,
    pub balance_classes: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let toy = SyntheticSpec::toy(0);
        let training = TrainingConfig::default();
        let classifier = ClassifierConfig::default();
        Self {
            profile: None,
            seed: 0,
            outdir: PathBuf::from("indzsl-out"),
            mode: ModeSelection::Both,
            features: None,
            semantics: None,
            splits: None,
            synthetic_seen: toy.num_seen,
            synthetic_unseen: toy.num_unseen,
            synthetic_dim: toy.feature_dim,
            synthetic_samples_per_class: toy.samples_per_class,
            synthetic_spread: toy.cluster_spread,
            synthetic_semantic_noise: toy.semantic_noise,
            synthetic_shared_strength: toy.shared_strength,
            synthetic_latent_rank: toy.latent_rank.unwrap_or(0),
            synthetic_min_separation: toy.min_mean_separation,
            synthetic_test_fraction: toy.test_fraction,
            removed_components: CdpOptions::default().removed_components,
            lambda: training.lambda,
            tau: training.tau,
            top_k: training.top_k,
            learning_rate: training.learning_rate,
            batch_size: training.batch_size,
            epochs: training.epochs,
            latent_dim: training.latent_dim,
            hidden_dims: training.hidden_dims,
            normalize_features: training.normalize_features,
            boost_candidates: training.boost_candidates,
            exclude_self: training.exclude_self,
            n_syn: 1600,
            classifier_lr: classifier.learning_rate,
            classifier_epochs: classifier.epochs,
            classifier_batch_size: classifier.batch_size,
            balance_classes: classifier.balance_classes,
        }
    }
}

impl Profile {
    /// Keys this profile sets on top of the defaults.
    pub fn overlay(self) -> toml::Table {
        let text = match self {
            Profile::Cub => "lambda = 0.1\ntop_k = 2\nn_syn = 1600\n",
            Profile::Sun => "lambda = 0.001\ntop_k = 2\nn_syn = 800\n",
            Profile::Awa2 => "lambda = 0.1\ntop_k = 2\nn_syn = 5000\n",
            Profile::Toy => concat!(
                "lambda = 0.1\ntop_k = 2\nn_syn = 200\n",
                "hidden_dims = [128, 256]\nlatent_dim = 32\nlearning_rate = 1e-3\n",
                "epochs = 100\nclassifier_lr = 1e-2\n"
            ),
        };
        text.parse().expect("profile tables are valid TOML")
    }
}

/// Builds the effective configuration from the layered sources.
///
/// `profile` (from a flag) wins over a `profile` key in the file.
pub fn resolve(profile: Option<Profile>, file: Option<&Path>, flags: toml::Table) -> anyhow::Result<RunConfig> {
    let file_table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => toml::Table::new(),
    };
    let file_profile = match file_table.get("profile") {
        Some(v) => Some(
            v.clone()
                .try_into::<Profile>()
                .with_context(|| format!("invalid profile {v}"))?,
        ),
        None => None,
    };
    let profile = profile.or(file_profile);

    let mut table = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    if let Some(p) = profile {
        table.extend(p.overlay());
    }
    table.extend(file_table);
    table.extend(flags);
    match profile {
        Some(p) => {
            table.insert("profile".into(), toml::Value::try_from(p).expect("profile serializes"));
        }
        None => {
            table.remove("profile");
        }
    }
    let config: RunConfig = table.try_into().context("invalid configuration")?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        let files = [&self.features, &self.semantics, &self.splits];
        let given = files.iter().filter(|f| f.is_some()).count();
        if given != 0 && given != 3 {
            bail!("features, semantics and splits must be given together");
        }
        self.training().validate()?;
        if self.uses_synthetic() {
            self.synthetic_spec().validate()?;
        }
        if self.classifier_batch_size == 0 {
            bail!("classifier_batch_size must be at least 1");
        }
        if !(self.classifier_lr >= 0.0 && self.classifier_lr.is_finite()) {
            bail!("classifier_lr must be finite and >= 0");
        }
        Ok(())
    }

    pub fn uses_synthetic(&self) -> bool {
        self.features.is_none()
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_seen: self.synthetic_seen,
            num_unseen: self.synthetic_unseen,
            feature_dim: self.synthetic_dim,
            samples_per_class: self.synthetic_samples_per_class,
            cluster_spread: self.synthetic_spread,
            semantic_noise: self.synthetic_semantic_noise,
            shared_strength: self.synthetic_shared_strength,
            latent_rank: (self.synthetic_latent_rank > 0).then_some(self.synthetic_latent_rank),
            min_mean_separation: self.synthetic_min_separation,
            test_fraction: self.synthetic_test_fraction,
            seed: self.seed,
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            lambda: self.lambda,
            tau: self.tau,
            top_k: self.top_k,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            latent_dim: self.latent_dim,
            hidden_dims: self.hidden_dims.clone(),
            seed: self.seed,
            normalize_features: self.normalize_features,
            boost_candidates: self.boost_candidates,
            exclude_self: self.exclude_self,
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            learning_rate: self.classifier_lr,
            epochs: self.classifier_epochs,
            batch_size: self.classifier_batch_size,
            seed: self.seed,
            balance_classes: self.balance_classes,
        }
    }

    pub fn cdp(&self) -> CdpOptions {
        CdpOptions {
            removed_components: self.removed_components,
            ..CdpOptions::default()
        }
    }

    /// Canonical JSON of every parameter that affects results (`outdir` excluded).
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("outdir");
        }
        serde_json::to_string(&value).expect("json value serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
