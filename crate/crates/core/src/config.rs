//! Experiment configuration: the JSON schema consumed by the CLI and the
//! resolution into runtime stage configs.
//!
//! A config file provides `dataset`, `forget`, and `seed`; every
//! hyperparameter section is optional and falls back to the documented
//! defaults. Resolution produces a fully concrete [`ResolvedConfig`] whose
//! serialized form contains every key, which is what `--set` overrides
//! operate on and what run manifests embed. Unknown keys anywhere are
//! rejected.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    cifar::load_cifar10, idx::load_idx, synth_blobs, synth_digits, Dataset, ForgetSpec,
};
use crate::error::{Error, Result};
use crate::seed::RngSeed;
use crate::unlearn::{PipelineConfig, TrainConfig, UnlearnConfig};

/// Environment variable pointing at the dataset root directory.
pub const DATA_DIR_ENV: &str = "UNLEARN_DATA_DIR";

/// Concrete hyperparameters of one training stage (no seed: stage seeds are
/// derived from the master seed at run time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl TrainParams {
    pub fn with_seed(self, seed: RngSeed) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            seed,
        }
    }
}

pub fn default_train_params() -> TrainParams {
    TrainParams {
        epochs: 3,
        batch_size: 64,
        learning_rate: 1e-2,
        momentum: 0.9,
    }
}

pub fn default_retrain_params() -> TrainParams {
    TrainParams {
        epochs: 10,
        ..default_train_params()
    }
}

pub fn default_erase_params() -> TrainParams {
    TrainParams {
        epochs: 1,
        learning_rate: 1e-3,
        ..default_train_params()
    }
}

pub fn default_reconstruct_params() -> TrainParams {
    default_erase_params()
}

/// Concrete unlearning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnParams {
    pub tau_erase: f64,
    pub tau_reconstruct: f64,
    pub alpha: f64,
    pub kl_tau2_scaling: bool,
    pub erase: TrainParams,
    pub reconstruct: TrainParams,
}

impl Default for UnlearnParams {
    fn default() -> Self {
        UnlearnParams {
            tau_erase: 2.0,
            tau_reconstruct: 2.0,
            alpha: 1.0,
            kl_tau2_scaling: false,
            erase: default_erase_params(),
            reconstruct: default_reconstruct_params(),
        }
    }
}

/// Which dataset to load.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    SynthBlobs {
        num_classes: usize,
        per_class: usize,
        image_side: usize,
        test_per_class: Option<usize>,
    },
    SynthDigits {
        per_class: usize,
        test_per_class: Option<usize>,
    },
    Mnist {
        dir: Option<PathBuf>,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
    Cifar10 {
        dir: Option<PathBuf>,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
}

fn parse_value<T, E>(v: serde_json::Value) -> std::result::Result<T, E>
where
    T: serde::de::DeserializeOwned,
    E: serde::de::Error,
{
    serde_json::from_value(v).map_err(E::custom)
}

// Hand-written to reject unknown keys inside internally tagged sections.
impl<'de> Deserialize<'de> for DatasetSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as DeError;
        let map = serde_json::Map::deserialize(deserializer)?;
        let kind = map
            .get("kind")
            .and_then(|v| v.as_str())
            .ok_or_else(|| DeError::custom("dataset section requires a string `kind` key"))?;
        let known: &[&str] = match kind {
            "synth_blobs" => &["kind", "num_classes", "per_class", "image_side", "test_per_class"],
            "synth_digits" => &["kind", "per_class", "test_per_class"],
            "mnist" | "cifar10" => &["kind", "dir", "train_limit", "test_limit"],
            other => {
                return Err(DeError::custom(format!(
                    "unknown dataset kind `{other}`, expected one of \
                     synth_blobs, synth_digits, mnist, cifar10"
                )))
            }
        };
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                return Err(DeError::custom(format!(
                    "unknown key `{key}` in dataset section for kind `{kind}`"
                )));
            }
        }
        let required = |k: &str| {
            map.get(k).cloned().ok_or_else(|| {
                DeError::custom(format!("dataset kind `{kind}` requires key `{k}`"))
            })
        };
        let optional = |k: &str| map.get(k).cloned().unwrap_or(serde_json::Value::Null);

        match kind {
            "synth_blobs" => Ok(DatasetSpec::SynthBlobs {
                num_classes: parse_value(required("num_classes")?)?,
                per_class: parse_value(required("per_class")?)?,
                image_side: parse_value(required("image_side")?)?,
                test_per_class: parse_value(optional("test_per_class"))?,
            }),
            "synth_digits" => Ok(DatasetSpec::SynthDigits {
                per_class: parse_value(required("per_class")?)?,
                test_per_class: parse_value(optional("test_per_class"))?,
            }),
            "mnist" => Ok(DatasetSpec::Mnist {
                dir: parse_value(optional("dir"))?,
                train_limit: parse_value(optional("train_limit"))?,
                test_limit: parse_value(optional("test_limit"))?,
            }),
            _ => Ok(DatasetSpec::Cifar10 {
                dir: parse_value(optional("dir"))?,
                train_limit: parse_value(optional("train_limit"))?,
                test_limit: parse_value(optional("test_limit"))?,
            }),
        }
    }
}

/// Dataset root: `$UNLEARN_DATA_DIR` or `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "dataset file not found: {}",
            path.display()
        )))
    }
}

impl DatasetSpec {
    /// Load the (train, test) pair this spec describes. Synthetic data is
    /// seeded from the master seed via the `data_train` / `data_test`
    /// derivations.
    pub fn load(&self, master: RngSeed) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::SynthBlobs {
                num_classes,
                per_class,
                image_side,
                test_per_class,
            } => {
                let test_n = test_per_class.unwrap_or_else(|| (per_class / 5).max(1));
                Ok((
                    synth_blobs(*num_classes, *per_class, *image_side, master.derive("data_train"))?,
                    synth_blobs(*num_classes, test_n, *image_side, master.derive("data_test"))?,
                ))
            }
            DatasetSpec::SynthDigits {
                per_class,
                test_per_class,
            } => {
                let test_n = test_per_class.unwrap_or_else(|| (per_class / 5).max(1));
                Ok((
                    synth_digits(*per_class, master.derive("data_train"))?,
                    synth_digits(test_n, master.derive("data_test"))?,
                ))
            }
            DatasetSpec::Mnist {
                dir,
                train_limit,
                test_limit,
            } => {
                let dir = dir.clone().unwrap_or_else(|| data_root().join("mnist"));
                let files = [
                    dir.join("train-images-idx3-ubyte"),
                    dir.join("train-labels-idx1-ubyte"),
                    dir.join("t10k-images-idx3-ubyte"),
                    dir.join("t10k-labels-idx1-ubyte"),
                ];
                for f in &files {
                    require_file(f)?;
                }
                let mut train = load_idx(&files[0], &files[1])?.renamed("mnist");
                let mut test = load_idx(&files[2], &files[3])?.renamed("mnist:test");
                if let Some(n) = train_limit {
                    train = train.take(*n, "mnist")?;
                }
                if let Some(n) = test_limit {
                    test = test.take(*n, "mnist:test")?;
                }
                Ok((train, test))
            }
            DatasetSpec::Cifar10 {
                dir,
                train_limit,
                test_limit,
            } => {
                let dir = dir
                    .clone()
                    .unwrap_or_else(|| data_root().join("cifar-10-batches-bin"));
                let train_files: Vec<PathBuf> = (1..=5)
                    .map(|i| dir.join(format!("data_batch_{i}.bin")))
                    .collect();
                let test_file = dir.join("test_batch.bin");
                for f in train_files.iter().chain([&test_file]) {
                    require_file(f)?;
                }
                let mut train = load_cifar10(&train_files)?;
                let mut test = load_cifar10(&[&test_file])?.renamed("cifar10:test");
                if let Some(n) = train_limit {
                    train = train.take(*n, "cifar10")?;
                }
                if let Some(n) = test_limit {
                    test = test.take(*n, "cifar10:test")?;
                }
                Ok((train, test))
            }
        }
    }

    /// Human-readable class names, when the dataset has canonical ones.
    pub fn class_names(&self) -> Option<Vec<String>> {
        match self {
            DatasetSpec::Cifar10 { .. } => Some(
                crate::data::cifar::CLASS_NAMES
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Optional hyperparameter section as written in config files.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
}

impl TrainSection {
    fn resolve(&self, defaults: TrainParams) -> TrainParams {
        TrainParams {
            epochs: self.epochs.unwrap_or(defaults.epochs),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            learning_rate: self.learning_rate.unwrap_or(defaults.learning_rate),
            momentum: self.momentum.unwrap_or(defaults.momentum),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnSection {
    pub tau_erase: Option<f64>,
    pub tau_reconstruct: Option<f64>,
    pub alpha: Option<f64>,
    pub kl_tau2_scaling: Option<bool>,
    pub erase: Option<TrainSection>,
    pub reconstruct: Option<TrainSection>,
}

impl UnlearnSection {
    fn resolve(&self) -> UnlearnParams {
        let d = UnlearnParams::default();
        UnlearnParams {
            tau_erase: self.tau_erase.unwrap_or(d.tau_erase),
            tau_reconstruct: self.tau_reconstruct.unwrap_or(d.tau_reconstruct),
            alpha: self.alpha.unwrap_or(d.alpha),
            kl_tau2_scaling: self.kl_tau2_scaling.unwrap_or(d.kl_tau2_scaling),
            erase: self
                .erase
                .as_ref()
                .map_or(d.erase, |s| s.resolve(default_erase_params())),
            reconstruct: self
                .reconstruct
                .as_ref()
                .map_or(d.reconstruct, |s| s.resolve(default_reconstruct_params())),
        }
    }
}

/// Config file as written on disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub forget: ForgetSpec,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub retrain: Option<TrainSection>,
    #[serde(default)]
    pub unlearn: Option<UnlearnSection>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fill in every default, producing a fully concrete config.
    pub fn resolve(self) -> ResolvedConfig {
        ResolvedConfig {
            dataset: self.dataset,
            forget: self.forget,
            train: self
                .train
                .unwrap_or_default()
                .resolve(default_train_params()),
            retrain: self
                .retrain
                .unwrap_or_default()
                .resolve(default_retrain_params()),
            unlearn: self.unlearn.unwrap_or_default().resolve(),
            seed: self.seed,
            out_dir: self.out_dir.unwrap_or_else(|| "out".to_string()),
        }
    }
}

/// Fully concrete configuration: every key present, suitable for `--set`
/// overrides and for embedding into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub dataset: DatasetSpec,
    pub forget: ForgetSpec,
    pub train: TrainParams,
    pub retrain: TrainParams,
    pub unlearn: UnlearnParams,
    pub seed: u64,
    pub out_dir: String,
}

impl ResolvedConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<ResolvedConfig> {
        Ok(ExperimentConfig::from_file(path)?.resolve())
    }

    pub fn master_seed(&self) -> RngSeed {
        RngSeed(self.seed)
    }

    /// Runtime pipeline config with all stage seeds derived from the master.
    pub fn pipeline_config(&self) -> PipelineConfig {
        let master = self.master_seed();
        PipelineConfig {
            forget: self.forget.clone(),
            train: self.train.with_seed(RngSeed(0)),
            retrain: self.retrain.with_seed(RngSeed(0)),
            unlearn: UnlearnConfig {
                tau_erase: self.unlearn.tau_erase,
                tau_reconstruct: self.unlearn.tau_reconstruct,
                alpha: self.unlearn.alpha,
                kl_tau2_scaling: self.unlearn.kl_tau2_scaling,
                erase: self.unlearn.erase.with_seed(RngSeed(0)),
                reconstruct: self.unlearn.reconstruct.with_seed(RngSeed(0)),
                teacher_seed: RngSeed(0),
            },
        }
        .derive_seeds(master)
    }

    pub fn load_datasets(&self) -> Result<(Dataset, Dataset)> {
        self.dataset.load(self.master_seed())
    }

    /// Reject structurally valid but unusable values before any stage runs.
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("train", &self.train),
            ("retrain", &self.retrain),
            ("unlearn.erase", &self.unlearn.erase),
            ("unlearn.reconstruct", &self.unlearn.reconstruct),
        ] {
            if p.batch_size == 0 {
                return Err(Error::Config(format!("{name}.batch_size must be positive")));
            }
            if !p.learning_rate.is_finite() || p.learning_rate <= 0.0 {
                return Err(Error::Config(format!(
                    "{name}.learning_rate must be positive"
                )));
            }
            if !(0.0..1.0).contains(&p.momentum) {
                return Err(Error::Config(format!("{name}.momentum must be in [0, 1)")));
            }
        }
        if self.train.epochs == 0 || self.retrain.epochs == 0 {
            return Err(Error::Config("train/retrain epochs must be at least 1".into()));
        }
        for (name, tau) in [
            ("unlearn.tau_erase", self.unlearn.tau_erase),
            ("unlearn.tau_reconstruct", self.unlearn.tau_reconstruct),
        ] {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.unlearn.alpha.is_finite() || self.unlearn.alpha < 0.0 {
            return Err(Error::Config("unlearn.alpha must be non-negative".into()));
        }
        if let ForgetSpec::ByClass { classes } = &self.forget {
            if classes.is_empty() {
                return Err(Error::Config("forget.classes must be nonempty".into()));
            }
        }
        Ok(())
    }

    /// Forgotten-class set for reports.
    pub fn forgotten_classes(&self) -> BTreeSet<usize> {
        self.forget.forgotten_classes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"kind": "synth_blobs", "num_classes": 4, "per_class": 20, "image_side": 8},
        "forget": {"mode": "by_class", "classes": [1]},
        "seed": 42
    }"#;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap().resolve();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 1e-2);
        assert_eq!(cfg.retrain.epochs, 10);
        assert_eq!(cfg.unlearn.erase.epochs, 1);
        assert_eq!(cfg.unlearn.erase.learning_rate, 1e-3);
        assert_eq!(cfg.unlearn.tau_erase, 2.0);
        assert_eq!(cfg.unlearn.alpha, 1.0);
        assert!(!cfg.unlearn.kl_tau2_scaling);
        assert_eq!(cfg.out_dir, "out");
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_sections_keep_section_defaults() {
        let text = r#"{
            "dataset": {"kind": "synth_digits", "per_class": 10},
            "forget": {"mode": "by_class", "classes": [3]},
            "unlearn": {"alpha": 0.5, "erase": {"learning_rate": 0.002}},
            "seed": 1
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap().resolve();
        assert_eq!(cfg.unlearn.alpha, 0.5);
        assert_eq!(cfg.unlearn.erase.learning_rate, 0.002);
        assert_eq!(cfg.unlearn.erase.epochs, 1, "erase default epochs");
        assert_eq!(cfg.unlearn.reconstruct.learning_rate, 1e-3);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let top = MINIMAL.replace("\"seed\": 42", "\"seed\": 42, \"bogus\": 1");
        let err = ExperimentConfig::from_json(&top).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");

        let nested = MINIMAL.replace(
            "\"image_side\": 8",
            "\"image_side\": 8, \"oops\": true",
        );
        let err = ExperimentConfig::from_json(&nested).unwrap_err();
        assert!(err.to_string().contains("oops"), "{err}");

        let section = r#"{
            "dataset": {"kind": "synth_digits", "per_class": 10},
            "forget": {"mode": "by_class", "classes": [3]},
            "train": {"epoch": 5},
            "seed": 1
        }"#;
        let err = ExperimentConfig::from_json(section).unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn resolved_config_roundtrips_through_json() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap().resolve();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ResolvedConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn pipeline_config_derives_distinct_stage_seeds() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap().resolve();
        let p = cfg.pipeline_config();
        let seeds = [
            p.train.seed,
            p.retrain.seed,
            p.unlearn.erase.seed,
            p.unlearn.reconstruct.seed,
            p.unlearn.teacher_seed,
        ];
        let unique: std::collections::BTreeSet<u64> = seeds.iter().map(|s| s.0).collect();
        assert_eq!(unique.len(), seeds.len(), "stage seeds must differ");
        assert_eq!(p.train.seed, RngSeed(42).derive("original"));
    }

    #[test]
    fn synthetic_datasets_load_deterministically() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap().resolve();
        let (train_a, test_a) = cfg.load_datasets().unwrap();
        let (train_b, test_b) = cfg.load_datasets().unwrap();
        assert_eq!(train_a.images(), train_b.images());
        assert_eq!(test_a.images(), test_b.images());
        assert_eq!(train_a.len(), 80);
        assert_eq!(test_a.len(), 16, "test_per_class defaults to per_class/5");
        assert_ne!(train_a.images(), test_a.images());
    }

    #[test]
    fn missing_dataset_file_names_the_path() {
        let text = r#"{
            "dataset": {"kind": "mnist", "dir": "/nonexistent/mnist-dir"},
            "forget": {"mode": "by_class", "classes": [3]},
            "seed": 1
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap().resolve();
        let err = cfg.load_datasets().unwrap_err();
        assert!(
            err.to_string().contains("/nonexistent/mnist-dir"),
            "{err}"
        );
    }
}
