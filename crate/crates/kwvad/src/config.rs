//! Pipeline configuration: one TOML file with per-dataset profiles.
//!
//! ```toml
//! seed = 7
//!
//! [dataset]
//! manifest = "frames.tsv"
//! profile = "ped2"            # ped2 | avenue | shanghaitech | generic
//!
//! [provider]
//! endpoint_url = "http://localhost:8000"
//! model_id = "llama3.2-vision"
//!
//! [output]
//! dir = "runs/ped2"
//! ```
//!
//! Anything left out takes the profile's default. Relative paths resolve
//! against the config file's directory.

use std::path::{Path, PathBuf};

use kwvad_core::induction::{DfBound, TfidfVariant};
use kwvad_core::text::StopList;
use kwvad_core::{TrainConfig, VectorizerConfig};
use serde::Deserialize;

use crate::describer::{ProviderConfig, API_KEY_ENV};
use crate::error::{Error, Result};

/// Dataset-specific defaults for keyword count, document-frequency cap and
/// batch size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Ped2,
    Avenue,
    #[serde(alias = "shtech")]
    ShanghaiTech,
    #[default]
    Generic,
}

impl Profile {
    pub fn vectorizer(self) -> VectorizerConfig {
        let (max_features, max_df) = match self {
            Profile::Ped2 => (100, 0.95),
            _ => (200, 1.0),
        };
        VectorizerConfig {
            max_features,
            max_df: DfBound::Fraction(max_df),
            ..VectorizerConfig::default()
        }
    }

    pub fn batch_size(self) -> usize {
        match self {
            Profile::Ped2 | Profile::Generic => 200,
            Profile::Avenue => 1000,
            Profile::ShanghaiTech => 2000,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    dataset: RawDataset,
    #[serde(default)]
    provider: RawProvider,
    #[serde(default)]
    induction: RawInduction,
    #[serde(default)]
    split: RawSplit,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    eval: RawEval,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    manifest: PathBuf,
    name: Option<String>,
    #[serde(default)]
    profile: Profile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProvider {
    endpoint_url: Option<String>,
    model_id: Option<String>,
    prompt: Option<String>,
    timeout_secs: Option<u64>,
    max_retries: Option<u32>,
    max_concurrency: Option<usize>,
    backoff_initial_ms: Option<u64>,
    /// `frame_id<TAB>text` map served instead of a real endpoint.
    stub: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInduction {
    samples: Option<usize>,
    seed: Option<u64>,
    max_features: Option<usize>,
    min_df: Option<DfBound>,
    max_df: Option<DfBound>,
    ngram_n: Option<u32>,
    stop_words: Option<String>,
    tfidf_variant: Option<TfidfVariant>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train_ratio: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    folds: Option<usize>,
    batch_size: Option<usize>,
    pos_weight: Option<f64>,
    hidden: Option<[usize; 2]>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// Replaces the top-level seed and every per-stage seed.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub provider_url: Option<String>,
    pub stub: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub dataset_name: String,
    pub profile: Profile,
    pub provider: ProviderConfig,
    pub stub: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub induction_samples: usize,
    pub induction_seed: u64,
    pub vectorizer: VectorizerConfig,
    pub train_ratio: f64,
    pub split_seed: u64,
    pub training: TrainConfig,
    pub threshold: f64,
    pub output_dir: PathBuf,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

impl PipelineConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, overrides)
    }

    /// Parses and fully validates. Nothing is written.
    pub fn parse(text: &str, base: &Path, o: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let seed = o.seed.or(raw.seed).unwrap_or(0);
        let stage_seed = |s: Option<u64>| o.seed.or(s).unwrap_or(seed);
        let profile = raw.dataset.profile;

        let manifest = resolve(base, raw.dataset.manifest);
        let dataset_name = match raw.dataset.name {
            Some(n) => n,
            None => manifest
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        };

        let p = raw.provider;
        let defaults = ProviderConfig::default();
        let provider = ProviderConfig {
            endpoint_url: o
                .provider_url
                .clone()
                .or(p.endpoint_url)
                .unwrap_or(defaults.endpoint_url),
            model_id: p.model_id.unwrap_or(defaults.model_id),
            prompt: p.prompt.unwrap_or(defaults.prompt),
            timeout_secs: p.timeout_secs.unwrap_or(defaults.timeout_secs),
            max_retries: p.max_retries.unwrap_or(defaults.max_retries),
            max_concurrency: p.max_concurrency.unwrap_or(defaults.max_concurrency),
            backoff_initial_ms: p.backoff_initial_ms.unwrap_or(defaults.backoff_initial_ms),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        };
        let stub = o.stub.clone().or(p.stub.map(|s| resolve(base, s)));
        let output_dir = o
            .output_dir
            .clone()
            .unwrap_or_else(|| resolve(base, raw.output.dir.unwrap_or_else(|| PathBuf::from("kwvad-out"))));
        let cache_dir = p
            .cache_dir
            .map(|c| resolve(base, c))
            .unwrap_or_else(|| output_dir.join("cache"));

        let i = raw.induction;
        let mut vectorizer = profile.vectorizer();
        if let Some(v) = i.max_features {
            vectorizer.max_features = v;
        }
        if let Some(v) = i.min_df {
            vectorizer.min_df = v;
        }
        if let Some(v) = i.max_df {
            vectorizer.max_df = v;
        }
        if let Some(v) = i.ngram_n {
            vectorizer.ngram_n = v;
        }
        if let Some(v) = i.stop_words {
            vectorizer.stop_words =
                StopList::from_id(&v).ok_or_else(|| Error::Config(format!("unknown stop_words list {v:?}")))?;
        }
        if let Some(v) = i.tfidf_variant {
            vectorizer.variant = v;
        }

        let t = raw.training;
        let td = TrainConfig::default();
        let training = TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(td.learning_rate),
            weight_decay: t.weight_decay.unwrap_or(td.weight_decay),
            max_epochs: t.max_epochs.unwrap_or(td.max_epochs),
            patience: t.patience.unwrap_or(td.patience),
            folds: t.folds.unwrap_or(td.folds),
            batch_size: t.batch_size.unwrap_or(profile.batch_size()),
            pos_weight: t.pos_weight,
            hidden: t.hidden.unwrap_or(td.hidden),
            seed: stage_seed(t.seed),
        };

        let config = Self {
            manifest,
            dataset_name,
            profile,
            provider,
            stub,
            cache_dir,
            induction_samples: i.samples.unwrap_or(20),
            induction_seed: stage_seed(i.seed),
            vectorizer,
            train_ratio: raw.split.train_ratio.unwrap_or(0.8),
            split_seed: stage_seed(raw.split.seed),
            training,
            threshold: o.threshold.or(raw.eval.threshold).unwrap_or(0.5),
            output_dir,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !self.manifest.is_file() {
            return bad(format!("manifest {} does not exist", self.manifest.display()));
        }
        if let Some(s) = &self.stub {
            if !s.is_file() {
                return bad(format!("stub map {} does not exist", s.display()));
            }
        } else if !(self.provider.endpoint_url.starts_with("http://")
            || self.provider.endpoint_url.starts_with("https://"))
        {
            return bad(format!(
                "endpoint_url {:?} is not an http(s) URL",
                self.provider.endpoint_url
            ));
        }
        if self.provider.model_id.is_empty() {
            return bad("provider.model_id is empty".into());
        }
        if self.provider.prompt.trim().is_empty() {
            return bad("provider.prompt is empty".into());
        }
        if self.provider.max_concurrency == 0 {
            return bad("provider.max_concurrency must be positive".into());
        }
        if self.induction_samples == 0 {
            return bad("induction.samples must be positive".into());
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad(format!("split.train_ratio {} is not in (0, 1)", self.train_ratio));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("eval.threshold {} is not in [0, 1]", self.threshold));
        }
        self.vectorizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.training.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.output_dir.is_file() {
            return bad(format!("output dir {} is a file", self.output_dir.display()));
        }
        Ok(())
    }
}
