//! Declarative experiment configuration read from TOML.
//!
//! Every aligner section is optional and falls back to the library defaults. Keys can be
//! overridden from the command line as dotted `section.key=value` assignments.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clir::WeightingScheme;
use crate::embedding::PreprocessChain;
use crate::error::{Error, Result};
use crate::eval::stats::TestKind;
use crate::neighbors::Metric;
use crate::projection::Method;
use crate::supervised::{DlvConfig, ProcBConfig, RcslsConfig};
use crate::unsupervised::{GwaConfig, IcpConfig, PostprocessOptions, SelfLearnConfig, VecmapConfig, VECMAP_SEED_CAP};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub source_lang: Option<String>,
    pub target_lang: Option<String>,
    /// Keep only the first (most frequent) rows of each file.
    pub max_vocab: Option<usize>,
    /// Comma separated steps, e.g. `unit,center,unit`.
    pub preprocess_source: String,
    pub preprocess_target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySection {
    pub train: Option<PathBuf>,
    /// Use only the first `train_size` pairs of the training dictionary.
    pub train_size: Option<usize>,
    pub test: Option<PathBuf>,
    /// Input lexicon and sizes for `dict-split`.
    pub full: Option<PathBuf>,
    pub split_sizes: Vec<usize>,
    pub test_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcaSection {
    pub keep_dims: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VecmapSection {
    pub seed_cap: usize,
}

impl Default for VecmapSection {
    fn default() -> Self {
        Self {
            seed_cap: VECMAP_SEED_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub metric: Metric,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { metric: Metric::Cosine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub alpha: f64,
    pub comparisons: usize,
    pub test: TestKind,
    pub shuffles: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            comparisons: 1,
            test: TestKind::Ttest,
            shuffles: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClirSection {
    pub documents: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub weighting: WeightingScheme,
    /// Run tag written in the last column of the TREC run.
    pub tag: String,
}

impl Default for ClirSection {
    fn default() -> Self {
        Self {
            documents: None,
            queries: None,
            qrels: None,
            weighting: WeightingScheme::Idf,
            tag: "crossling".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Option<Method>,
    /// Master seed; required by stochastic methods.
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub embeddings: EmbeddingSection,
    pub dictionary: DictionarySection,
    pub evaluation: EvaluationSection,
    pub proc_b: ProcBConfig,
    pub cca: CcaSection,
    pub dlv: DlvConfig,
    pub rcsls: RcslsConfig,
    pub self_learn: SelfLearnConfig,
    pub vecmap: VecmapSection,
    pub postprocess: PostprocessOptions,
    pub icp: IcpConfig,
    pub gwa: GwaConfig,
    pub clir: ClirSection,
    pub compare: CompareSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides (dotted keys address sections;
    /// values are TOML literals, bare words are taken as strings).
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn method(&self) -> Result<Method> {
        self.method.ok_or_else(|| Error::Config("no method given".into()))
    }

    pub fn output(&self) -> Result<&Path> {
        self.output.as_deref().ok_or_else(|| Error::Config("no output directory given".into()))
    }

    pub fn source_path(&self) -> Result<&Path> {
        required(&self.embeddings.source, "embeddings.source")
    }

    pub fn target_path(&self) -> Result<&Path> {
        required(&self.embeddings.target, "embeddings.target")
    }

    pub fn source_chain(&self) -> Result<PreprocessChain> {
        PreprocessChain::parse(&self.embeddings.preprocess_source)
    }

    pub fn target_chain(&self) -> Result<PreprocessChain> {
        PreprocessChain::parse(&self.embeddings.preprocess_target)
    }

    /// `src-tgt` label from the language tags, if both are set.
    pub fn pair_label(&self) -> Option<String> {
        match (&self.embeddings.source_lang, &self.embeddings.target_lang) {
            (Some(s), Some(t)) => Some(format!("{s}-{t}")),
            _ => None,
        }
    }

    /// The experiment seed, demanded when the method draws random numbers.
    pub fn seed_for(&self, method: Method) -> Result<u64> {
        match self.seed {
            Some(seed) => Ok(seed),
            None if method.is_stochastic() => {
                Err(Error::Config(format!("method {method} is stochastic; a seed is required")))
            }
            None => Ok(0),
        }
    }

    pub fn self_learn_config(&self, seed: u64) -> SelfLearnConfig {
        SelfLearnConfig {
            seed,
            ..self.self_learn
        }
    }

    pub fn vecmap_config(&self, seed: u64) -> VecmapConfig {
        VecmapConfig {
            seed_cap: self.vecmap.seed_cap,
            self_learn: self.self_learn_config(seed),
        }
    }

    pub fn icp_config(&self, seed: u64) -> IcpConfig {
        IcpConfig { seed, ..self.icp }
    }

    /// Checks everything `align` needs before any file is read or written.
    pub fn validate_align(&self) -> Result<Method> {
        let method = self.method()?;
        self.seed_for(method)?;
        self.output()?;
        must_exist(self.source_path()?)?;
        must_exist(self.target_path()?)?;
        self.source_chain()?;
        self.target_chain()?;
        if method.is_supervised() {
            must_exist(required(&self.dictionary.train, "dictionary.train")?)?;
        }
        if method == Method::Gwa && !(self.gwa.lambda > 0.0) {
            return Err(Error::Config(format!("gwa.lambda must be positive, got {}", self.gwa.lambda)));
        }
        if !(self.rcsls.learning_rate > 0.0) {
            return Err(Error::Config("rcsls.learning_rate must be positive".into()));
        }
        Ok(method)
    }

    pub fn validate_spaces(&self) -> Result<()> {
        must_exist(self.source_path()?)?;
        must_exist(self.target_path()?)?;
        self.source_chain()?;
        self.target_chain()?;
        Ok(())
    }
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| Error::Config(format!("{key} is not set")))
}

pub(crate) fn must_exist(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist", path.display())))
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {item:?}")))?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{part} is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
