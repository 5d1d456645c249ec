//! Learned projection pairs and their on-disk form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::WordVectorSpace;
use crate::error::{Error, Result};
use crate::lexicon::TranslationLexicon;
use crate::numerics::orthogonality_error;
use crate::textio::{load_matrix, save_matrix, write_atomic};

/// Alignment algorithm that produced a [`ProjectionPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proc,
    ProcB,
    Cca,
    Dlv,
    Rcsls,
    Vecmap,
    Icp,
    Gwa,
    /// Stochastic self-learning refinement from an arbitrary seed dictionary.
    SelfLearn,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Proc,
        Method::ProcB,
        Method::Cca,
        Method::Dlv,
        Method::Rcsls,
        Method::Vecmap,
        Method::Icp,
        Method::Gwa,
        Method::SelfLearn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proc => "proc",
            Method::ProcB => "proc-b",
            Method::Cca => "cca",
            Method::Dlv => "dlv",
            Method::Rcsls => "rcsls",
            Method::Vecmap => "vecmap",
            Method::Icp => "icp",
            Method::Gwa => "gwa",
            Method::SelfLearn => "self-learn",
        }
    }

    pub fn is_supervised(self) -> bool {
        matches!(self, Method::Proc | Method::ProcB | Method::Cca | Method::Dlv | Method::Rcsls | Method::SelfLearn)
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Vecmap | Method::Icp | Method::SelfLearn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Training record attached to every projection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// Dictionary pairs used by the final solve.
    pub dictionary_size: usize,
    /// Dictionary size per iteration, for bootstrapping and EM methods.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dictionary_sizes: Vec<usize>,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
    #[serde(default)]
    pub rank_deficient: bool,
    /// Free-form warnings raised during training (fallbacks, regularization, ...).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Two linear maps into a shared space: source rows map as `X_src·W_src`, target rows
/// as `X_tgt·W_tgt`.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub w_src: Array2<f64>,
    pub w_tgt: Array2<f64>,
    pub orthogonal_src: bool,
    pub method: Method,
    pub metadata: TrainingMetadata,
    /// Final induced or augmented dictionary, when the method produces one.
    pub dictionary: Option<TranslationLexicon>,
}

/// Tolerance of the orthogonality flag.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

impl ProjectionPair {
    pub fn new(w_src: Array2<f64>, w_tgt: Array2<f64>, method: Method, metadata: TrainingMetadata) -> Result<Self> {
        if w_src.ncols() != w_tgt.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "source map has {} output dims, target map {}",
                w_src.ncols(),
                w_tgt.ncols()
            )));
        }
        if w_src.iter().chain(w_tgt.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numerical(method.name(), "projection contains non-finite entries"));
        }
        let orthogonal_src = w_src.is_square() && orthogonality_error(&w_src) < ORTHOGONALITY_TOL;
        Ok(Self {
            w_src,
            w_tgt,
            orthogonal_src,
            method,
            metadata,
            dictionary: None,
        })
    }

    /// Source-to-target map with the identity on the target side.
    pub fn source_only(w_src: Array2<f64>, method: Method, metadata: TrainingMetadata) -> Result<Self> {
        let d = w_src.ncols();
        Self::new(w_src, Array2::eye(d), method, metadata)
    }

    pub fn identity(dim: usize) -> Self {
        Self::source_only(Array2::eye(dim), Method::Proc, TrainingMetadata::default()).expect("identity is valid")
    }

    pub fn with_dictionary(mut self, dictionary: TranslationLexicon) -> Self {
        self.dictionary = Some(dictionary);
        self
    }

    pub fn project_source(&self, space: &WordVectorSpace) -> Result<Array2<f64>> {
        project_rows(space.matrix(), &self.w_src, "source")
    }

    pub fn project_target(&self, space: &WordVectorSpace) -> Result<Array2<f64>> {
        project_rows(space.matrix(), &self.w_tgt, "target")
    }

    /// Writes `W_src.txt`, `W_tgt.txt` and `metadata.json` into `dir` (created if missing).
    pub fn save(&self, dir: &Path, extra: &serde_json::Value) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_matrix(&self.w_src, &dir.join("W_src.txt"))?;
        save_matrix(&self.w_tgt, &dir.join("W_tgt.txt"))?;
        let record = PersistedMetadata {
            method: self.method,
            orthogonal: self.orthogonal_src,
            training: self.metadata.clone(),
            extra: extra.clone(),
        };
        let json = serde_json::to_string_pretty(&record)?;
        write_atomic(&dir.join("metadata.json"), |out| {
            out.write_all(json.as_bytes())?;
            out.write_all(b"\n")
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let w_src = load_matrix(&dir.join("W_src.txt"))?;
        let w_tgt = load_matrix(&dir.join("W_tgt.txt"))?;
        let meta_path = dir.join("metadata.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let record: PersistedMetadata = serde_json::from_str(&text)?;
        Self::new(w_src, w_tgt, record.method, record.training)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PersistedMetadata {
    method: Method,
    orthogonal: bool,
    training: TrainingMetadata,
    #[serde(default)]
    extra: serde_json::Value,
}

/// `x·w`, checking that the inner dimensions agree.
pub fn project_rows(x: &Array2<f64>, w: &Array2<f64>, side: &str) -> Result<Array2<f64>> {
    if x.ncols() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{side} space has dimension {} but its map expects {}",
            x.ncols(),
            w.nrows()
        )));
    }
    Ok(x.dot(w))
}
