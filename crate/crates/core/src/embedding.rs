//! Monolingual word vector spaces: loading, validation, normalization and persistence.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::numerics::{self, center_columns, covariance};
use crate::textio::{self, format_float, EMBEDDING_DIGITS};

/// An ordered vocabulary with one `d`-dimensional row vector per word.
///
/// Row order is frequency order as produced by standard embedding trainers, so
/// "the first `n` words" always means "the `n` most frequent words".
#[derive(Debug, Clone)]
pub struct WordVectorSpace {
    words: Vec<String>,
    matrix: Array2<f64>,
    lang_tag: String,
    index: HashMap<String, usize>,
}

impl WordVectorSpace {
    pub fn new(words: Vec<String>, matrix: Array2<f64>, lang_tag: impl Into<String>) -> Result<Self> {
        if words.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} words but {} matrix rows",
                words.len(),
                matrix.nrows()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            let row = pos / matrix.ncols();
            return Err(Error::invalid(format!("non-finite value in vector of {:?}", words[row])));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self {
            words,
            matrix,
            lang_tag: lang_tag.into(),
            index,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn lang_tag(&self) -> &str {
        &self.lang_tag
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(word).map(|i| self.matrix.row(i))
    }

    /// The `n` most frequent words (clamped to the vocabulary size).
    pub fn truncated(&self, n: usize) -> WordVectorSpace {
        let n = n.min(self.len());
        let words = self.words[..n].to_vec();
        let index = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        Self {
            words,
            matrix: self.matrix.slice(ndarray::s![..n, ..]).to_owned(),
            lang_tag: self.lang_tag.clone(),
            index,
        }
    }

    /// Same vocabulary with a replacement matrix of equal shape.
    pub(crate) fn with_matrix(&self, matrix: Array2<f64>) -> WordVectorSpace {
        debug_assert_eq!(matrix.dim(), self.matrix.dim());
        Self {
            words: self.words.clone(),
            matrix,
            lang_tag: self.lang_tag.clone(),
            index: self.index.clone(),
        }
    }
}

/// One normalization step applied to a whole space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocessStep {
    UnitLength,
    MeanCenter,
    ZcaWhiten,
}

impl FromStr for PreprocessStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unit" | "unit-length" => Ok(Self::UnitLength),
            "center" | "mean-center" => Ok(Self::MeanCenter),
            "whiten" | "zca-whiten" => Ok(Self::ZcaWhiten),
            other => Err(Error::invalid(format!("unknown preprocessing step {other:?}"))),
        }
    }
}

impl fmt::Display for PreprocessStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UnitLength => "unit-length",
            Self::MeanCenter => "mean-center",
            Self::ZcaWhiten => "zca-whiten",
        })
    }
}

/// Default eigenvalue regularizer for ZCA whitening.
pub const WHITEN_EPSILON: f64 = 1e-12;
/// Default upper bound on the number of steps in a chain.
pub const MAX_PREPROCESS_STEPS: usize = 3;

/// Ordered list of normalization steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessChain {
    pub steps: Vec<PreprocessStep>,
    pub whiten_epsilon: f64,
    pub max_steps: usize,
}

impl Default for PreprocessChain {
    fn default() -> Self {
        Self {
            steps: Vec::new(),
            whiten_epsilon: WHITEN_EPSILON,
            max_steps: MAX_PREPROCESS_STEPS,
        }
    }
}

impl PreprocessChain {
    pub fn new(steps: Vec<PreprocessStep>) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    /// Parses a comma separated list such as `unit,center,whiten`. Empty string = no steps.
    pub fn parse(spec: &str) -> Result<Self> {
        let steps = spec
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        let chain = Self::new(steps);
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.len() > self.max_steps {
            return Err(Error::invalid(format!(
                "preprocessing chain has {} steps, at most {} allowed",
                self.steps.len(),
                self.max_steps
            )));
        }
        if !(self.whiten_epsilon >= 0.0) {
            return Err(Error::invalid("whitening epsilon must be nonnegative"));
        }
        Ok(())
    }
}

/// Side information produced by [`normalize_with_report`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizeReport {
    /// Zero rows encountered by unit-length steps (left unchanged).
    pub zero_rows: usize,
}

pub fn normalize(space: &WordVectorSpace, chain: &PreprocessChain) -> Result<WordVectorSpace> {
    normalize_with_report(space, chain).map(|(s, _)| s)
}

pub fn normalize_with_report(
    space: &WordVectorSpace,
    chain: &PreprocessChain,
) -> Result<(WordVectorSpace, NormalizeReport)> {
    chain.validate()?;
    let mut matrix = space.matrix.clone();
    let mut report = NormalizeReport::default();
    for &step in &chain.steps {
        matrix = match step {
            PreprocessStep::UnitLength => {
                report.zero_rows += matrix
                    .rows()
                    .into_iter()
                    .filter(|r| r.iter().all(|&v| v == 0.0))
                    .count();
                numerics::normalize_rows(&matrix)
            }
            PreprocessStep::MeanCenter => center_columns(&matrix).1,
            PreprocessStep::ZcaWhiten => {
                let eps = chain.whiten_epsilon;
                let whitener = numerics::symmetric_function(&covariance(&matrix), |v| {
                    1.0 / (v.max(0.0) + eps).sqrt()
                })
                .map_err(|e| Error::numerical(step.to_string(), e.to_string()))?;
                matrix.dot(&whitener)
            }
        };
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(step.to_string(), "produced non-finite values"));
        }
    }
    if report.zero_rows > 0 {
        log::warn!("{}: {} zero vectors left unnormalized", space.lang_tag, report.zero_rows);
    }
    Ok((space.with_matrix(matrix), report))
}

/// Counters gathered while reading an embedding file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub had_header: bool,
    pub duplicates_dropped: usize,
}

/// Loads a word2vec-style text file (optional `<count> <dim>` header line).
pub fn load_text_embeddings(path: &Path, max_vocab: Option<usize>) -> Result<WordVectorSpace> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (space, stats) = read_text_embeddings(BufReader::new(file), &path.display().to_string(), &tag, max_vocab)?;
    if stats.duplicates_dropped > 0 {
        log::warn!("{}: dropped {} duplicate words", path.display(), stats.duplicates_dropped);
    }
    Ok(space)
}

/// Reader-level loader behind [`load_text_embeddings`]; `source` names the input in errors.
pub fn read_text_embeddings<R: BufRead>(
    reader: R,
    source: &str,
    lang_tag: &str,
    max_vocab: Option<usize>,
) -> Result<(WordVectorSpace, LoadStats)> {
    if max_vocab == Some(0) {
        return Err(Error::invalid("max_vocab must be positive"));
    }
    let limit = max_vocab.unwrap_or(usize::MAX);
    let mut stats = LoadStats::default();
    let mut words = Vec::new();
    let mut data = Vec::new();
    let mut seen = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut header_dim = None;
    let mut first = true;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(source, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        if first {
            first = false;
            let parts: Vec<&str> = line.split_ascii_whitespace().collect();
            if parts.len() == 2 {
                if let (Ok(_), Ok(d)) = (parts[0].parse::<usize>(), parts[1].parse::<usize>()) {
                    stats.had_header = true;
                    header_dim = Some(d);
                    continue;
                }
            }
        }
        if words.len() >= limit {
            break;
        }
        let word = fields.next().expect("line is not blank");
        let start = data.len();
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(source, line_no, format!("unparseable float {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(source, line_no, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
        let count = data.len() - start;
        match dim {
            None => {
                if count == 0 {
                    return Err(Error::parse(source, line_no, "word without vector"));
                }
                if let Some(h) = header_dim {
                    if h != count {
                        return Err(Error::parse(
                            source,
                            line_no,
                            format!("header declares dimension {h}, row has {count} values"),
                        ));
                    }
                }
                dim = Some(count);
            }
            Some(d) if d != count => {
                return Err(Error::parse(source, line_no, format!("expected {d} values, found {count}")));
            }
            _ => {}
        }
        if seen.contains_key(word) {
            stats.duplicates_dropped += 1;
            data.truncate(start);
            continue;
        }
        seen.insert(word.to_string(), words.len());
        words.push(word.to_string());
    }

    let dim = dim.ok_or_else(|| Error::Empty(format!("no word vectors in {source}")))?;
    let matrix = Array2::from_shape_vec((words.len(), dim), data).expect("row lengths checked");
    let space = WordVectorSpace {
        words,
        matrix,
        lang_tag: lang_tag.to_string(),
        index: seen,
    };
    Ok((space, stats))
}

/// Writes `space` with a `<count> <dim>` header and 6 significant digits per value.
pub fn save_text_embeddings(space: &WordVectorSpace, path: &Path) -> Result<()> {
    save_text_embeddings_with_precision(space, path, EMBEDDING_DIGITS)
}

pub fn save_text_embeddings_with_precision(space: &WordVectorSpace, path: &Path, digits: usize) -> Result<()> {
    if space.is_empty() {
        return Err(Error::Empty("refusing to save an empty vector space".into()));
    }
    textio::write_atomic(path, |out| write_space(space, out, digits))
}

fn write_space(space: &WordVectorSpace, out: &mut dyn Write, digits: usize) -> std::io::Result<()> {
    writeln!(out, "{} {}", space.len(), space.dim())?;
    let mut line = String::new();
    for (word, row) in space.words.iter().zip(space.matrix.axis_iter(Axis(0))) {
        line.clear();
        line.push_str(word);
        for &v in row {
            line.push(' ');
            line.push_str(&format_float(v, digits));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}
