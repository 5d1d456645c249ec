//! Translation dictionaries and the word-aligned matrices built from them.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};

use crate::embedding::WordVectorSpace;
use crate::error::{Error, Result};
use crate::neighbors::{mutual_nearest_indices, Metric};
use crate::textio::write_atomic;

/// Default vocabulary cap for mutual nearest-neighbor sweeps inside bootstrapping loops.
pub const SEARCH_CAP: usize = 20_000;

/// Ordered list of `(source, target)` word pairs without exact duplicates.
///
/// A source word may have several targets and vice versa.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslationLexicon {
    pairs: Vec<(String, String)>,
    seen: HashSet<(String, String)>,
}

impl TranslationLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a lexicon, dropping exact duplicate pairs after their first occurrence.
    pub fn from_pairs<I, S, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut lex = Self::new();
        for (s, t) in pairs {
            lex.push(s, t);
        }
        lex
    }

    /// Appends a pair; returns false if it was already present.
    pub fn push(&mut self, source: impl Into<String>, target: impl Into<String>) -> bool {
        let pair = (source.into(), target.into());
        if self.seen.contains(&pair) {
            return false;
        }
        self.seen.insert(pair.clone());
        self.pairs.push(pair);
        true
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, source: &str, target: &str) -> bool {
        self.seen.contains(&(source.to_string(), target.to_string()))
    }

    /// Pairs of `self` followed by the new pairs of `other`, in order.
    pub fn union(&self, other: &TranslationLexicon) -> TranslationLexicon {
        let mut out = self.clone();
        for (s, t) in &other.pairs {
            out.push(s.clone(), t.clone());
        }
        out
    }

    pub fn intersection(&self, other: &TranslationLexicon) -> TranslationLexicon {
        Self::from_pairs(self.pairs.iter().filter(|(s, t)| other.contains(s, t)).cloned())
    }

    /// Every pair with source and target swapped.
    pub fn reversed(&self) -> TranslationLexicon {
        Self::from_pairs(self.pairs.iter().map(|(s, t)| (t.clone(), s.clone())))
    }

    /// Source words in first-occurrence order, each with all its targets.
    pub fn grouped_by_source(&self) -> Vec<(String, Vec<String>)> {
        let mut order: Vec<(String, Vec<String>)> = Vec::new();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        for (s, t) in &self.pairs {
            match slot.get(s.as_str()) {
                Some(&i) => order[i].1.push(t.clone()),
                None => {
                    slot.insert(s, order.len());
                    order.push((s.clone(), vec![t.clone()]));
                }
            }
        }
        order
    }

    /// The first `n` pairs, or all of them if there are fewer.
    pub fn prefix(&self, n: usize) -> TranslationLexicon {
        Self::from_pairs(self.pairs[..n.min(self.pairs.len())].iter().cloned())
    }
}

/// Reads a two-column dictionary (TAB preferred, single space accepted).
pub fn load_lexicon(path: &Path) -> Result<TranslationLexicon> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_lexicon(BufReader::new(file), &path.display().to_string())
}

pub fn read_lexicon<R: BufRead>(reader: R, source: &str) -> Result<TranslationLexicon> {
    let mut lex = TranslationLexicon::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source, idx + 1, e.to_string()))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split(' ').collect()
        };
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::parse(
                source,
                idx + 1,
                format!("expected 2 fields, found {}", fields.iter().filter(|f| !f.is_empty()).count()),
            ));
        }
        lex.push(fields[0], fields[1]);
    }
    Ok(lex)
}

/// Writes one TAB-separated pair per line.
pub fn save_lexicon(lex: &TranslationLexicon, path: &Path) -> Result<()> {
    write_atomic(path, |out| {
        for (s, t) in lex.pairs() {
            writeln!(out, "{s}\t{t}")?;
        }
        Ok(())
    })
}

/// Nested training prefixes plus a held-out test lexicon.
#[derive(Debug, Clone)]
pub struct DictionarySplit {
    /// One lexicon per requested size, in the order requested.
    pub train: Vec<TranslationLexicon>,
    pub test: TranslationLexicon,
    /// Pairs after the largest prefix skipped because their source word is a training word.
    pub skipped_overlap: usize,
}

/// Splits a frequency-ordered lexicon into nested training prefixes and the test pairs
/// that follow the largest prefix.
pub fn frequency_split(lex: &TranslationLexicon, train_sizes: &[usize], test_size: usize) -> Result<DictionarySplit> {
    let largest = train_sizes.iter().copied().max().unwrap_or(0);
    if largest + test_size > lex.len() {
        return Err(Error::invalid(format!(
            "need {largest} training + {test_size} test pairs but the lexicon has {}",
            lex.len()
        )));
    }
    let train: Vec<_> = train_sizes.iter().map(|&n| lex.prefix(n)).collect();
    let train_sources: HashSet<&str> = lex.pairs[..largest].iter().map(|(s, _)| s.as_str()).collect();
    let mut test = TranslationLexicon::new();
    let mut skipped_overlap = 0;
    for (s, t) in &lex.pairs[largest..] {
        if test.len() == test_size {
            break;
        }
        if train_sources.contains(s.as_str()) {
            skipped_overlap += 1;
            continue;
        }
        test.push(s.clone(), t.clone());
    }
    if test.len() < test_size {
        return Err(Error::invalid(format!(
            "only {} test pairs remain after removing training source words",
            test.len()
        )));
    }
    if skipped_overlap > 0 {
        log::warn!("frequency split skipped {skipped_overlap} test pairs sharing a training source word");
    }
    Ok(DictionarySplit {
        train,
        test,
        skipped_overlap,
    })
}

/// Row-aligned source and target vectors of the in-vocabulary dictionary pairs.
#[derive(Debug, Clone)]
pub struct AlignedMatrices {
    pub xs: Array2<f64>,
    pub xt: Array2<f64>,
    pub kept_pairs: TranslationLexicon,
    /// `kept / total` over the input lexicon.
    pub coverage: f64,
    pub skipped: usize,
}

impl AlignedMatrices {
    pub fn len(&self) -> usize {
        self.xs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.nrows() == 0
    }
}

pub fn build_aligned_matrices(
    lex: &TranslationLexicon,
    src: &WordVectorSpace,
    tgt: &WordVectorSpace,
) -> Result<AlignedMatrices> {
    let mut kept = TranslationLexicon::new();
    let mut rows = Vec::new();
    for (s, t) in lex.pairs() {
        if let (Some(i), Some(j)) = (src.index_of(s), tgt.index_of(t)) {
            kept.push(s.clone(), t.clone());
            rows.push((i, j));
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!(
            "none of the {} dictionary pairs is covered by both vocabularies",
            lex.len()
        )));
    }
    let xs = Array2::from_shape_fn((rows.len(), src.dim()), |(k, c)| src.matrix()[[rows[k].0, c]]);
    let xt = Array2::from_shape_fn((rows.len(), tgt.dim()), |(k, c)| tgt.matrix()[[rows[k].1, c]]);
    let skipped = lex.len() - rows.len();
    if skipped > 0 {
        log::info!("dictionary coverage {}/{}", rows.len(), lex.len());
    }
    Ok(AlignedMatrices {
        xs,
        xt,
        coverage: rows.len() as f64 / lex.len() as f64,
        kept_pairs: kept,
        skipped,
    })
}

/// Mutual nearest neighbors between two projected spaces, restricted to the first
/// `search_cap` rows of each side. Ties go to the lowest (most frequent) index.
pub fn mutual_nearest_neighbors(
    src_proj: ArrayView2<'_, f64>,
    tgt_proj: ArrayView2<'_, f64>,
    src_words: &[String],
    tgt_words: &[String],
    metric: Metric,
    search_cap: usize,
) -> TranslationLexicon {
    let ns = search_cap.min(src_proj.nrows()).min(src_words.len());
    let nt = search_cap.min(tgt_proj.nrows()).min(tgt_words.len());
    let pairs = mutual_nearest_indices(src_proj.slice(s![..ns, ..]), tgt_proj.slice(s![..nt, ..]), metric);
    TranslationLexicon::from_pairs(pairs.into_iter().map(|(i, j)| (src_words[i].clone(), tgt_words[j].clone())))
}
