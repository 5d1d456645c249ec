//! Bilingual lexicon induction: rank the target vocabulary for each test source word.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embedding::WordVectorSpace;
use crate::error::{Error, Result};
use crate::lexicon::TranslationLexicon;
use crate::neighbors::{Metric, Prepared};
use crate::projection::ProjectionPair;
use crate::textio::write_atomic;

/// A run counts as successful when its MAP reaches this value.
pub const SUCCESS_THRESHOLD: f64 = 0.05;

/// Cutoffs reported as precision-at-k.
pub const PRECISION_CUTOFFS: [usize; 3] = [1, 5, 10];

/// CSLS scores of one unit-normalized query against unit-normalized candidates:
/// `2·cos(q, c_j) − r_candidates[j] − r_query`.
pub fn csls_scores(
    query: ArrayView1<'_, f64>,
    candidates: ArrayView2<'_, f64>,
    r_query: f64,
    r_candidates: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if candidates.nrows() != r_candidates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} candidates but {} penalties",
            candidates.nrows(),
            r_candidates.len()
        )));
    }
    let cos = candidates.dot(&query);
    Ok(cos * 2.0 - &r_candidates - r_query)
}

/// 1-based rank of candidate `target` in `scores`: higher scores first, ties broken by
/// the lower candidate index.
pub fn rank_of(scores: ArrayView1<'_, f64>, target: usize) -> usize {
    let s = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < target))
        .count()
}

/// Average precision of a ranking from the 1-based ranks of all relevant items.
pub fn average_precision(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    sorted
        .iter()
        .enumerate()
        .map(|(i, &r)| (i + 1) as f64 / r as f64)
        .sum::<f64>()
        / sorted.len() as f64
}

/// Per-query outcome of a BLI evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub source: String,
    pub golds: Vec<String>,
    pub best_rank: usize,
    pub average_precision: f64,
}

/// Aggregate scores of a BLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BliSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Language pair label such as `en-de`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
    pub map: f64,
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub p_at_10: f64,
    pub queries: usize,
    pub oov_skipped: usize,
    pub successful: bool,
}

#[derive(Debug, Clone)]
pub struct BliResult {
    pub records: Vec<QueryRecord>,
    pub map: f64,
    /// `(k, P@k)` for each cutoff in [`PRECISION_CUTOFFS`].
    pub precision_at: Vec<(usize, f64)>,
    pub oov_skipped: usize,
    pub successful: bool,
}

impl BliResult {
    pub fn from_records(records: Vec<QueryRecord>, oov_skipped: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("no test query is covered by both vocabularies".into()));
        }
        let n = records.len() as f64;
        let map = records.iter().map(|r| r.average_precision).sum::<f64>() / n;
        let precision_at = PRECISION_CUTOFFS
            .iter()
            .map(|&k| (k, records.iter().filter(|r| r.best_rank <= k).count() as f64 / n))
            .collect();
        Ok(Self {
            records,
            map,
            precision_at,
            oov_skipped,
            successful: map >= SUCCESS_THRESHOLD,
        })
    }

    pub fn query_count(&self) -> usize {
        self.records.len()
    }

    pub fn precision(&self, k: usize) -> Option<f64> {
        self.precision_at.iter().find(|(c, _)| *c == k).map(|&(_, p)| p)
    }

    /// Mean reciprocal rank of the best-ranked gold translation.
    pub fn mean_reciprocal_rank(&self) -> f64 {
        self.records.iter().map(|r| 1.0 / r.best_rank as f64).sum::<f64>() / self.records.len() as f64
    }

    pub fn average_precisions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.average_precision).collect()
    }

    pub fn summary(&self) -> BliSummary {
        let p = |k| self.precision(k).unwrap_or(0.0);
        BliSummary {
            method: None,
            pair: None,
            map: self.map,
            p_at_1: p(1),
            p_at_5: p(5),
            p_at_10: p(10),
            queries: self.records.len(),
            oov_skipped: self.oov_skipped,
            successful: self.successful,
        }
    }
}

/// Ranks the full projected target vocabulary for every test source word.
///
/// Source rows are mapped by `W_src`, target rows by `W_tgt`. Gold targets stay in the
/// candidate pool. Queries whose source word or every gold target is out of vocabulary
/// are skipped and counted.
pub fn bli_evaluate(
    pair: &ProjectionPair,
    src: &WordVectorSpace,
    tgt: &WordVectorSpace,
    test: &TranslationLexicon,
    metric: Metric,
) -> Result<BliResult> {
    let src_proj = pair.project_source(src)?;
    let tgt_proj = pair.project_target(tgt)?;
    bli_evaluate_projected(src_proj.view(), tgt_proj.view(), src, tgt, test, metric)
}

/// Like [`bli_evaluate`] on already projected matrices (rows follow the spaces' vocabularies).
pub fn bli_evaluate_projected(
    src_proj: ArrayView2<'_, f64>,
    tgt_proj: ArrayView2<'_, f64>,
    src: &WordVectorSpace,
    tgt: &WordVectorSpace,
    test: &TranslationLexicon,
    metric: Metric,
) -> Result<BliResult> {
    if src_proj.ncols() != tgt_proj.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "projected spaces have {} and {} dimensions",
            src_proj.ncols(),
            tgt_proj.ncols()
        )));
    }
    let mut queries = Vec::new();
    let mut oov = 0;
    for (source, golds) in test.grouped_by_source() {
        let gold_idx: Vec<usize> = golds.iter().filter_map(|g| tgt.index_of(g)).collect();
        match src.index_of(&source) {
            Some(i) if !gold_idx.is_empty() => queries.push((i, source, golds, gold_idx)),
            _ => oov += 1,
        }
    }
    if queries.is_empty() {
        return Err(Error::Empty("no test query is covered by both vocabularies".into()));
    }
    let prepared = Prepared::new(src_proj, tgt_proj, metric);
    let rows: Vec<usize> = queries.iter().map(|q| q.0).collect();
    // grouped_by_source merged repeated source words, so rows are distinct
    let golds_of: HashMap<usize, &[usize]> = queries.iter().map(|q| (q.0, q.3.as_slice())).collect();
    let ranks: Vec<Vec<usize>> = prepared.map_selected(&rows, |row, scores| {
        golds_of[&row].iter().map(|&g| rank_of(scores, g)).collect()
    });
    let records = queries
        .into_iter()
        .zip(ranks)
        .map(|((_, source, golds, _), ranks)| QueryRecord {
            best_rank: *ranks.iter().min().expect("at least one gold"),
            average_precision: average_precision(&ranks),
            source,
            golds,
        })
        .collect();
    BliResult::from_records(records, oov)
}

/// Writes the per-query report: `source<TAB>golds (|-joined)<TAB>best_rank<TAB>ap`.
pub fn write_report(result: &BliResult, path: &Path) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "# source\tgolds\tbest_rank\taverage_precision")?;
        for r in &result.records {
            writeln!(out, "{}\t{}\t{}\t{}", r.source, r.golds.join("|"), r.best_rank, r.average_precision)?;
        }
        Ok(())
    })
}

pub fn read_report(path: &Path) -> Result<Vec<QueryRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(&name, idx + 1, format!("expected 4 fields, found {}", fields.len())));
        }
        let bad = |what: &str| Error::parse(&name, idx + 1, format!("bad {what}"));
        records.push(QueryRecord {
            source: fields[0].to_string(),
            golds: fields[1].split('|').map(str::to_string).collect(),
            best_rank: fields[2].parse().map_err(|_| bad("rank"))?,
            average_precision: fields[3].parse().map_err(|_| bad("average precision"))?,
        });
    }
    Ok(records)
}

pub fn write_summary(summary: &BliSummary, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)?;
    write_atomic(path, |out| {
        out.write_all(json.as_bytes())?;
        out.write_all(b"\n")
    })
}

pub fn read_summary(path: &Path) -> Result<BliSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
