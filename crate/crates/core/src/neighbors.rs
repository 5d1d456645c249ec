//! Exact nearest-neighbor sweeps under cosine and CSLS similarity.
//!
//! Similarity blocks are computed a chunk of query rows at a time so that memory stays
//! bounded by `CHUNK_ENTRIES` regardless of vocabulary size. Results never depend on the
//! chunking or on rayon scheduling.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::normalize_rows;

const CHUNK_ENTRIES: usize = 1 << 22;

/// Default neighborhood size for CSLS hubness penalties.
pub const CSLS_NEIGHBORS: usize = 10;

/// Similarity used for retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Metric {
    Cosine,
    /// Cross-domain similarity local scaling with `neighbors` nearest neighbors per side.
    Csls { neighbors: usize },
}

impl Default for Metric {
    fn default() -> Self {
        Metric::Cosine
    }
}

impl FromStr for Metric {
    type Err = Error;

    /// Accepts `cosine`, `csls` (N = 10) or `csls:N`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cosine" | "nn" => Ok(Metric::Cosine),
            "csls" => Ok(Metric::Csls {
                neighbors: CSLS_NEIGHBORS,
            }),
            other => match other.strip_prefix("csls:").map(str::parse::<usize>) {
                Some(Ok(n)) if n >= 1 => Ok(Metric::Csls { neighbors: n }),
                _ => Err(Error::invalid(format!("unknown metric {other:?}"))),
            },
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Cosine => f.write_str("cosine"),
            Metric::Csls { neighbors } => write!(f, "csls:{neighbors}"),
        }
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.to_string()
    }
}

fn chunk_rows(cols: usize) -> usize {
    (CHUNK_ENTRIES / cols.max(1)).max(1)
}

/// Mean of the `k` largest values of `row` (`k` already clamped to the row length).
pub(crate) fn mean_top_k(row: ArrayView1<'_, f64>, k: usize) -> f64 {
    let mut buf: Vec<f64> = row.to_vec();
    let k = k.min(buf.len());
    if k == 0 {
        return 0.0;
    }
    if k < buf.len() {
        buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    buf[..k].iter().sum::<f64>() / k as f64
}

/// Hubness penalties: for every row of `a`, the mean cosine to its `k` nearest rows of `b`.
/// Both inputs must already be unit-normalized. `k` is clamped to `b.nrows()`.
pub fn mean_neighbor_similarity(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, k: usize) -> Array1<f64> {
    if k > b.nrows() {
        log::warn!("CSLS neighborhood {k} exceeds candidate set of {}; clamped", b.nrows());
    }
    let k = k.min(b.nrows());
    let step = chunk_rows(b.nrows());
    let parts: Vec<Vec<f64>> = (0..a.nrows())
        .step_by(step)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + step).min(a.nrows());
            let sims = a.slice(s![start..end, ..]).dot(&b.t());
            sims.rows().into_iter().map(|r| mean_top_k(r, k)).collect()
        })
        .collect();
    Array1::from_iter(parts.into_iter().flatten())
}

/// Unit-normalized inputs plus the candidate penalties a metric needs.
pub(crate) struct Prepared {
    pub queries: Array2<f64>,
    pub candidates: Array2<f64>,
    /// CSLS penalties of the candidates against the full query pool (unused under cosine).
    pub r_candidates: Array1<f64>,
    pub metric: Metric,
}

impl Prepared {
    /// Candidate penalties are computed against every query row.
    pub fn new(queries: ArrayView2<'_, f64>, candidates: ArrayView2<'_, f64>, metric: Metric) -> Self {
        let queries = normalize_rows(&queries.to_owned());
        let candidates = normalize_rows(&candidates.to_owned());
        let r_candidates = match metric {
            Metric::Cosine => Array1::zeros(candidates.nrows()),
            Metric::Csls { neighbors } => mean_neighbor_similarity(candidates.view(), queries.view(), neighbors),
        };
        Self {
            queries,
            candidates,
            r_candidates,
            metric,
        }
    }

    /// Scores of the given query rows against every candidate. Query penalties are read
    /// off the cosine rows themselves.
    fn block(&self, rows: &[usize]) -> Array2<f64> {
        let q = self.queries.select(Axis(0), rows);
        let mut scores = q.dot(&self.candidates.t());
        if let Metric::Csls { neighbors } = self.metric {
            let k = neighbors.min(self.candidates.nrows());
            for mut row in scores.rows_mut() {
                let r_query = mean_top_k(row.view(), k);
                row.zip_mut_with(&self.r_candidates, |s, &rc| *s = 2.0 * *s - rc - r_query);
            }
        }
        scores
    }

    /// Applies `f(query_index, scores)` to the selected query rows, in parallel over chunks,
    /// returning results in the order of `rows`.
    pub fn map_selected<T: Send>(&self, rows: &[usize], f: impl Fn(usize, ArrayView1<'_, f64>) -> T + Sync) -> Vec<T> {
        let step = chunk_rows(self.candidates.nrows());
        let parts: Vec<Vec<T>> = rows
            .par_chunks(step)
            .map(|chunk| {
                let block = self.block(chunk);
                block
                    .rows()
                    .into_iter()
                    .zip(chunk)
                    .map(|(row, &i)| f(i, row))
                    .collect()
            })
            .collect();
        parts.into_iter().flatten().collect()
    }

    pub fn map_rows<T: Send>(&self, f: impl Fn(usize, ArrayView1<'_, f64>) -> T + Sync) -> Vec<T> {
        let rows: Vec<usize> = (0..self.queries.nrows()).collect();
        self.map_selected(&rows, f)
    }
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// For every query row, the index of the most similar candidate row.
pub fn nearest_neighbors(queries: ArrayView2<'_, f64>, candidates: ArrayView2<'_, f64>, metric: Metric) -> Vec<usize> {
    if candidates.nrows() == 0 {
        return Vec::new();
    }
    Prepared::new(queries, candidates, metric).map_rows(|_, row| argmax(row))
}

/// Index pairs `(i, j)` where `j` is the nearest candidate of query `i` and `i` is the
/// nearest query of candidate `j`, sorted by `i`.
pub fn mutual_nearest_indices(
    queries: ArrayView2<'_, f64>,
    candidates: ArrayView2<'_, f64>,
    metric: Metric,
) -> Vec<(usize, usize)> {
    if queries.nrows() == 0 || candidates.nrows() == 0 {
        return Vec::new();
    }
    let forward = nearest_neighbors(queries, candidates, metric);
    let backward = nearest_neighbors(candidates, queries, metric);
    forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| backward[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}
