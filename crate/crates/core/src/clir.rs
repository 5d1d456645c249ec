//! Unsupervised cross-lingual document retrieval by averaging word embeddings.
//!
//! Queries and documents become weighted means of their in-vocabulary word vectors,
//! mapped into the shared space, and documents are ranked by cosine to the query.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::embedding::WordVectorSpace;
use crate::error::{Error, Result};
use crate::eval::bli::average_precision;
use crate::eval::stats::paired_ttest;
use crate::projection::ProjectionPair;
use crate::textio::{format_float, write_atomic, MATRIX_DIGITS};

/// Lowercases, deletes Unicode punctuation, splits on whitespace and drops
/// single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    static PUNCT: OnceLock<Regex> = OnceLock::new();
    let punct = PUNCT.get_or_init(|| Regex::new(r"\p{P}").expect("valid regex"));
    punct
        .replace_all(&text.to_lowercase(), "")
        .split_whitespace()
        .filter(|t| t.chars().count() > 1)
        .map(str::to_string)
        .collect()
}

/// Tokenized documents, queries and binary relevance judgments.
#[derive(Debug, Clone, Default)]
pub struct DocumentCollection {
    docs: Vec<(String, Vec<String>)>,
    queries: Vec<(String, Vec<String>)>,
    qrels: BTreeSet<(String, String)>,
}

impl DocumentCollection {
    /// Checks that ids are unique and every judgment names a known query and document.
    pub fn new(
        docs: Vec<(String, Vec<String>)>,
        queries: Vec<(String, Vec<String>)>,
        qrels: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let doc_ids = unique_ids(&docs, "document")?;
        let query_ids = unique_ids(&queries, "query")?;
        let qrels: BTreeSet<_> = qrels.into_iter().collect();
        for (q, d) in &qrels {
            if !query_ids.contains(q.as_str()) {
                return Err(Error::invalid(format!("judgment for unknown query {q:?}")));
            }
            if !doc_ids.contains(d.as_str()) {
                return Err(Error::invalid(format!("judgment for unknown document {d:?}")));
            }
        }
        Ok(Self { docs, queries, qrels })
    }

    pub fn docs(&self) -> &[(String, Vec<String>)] {
        &self.docs
    }

    pub fn queries(&self) -> &[(String, Vec<String>)] {
        &self.queries
    }

    pub fn qrels(&self) -> &BTreeSet<(String, String)> {
        &self.qrels
    }

    pub fn is_relevant(&self, query: &str, doc: &str) -> bool {
        self.qrels.contains(&(query.to_string(), doc.to_string()))
    }
}

fn unique_ids<'a>(items: &'a [(String, Vec<String>)], what: &str) -> Result<HashSet<&'a str>> {
    let mut seen = HashSet::new();
    for (id, _) in items {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(seen)
}

/// Reads `id<TAB>text` lines and tokenizes the text. Blank lines are skipped.
pub fn read_texts<R: BufRead>(reader: R, source: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source, idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, idx + 1, "expected id<TAB>text"))?;
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::parse(source, idx + 1, "empty id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(source, idx + 1, format!("duplicate id {id:?}")));
        }
        out.push((id.to_string(), tokenize(text)));
    }
    Ok(out)
}

/// Reads TREC qrels (`qid iter docid rel`), keeping pairs with `rel > 0`.
pub fn read_qrels<R: BufRead>(reader: R, source: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source, idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(source, idx + 1, format!("expected 4 qrel fields, found {}", fields.len())));
        }
        let rel: i64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(source, idx + 1, format!("bad relevance {:?}", fields[3])))?;
        if rel > 0 {
            out.push((fields[0].to_string(), fields[2].to_string()));
        }
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn ingest_collection(doc_path: &Path, query_path: &Path, qrel_path: &Path) -> Result<DocumentCollection> {
    let docs = read_texts(open(doc_path)?, &doc_path.display().to_string())?;
    let queries = read_texts(open(query_path)?, &query_path.display().to_string())?;
    let qrels = read_qrels(open(qrel_path)?, &qrel_path.display().to_string())?;
    DocumentCollection::new(docs, queries, qrels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingScheme {
    Uniform,
    #[default]
    Idf,
}

impl FromStr for WeightingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(Self::Uniform),
            "idf" => Ok(Self::Idf),
            other => Err(Error::invalid(format!("unknown term weighting {other:?}"))),
        }
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Idf => "idf",
        })
    }
}

/// Per-token weights for [`aggregate_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct TermWeighting {
    pub scheme: WeightingScheme,
    idf: HashMap<String, f64>,
    /// Weight of tokens absent from the table, `ln N` (as if seen once).
    unseen: f64,
}

impl TermWeighting {
    pub fn uniform() -> Self {
        Self {
            scheme: WeightingScheme::Uniform,
            idf: HashMap::new(),
            unseen: 1.0,
        }
    }

    /// `idf(t) = ln(N / df(t))` over the given texts.
    pub fn idf<'a>(texts: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for tokens in texts {
            n += 1;
            let distinct: HashSet<&String> = tokens.iter().collect();
            for t in distinct {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let total = n.max(1) as f64;
        let idf = df.into_iter().map(|(t, c)| (t, (total / c as f64).ln())).collect();
        Self {
            scheme: WeightingScheme::Idf,
            idf,
            unseen: total.ln(),
        }
    }

    /// Uses explicit idf values, e.g. from an external corpus.
    pub fn from_table(idf: HashMap<String, f64>, unseen: f64) -> Result<Self> {
        if idf.values().chain([&unseen]).any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("idf values must be finite and nonnegative"));
        }
        Ok(Self {
            scheme: WeightingScheme::Idf,
            idf,
            unseen,
        })
    }

    pub fn weight(&self, token: &str) -> f64 {
        match self.scheme {
            WeightingScheme::Uniform => 1.0,
            WeightingScheme::Idf => self.idf.get(token).copied().unwrap_or(self.unseen),
        }
    }
}

/// Weighted mean vector of a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TextVector {
    pub vector: Array1<f64>,
    pub in_vocab: usize,
    pub oov: usize,
    /// True when no token contributed positive weight and the vector is all zeros.
    pub empty: bool,
}

pub fn aggregate_text(tokens: &[String], space: &WordVectorSpace, weighting: &TermWeighting) -> TextVector {
    let mut vector = Array1::zeros(space.dim());
    let mut total = 0.0;
    let (mut in_vocab, mut oov) = (0, 0);
    for t in tokens {
        match space.vector(t) {
            Some(v) => {
                in_vocab += 1;
                let w = weighting.weight(t);
                vector.scaled_add(w, &v);
                total += w;
            }
            None => oov += 1,
        }
    }
    let empty = total <= 0.0;
    if empty {
        vector.fill(0.0);
    } else {
        vector /= total;
    }
    TextVector {
        vector,
        in_vocab,
        oov,
        empty,
    }
}

/// Ranked documents for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRanking {
    pub query: String,
    /// `(doc id, cosine)`, best first; equal scores ordered by doc id.
    pub docs: Vec<(String, f64)>,
    /// Average precision, `None` for queries without relevant documents.
    pub average_precision: Option<f64>,
    /// `(doc id, 1-based rank)` of every relevant document, ordered by doc id.
    pub relevant_ranks: Vec<(String, usize)>,
    /// The query had no weighted in-vocabulary token, so every document scored 0.
    pub empty_query: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClirRun {
    pub rankings: Vec<QueryRanking>,
    pub map: f64,
    /// Queries left out of the MAP because they have no relevant documents.
    pub excluded_queries: usize,
    /// Documents whose aggregate vector is zero.
    pub empty_docs: usize,
}

impl ClirRun {
    /// Relevant-document ranks of all judged queries, in query then doc id order.
    pub fn relevant_ranks(&self) -> Vec<(String, String, usize)> {
        self.rankings
            .iter()
            .flat_map(|r| r.relevant_ranks.iter().map(|(d, k)| (r.query.clone(), d.clone(), *k)))
            .collect()
    }

    pub fn empty_queries(&self) -> usize {
        self.rankings.iter().filter(|r| r.empty_query).count()
    }
}

fn unit_rows(rows: Vec<Array1<f64>>, dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (mut out, v) in m.rows_mut().into_iter().zip(rows) {
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            out.assign(&(v / norm));
        }
    }
    m
}

/// Ranks every document for every query. Query text is aggregated in `query_space` and
/// mapped by `W_src`; documents are aggregated in `doc_space` and mapped by `W_tgt`.
/// Under idf weighting each side gets its own table, computed over its own texts.
pub fn clir_run(
    collection: &DocumentCollection,
    pair: &ProjectionPair,
    query_space: &WordVectorSpace,
    doc_space: &WordVectorSpace,
    scheme: WeightingScheme,
) -> Result<ClirRun> {
    if collection.docs.is_empty() || collection.queries.is_empty() {
        return Err(Error::Empty("collection needs at least one document and one query".into()));
    }
    let (q_weights, d_weights) = match scheme {
        WeightingScheme::Uniform => (TermWeighting::uniform(), TermWeighting::uniform()),
        WeightingScheme::Idf => (
            TermWeighting::idf(collection.queries.iter().map(|(_, t)| t.as_slice())),
            TermWeighting::idf(collection.docs.iter().map(|(_, t)| t.as_slice())),
        ),
    };
    let mut rows = Vec::new();
    let mut empty_docs = 0;
    for (_, tokens) in &collection.docs {
        let agg = aggregate_text(tokens, doc_space, &d_weights);
        empty_docs += agg.empty as usize;
        rows.push(agg.vector);
    }
    let mapped = Array2::from_shape_fn((rows.len(), doc_space.dim()), |(i, j)| rows[i][j]);
    let docs = crate::projection::project_rows(&mapped, &pair.w_tgt, "target")?;
    let docs = unit_rows(docs.rows().into_iter().map(|r| r.to_owned()).collect(), docs.ncols());

    let mut queries = Vec::new();
    let mut empty_flags = Vec::new();
    for (_, tokens) in &collection.queries {
        let agg = aggregate_text(tokens, query_space, &q_weights);
        empty_flags.push(agg.empty);
        queries.push(agg.vector);
    }
    let mapped = Array2::from_shape_fn((queries.len(), query_space.dim()), |(i, j)| queries[i][j]);
    let queries = crate::projection::project_rows(&mapped, &pair.w_src, "source")?;
    let queries = unit_rows(queries.rows().into_iter().map(|r| r.to_owned()).collect(), queries.ncols());
    if queries.ncols() != docs.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "queries map to {} dims, documents to {}",
            queries.ncols(),
            docs.ncols()
        )));
    }

    let rankings: Vec<QueryRanking> = collection
        .queries
        .par_iter()
        .enumerate()
        .map(|(qi, (qid, _))| {
            let scores = docs.dot(&queries.row(qi));
            let mut order: Vec<usize> = (0..collection.docs.len()).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .total_cmp(&scores[a])
                    .then_with(|| collection.docs[a].0.cmp(&collection.docs[b].0))
            });
            let ranked: Vec<(String, f64)> = order.iter().map(|&i| (collection.docs[i].0.clone(), scores[i])).collect();
            let mut relevant_ranks: Vec<(String, usize)> = ranked
                .iter()
                .enumerate()
                .filter(|(_, (d, _))| collection.is_relevant(qid, d))
                .map(|(k, (d, _))| (d.clone(), k + 1))
                .collect();
            relevant_ranks.sort();
            let ranks: Vec<usize> = relevant_ranks.iter().map(|(_, k)| *k).collect();
            QueryRanking {
                query: qid.clone(),
                docs: ranked,
                average_precision: (!ranks.is_empty()).then(|| average_precision(&ranks)),
                relevant_ranks,
                empty_query: empty_flags[qi],
            }
        })
        .collect();

    let judged: Vec<f64> = rankings.iter().filter_map(|r| r.average_precision).collect();
    let excluded_queries = rankings.len() - judged.len();
    if judged.is_empty() {
        return Err(Error::Empty("no query has a relevant document".into()));
    }
    if empty_docs > 0 {
        log::warn!("{empty_docs} documents have no in-vocabulary token");
    }
    Ok(ClirRun {
        map: judged.iter().sum::<f64>() / judged.len() as f64,
        rankings,
        excluded_queries,
        empty_docs,
    })
}

/// Two-tailed paired t-test on the relevant-document ranks of two runs over the same
/// judgments. Runs from several collections can be compared by concatenating their
/// [`ClirRun::relevant_ranks`] and calling [`rank_significance`].
pub fn clir_significance(a: &ClirRun, b: &ClirRun) -> Result<f64> {
    rank_significance(&a.relevant_ranks(), &b.relevant_ranks())
}

pub fn rank_significance(a: &[(String, String, usize)], b: &[(String, String, usize)]) -> Result<f64> {
    let same_keys = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0 && x.1 == y.1);
    if !same_keys {
        return Err(Error::invalid("runs were evaluated on different relevance judgments"));
    }
    let ra: Vec<f64> = a.iter().map(|r| r.2 as f64).collect();
    let rb: Vec<f64> = b.iter().map(|r| r.2 as f64).collect();
    paired_ttest(&ra, &rb)
}

/// One line of a TREC run file: `qid Q0 docid rank score tag`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrecRunLine {
    pub query: String,
    pub doc: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

pub fn run_lines(run: &ClirRun, tag: &str) -> Vec<TrecRunLine> {
    run.rankings
        .iter()
        .flat_map(|r| {
            r.docs.iter().enumerate().map(|(k, (d, s))| TrecRunLine {
                query: r.query.clone(),
                doc: d.clone(),
                rank: k + 1,
                score: *s,
                tag: tag.to_string(),
            })
        })
        .collect()
}

pub fn write_trec_run(run: &ClirRun, tag: &str, path: &Path) -> Result<()> {
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::invalid(format!("run tag {tag:?} must be one nonempty word")));
    }
    let lines = run_lines(run, tag);
    write_atomic(path, |out| {
        for l in &lines {
            writeln!(out, "{} Q0 {} {} {} {}", l.query, l.doc, l.rank, format_float(l.score, MATRIX_DIGITS), l.tag)?;
        }
        Ok(())
    })
}

/// Parses a TREC run. Ranks must be positive and strictly increasing within a query.
pub fn read_trec_run<R: BufRead>(reader: R, source: &str) -> Result<Vec<TrecRunLine>> {
    let mut out: Vec<TrecRunLine> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source, idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::parse(source, idx + 1, m);
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 run fields, found {}", f.len())));
        }
        if f[1] != "Q0" {
            return Err(bad(format!("second field must be Q0, found {:?}", f[1])));
        }
        let rank: usize = f[3].parse().map_err(|_| bad(format!("bad rank {:?}", f[3])))?;
        let score: f64 = f[4].parse().map_err(|_| bad(format!("bad score {:?}", f[4])))?;
        if rank == 0 {
            return Err(bad("ranks start at 1".into()));
        }
        if let Some(prev) = out.last() {
            if prev.query == f[0] && rank <= prev.rank {
                return Err(bad(format!("rank {rank} does not follow {}", prev.rank)));
            }
        }
        out.push(TrecRunLine {
            query: f[0].to_string(),
            doc: f[2].to_string(),
            rank,
            score,
            tag: f[5].to_string(),
        });
    }
    Ok(out)
}
