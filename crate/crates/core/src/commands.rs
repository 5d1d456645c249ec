//! The batch commands behind the `crossling` binary.
//!
//! Each command validates its inputs before writing anything, and every output file is
//! written through a temporary sibling renamed on success.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::clir::{clir_run, ingest_collection, write_trec_run, ClirRun, WeightingScheme};
use crate::config::{must_exist, ExperimentConfig};
use crate::embedding::{
    load_text_embeddings, normalize, normalize_with_report, save_text_embeddings, NormalizeReport, PreprocessChain,
    WordVectorSpace,
};
use crate::error::{Error, Result};
use crate::eval::bli::{bli_evaluate, read_report, read_summary, write_report, write_summary, BliResult, BliSummary};
use crate::eval::stats::{paired_ttest, shuffling_test, SignificanceReport, TestKind};
use crate::lexicon::{build_aligned_matrices, frequency_split, load_lexicon, save_lexicon, DictionarySplit};
use crate::projection::{Method, ProjectionPair};
use crate::supervised::{align_cca, align_dlv, align_proc, align_proc_b, align_rcsls};
use crate::textio::write_atomic;
use crate::unsupervised::{align_gwa, align_icp, align_vecmap, self_learn, vecmap_postprocess};

fn load_space(path: &Path, max_vocab: Option<usize>, chain: &PreprocessChain) -> Result<WordVectorSpace> {
    normalize(&load_text_embeddings(path, max_vocab)?, chain)
}

/// Source and target spaces named by the config, preprocessed.
pub fn load_spaces(cfg: &ExperimentConfig) -> Result<(WordVectorSpace, WordVectorSpace)> {
    cfg.validate_spaces()?;
    let src = load_space(cfg.source_path()?, cfg.embeddings.max_vocab, &cfg.source_chain()?)?;
    let tgt = load_space(cfg.target_path()?, cfg.embeddings.max_vocab, &cfg.target_chain()?)?;
    Ok((src, tgt))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    write_atomic(path, |out| {
        out.write_all(json.as_bytes())?;
        out.write_all(b"\n")
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub pair: ProjectionPair,
    pub output: PathBuf,
    pub wall_seconds: f64,
}

/// Runs the configured aligner and writes `W_src.txt`, `W_tgt.txt`, `metadata.json`,
/// `timing.json` and, when the method induces one, `dictionary.txt` into the output
/// directory. `metadata.json` depends only on the config and the data.
pub fn cmd_align(cfg: &ExperimentConfig) -> Result<AlignOutcome> {
    let method = cfg.validate_align()?;
    let seed = cfg.seed_for(method)?;
    let output = cfg.output()?.to_path_buf();
    let (src, tgt) = load_spaces(cfg)?;
    let train = match &cfg.dictionary.train {
        Some(path) if method.is_supervised() => {
            let lex = load_lexicon(path)?;
            Some(match cfg.dictionary.train_size {
                Some(n) => lex.prefix(n),
                None => lex,
            })
        }
        _ => None,
    };
    let seed_lex = || train.as_ref().ok_or_else(|| Error::Config("dictionary.train is not set".into()));

    let started = Instant::now();
    let mut extra = serde_json::Map::new();
    let pair = match method {
        Method::Proc => align_proc(&build_aligned_matrices(seed_lex()?, &src, &tgt)?)?,
        Method::ProcB => {
            extra.insert("proc_b".into(), serde_json::to_value(cfg.proc_b)?);
            align_proc_b(&src, &tgt, seed_lex()?, &cfg.proc_b)?
        }
        Method::Cca => {
            extra.insert("cca".into(), serde_json::to_value(&cfg.cca)?);
            align_cca(&build_aligned_matrices(seed_lex()?, &src, &tgt)?, cfg.cca.keep_dims)?
        }
        Method::Dlv => {
            extra.insert("dlv".into(), serde_json::to_value(cfg.dlv)?);
            align_dlv(&src, &tgt, seed_lex()?, &cfg.dlv)?
        }
        Method::Rcsls => {
            extra.insert("rcsls".into(), serde_json::to_value(cfg.rcsls)?);
            let aligned = build_aligned_matrices(seed_lex()?, &src, &tgt)?;
            align_rcsls(&aligned, src.matrix(), tgt.matrix(), &cfg.rcsls)?
        }
        Method::SelfLearn | Method::Vecmap => {
            extra.insert("self_learn".into(), serde_json::to_value(cfg.self_learn)?);
            let pair = if method == Method::Vecmap {
                extra.insert("seed_cap".into(), cfg.vecmap.seed_cap.into());
                align_vecmap(&src, &tgt, &cfg.vecmap_config(seed))?
            } else {
                self_learn(&src, &tgt, seed_lex()?, &cfg.self_learn_config(seed))?.0
            };
            if cfg.postprocess.is_noop() {
                pair
            } else {
                extra.insert("postprocess".into(), serde_json::to_value(cfg.postprocess)?);
                let dict = pair.dictionary.clone().unwrap_or_default();
                let aligned = build_aligned_matrices(&dict, &src, &tgt)?;
                vecmap_postprocess(&pair, &aligned, &cfg.postprocess)?.with_dictionary(dict)
            }
        }
        Method::Icp => {
            extra.insert("icp".into(), serde_json::to_value(cfg.icp)?);
            align_icp(&src, &tgt, &cfg.icp_config(seed))?
        }
        Method::Gwa => {
            extra.insert("gwa".into(), serde_json::to_value(cfg.gwa)?);
            let (pair, plan) = align_gwa(&src, &tgt, &cfg.gwa)?;
            extra.insert("marginal_violation".into(), plan.violation.into());
            pair
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();

    extra.insert("seed".into(), seed.into());
    extra.insert("source".into(), cfg.source_path()?.display().to_string().into());
    extra.insert("target".into(), cfg.target_path()?.display().to_string().into());
    extra.insert("preprocess_source".into(), cfg.embeddings.preprocess_source.clone().into());
    extra.insert("preprocess_target".into(), cfg.embeddings.preprocess_target.clone().into());
    if let Some(path) = cfg.dictionary.train.as_ref().filter(|_| method.is_supervised()) {
        extra.insert("train_dictionary".into(), path.display().to_string().into());
    }
    pair.save(&output, &serde_json::Value::Object(extra))?;
    write_json(&serde_json::json!({ "wall_seconds": wall_seconds }), &output.join("timing.json"))?;
    if let Some(dict) = &pair.dictionary {
        save_lexicon(dict, &output.join("dictionary.txt"))?;
    }
    Ok(AlignOutcome {
        pair,
        output,
        wall_seconds,
    })
}

/// Evaluates a stored projection on a test lexicon; writes `report.tsv` and `summary.json`.
pub fn cmd_eval_bli(cfg: &ExperimentConfig, projection: &Path, test: &Path, output: &Path) -> Result<(BliResult, BliSummary)> {
    must_exist(projection)?;
    must_exist(test)?;
    let (src, tgt) = load_spaces(cfg)?;
    let pair = ProjectionPair::load(projection)?;
    let lexicon = load_lexicon(test)?;
    let result = bli_evaluate(&pair, &src, &tgt, &lexicon, cfg.evaluation.metric)?;
    let mut summary = result.summary();
    summary.method = Some(pair.method.to_string());
    summary.pair = cfg.pair_label();
    create_dir(output)?;
    write_report(&result, &output.join("report.tsv"))?;
    write_summary(&summary, &output.join("summary.json"))?;
    Ok((result, summary))
}

/// Significance of the difference between two per-query BLI reports.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: SignificanceReport,
    pub map_a: f64,
    pub map_b: f64,
    pub queries: usize,
}

impl Comparison {
    pub fn p_value(&self) -> f64 {
        self.report.p_values[0]
    }

    pub fn significant(&self) -> bool {
        self.report.significant[0]
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "queries: {}", self.queries)?;
        writeln!(f, "MAP a: {:.4}  MAP b: {:.4}", self.map_a, self.map_b)?;
        writeln!(
            f,
            "test: {}  alpha: {}  comparisons: {}  threshold: {}",
            self.report.test, self.report.alpha, self.report.comparisons, self.report.corrected_alpha
        )?;
        let verdict = if self.significant() { "significant" } else { "not significant" };
        write!(f, "p = {:.6}: {verdict}", self.p_value())
    }
}

pub fn cmd_compare(run_a: &Path, run_b: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<Comparison> {
    let opts = &cfg.compare;
    // fails early on bad alpha or comparisons
    crate::eval::stats::bonferroni(opts.alpha, opts.comparisons)?;
    let by_source = |path: &Path| -> Result<BTreeMap<String, f64>> {
        let records = read_report(path)?;
        let n = records.len();
        let map: BTreeMap<_, _> = records.into_iter().map(|r| (r.source, r.average_precision)).collect();
        if map.len() != n {
            return Err(Error::invalid(format!("{} repeats a query", path.display())));
        }
        Ok(map)
    };
    let a = by_source(run_a)?;
    let b = by_source(run_b)?;
    if !a.keys().eq(b.keys()) {
        return Err(Error::invalid("the two reports cover different query sets"));
    }
    let xa: Vec<f64> = a.values().copied().collect();
    let xb: Vec<f64> = b.values().copied().collect();
    let p = match opts.test {
        TestKind::Ttest => paired_ttest(&xa, &xb)?,
        TestKind::Shuffle => shuffling_test(&xa, &xb, opts.shuffles, seed)?,
    };
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len().max(1) as f64;
    Ok(Comparison {
        report: SignificanceReport::new(opts.test, vec![p], opts.alpha, opts.comparisons)?,
        map_a: mean(&xa),
        map_b: mean(&xb),
        queries: xa.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClirSummary {
    pub map: f64,
    pub queries: usize,
    pub judged_queries: usize,
    pub excluded_queries: usize,
    pub empty_queries: usize,
    pub empty_docs: usize,
    pub weighting: WeightingScheme,
}

/// Retrieval over the configured collection; queries use the source space, documents the
/// target space. Writes `run.trec` and `clir_summary.json`.
pub fn cmd_eval_clir(cfg: &ExperimentConfig, projection: &Path, output: &Path) -> Result<(ClirRun, ClirSummary)> {
    let need = |p: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
        let path = p.clone().ok_or_else(|| Error::Config(format!("clir.{key} is not set")))?;
        must_exist(&path)?;
        Ok(path)
    };
    let docs = need(&cfg.clir.documents, "documents")?;
    let queries = need(&cfg.clir.queries, "queries")?;
    let qrels = need(&cfg.clir.qrels, "qrels")?;
    must_exist(projection)?;
    if cfg.clir.tag.is_empty() || cfg.clir.tag.contains(char::is_whitespace) {
        return Err(Error::Config(format!("clir.tag {:?} must be one word", cfg.clir.tag)));
    }
    let collection = ingest_collection(&docs, &queries, &qrels)?;
    let (src, tgt) = load_spaces(cfg)?;
    let pair = ProjectionPair::load(projection)?;
    let run = clir_run(&collection, &pair, &src, &tgt, cfg.clir.weighting)?;
    let summary = ClirSummary {
        map: run.map,
        queries: run.rankings.len(),
        judged_queries: run.rankings.len() - run.excluded_queries,
        excluded_queries: run.excluded_queries,
        empty_queries: run.empty_queries(),
        empty_docs: run.empty_docs,
        weighting: cfg.clir.weighting,
    };
    create_dir(output)?;
    write_trec_run(&run, &cfg.clir.tag, &output.join("run.trec"))?;
    write_json(&summary, &output.join("clir_summary.json"))?;
    Ok((run, summary))
}

/// Writes `train_<n>.txt` for every requested size and `test.txt`.
pub fn cmd_dict_split(lexicon: &Path, sizes: &[usize], test_size: usize, output: &Path) -> Result<DictionarySplit> {
    if sizes.is_empty() {
        return Err(Error::invalid("at least one training size is required"));
    }
    let split = frequency_split(&load_lexicon(lexicon)?, sizes, test_size)?;
    create_dir(output)?;
    for (n, lex) in sizes.iter().zip(&split.train) {
        save_lexicon(lex, &output.join(format!("train_{n}.txt")))?;
    }
    save_lexicon(&split.test, &output.join("test.txt"))?;
    Ok(split)
}

/// Applies a normalization chain to an embedding file.
pub fn cmd_preprocess(input: &Path, output: &Path, chain: &PreprocessChain, max_vocab: Option<usize>) -> Result<NormalizeReport> {
    chain.validate()?;
    let space = load_text_embeddings(input, max_vocab)?;
    let (space, report) = normalize_with_report(&space, chain)?;
    save_text_embeddings(&space, output)?;
    Ok(report)
}

/// One method's row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: String,
    /// Mean MAP over all language pairs.
    pub all: f64,
    /// Mean MAP over the pairs on which every method succeeded; `None` if there are none.
    pub filtered: Option<f64>,
    pub successes: usize,
    pub pairs: usize,
}

impl TableRow {
    pub fn success_column(&self) -> String {
        format!("{}/{}", self.successes, self.pairs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<TableRow>,
    pub pairs: Vec<String>,
    /// Pairs entering the filtered column.
    pub filtered_pairs: Vec<String>,
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
        writeln!(f, "{:<width$}  {:>8}  {:>8}  {:>8}", "method", "All", "Filt", "Succ")?;
        for r in &self.rows {
            let filt = r.filtered.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            writeln!(f, "{:<width$}  {:>8.3}  {:>8}  {:>8}", r.method, r.all, filt, r.success_column())?;
        }
        write!(f, "({} pairs, {} in Filt)", self.pairs.len(), self.filtered_pairs.len())
    }
}

/// Aggregates BLI summaries (one per method and language pair) into All / Filt / Succ columns.
pub fn summary_table(summaries: &[BliSummary]) -> Result<SummaryTable> {
    if summaries.is_empty() {
        return Err(Error::Empty("no summaries to tabulate".into()));
    }
    let mut grid: BTreeMap<String, BTreeMap<String, &BliSummary>> = BTreeMap::new();
    let mut pairs = BTreeSet::new();
    for s in summaries {
        let method = s.method.clone().ok_or_else(|| Error::invalid("summary without a method label"))?;
        let pair = s.pair.clone().ok_or_else(|| Error::invalid("summary without a language pair label"))?;
        pairs.insert(pair.clone());
        if grid.entry(method.clone()).or_default().insert(pair.clone(), s).is_some() {
            return Err(Error::invalid(format!("two summaries for {method} on {pair}")));
        }
    }
    for (method, row) in &grid {
        if row.len() != pairs.len() {
            let missing: Vec<_> = pairs.iter().filter(|p| !row.contains_key(*p)).collect();
            return Err(Error::invalid(format!("{method} has no summary for {missing:?}")));
        }
    }
    let filtered_pairs: Vec<String> = pairs
        .iter()
        .filter(|p| grid.values().all(|row| row[*p].successful))
        .cloned()
        .collect();
    let rows = grid
        .iter()
        .map(|(method, row)| {
            let all = row.values().map(|s| s.map).sum::<f64>() / row.len() as f64;
            let filtered = (!filtered_pairs.is_empty())
                .then(|| filtered_pairs.iter().map(|p| row[p].map).sum::<f64>() / filtered_pairs.len() as f64);
            TableRow {
                method: method.clone(),
                all,
                filtered,
                successes: row.values().filter(|s| s.successful).count(),
                pairs: row.len(),
            }
        })
        .collect();
    Ok(SummaryTable {
        rows,
        pairs: pairs.into_iter().collect(),
        filtered_pairs,
    })
}

pub fn cmd_table(paths: &[PathBuf]) -> Result<SummaryTable> {
    let summaries = paths.iter().map(|p| read_summary(p)).collect::<Result<Vec<_>>>()?;
    summary_table(&summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(method: &str, pair: &str, map: f64) -> BliSummary {
        BliSummary {
            method: Some(method.into()),
            pair: Some(pair.into()),
            map,
            p_at_1: map,
            p_at_5: map,
            p_at_10: map,
            queries: 10,
            oov_skipped: 0,
            successful: map >= crate::eval::bli::SUCCESS_THRESHOLD,
        }
    }

    #[test]
    fn single_cell_table() {
        let t = summary_table(&[summary("proc", "en-de", 0.4)]).unwrap();
        assert_eq!(t.rows[0].all, 0.4);
        assert_eq!(t.rows[0].filtered, Some(0.4));
        assert_eq!(t.rows[0].success_column(), "1/1");
    }

    #[test]
    fn failed_pair_leaves_every_filtered_column() {
        let t = summary_table(&[
            summary("proc", "en-de", 0.5),
            summary("proc", "en-fi", 0.3),
            summary("icp", "en-de", 0.4),
            summary("icp", "en-fi", 0.01),
        ])
        .unwrap();
        assert_eq!(t.filtered_pairs, vec!["en-de".to_string()]);
        let icp = &t.rows[0];
        let proc = &t.rows[1];
        assert_eq!((icp.method.as_str(), proc.method.as_str()), ("icp", "proc"));
        assert_eq!(proc.filtered, Some(0.5));
        assert_eq!(icp.filtered, Some(0.4));
        assert!((icp.all - 0.205).abs() < 1e-12);
        assert_eq!(icp.success_column(), "1/2");
        assert!(t.to_string().contains("1/2"));
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        assert!(summary_table(&[summary("proc", "en-de", 0.5), summary("icp", "en-fi", 0.4)]).is_err());
        assert!(summary_table(&[summary("proc", "en-de", 0.5), summary("proc", "en-de", 0.4)]).is_err());
    }
}
