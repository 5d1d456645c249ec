use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crossling::commands::{cmd_align, cmd_compare, cmd_dict_split, cmd_eval_bli, cmd_eval_clir, cmd_preprocess, cmd_table};
use crossling::config::ExperimentConfig;
use crossling::embedding::PreprocessChain;
use crossling::Result;

#[derive(Parser)]
#[command(name = "crossling", version, about = "Align monolingual word embeddings and evaluate the shared space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set icp.restarts=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self, extra: Vec<String>) -> Result<ExperimentConfig> {
        let mut overrides = extra;
        overrides.extend(self.overrides.iter().cloned());
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides),
            None => ExperimentConfig::from_toml_with("", &overrides),
        }
    }
}

fn flag(key: &str, value: &Option<impl ToString>) -> Option<String> {
    value.as_ref().map(|v| format!("{key}={:?}", v.to_string()))
}

#[derive(Subcommand)]
enum Command {
    /// Learn a projection pair and write it to the output directory.
    Align {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Bilingual lexicon induction on a test dictionary.
    EvalBli {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory written by `align`.
        #[arg(long)]
        projection: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// `cosine`, `csls` or `csls:N`.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Significance test between two per-query BLI reports.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Number of simultaneous comparisons for the Bonferroni correction.
        #[arg(long)]
        comparisons: Option<usize>,
        /// `ttest` or `shuffle`.
        #[arg(long)]
        test: Option<String>,
        #[arg(long)]
        shuffles: Option<usize>,
    },
    /// Cross-lingual document retrieval with averaged word vectors.
    EvalClir {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        projection: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        documents: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        /// `idf` or `uniform`.
        #[arg(long)]
        weighting: Option<String>,
    },
    /// Split a frequency-ordered dictionary into nested training sets and a test set.
    DictSplit {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        test_size: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Normalize an embedding file.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Comma separated steps: unit, center, whiten.
        #[arg(long, default_value = "unit,center,unit")]
        steps: String,
        #[arg(long)]
        max_vocab: Option<usize>,
    },
    /// Aggregate BLI summaries into All / Filt / Succ columns.
    Table {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Align { cfg, method, output } => {
            let extra = [flag("method", &method), flag("output", &output.map(|p| p.display().to_string()))];
            let config = cfg.load(extra.into_iter().flatten().collect())?;
            let out = cmd_align(&config)?;
            let meta = &out.pair.metadata;
            println!(
                "{}: dictionary {} pairs, {} iterations, orthogonal={}, {:.2}s -> {}",
                out.pair.method,
                meta.dictionary_size,
                meta.iterations,
                out.pair.orthogonal_src,
                out.wall_seconds,
                out.output.display()
            );
            for f in &meta.flags {
                println!("flag: {f}");
            }
        }
        Command::EvalBli {
            cfg,
            projection,
            test,
            output,
            metric,
        } => {
            let config = cfg.load(flag("evaluation.metric", &metric).into_iter().collect())?;
            let (_, s) = cmd_eval_bli(&config, &projection, &test, &output)?;
            println!(
                "MAP {:.4}  P@1 {:.4}  P@5 {:.4}  P@10 {:.4}  queries {}  oov {}  successful={}",
                s.map, s.p_at_1, s.p_at_5, s.p_at_10, s.queries, s.oov_skipped, s.successful
            );
        }
        Command::Compare {
            cfg,
            report_a,
            report_b,
            alpha,
            comparisons,
            test,
            shuffles,
        } => {
            let extra = [
                alpha.map(|a| format!("compare.alpha={a:?}")),
                comparisons.map(|m| format!("compare.comparisons={m}")),
                flag("compare.test", &test),
                shuffles.map(|n| format!("compare.shuffles={n}")),
            ];
            let config = cfg.load(extra.into_iter().flatten().collect())?;
            let comparison = cmd_compare(&report_a, &report_b, &config, config.seed.unwrap_or(0))?;
            println!("{comparison}");
        }
        Command::EvalClir {
            cfg,
            projection,
            output,
            documents,
            queries,
            qrels,
            weighting,
        } => {
            let path = |p: Option<PathBuf>| p.map(|p| p.display().to_string());
            let extra = [
                flag("clir.documents", &path(documents)),
                flag("clir.queries", &path(queries)),
                flag("clir.qrels", &path(qrels)),
                flag("clir.weighting", &weighting),
            ];
            let config = cfg.load(extra.into_iter().flatten().collect())?;
            let (_, s) = cmd_eval_clir(&config, &projection, &output)?;
            println!(
                "MAP {:.4}  queries {} (judged {}, no relevant {}, empty {})  empty docs {}",
                s.map, s.queries, s.judged_queries, s.excluded_queries, s.empty_queries, s.empty_docs
            );
        }
        Command::DictSplit {
            lexicon,
            sizes,
            test_size,
            output,
        } => {
            let split = cmd_dict_split(&lexicon, &sizes, test_size, &output)?;
            let train: Vec<String> = split.train.iter().map(|t| t.len().to_string()).collect();
            println!(
                "train {}  test {}  skipped overlap {}",
                train.join(","),
                split.test.len(),
                split.skipped_overlap
            );
        }
        Command::Preprocess {
            input,
            output,
            steps,
            max_vocab,
        } => {
            let report = cmd_preprocess(&input, &output, &PreprocessChain::parse(&steps)?, max_vocab)?;
            println!("wrote {} ({} zero rows)", output.display(), report.zero_rows);
        }
        Command::Table { summaries } => println!("{}", cmd_table(&summaries)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
