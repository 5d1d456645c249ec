//! The command pipeline on files: split a dictionary, align, evaluate and tabulate,
//! exactly as the `crossling` binary would run it.

use crossling::commands::{cmd_align, cmd_dict_split, cmd_eval_bli, cmd_table};
use crossling::config::ExperimentConfig;
use crossling::embedding::save_text_embeddings;
use crossling::lexicon::save_lexicon;
use crossling::synthetic::{rotated_pair, SyntheticConfig};

fn main() -> crossling::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let root = dir.path();
    let fx = rotated_pair(&SyntheticConfig {
        noise: 0.05,
        ..Default::default()
    })?;
    save_text_embeddings(&fx.src, &root.join("src.vec"))?;
    save_text_embeddings(&fx.tgt, &root.join("tgt.vec"))?;
    save_lexicon(&fx.lexicon, &root.join("full.dict"))?;

    let split = cmd_dict_split(&root.join("full.dict"), &[10, 300], 100, &root.join("dicts"))?;
    println!("split: train {:?}, test {}", split.train.iter().map(|t| t.len()).collect::<Vec<_>>(), split.test.len());

    let mut summaries = Vec::new();
    for (method, train) in [("proc", "train_300.txt"), ("proc-b", "train_10.txt"), ("vecmap", "train_10.txt")] {
        let toml = format!(
            r#"
method = "{method}"
seed = 1
output = "{out}"

[embeddings]
source = "{src}"
target = "{tgt}"
source_lang = "en"
target_lang = "de"
preprocess_source = "unit,center,unit"
preprocess_target = "unit,center,unit"

[dictionary]
train = "{train}"

[proc_b]
iterations = 2
"#,
            out = root.join(method).display(),
            src = root.join("src.vec").display(),
            tgt = root.join("tgt.vec").display(),
            train = root.join("dicts").join(train).display(),
        );
        let cfg = ExperimentConfig::from_toml(&toml)?;
        let aligned = cmd_align(&cfg)?;
        let eval_dir = root.join(format!("{method}-eval"));
        let (_, summary) = cmd_eval_bli(&cfg, &aligned.output, &root.join("dicts/test.txt"), &eval_dir)?;
        println!("{method}: MAP {:.4} in {:.2}s", summary.map, aligned.wall_seconds);
        summaries.push(eval_dir.join("summary.json"));
    }
    println!("{}", cmd_table(&summaries)?);
    Ok(())
}
