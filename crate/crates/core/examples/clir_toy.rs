//! Document retrieval across two toy "languages" whose vectors differ by a rotation.

use ndarray::array;

use crossling::clir::{clir_run, tokenize, DocumentCollection, WeightingScheme};
use crossling::embedding::WordVectorSpace;
use crossling::lexicon::TranslationLexicon;
use crossling::lexicon::build_aligned_matrices;
use crossling::supervised::align_proc;

fn main() -> crossling::Result<()> {
    let en = WordVectorSpace::new(
        ["cat", "dog", "river", "bank", "money"].map(String::from).to_vec(),
        array![[1.0, 0.1, 0.0], [0.9, 0.3, 0.0], [0.0, 1.0, 0.2], [0.1, 0.6, 0.8], [0.0, 0.1, 1.0]],
        "en",
    )?;
    // the "German" space is the English one rotated by 90 degrees in the first plane
    let rot = array![[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let de = WordVectorSpace::new(
        ["katze", "hund", "fluss", "ufer", "geld"].map(String::from).to_vec(),
        en.matrix().dot(&rot),
        "de",
    )?;
    let dict = TranslationLexicon::from_pairs([("cat", "katze"), ("river", "fluss"), ("money", "geld"), ("dog", "hund")]);
    let pair = align_proc(&build_aligned_matrices(&dict, &en, &de)?)?;

    let docs = vec![
        ("d1".to_string(), tokenize("Die Katze und der Hund.")),
        ("d2".to_string(), tokenize("Geld, Geld, Geld!")),
        ("d3".to_string(), tokenize("Am Ufer vom Fluss")),
    ];
    let queries = vec![("q1".to_string(), tokenize("cat")), ("q2".to_string(), tokenize("river bank"))];
    let qrels = [("q1", "d1"), ("q2", "d3")].map(|(q, d)| (q.to_string(), d.to_string()));
    let collection = DocumentCollection::new(docs, queries, qrels)?;

    let run = clir_run(&collection, &pair, &en, &de, WeightingScheme::Uniform)?;
    for r in &run.rankings {
        let order: Vec<String> = r.docs.iter().map(|(d, s)| format!("{d}:{s:.3}")).collect();
        println!("{}: {}", r.query, order.join("  "));
    }
    println!("MAP {:.4}", run.map);
    Ok(())
}
