//! Non-orthogonal supervised maps: CCA projects both sides, RCSLS refines the source map
//! for CSLS retrieval.

use crossling::eval::bli::bli_evaluate;
use crossling::lexicon::{build_aligned_matrices, frequency_split};
use crossling::neighbors::Metric;
use crossling::supervised::{align_cca, align_proc, align_rcsls, RcslsConfig};
use crossling::synthetic::{rotated_pair, SyntheticConfig};

fn main() -> crossling::Result<()> {
    let fx = rotated_pair(&SyntheticConfig {
        noise: 0.3,
        decay: 0.95,
        ..Default::default()
    })?;
    let split = frequency_split(&fx.lexicon, &[200], 200)?;
    let aligned = build_aligned_matrices(&split.train[0], &fx.src, &fx.tgt)?;

    let proc = align_proc(&aligned)?;
    let cca = align_cca(&aligned, None)?;
    let rcsls = align_rcsls(&aligned, fx.src.matrix(), fx.tgt.matrix(), &RcslsConfig::default())?;

    let csls = Metric::Csls { neighbors: 10 };
    for pair in [&proc, &cca, &rcsls] {
        let cos = bli_evaluate(pair, &fx.src, &fx.tgt, &split.test, Metric::Cosine)?.map;
        let cs = bli_evaluate(pair, &fx.src, &fx.tgt, &split.test, csls)?.map;
        println!(
            "{:<6} orthogonal={:<5} MAP cosine {cos:.4}  csls {cs:.4}",
            pair.method.to_string(),
            pair.orthogonal_src
        );
    }
    println!("rcsls final loss {:?}", rcsls.metadata.final_objective);
    Ok(())
}
