//! Starting from only ten translation pairs: plain Procrustes, bootstrapped Procrustes and
//! the DLV assignment loop.

use crossling::eval::bli::bli_evaluate;
use crossling::lexicon::{build_aligned_matrices, frequency_split};
use crossling::neighbors::Metric;
use crossling::supervised::{align_dlv, align_proc, align_proc_b, DlvConfig, ProcBConfig};
use crossling::synthetic::{rotated_pair, SyntheticConfig};

fn main() -> crossling::Result<()> {
    let fx = rotated_pair(&SyntheticConfig {
        noise: 0.05,
        ..Default::default()
    })?;
    let split = frequency_split(&fx.lexicon, &[10, 400], 100)?;
    let seed = &split.train[0];

    let proc = align_proc(&build_aligned_matrices(seed, &fx.src, &fx.tgt)?)?;
    let proc_b = align_proc_b(
        &fx.src,
        &fx.tgt,
        seed,
        &ProcBConfig {
            iterations: 2,
            ..Default::default()
        },
    )?;
    let dlv = align_dlv(&fx.src, &fx.tgt, seed, &DlvConfig::default())?;

    for pair in [&proc, &proc_b, &dlv] {
        let map = bli_evaluate(pair, &fx.src, &fx.tgt, &split.test, Metric::Cosine)?.map;
        println!(
            "{:<7} dictionary {:>4}  held-out MAP {map:.4}",
            pair.method.to_string(),
            pair.metadata.dictionary_size
        );
    }
    Ok(())
}
