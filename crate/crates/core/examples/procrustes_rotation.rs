//! Recover a random rotation with orthogonal Procrustes, then watch held-out MAP as
//! noise is added to the target space.

use crossling::eval::bli::bli_evaluate;
use crossling::lexicon::{build_aligned_matrices, frequency_split};
use crossling::neighbors::Metric;
use crossling::supervised::align_proc;
use crossling::synthetic::{rotated_pair, SyntheticConfig};

fn main() -> crossling::Result<()> {
    for noise in [0.0, 0.01, 0.05, 0.1, 0.3] {
        let fx = rotated_pair(&SyntheticConfig {
            noise,
            ..Default::default()
        })?;
        let split = frequency_split(&fx.lexicon, &[400], 100)?;
        let pair = align_proc(&build_aligned_matrices(&split.train[0], &fx.src, &fx.tgt)?)?;
        let err = (&pair.w_src - &fx.rotation).mapv(|v| v * v).sum().sqrt();
        let map = bli_evaluate(&pair, &fx.src, &fx.tgt, &split.test, Metric::Cosine)?.map;
        println!("noise {noise:<5} |W - R| = {err:.2e}  held-out MAP {map:.4}");
    }
    Ok(())
}
