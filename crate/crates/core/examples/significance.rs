//! Is one alignment better than another? Paired tests on per-query average precision
//! with a Bonferroni-corrected threshold.

use crossling::eval::bli::bli_evaluate;
use crossling::eval::stats::{paired_ttest, shuffling_test, SignificanceReport, TestKind};
use crossling::lexicon::{build_aligned_matrices, frequency_split};
use crossling::neighbors::Metric;
use crossling::supervised::{align_proc, align_proc_b, ProcBConfig};
use crossling::synthetic::{rotated_pair, SyntheticConfig};

fn main() -> crossling::Result<()> {
    let fx = rotated_pair(&SyntheticConfig {
        noise: 0.1,
        ..Default::default()
    })?;
    let split = frequency_split(&fx.lexicon, &[10], 200)?;
    let seed = &split.train[0];
    let a = align_proc(&build_aligned_matrices(seed, &fx.src, &fx.tgt)?)?;
    let b = align_proc_b(
        &fx.src,
        &fx.tgt,
        seed,
        &ProcBConfig {
            iterations: 3,
            ..Default::default()
        },
    )?;
    let ra = bli_evaluate(&a, &fx.src, &fx.tgt, &split.test, Metric::Cosine)?;
    let rb = bli_evaluate(&b, &fx.src, &fx.tgt, &split.test, Metric::Cosine)?;
    println!("proc MAP {:.4}, proc-b MAP {:.4}", ra.map, rb.map);

    let (xa, xb) = (ra.average_precisions(), rb.average_precisions());
    let p_t = paired_ttest(&xa, &xb)?;
    let p_s = shuffling_test(&xa, &xb, 10_000, 0)?;
    // pretend this is one of five comparisons made in the study
    for (test, p) in [(TestKind::Ttest, p_t), (TestKind::Shuffle, p_s)] {
        let report = SignificanceReport::new(test, vec![p], 0.05, 5)?;
        println!(
            "{test}: p = {p:.3e}, threshold {}, significant={}",
            report.corrected_alpha, report.significant[0]
        );
    }
    Ok(())
}
