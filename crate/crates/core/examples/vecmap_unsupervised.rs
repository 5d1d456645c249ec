//! Fully unsupervised alignment: a seed dictionary from similarity distributions,
//! refined by stochastic self-learning.

use crossling::eval::bli::bli_evaluate;
use crossling::lexicon::TranslationLexicon;
use crossling::neighbors::Metric;
use crossling::synthetic::{permuted_copy, rotated_pair, SyntheticConfig};
use crossling::unsupervised::{self_learn, vecmap_seed, SelfLearnConfig};

fn main() -> crossling::Result<()> {
    let fx = rotated_pair(&SyntheticConfig {
        noise: 0.05,
        ..Default::default()
    })?;
    // shuffle the target rows so that vocabulary order carries no signal
    let (tgt, _) = permuted_copy(&fx.tgt, 11)?;

    let seed = vecmap_seed(&fx.src, &tgt, 4000)?;
    let correct = seed.pairs().iter().filter(|(s, t)| s[1..] == t[1..]).count();
    println!("seed dictionary: {correct}/{} correct", seed.len());

    let cfg = SelfLearnConfig {
        seed: 1,
        ..Default::default()
    };
    let (pair, trace) = self_learn(&fx.src, &tgt, &seed, &cfg)?;
    for (round, ((size, obj), p)) in trace.sizes.iter().zip(&trace.objectives).zip(&trace.keep_probs).enumerate() {
        println!("round {:>2}: keep {p:.2}  dictionary {size:>3}  objective {obj:.4}", round + 1);
    }
    let test = TranslationLexicon::from_pairs(fx.lexicon.pairs()[400..].iter().cloned());
    let map = bli_evaluate(&pair, &fx.src, &tgt, &test, Metric::Cosine)?.map;
    println!("converged={}  held-out MAP {map:.4}", trace.converged);
    Ok(())
}
