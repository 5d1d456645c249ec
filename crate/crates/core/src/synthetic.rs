//! Synthetic bilingual fixtures with a known ground-truth alignment.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::WordVectorSpace;
use crate::error::Result;
use crate::lexicon::TranslationLexicon;
use crate::numerics::random_orthogonal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub words: usize,
    pub dim: usize,
    /// Standard deviation of the Gaussian noise added to every target entry.
    pub noise: f64,
    /// Column `j` of the source cloud is scaled by `decay^j`; `1.0` gives an isotropic cloud.
    pub decay: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            words: 500,
            dim: 20,
            noise: 0.0,
            decay: 1.0,
            seed: 7,
        }
    }
}

/// Source cloud, rotated (and possibly noisy) target cloud, the rotation and the gold lexicon.
///
/// Source word `i` is `s{i}`, its translation is `t{i}`, and both spaces list words in
/// the same order so the lexicon is frequency ordered.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub src: WordVectorSpace,
    pub tgt: WordVectorSpace,
    pub rotation: Array2<f64>,
    pub lexicon: TranslationLexicon,
}

pub fn source_word(i: usize) -> String {
    format!("s{i}")
}

pub fn target_word(i: usize) -> String {
    format!("t{i}")
}

/// Gaussian cloud with entries `N(0, decay^(2j))` in column `j`.
pub fn gaussian_cloud<R: Rng + ?Sized>(rows: usize, dim: usize, decay: f64, rng: &mut R) -> Array2<f64> {
    let mut x = Array2::from_shape_simple_fn((rows, dim), || rng.sample::<f64, _>(StandardNormal));
    for (j, mut col) in x.columns_mut().into_iter().enumerate() {
        col *= decay.powi(j as i32);
    }
    x
}

pub fn rotated_pair(cfg: &SyntheticConfig) -> Result<SyntheticPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs = gaussian_cloud(cfg.words, cfg.dim, cfg.decay, &mut rng);
    let rotation = random_orthogonal(cfg.dim, &mut rng);
    let mut xt = xs.dot(&rotation);
    if cfg.noise > 0.0 {
        xt.mapv_inplace(|v| v + cfg.noise * rng.sample::<f64, _>(StandardNormal));
    }
    let src = WordVectorSpace::new((0..cfg.words).map(source_word).collect(), xs, "src")?;
    let tgt = WordVectorSpace::new((0..cfg.words).map(target_word).collect(), xt, "tgt")?;
    let lexicon = TranslationLexicon::from_pairs((0..cfg.words).map(|i| (source_word(i), target_word(i))));
    Ok(SyntheticPair {
        src,
        tgt,
        rotation,
        lexicon,
    })
}

/// Copy of `space` with rows (and words) reordered: row `k` of the result is row
/// `perm[k]` of the input. The permutation is returned alongside.
pub fn permuted_copy(space: &WordVectorSpace, seed: u64) -> Result<(WordVectorSpace, Vec<usize>)> {
    let mut perm: Vec<usize> = (0..space.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let matrix = space.matrix().select(ndarray::Axis(0), &perm);
    let words = perm.iter().map(|&i| space.words()[i].clone()).collect();
    Ok((WordVectorSpace::new(words, matrix, space.lang_tag())?, perm))
}
