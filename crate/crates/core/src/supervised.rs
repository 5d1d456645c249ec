//! Dictionary-supervised aligners: Proc, Proc-B, CCA, DLV and RCSLS.

use std::collections::BTreeSet;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::embedding::WordVectorSpace;
use crate::error::{Error, Result};
use crate::lexicon::{build_aligned_matrices, mutual_nearest_neighbors, AlignedMatrices, TranslationLexicon, SEARCH_CAP};
use crate::neighbors::{nearest_neighbors, Metric};
use crate::numerics::{normalize_rows, solve_cca, solve_procrustes, svd};
use crate::projection::{Method, ProjectionPair, TrainingMetadata};

/// Orthogonal Procrustes map from the source side of the dictionary onto the target side.
pub fn align_proc(aligned: &AlignedMatrices) -> Result<ProjectionPair> {
    let sol = solve_procrustes(&aligned.xs, &aligned.xt)?;
    let metadata = TrainingMetadata {
        dictionary_size: aligned.len(),
        iterations: 1,
        rank_deficient: sol.rank_deficient,
        ..Default::default()
    };
    Ok(ProjectionPair::source_only(sol.w, Method::Proc, metadata)?.with_dictionary(aligned.kept_pairs.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcBConfig {
    pub iterations: usize,
    pub search_cap: usize,
    pub metric: Metric,
}

impl Default for ProcBConfig {
    fn default() -> Self {
        Self {
            iterations: 1,
            search_cap: SEARCH_CAP,
            metric: Metric::Cosine,
        }
    }
}

/// `D ∪ (D₁₂ ∩ D₂₁)`, where `d21` holds `(target, source)` pairs from the reverse search.
pub fn bootstrap_augment(
    dictionary: &TranslationLexicon,
    d12: &TranslationLexicon,
    d21: &TranslationLexicon,
) -> TranslationLexicon {
    dictionary.union(&d12.intersection(&d21.reversed()))
}

fn directional_dictionary(
    queries: ArrayView2<'_, f64>,
    candidates: ArrayView2<'_, f64>,
    query_words: &[String],
    candidate_words: &[String],
    metric: Metric,
) -> TranslationLexicon {
    let nn = nearest_neighbors(queries, candidates, metric);
    TranslationLexicon::from_pairs(nn.into_iter().enumerate().map(|(i, j)| (query_words[i].clone(), candidate_words[j].clone())))
}

/// Bootstrapped Procrustes. Each iteration learns both directional maps; all but the last
/// project the capped vocabularies, search nearest neighbors in each direction and add the
/// pairs found in both directions to the dictionary.
pub fn align_proc_b(
    src: &WordVectorSpace,
    tgt: &WordVectorSpace,
    seed: &TranslationLexicon,
    cfg: &ProcBConfig,
) -> Result<ProjectionPair> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("proc-b needs at least one iteration"));
    }
    let mut dictionary = seed.clone();
    let mut sizes = Vec::new();
    let mut flags = Vec::new();
    let ns = cfg.search_cap.min(src.len());
    let nt = cfg.search_cap.min(tgt.len());
    let src_top = src.matrix().slice(s![..ns, ..]);
    let tgt_top = tgt.matrix().slice(s![..nt, ..]);

    for it in 0..cfg.iterations {
        let aligned = build_aligned_matrices(&dictionary, src, tgt)?;
        if it == 0 && aligned.len() < 2 {
            return Err(Error::invalid("proc-b needs at least two in-vocabulary seed pairs"));
        }
        sizes.push(aligned.len());
        let forward = solve_procrustes(&aligned.xs, &aligned.xt)?;
        if it + 1 == cfg.iterations {
            let metadata = TrainingMetadata {
                dictionary_size: aligned.len(),
                dictionary_sizes: sizes,
                iterations: cfg.iterations,
                rank_deficient: forward.rank_deficient,
                flags,
                ..Default::default()
            };
            return Ok(ProjectionPair::source_only(forward.w, Method::ProcB, metadata)?.with_dictionary(aligned.kept_pairs));
        }
        let backward = solve_procrustes(&aligned.xt, &aligned.xs)?;
        let d12 = directional_dictionary(
            src_top.dot(&forward.w).view(),
            tgt_top,
            &src.words()[..ns],
            &tgt.words()[..nt],
            cfg.metric,
        );
        let d21 = directional_dictionary(
            tgt_top.dot(&backward.w).view(),
            src_top,
            &tgt.words()[..nt],
            &src.words()[..ns],
            cfg.metric,
        );
        let augmented = bootstrap_augment(&dictionary, &d12, &d21);
        if augmented.len() == dictionary.len() {
            log::warn!("proc-b iteration {}: no new mutual nearest neighbors", it + 1);
            flags.push(format!("iteration {}: empty augmentation", it + 1));
        }
        log::info!("proc-b iteration {}: dictionary {} -> {}", it + 1, dictionary.len(), augmented.len());
        dictionary = augmented;
    }
    unreachable!("the final iteration returns")
}

/// CCA into a shared `k`-dimensional space (`keep_dims = None` keeps all dimensions).
pub fn align_cca(aligned: &AlignedMatrices, keep_dims: Option<usize>) -> Result<ProjectionPair> {
    let sol = solve_cca(&aligned.xs, &aligned.xt, keep_dims)?;
    let mut metadata = TrainingMetadata {
        dictionary_size: aligned.len(),
        iterations: 1,
        final_objective: Some(sol.correlations.sum()),
        ..Default::default()
    };
    if sol.regularized {
        metadata.flags.push("within-view covariance regularized".into());
    }
    let mut pair = ProjectionPair::new(sol.a, sol.b, Method::Cca, metadata)?.with_dictionary(aligned.kept_pairs.clone());
    pair.orthogonal_src = false;
    Ok(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlvConfig {
    pub em_iterations: usize,
    /// Highest-cosine candidate edges kept per node on each side.
    pub candidates_per_node: usize,
    /// Most frequent words per side entering the bipartite graph.
    pub match_cap: usize,
}

impl Default for DlvConfig {
    fn default() -> Self {
        Self {
            em_iterations: 3,
            candidates_per_node: 10,
            match_cap: 2500,
        }
    }
}

fn top_k_indices(row: ndarray::ArrayView1<'_, f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    let k = k.min(idx.len());
    if k < idx.len() {
        idx.select_nth_unstable_by(k, |&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(k);
    }
    idx
}

/// Sparsified bipartite graph of cosine similarities (each node keeps its `k` best edges)
/// solved for a maximum-weight one-to-one matching. Returns `(source, target)` row pairs.
pub fn dlv_assignment(src: ArrayView2<'_, f64>, tgt: ArrayView2<'_, f64>, k: usize) -> Vec<(usize, usize)> {
    let a = normalize_rows(&src.to_owned());
    let b = normalize_rows(&tgt.to_owned());
    let sims = a.dot(&b.t());
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let from_src: Vec<Vec<usize>> = sims.axis_iter(Axis(0)).into_par_iter().map(|r| top_k_indices(r, k)).collect();
    let from_tgt: Vec<Vec<usize>> = sims.axis_iter(Axis(1)).into_par_iter().map(|c| top_k_indices(c, k)).collect();
    for (i, js) in from_src.iter().enumerate() {
        edges.extend(js.iter().map(|&j| (i, j)));
    }
    for (j, is) in from_tgt.iter().enumerate() {
        edges.extend(is.iter().map(|&i| (i, j)));
    }
    let weighted: Vec<(usize, usize, f64)> = edges.into_iter().map(|(i, j)| (i, j, sims[[i, j]])).collect();
    max_weight_matching(sims.nrows(), sims.ncols(), &weighted)
}

/// EM-style alignment: the E-step matches the frequent vocabularies one-to-one in the
/// current projected space, the M-step solves Procrustes on the matches plus the seed.
pub fn align_dlv(
    src: &WordVectorSpace,
    tgt: &WordVectorSpace,
    seed: &TranslationLexicon,
    cfg: &DlvConfig,
) -> Result<ProjectionPair> {
    let seed_aligned = build_aligned_matrices(seed, src, tgt)?;
    let mut sol = solve_procrustes(&seed_aligned.xs, &seed_aligned.xt)?;
    let mut dictionary = seed_aligned.kept_pairs.clone();
    let mut sizes = vec![dictionary.len()];
    let mut flags = Vec::new();
    let ns = cfg.match_cap.min(src.len());
    let nt = cfg.match_cap.min(tgt.len());
    let src_top = src.matrix().slice(s![..ns, ..]);
    let tgt_top = tgt.matrix().slice(s![..nt, ..]);

    for it in 0..cfg.em_iterations {
        let projected = src_top.dot(&sol.w);
        let matches = dlv_assignment(projected.view(), tgt_top, cfg.candidates_per_node);
        let induced = if matches.is_empty() {
            log::warn!("dlv iteration {}: empty assignment, using mutual nearest neighbors", it + 1);
            flags.push(format!("iteration {}: mutual-nn fallback", it + 1));
            mutual_nearest_neighbors(
                projected.view(),
                tgt_top,
                &src.words()[..ns],
                &tgt.words()[..nt],
                Metric::Cosine,
                SEARCH_CAP,
            )
        } else {
            TranslationLexicon::from_pairs(matches.into_iter().map(|(i, j)| (src.words()[i].clone(), tgt.words()[j].clone())))
        };
        dictionary = seed_aligned.kept_pairs.union(&induced);
        let aligned = build_aligned_matrices(&dictionary, src, tgt)?;
        sol = solve_procrustes(&aligned.xs, &aligned.xt)?;
        sizes.push(aligned.len());
    }
    let metadata = TrainingMetadata {
        dictionary_size: dictionary.len(),
        dictionary_sizes: sizes,
        iterations: cfg.em_iterations,
        rank_deficient: sol.rank_deficient,
        flags,
        ..Default::default()
    };
    Ok(ProjectionPair::source_only(sol.w, Method::Dlv, metadata)?.with_dictionary(dictionary))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcslsConfig {
    pub neighbors: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Clamp the singular values of `W` to at most 1 after every step.
    pub spectral_normalization: bool,
    /// Rows of each full matrix searched for the hubness neighborhoods.
    pub neighborhood_cap: usize,
}

impl Default for RcslsConfig {
    fn default() -> Self {
        Self {
            neighbors: 10,
            learning_rate: 1.0,
            epochs: 10,
            spectral_normalization: false,
            neighborhood_cap: SEARCH_CAP,
        }
    }
}

/// Epochs of consecutive objective increase tolerated before [`align_rcsls`] gives up.
pub const RCSLS_MAX_INCREASES: usize = 10;

/// Neighbor sets selected for the hubness terms, held fixed while a gradient is taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    /// For each dictionary pair, the target rows nearest to the projected source word.
    pub target: Vec<Vec<usize>>,
    /// For each dictionary pair, the projected source rows nearest to the target word.
    pub source: Vec<Vec<usize>>,
}

/// The relaxed CSLS loss over a dictionary, with cosines taken between `x·W` and target rows:
///
/// `mean_i [ −2·cos(x_i·W, y_i) + r(x_i·W, Y) + r(y_i, X·W) ]`
///
/// where `r(v, Z)` is the mean cosine of `v` to its `N` nearest rows of `Z`.
#[derive(Debug, Clone)]
pub struct RcslsProblem {
    x: Array2<f64>,
    y: Array2<f64>,
    full_src: Array2<f64>,
    full_tgt: Array2<f64>,
    neighbors: usize,
}

fn unit_rows_with_norms(z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let mut u = z.clone();
    for (mut row, &n) in u.rows_mut().into_iter().zip(norms.iter()) {
        if n > 0.0 {
            row /= n;
        }
    }
    (u, norms)
}

/// `∂(g·z/‖z‖)/∂z = (g − (g·u)·u) / ‖z‖`, row by row.
fn normalized_backward(g: &Array2<f64>, u: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let mut out = g.clone();
    for ((mut row, urow), &n) in out.rows_mut().into_iter().zip(u.rows()).zip(norms.iter()) {
        if n == 0.0 {
            row.fill(0.0);
            continue;
        }
        let proj = row.dot(&urow);
        row.zip_mut_with(&urow, |gv, &uv| *gv = (*gv - proj * uv) / n);
    }
    out
}

impl RcslsProblem {
    /// `x`, `y`: aligned dictionary rows; `full_src`, `full_tgt`: neighborhood pools.
    pub fn new(x: Array2<f64>, y: Array2<f64>, full_src: Array2<f64>, full_tgt: Array2<f64>, neighbors: usize) -> Result<Self> {
        if x.dim() != y.dim() || x.ncols() != full_src.ncols() || y.ncols() != full_tgt.ncols() {
            return Err(Error::DimensionMismatch("rcsls inputs disagree in shape".into()));
        }
        if x.nrows() == 0 || full_src.nrows() == 0 || full_tgt.nrows() == 0 {
            return Err(Error::Empty("rcsls needs dictionary pairs and neighborhood pools".into()));
        }
        if neighbors == 0 {
            return Err(Error::invalid("rcsls neighborhood size must be at least 1"));
        }
        let mut n = neighbors;
        if n > full_src.nrows().min(full_tgt.nrows()) {
            n = full_src.nrows().min(full_tgt.nrows());
            log::warn!("rcsls neighborhood {neighbors} clamped to {n}");
        }
        Ok(Self {
            x,
            y: normalize_rows(&y),
            full_src,
            full_tgt: normalize_rows(&full_tgt),
            neighbors: n,
        })
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    /// Current nearest-neighbor sets under map `w`.
    pub fn neighbor_sets(&self, w: &Array2<f64>) -> NeighborSets {
        let (u, _) = unit_rows_with_norms(&self.x.dot(w));
        let (v, _) = unit_rows_with_norms(&self.full_src.dot(w));
        let target = u.dot(&self.full_tgt.t()).axis_iter(Axis(0)).into_par_iter().map(|r| top_k_indices(r, self.neighbors)).collect();
        let source = self.y.dot(&v.t()).axis_iter(Axis(0)).into_par_iter().map(|r| top_k_indices(r, self.neighbors)).collect();
        NeighborSets { target, source }
    }

    /// Loss at `w` with the hubness terms averaged over the given neighbor sets.
    pub fn objective(&self, w: &Array2<f64>, sets: &NeighborSets) -> f64 {
        let (u, _) = unit_rows_with_norms(&self.x.dot(w));
        let (v, _) = unit_rows_with_norms(&self.full_src.dot(w));
        let n = self.neighbors as f64;
        let total: f64 = (0..u.nrows())
            .map(|i| {
                let ui = u.row(i);
                let yi = self.y.row(i);
                let rt: f64 = sets.target[i].iter().map(|&j| ui.dot(&self.full_tgt.row(j))).sum::<f64>() / n;
                let rs: f64 = sets.source[i].iter().map(|&j| yi.dot(&v.row(j))).sum::<f64>() / n;
                -2.0 * ui.dot(&yi) + rt + rs
            })
            .sum();
        total / u.nrows() as f64
    }

    /// Gradient of [`Self::objective`] with respect to `w`, neighbor sets held fixed.
    pub fn gradient(&self, w: &Array2<f64>, sets: &NeighborSets) -> Array2<f64> {
        let k = self.x.nrows() as f64;
        let n = self.neighbors as f64;
        let (u, un) = unit_rows_with_norms(&self.x.dot(w));
        let (v, vn) = unit_rows_with_norms(&self.full_src.dot(w));

        let mut gu = &self.y * -2.0;
        for (i, set) in sets.target.iter().enumerate() {
            let mut row = gu.row_mut(i);
            for &j in set {
                row.scaled_add(1.0 / n, &self.full_tgt.row(j));
            }
        }
        let mut gv = Array2::<f64>::zeros(v.dim());
        for (i, set) in sets.source.iter().enumerate() {
            for &j in set {
                gv.row_mut(j).scaled_add(1.0 / n, &self.y.row(i));
            }
        }
        let dz = normalized_backward(&gu, &u, &un);
        let dzf = normalized_backward(&gv, &v, &vn);
        (self.x.t().dot(&dz) + self.full_src.t().dot(&dzf)) / k
    }
}

fn clamp_spectrum(w: &Array2<f64>) -> Result<Array2<f64>> {
    let dec = svd(w)?;
    let s = dec.s.mapv(|v| v.min(1.0));
    Ok((&dec.u * &s).dot(&dec.vt))
}

/// Relaxed CSLS: full-batch gradient descent from the Procrustes solution. The learning
/// rate halves whenever an epoch increases the loss; the best map seen is returned.
pub fn align_rcsls(
    aligned: &AlignedMatrices,
    full_src: &Array2<f64>,
    full_tgt: &Array2<f64>,
    cfg: &RcslsConfig,
) -> Result<ProjectionPair> {
    if !(cfg.learning_rate > 0.0) || cfg.epochs == 0 {
        return Err(Error::invalid("rcsls needs a positive learning rate and at least one epoch"));
    }
    let ms = cfg.neighborhood_cap.min(full_src.nrows());
    let mt = cfg.neighborhood_cap.min(full_tgt.nrows());
    let problem = RcslsProblem::new(
        aligned.xs.clone(),
        aligned.xt.clone(),
        full_src.slice(s![..ms, ..]).to_owned(),
        full_tgt.slice(s![..mt, ..]).to_owned(),
        cfg.neighbors,
    )?;
    let init = solve_procrustes(&aligned.xs, &aligned.xt)?;
    let mut w = init.w;
    let mut sets = problem.neighbor_sets(&w);
    let mut loss = problem.objective(&w, &sets);
    let (mut best_w, mut best_loss) = (w.clone(), loss);
    let mut lr = cfg.learning_rate;
    let mut increases = 0;
    for epoch in 0..cfg.epochs {
        let grad = problem.gradient(&w, &sets);
        w = &w - &(grad * lr);
        if cfg.spectral_normalization {
            w = clamp_spectrum(&w)?;
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "rcsls map became non-finite at epoch {}; try a smaller learning rate",
                epoch + 1
            )));
        }
        sets = problem.neighbor_sets(&w);
        let next = problem.objective(&w, &sets);
        log::debug!("rcsls epoch {}: loss {next:.6} (lr {lr})", epoch + 1);
        if next > loss {
            increases += 1;
            lr /= 2.0;
            if increases >= RCSLS_MAX_INCREASES {
                return Err(Error::Divergence(format!(
                    "rcsls loss increased {increases} epochs in a row; try a smaller learning rate"
                )));
            }
        } else {
            increases = 0;
        }
        loss = next;
        if loss < best_loss {
            best_loss = loss;
            best_w = w.clone();
        }
    }
    let metadata = TrainingMetadata {
        dictionary_size: aligned.len(),
        iterations: cfg.epochs,
        final_objective: Some(best_loss),
        ..Default::default()
    };
    let mut pair = ProjectionPair::source_only(best_w, Method::Rcsls, metadata)?.with_dictionary(aligned.kept_pairs.clone());
    pair.orthogonal_src = false;
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::orthogonality_error;
    use crate::synthetic::{rotated_pair, SyntheticConfig};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    #[test]
    fn proc_on_identical_sides_is_identity() {
        let fx = rotated_pair(&SyntheticConfig {
            words: 40,
            dim: 5,
            ..Default::default()
        })
        .unwrap();
        let ident = TranslationLexicon::from_pairs(fx.src.words().iter().map(|w| (w.clone(), w.clone())));
        let aligned = build_aligned_matrices(&ident, &fx.src, &fx.src).unwrap();
        let pair = align_proc(&aligned).unwrap();
        assert!((&pair.w_src - &Array2::<f64>::eye(5)).iter().all(|v| v.abs() < 1e-10));
        assert!(pair.orthogonal_src);
    }

    #[test]
    fn proc_b_single_iteration_equals_proc() {
        let fx = rotated_pair(&SyntheticConfig {
            words: 60,
            dim: 6,
            noise: 0.1,
            ..Default::default()
        })
        .unwrap();
        let seed = TranslationLexicon::from_pairs(fx.lexicon.pairs()[..10].iter().cloned());
        let proc = align_proc(&build_aligned_matrices(&seed, &fx.src, &fx.tgt).unwrap()).unwrap();
        let procb = align_proc_b(&fx.src, &fx.tgt, &seed, &ProcBConfig::default()).unwrap();
        assert_eq!(proc.w_src, procb.w_src);
    }

    #[test]
    fn augmentation_keeps_only_agreeing_pairs() {
        let d = TranslationLexicon::from_pairs([("s", "t")]);
        let d12 = TranslationLexicon::from_pairs([("a", "x")]);
        let d21 = TranslationLexicon::from_pairs([("x", "a"), ("y", "b")]);
        let out = bootstrap_augment(&d, &d12, &d21);
        assert_eq!(out.pairs(), TranslationLexicon::from_pairs([("s", "t"), ("a", "x")]).pairs());
    }

    #[test]
    fn cca_on_identical_views_projects_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(30, 4, &mut rng);
        let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let space = WordVectorSpace::new(words.clone(), x, "x").unwrap();
        let lex = TranslationLexicon::from_pairs(words.iter().map(|w| (w.clone(), w.clone())));
        let pair = align_cca(&build_aligned_matrices(&lex, &space, &space).unwrap(), None).unwrap();
        let a = pair.project_source(&space).unwrap();
        let b = pair.project_target(&space).unwrap();
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-6));
        assert_eq!(pair.w_src.ncols(), 4);
        assert!(!pair.orthogonal_src);
    }

    #[test]
    fn dlv_matches_identical_spaces_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(50, 8, &mut rng);
        let m = dlv_assignment(x.view(), x.view(), 10);
        assert_eq!(m, (0..50).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn dlv_without_em_equals_proc() {
        let fx = rotated_pair(&SyntheticConfig {
            words: 50,
            dim: 5,
            noise: 0.05,
            ..Default::default()
        })
        .unwrap();
        let seed = TranslationLexicon::from_pairs(fx.lexicon.pairs()[..8].iter().cloned());
        let cfg = DlvConfig {
            em_iterations: 0,
            ..Default::default()
        };
        let dlv = align_dlv(&fx.src, &fx.tgt, &seed, &cfg).unwrap();
        let proc = align_proc(&build_aligned_matrices(&seed, &fx.src, &fx.tgt).unwrap()).unwrap();
        assert_eq!(dlv.w_src, proc.w_src);
    }

    fn toy_problem(seed: u64) -> (RcslsProblem, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normalize_rows(&gaussian(8, 5, &mut rng));
        let y = normalize_rows(&gaussian(8, 5, &mut rng));
        let fs = normalize_rows(&gaussian(20, 5, &mut rng));
        let ft = normalize_rows(&gaussian(20, 5, &mut rng));
        let w = gaussian(5, 5, &mut rng);
        (RcslsProblem::new(x, y, fs, ft, 2).unwrap(), w)
    }

    #[test]
    fn rcsls_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (p, w) = toy_problem(seed);
            let sets = p.neighbor_sets(&w);
            let g = p.gradient(&w, &sets);
            let h = 1e-6;
            for i in 0..5 {
                for j in 0..5 {
                    let mut plus = w.clone();
                    plus[[i, j]] += h;
                    let mut minus = w.clone();
                    minus[[i, j]] -= h;
                    let fd = (p.objective(&plus, &sets) - p.objective(&minus, &sets)) / (2.0 * h);
                    let rel = (fd - g[[i, j]]).abs() / fd.abs().max(g[[i, j]].abs()).max(1e-8);
                    assert!(rel < 1e-4, "seed {seed} ({i},{j}): fd {fd} vs {}", g[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn rcsls_objective_is_invariant_under_common_rotation() {
        let (p, w) = toy_problem(9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = crate::numerics::random_orthogonal(5, &mut rng);
        let rotated = RcslsProblem::new(p.x.dot(&q), p.y.dot(&q), p.full_src.dot(&q), p.full_tgt.dot(&q), 2).unwrap();
        let wq = q.t().dot(&w).dot(&q);
        let a = p.objective(&w, &p.neighbor_sets(&w));
        let b = rotated.objective(&wq, &rotated.neighbor_sets(&wq));
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn spectral_clamp_bounds_singular_values() {
        let w = array![[3.0, 0.0], [0.0, 0.5]];
        let c = clamp_spectrum(&w).unwrap();
        assert!((c[[0, 0]] - 1.0).abs() < 1e-12 && (c[[1, 1]] - 0.5).abs() < 1e-12);
        assert!(orthogonality_error(&clamp_spectrum(&array![[2.0, 0.0], [0.0, 4.0]]).unwrap()) < 1e-12);
    }
}
