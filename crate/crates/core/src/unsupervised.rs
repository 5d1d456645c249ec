//! Dictionary-free aligners: similarity-distribution seeding with stochastic self-learning,
//! iterative closest point and Gromov-Wasserstein transport.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::WordVectorSpace;
use crate::error::{Error, Result};
use crate::lexicon::{build_aligned_matrices, mutual_nearest_neighbors, AlignedMatrices, TranslationLexicon, SEARCH_CAP};
use crate::neighbors::{argmax, mean_neighbor_similarity, nearest_neighbors, Metric};
use crate::numerics::{
    least_squares, normalize_rows, pca_project, random_orthogonal, sinkhorn_scale, solve_procrustes, svd,
    symmetric_eigen, symmetric_function, SINKHORN_MAX_ITER, SINKHORN_TOL,
};
use crate::projection::{Method, ProjectionPair, TrainingMetadata};

/// Default vocabulary cap of [`vecmap_seed`].
pub const VECMAP_SEED_CAP: usize = 4000;

fn capped_unit(space: &WordVectorSpace, cap: usize) -> Array2<f64> {
    let n = cap.min(space.len());
    normalize_rows(&space.matrix().slice(s![..n, ..]).to_owned())
}

/// Each row of the intra-language cosine matrix, sorted descending and unit-normalized.
fn sorted_similarity_profiles(x: &Array2<f64>) -> Array2<f64> {
    let mut sims = x.dot(&x.t());
    sims.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
        let mut v = row.to_vec();
        v.sort_unstable_by(|a, b| b.total_cmp(a));
        row.assign(&Array1::from(v));
    });
    normalize_rows(&sims)
}

/// Initial dictionary from monolingual similarity distributions: every source word among
/// the `cap` most frequent is paired with the target word whose sorted similarity profile
/// is closest. Both vocabularies are truncated to a common size so profiles are comparable.
pub fn vecmap_seed(src: &WordVectorSpace, tgt: &WordVectorSpace, cap: usize) -> Result<TranslationLexicon> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Empty("vecmap seed needs nonempty spaces".into()));
    }
    let n = cap.min(src.len()).min(tgt.len());
    if n < cap {
        log::warn!("vecmap seed cap {cap} clamped to {n}");
    }
    let ps = sorted_similarity_profiles(&capped_unit(src, n));
    let pt = sorted_similarity_profiles(&capped_unit(tgt, n));
    let nn = nearest_neighbors(ps.view(), pt.view(), Metric::Cosine);
    Ok(TranslationLexicon::from_pairs(
        nn.into_iter().enumerate().map(|(i, j)| (src.words()[i].clone(), tgt.words()[j].clone())),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfLearnConfig {
    /// Most frequent words per side used for dictionary induction.
    pub vocab_cap: usize,
    pub metric: Metric,
    pub max_rounds: usize,
    /// Initial probability of keeping a similarity entry.
    pub keep_prob: f64,
    /// Factor applied to `keep_prob` whenever the objective stalls.
    pub growth: f64,
    /// Rounds without improvement (or, at `keep_prob = 1`, without change) before acting.
    pub window: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SelfLearnConfig {
    fn default() -> Self {
        Self {
            vocab_cap: VECMAP_SEED_CAP,
            metric: Metric::Cosine,
            max_rounds: 100,
            keep_prob: 0.1,
            growth: 2.0,
            window: 3,
            seed: 0,
        }
    }
}

impl SelfLearnConfig {
    fn validate(&self) -> Result<()> {
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::invalid(format!("keep_prob must lie in (0, 1], got {}", self.keep_prob)));
        }
        if !(self.growth > 1.0) {
            return Err(Error::invalid(format!("keep_prob growth must exceed 1, got {}", self.growth)));
        }
        if self.max_rounds == 0 || self.window == 0 || self.vocab_cap == 0 {
            return Err(Error::invalid("max_rounds, window and vocab_cap must be positive"));
        }
        Ok(())
    }
}

/// Result of [`self_learn`] beyond the final map.
#[derive(Debug, Clone)]
pub struct SelfLearnTrace {
    /// Induced dictionary size after every round that induced one.
    pub sizes: Vec<usize>,
    /// Mean similarity of the induced pairs, per round.
    pub objectives: Vec<f64>,
    pub keep_probs: Vec<f64>,
    pub converged: bool,
}

/// Mutual nearest neighbors over a similarity matrix whose entries are zeroed independently
/// with probability `1 − keep_prob`. Returns `(i, j, unmasked score)` triples.
fn induce_with_dropout(
    src: ArrayView2<'_, f64>,
    tgt: ArrayView2<'_, f64>,
    metric: Metric,
    keep_prob: f64,
    rng_seed: u64,
    round: usize,
) -> Vec<(usize, usize, f64)> {
    let mut scores = src.dot(&tgt.t());
    if let Metric::Csls { neighbors } = metric {
        let r_src = mean_neighbor_similarity(src, tgt, neighbors);
        let r_tgt = mean_neighbor_similarity(tgt, src, neighbors);
        for ((i, j), v) in scores.indexed_iter_mut() {
            *v = 2.0 * *v - r_src[i] - r_tgt[j];
        }
    }
    let clean = scores.clone();
    if keep_prob < 1.0 {
        scores.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(((round as u64) << 32) | i as u64);
            for v in row.iter_mut() {
                if !rng.random_bool(keep_prob) {
                    *v = 0.0;
                }
            }
        });
    }
    let forward: Vec<usize> = scores.axis_iter(Axis(0)).into_par_iter().map(argmax).collect();
    let backward: Vec<usize> = scores.axis_iter(Axis(1)).into_par_iter().map(argmax).collect();
    forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| backward[j] == i)
        .map(|(i, &j)| (i, j, clean[[i, j]]))
        .collect()
}

/// Stochastic self-learning: alternate a Procrustes solve on the current dictionary with
/// re-induction of the dictionary by mutual nearest neighbors under random dropout of
/// similarity entries. Returns the last solved map and the dictionary it was solved on.
pub fn self_learn(
    src: &WordVectorSpace,
    tgt: &WordVectorSpace,
    init: &TranslationLexicon,
    cfg: &SelfLearnConfig,
) -> Result<(ProjectionPair, SelfLearnTrace)> {
    cfg.validate()?;
    if init.is_empty() {
        return Err(Error::Empty("self-learning needs a nonempty initial dictionary".into()));
    }
    let ns = cfg.vocab_cap.min(src.len());
    let nt = cfg.vocab_cap.min(tgt.len());
    let src_top = src.matrix().slice(s![..ns, ..]);
    let tgt_unit = normalize_rows(&tgt.matrix().slice(s![..nt, ..]).to_owned());

    let mut dictionary = init.clone();
    let mut keep_prob = cfg.keep_prob;
    let mut best = f64::NEG_INFINITY;
    let mut stalled = 0;
    let mut unchanged = 0;
    let mut flags = Vec::new();
    let mut trace = SelfLearnTrace {
        sizes: Vec::new(),
        objectives: Vec::new(),
        keep_probs: Vec::new(),
        converged: false,
    };
    let mut rounds = 0;
    let mut solution;
    let mut aligned;
    loop {
        aligned = build_aligned_matrices(&dictionary, src, tgt)?;
        solution = solve_procrustes(&aligned.xs, &aligned.xt)?;
        rounds += 1;
        if rounds == cfg.max_rounds {
            break;
        }
        let projected = normalize_rows(&src_top.dot(&solution.w));
        let pairs = induce_with_dropout(projected.view(), tgt_unit.view(), cfg.metric, keep_prob, cfg.seed, rounds);
        trace.keep_probs.push(keep_prob);
        if pairs.is_empty() {
            log::warn!("self-learning round {rounds}: empty induced dictionary, keeping the previous one");
            flags.push(format!("round {rounds}: empty induction"));
            trace.sizes.push(0);
            trace.objectives.push(f64::NAN);
            continue;
        }
        let objective = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
        let induced = TranslationLexicon::from_pairs(
            pairs.iter().map(|&(i, j, _)| (src.words()[i].clone(), tgt.words()[j].clone())),
        );
        trace.sizes.push(induced.len());
        trace.objectives.push(objective);
        log::debug!("self-learning round {rounds}: {} pairs, objective {objective:.6}, keep {keep_prob}", induced.len());

        if induced.pairs() == dictionary.pairs() {
            unchanged += 1;
        } else {
            unchanged = 0;
        }
        dictionary = induced;
        if objective > best + 1e-6 {
            best = objective;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if keep_prob >= 1.0 {
            if unchanged >= cfg.window {
                // the dictionary just induced equals the one the current map was solved on
                trace.converged = true;
                break;
            }
        } else if stalled >= cfg.window {
            keep_prob = (keep_prob * cfg.growth).min(1.0);
            stalled = 0;
        }
    }
    let metadata = TrainingMetadata {
        dictionary_size: aligned.len(),
        dictionary_sizes: trace.sizes.clone(),
        iterations: rounds,
        final_objective: trace.objectives.last().copied().filter(|v| v.is_finite()),
        rank_deficient: solution.rank_deficient,
        flags,
    };
    let pair = ProjectionPair::source_only(solution.w, Method::SelfLearn, metadata)?.with_dictionary(aligned.kept_pairs);
    Ok((pair, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VecmapConfig {
    pub seed_cap: usize,
    pub self_learn: SelfLearnConfig,
}

impl Default for VecmapConfig {
    fn default() -> Self {
        Self {
            seed_cap: VECMAP_SEED_CAP,
            self_learn: SelfLearnConfig::default(),
        }
    }
}

/// Fully unsupervised pipeline: similarity-distribution seed, then stochastic self-learning.
pub fn align_vecmap(src: &WordVectorSpace, tgt: &WordVectorSpace, cfg: &VecmapConfig) -> Result<ProjectionPair> {
    let seed = vecmap_seed(src, tgt, cfg.seed_cap)?;
    let (mut pair, _) = self_learn(src, tgt, &seed, &cfg.self_learn)?;
    pair.method = Method::Vecmap;
    Ok(pair)
}

/// Optional refinement steps applied after self-learning.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessOptions {
    pub whiten: bool,
    /// Power of the singular values used to re-weight the source side (0 disables).
    pub src_reweight: f64,
    /// Power of the singular values used to re-weight the target side (0 disables).
    pub tgt_reweight: f64,
    /// Undo the whitening of each side after mapping (requires `whiten`).
    pub dewhiten: bool,
    /// Keep only the leading `dim` shared dimensions.
    pub dim: Option<usize>,
}

impl PostprocessOptions {
    pub fn is_noop(&self) -> bool {
        !self.whiten && self.src_reweight == 0.0 && self.tgt_reweight == 0.0 && !self.dewhiten && self.dim.is_none()
    }
}

/// Whitening, orthogonal mapping, re-weighting, de-whitening and dimensionality reduction
/// learned on the final dictionary. The returned maps replace those of `pair`.
pub fn vecmap_postprocess(
    pair: &ProjectionPair,
    aligned: &AlignedMatrices,
    options: &PostprocessOptions,
) -> Result<ProjectionPair> {
    if options.is_noop() {
        return Ok(pair.clone());
    }
    if options.dewhiten && !options.whiten {
        return Err(Error::invalid("de-whitening requires whitening"));
    }
    let d = aligned.xs.ncols();
    let mut flags = pair.metadata.flags.clone();
    let eye = Array2::<f64>::eye(d);
    let (wx1, wz1, wx1_inv, wz1_inv) = if options.whiten {
        let mut side = |x: &Array2<f64>, name: &str| -> Result<(Array2<f64>, Array2<f64>)> {
            let gram = x.t().dot(x);
            let (values, _) = symmetric_eigen(&gram)?;
            let floor = crate::embedding::WHITEN_EPSILON * values[0].max(1.0);
            if values.iter().any(|&v| v < floor) {
                flags.push(format!("{name} whitening regularized"));
            }
            Ok((
                symmetric_function(&gram, |v| 1.0 / v.max(floor).sqrt())?,
                symmetric_function(&gram, |v| v.max(floor).sqrt())?,
            ))
        };
        let (wx, wx_inv) = side(&aligned.xs, "source")?;
        let (wz, wz_inv) = side(&aligned.xt, "target")?;
        (wx, wz, wx_inv, wz_inv)
    } else {
        (eye.clone(), eye.clone(), eye.clone(), eye.clone())
    };
    let xw = aligned.xs.dot(&wx1);
    let zw = aligned.xt.dot(&wz1);
    let dec = svd(&xw.t().dot(&zw))?;
    let wx2 = dec.u.clone();
    let wz2 = dec.vt.t().to_owned();
    let mut ws = wx1.dot(&wx2);
    let mut wt = wz1.dot(&wz2);
    if options.src_reweight != 0.0 {
        ws = &ws * &dec.s.mapv(|v| v.powf(options.src_reweight)).insert_axis(Axis(0));
    }
    if options.tgt_reweight != 0.0 {
        wt = &wt * &dec.s.mapv(|v| v.powf(options.tgt_reweight)).insert_axis(Axis(0));
    }
    if options.dewhiten {
        ws = ws.dot(&wx2.t().dot(&wx1_inv).dot(&wx2));
        wt = wt.dot(&wz2.t().dot(&wz1_inv).dot(&wz2));
    }
    if let Some(k) = options.dim {
        if k == 0 || k > d {
            return Err(Error::invalid(format!("reduced dimension must be in 1..={d}, got {k}")));
        }
        ws = ws.slice(s![.., ..k]).to_owned();
        wt = wt.slice(s![.., ..k]).to_owned();
    }
    let metadata = TrainingMetadata {
        flags,
        ..pair.metadata.clone()
    };
    let mut out = ProjectionPair::new(ws, wt, pair.method, metadata)?;
    out.dictionary = pair.dictionary.clone();
    out.orthogonal_src = false;
    Ok(out)
}

/// How ICP restarts draw their initial map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcpInit {
    /// Restart 0 starts at the identity, later restarts at random sign flips of the
    /// principal axes (whose signs are first canonicalized by skewness on both sides).
    #[default]
    SignFlips,
    /// Haar-random orthogonal matrices.
    Haar,
}

impl std::str::FromStr for IcpInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign-flips" => Ok(Self::SignFlips),
            "haar" => Ok(Self::Haar),
            other => Err(Error::invalid(format!("unknown icp initialization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub pca_dim: usize,
    pub top_n: usize,
    /// Weight of the cyclic reconstruction terms.
    pub lambda_cyc: f64,
    pub restarts: usize,
    /// Gradient steps per map update when `lambda_cyc > 0`.
    pub inner_iters: usize,
    /// Assignment/update alternations per restart.
    pub outer_iters: usize,
    pub init: IcpInit,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            pca_dim: 50,
            top_n: 2500,
            lambda_cyc: 1.0,
            restarts: 20,
            inner_iters: 50,
            outer_iters: 100,
            init: IcpInit::SignFlips,
            seed: 0,
        }
    }
}

/// Course of one ICP restart.
#[derive(Debug, Clone)]
pub struct IcpTrace {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    /// Loss after every map update.
    pub losses: Vec<f64>,
    pub converged: bool,
}

impl IcpTrace {
    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn nearest_euclidean(queries: &Array2<f64>, points: &Array2<f64>) -> Vec<usize> {
    let sq: Array1<f64> = points.map_axis(Axis(1), |r| r.dot(&r));
    let cross = queries.dot(&points.t());
    cross
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            // argmin ‖q − p‖² = argmin (‖p‖² − 2 q·p)
            let mut best = 0;
            let mut best_v = f64::INFINITY;
            for (j, (&c, &p)) in row.iter().zip(sq.iter()).enumerate() {
                let v = p - 2.0 * c;
                if v < best_v {
                    best_v = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// The ICP objective for fixed assignments, normalized by the number of points per side.
struct IcpLoss<'a> {
    x: &'a Array2<f64>,
    y: &'a Array2<f64>,
    yf: Array2<f64>,
    xf: Array2<f64>,
    lambda: f64,
}

impl IcpLoss<'_> {
    fn sq(a: &Array2<f64>) -> f64 {
        a.iter().map(|v| v * v).sum()
    }

    fn value(&self, w1: &Array2<f64>, w2: &Array2<f64>) -> f64 {
        let (nx, ny) = (self.x.nrows() as f64, self.y.nrows() as f64);
        let mut total = Self::sq(&(self.x.dot(w1) - &self.yf)) / nx + Self::sq(&(self.y.dot(w2) - &self.xf)) / ny;
        if self.lambda > 0.0 {
            total += self.lambda * Self::sq(&(self.x - &self.x.dot(w1).dot(w2))) / nx;
            total += self.lambda * Self::sq(&(self.y - &self.y.dot(w2).dot(w1))) / ny;
        }
        total
    }

    fn gradient(&self, w1: &Array2<f64>, w2: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (nx, ny) = (self.x.nrows() as f64, self.y.nrows() as f64);
        let a = self.x.dot(w1);
        let b = self.y.dot(w2);
        let mut g1 = self.x.t().dot(&(&a - &self.yf)) * (2.0 / nx);
        let mut g2 = self.y.t().dot(&(&b - &self.xf)) * (2.0 / ny);
        if self.lambda > 0.0 {
            let e = self.x - &a.dot(w2);
            let f = self.y - &b.dot(w1);
            g1 = g1 - self.x.t().dot(&e).dot(&w2.t()) * (2.0 * self.lambda / nx) - b.t().dot(&f) * (2.0 * self.lambda / ny);
            g2 = g2 - a.t().dot(&e) * (2.0 * self.lambda / nx) - self.y.t().dot(&f).dot(&w1.t()) * (2.0 * self.lambda / ny);
        }
        (g1, g2)
    }
}

/// Value of the ICP objective at `(w1, w2)` with nearest-point assignments computed under
/// those maps.
pub fn icp_loss(x: &Array2<f64>, y: &Array2<f64>, w1: &Array2<f64>, w2: &Array2<f64>, lambda_cyc: f64) -> f64 {
    let f1 = nearest_euclidean(&x.dot(w1), y);
    let f2 = nearest_euclidean(&y.dot(w2), x);
    IcpLoss {
        x,
        y,
        yf: y.select(Axis(0), &f1),
        xf: x.select(Axis(0), &f2),
        lambda: lambda_cyc,
    }
    .value(w1, w2)
}

/// One ICP restart from the given initial map (`W₂ = W₁ᵀ`). With `λ = 0` each update is an
/// exact least-squares solve; otherwise gradient descent with backtracking line search.
pub fn icp_restart(x: &Array2<f64>, y: &Array2<f64>, w1_init: &Array2<f64>, cfg: &IcpConfig) -> IcpTrace {
    let mut w1 = w1_init.clone();
    let mut w2 = w1_init.t().to_owned();
    let mut losses = Vec::new();
    let mut previous: Option<(Vec<usize>, Vec<usize>)> = None;
    let mut converged = false;
    for _ in 0..cfg.outer_iters {
        let f1 = nearest_euclidean(&x.dot(&w1), y);
        let f2 = nearest_euclidean(&y.dot(&w2), x);
        if previous.as_ref() == Some(&(f1.clone(), f2.clone())) {
            converged = true;
            break;
        }
        let loss = IcpLoss {
            x,
            y,
            yf: y.select(Axis(0), &f1),
            xf: x.select(Axis(0), &f2),
            lambda: cfg.lambda_cyc,
        };
        if cfg.lambda_cyc == 0.0 {
            match (least_squares(x, &loss.yf), least_squares(y, &loss.xf)) {
                (Ok(a), Ok(b)) => {
                    w1 = a;
                    w2 = b;
                }
                _ => {
                    losses.push(f64::NAN);
                    break;
                }
            }
        } else {
            let mut value = loss.value(&w1, &w2);
            let mut step = 1.0;
            for _ in 0..cfg.inner_iters {
                let (g1, g2) = loss.gradient(&w1, &w2);
                let norm2 = IcpLoss::sq(&g1) + IcpLoss::sq(&g2);
                if norm2 < 1e-20 {
                    break;
                }
                let mut accepted = false;
                for _ in 0..60 {
                    let c1 = &w1 - &(&g1 * step);
                    let c2 = &w2 - &(&g2 * step);
                    let v = loss.value(&c1, &c2);
                    if v <= value - 1e-4 * step * norm2 {
                        w1 = c1;
                        w2 = c2;
                        value = v;
                        accepted = true;
                        break;
                    }
                    step /= 2.0;
                }
                if !accepted {
                    break;
                }
                step *= 2.0;
            }
        }
        losses.push(loss.value(&w1, &w2));
        previous = Some((f1, f2));
    }
    IcpTrace {
        w1,
        w2,
        losses,
        converged,
    }
}

/// Flips every column whose third moment is negative.
fn canonicalize_signs(x: &mut Array2<f64>) {
    for mut col in x.columns_mut() {
        if col.iter().map(|v| v * v * v).sum::<f64>() < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Iterative closest point on PCA-reduced frequent words with random orthogonal restarts.
/// The best restart's matches seed two rounds of Procrustes in the original space.
pub fn align_icp(src: &WordVectorSpace, tgt: &WordVectorSpace, cfg: &IcpConfig) -> Result<ProjectionPair> {
    if cfg.restarts == 0 {
        return Err(Error::invalid("icp needs at least one restart"));
    }
    if cfg.lambda_cyc < 0.0 || !cfg.lambda_cyc.is_finite() {
        return Err(Error::invalid("icp cyclic weight must be a nonnegative number"));
    }
    let d = src.dim().min(tgt.dim());
    if cfg.pca_dim == 0 || cfg.pca_dim > d {
        return Err(Error::invalid(format!("icp pca_dim must be in 1..={d}, got {}", cfg.pca_dim)));
    }
    let ns = cfg.top_n.min(src.len());
    let nt = cfg.top_n.min(tgt.len());
    let mut xs = pca_project(&src.matrix().slice(s![..ns, ..]).to_owned(), cfg.pca_dim)?.projected;
    let mut yt = pca_project(&tgt.matrix().slice(s![..nt, ..]).to_owned(), cfg.pca_dim)?.projected;
    if cfg.init == IcpInit::SignFlips {
        canonicalize_signs(&mut xs);
        canonicalize_signs(&mut yt);
    }

    let traces: Vec<IcpTrace> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let init = match cfg.init {
                IcpInit::Haar => random_orthogonal(cfg.pca_dim, &mut rng),
                IcpInit::SignFlips if r == 0 => Array2::eye(cfg.pca_dim),
                IcpInit::SignFlips => Array2::from_diag(&Array1::from_shape_simple_fn(cfg.pca_dim, || {
                    if rng.random_bool(0.5) {
                        -1.0
                    } else {
                        1.0
                    }
                })),
            };
            icp_restart(&xs, &yt, &init, cfg)
        })
        .collect();
    let (best_idx, best) = traces
        .iter()
        .enumerate()
        .filter(|(_, t)| t.final_loss().is_finite())
        .min_by(|a, b| a.1.final_loss().total_cmp(&b.1.final_loss()).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::numerical("icp", "every restart produced a non-finite loss"))?;
    log::info!("icp: best restart {best_idx} with loss {:.6}", best.final_loss());

    let pca_dict = mutual_nearest_neighbors(
        xs.dot(&best.w1).view(),
        yt.view(),
        &src.words()[..ns],
        &tgt.words()[..nt],
        Metric::Cosine,
        usize::MAX,
    );
    let mut flags = Vec::new();
    if pca_dict.is_empty() {
        return Err(Error::numerical("icp", "no mutual nearest neighbors after alignment"));
    }
    let first = build_aligned_matrices(&pca_dict, src, tgt)?;
    let w = solve_procrustes(&first.xs, &first.xt)?.w;
    let refined = mutual_nearest_neighbors(
        src.matrix().slice(s![..ns, ..]).dot(&w).view(),
        tgt.matrix().slice(s![..nt, ..]),
        &src.words()[..ns],
        &tgt.words()[..nt],
        Metric::Cosine,
        SEARCH_CAP,
    );
    let dictionary = if refined.is_empty() {
        flags.push("refinement found no mutual neighbors".to_string());
        pca_dict
    } else {
        refined
    };
    let aligned = build_aligned_matrices(&dictionary, src, tgt)?;
    let sol = solve_procrustes(&aligned.xs, &aligned.xt)?;
    let metadata = TrainingMetadata {
        dictionary_size: aligned.len(),
        dictionary_sizes: vec![first.len(), aligned.len()],
        iterations: best.losses.len(),
        final_objective: Some(best.final_loss()),
        rank_deficient: sol.rank_deficient,
        flags,
    };
    Ok(ProjectionPair::source_only(sol.w, Method::Icp, metadata)?.with_dictionary(aligned.kept_pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GwaConfig {
    pub cap: usize,
    /// Entropic regularization, relative to cost matrices scaled to max-abs 1 (the linearized
    /// cost of every outer iteration is shifted and scaled to `[0, 1]`).
    pub lambda: f64,
    pub outer_iters: usize,
    pub sinkhorn_max_iter: usize,
    pub sinkhorn_tol: f64,
}

impl Default for GwaConfig {
    fn default() -> Self {
        Self {
            cap: 2000,
            lambda: 2e-2,
            outer_iters: 30,
            sinkhorn_max_iter: SINKHORN_MAX_ITER,
            sinkhorn_tol: SINKHORN_TOL,
        }
    }
}

/// Entropic Gromov-Wasserstein coupling between the capped vocabularies.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub gamma: Array2<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub lambda: f64,
    pub outer_iters: usize,
    /// Largest marginal violation of the final Sinkhorn solve.
    pub violation: f64,
}

impl TransportPlan {
    /// `(i, argmax_j Γ[i, j])` for every row.
    pub fn row_argmax(&self) -> Vec<usize> {
        self.gamma.axis_iter(Axis(0)).map(argmax).collect()
    }
}

fn scaled_cosines(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let u = normalize_rows(&x.to_owned());
    let c = u.dot(&u.t());
    let m = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        c / m
    } else {
        c
    }
}

/// Entropic Gromov-Wasserstein between two point clouds given by their rows, using
/// intra-cloud cosine costs and uniform marginals.
pub fn gromov_wasserstein(xs: ArrayView2<'_, f64>, xt: ArrayView2<'_, f64>, cfg: &GwaConfig) -> Result<TransportPlan> {
    if !(cfg.lambda > 0.0) || !cfg.lambda.is_finite() {
        return Err(Error::invalid(format!("gwa lambda must be positive, got {}", cfg.lambda)));
    }
    let (n, m) = (xs.nrows(), xt.nrows());
    if n == 0 || m == 0 {
        return Err(Error::Empty("gwa needs nonempty point clouds".into()));
    }
    let c1 = scaled_cosines(xs);
    let c2 = scaled_cosines(xt);
    let p = Array1::from_elem(n, 1.0 / n as f64);
    let q = Array1::from_elem(m, 1.0 / m as f64);
    let r1 = c1.mapv(|v| v * v).dot(&p);
    let r2 = c2.mapv(|v| v * v).dot(&q);
    let c12 = Array2::from_shape_fn((n, m), |(i, j)| r1[i] + r2[j]);

    let mut gamma = p.view().insert_axis(Axis(1)).dot(&q.view().insert_axis(Axis(0)));
    let mut a = Array1::ones(n);
    let mut b = Array1::ones(m);
    let mut violation = 0.0;
    for outer in 0..cfg.outer_iters {
        let cost = &c12 - &(c1.dot(&gamma).dot(&c2.t()) * 2.0);
        let lowest = cost.iter().copied().fold(f64::INFINITY, f64::min);
        let highest = cost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // the shifted cost is rescaled to [0, 1] so lambda is relative to its spread
        let spread = if highest > lowest { highest - lowest } else { 1.0 };
        let kernel = cost.mapv(|c| (-(c - lowest) / spread / cfg.lambda).exp());
        if kernel.iter().any(|&v| v == 0.0) {
            return Err(Error::numerical(
                "gwa",
                format!("kernel underflowed at outer iteration {}; increase lambda", outer + 1),
            ));
        }
        let scaled = sinkhorn_scale(&kernel, &p, &q, cfg.sinkhorn_max_iter, cfg.sinkhorn_tol)?;
        if !scaled.converged {
            log::warn!("gwa outer iteration {}: sinkhorn stopped at violation {:.3e}", outer + 1, scaled.violation);
        }
        gamma = scaled.coupling(&kernel);
        violation = scaled.violation;
        a = scaled.a;
        b = scaled.b;
    }
    Ok(TransportPlan {
        gamma,
        a,
        b,
        lambda: cfg.lambda,
        outer_iters: cfg.outer_iters,
        violation,
    })
}

/// Gromov-Wasserstein alignment; the row-argmax of the final coupling supervises a
/// Procrustes solve.
pub fn align_gwa(src: &WordVectorSpace, tgt: &WordVectorSpace, cfg: &GwaConfig) -> Result<(ProjectionPair, TransportPlan)> {
    if cfg.cap == 0 {
        return Err(Error::invalid("gwa cap must be positive"));
    }
    let ns = cfg.cap.min(src.len());
    let nt = cfg.cap.min(tgt.len());
    let plan = gromov_wasserstein(src.matrix().slice(s![..ns, ..]), tgt.matrix().slice(s![..nt, ..]), cfg)?;
    let dictionary = TranslationLexicon::from_pairs(
        plan.row_argmax().into_iter().enumerate().map(|(i, j)| (src.words()[i].clone(), tgt.words()[j].clone())),
    );
    let aligned = build_aligned_matrices(&dictionary, src, tgt)?;
    let sol = solve_procrustes(&aligned.xs, &aligned.xt)?;
    let mut flags = Vec::new();
    if plan.violation >= cfg.sinkhorn_tol {
        flags.push(format!("final sinkhorn violation {:.3e}", plan.violation));
    }
    let metadata = TrainingMetadata {
        dictionary_size: aligned.len(),
        iterations: cfg.outer_iters,
        rank_deficient: sol.rank_deficient,
        flags,
        ..Default::default()
    };
    let pair = ProjectionPair::source_only(sol.w, Method::Gwa, metadata)?.with_dictionary(aligned.kept_pairs);
    Ok((pair, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::orthogonality_error;
    use crate::supervised::align_proc;
    use crate::synthetic::{permuted_copy, rotated_pair, SyntheticConfig};

    fn fixture(words: usize, dim: usize, noise: f64) -> crate::synthetic::SyntheticPair {
        rotated_pair(&SyntheticConfig {
            words,
            dim,
            noise,
            ..Default::default()
        })
        .unwrap()
    }

    fn translation_hits(lex: &TranslationLexicon) -> usize {
        lex.pairs().iter().filter(|(s, t)| s[1..] == t[1..]).count()
    }

    #[test]
    fn seed_on_identical_space_is_identity() {
        let fx = fixture(80, 6, 0.0);
        let seed = vecmap_seed(&fx.src, &fx.src, 1000).unwrap();
        assert!(seed.pairs().iter().all(|(s, t)| s == t));
        assert_eq!(seed.len(), 80);
    }

    #[test]
    fn seed_ignores_rotation() {
        let fx = fixture(80, 6, 0.0);
        assert_eq!(translation_hits(&vecmap_seed(&fx.src, &fx.tgt, 1000).unwrap()), 80);
    }

    #[test]
    fn seed_recovers_permutation() {
        let fx = fixture(120, 8, 0.0);
        let (perm_tgt, _) = permuted_copy(&fx.tgt, 3).unwrap();
        let seed = vecmap_seed(&fx.src, &perm_tgt, 1000).unwrap();
        assert_eq!(translation_hits(&seed), 120);
    }

    #[test]
    fn one_round_self_learning_is_procrustes() {
        let fx = fixture(60, 5, 0.05);
        let init = TranslationLexicon::from_pairs(fx.lexicon.pairs()[..12].iter().cloned());
        let cfg = SelfLearnConfig {
            keep_prob: 1.0,
            max_rounds: 1,
            ..Default::default()
        };
        let (pair, _) = self_learn(&fx.src, &fx.tgt, &init, &cfg).unwrap();
        let proc = align_proc(&build_aligned_matrices(&init, &fx.src, &fx.tgt).unwrap()).unwrap();
        assert_eq!(pair.w_src, proc.w_src);
    }

    #[test]
    fn self_learning_is_reproducible() {
        let fx = fixture(100, 6, 0.1);
        let init = TranslationLexicon::from_pairs(fx.lexicon.pairs()[..5].iter().cloned());
        let cfg = SelfLearnConfig {
            seed: 11,
            max_rounds: 15,
            ..Default::default()
        };
        let (a, ta) = self_learn(&fx.src, &fx.tgt, &init, &cfg).unwrap();
        let (b, tb) = self_learn(&fx.src, &fx.tgt, &init, &cfg).unwrap();
        assert_eq!(a.w_src, b.w_src);
        assert_eq!(ta.sizes, tb.sizes);
        assert!(ta.keep_probs.iter().all(|&p| p <= 1.0));
        assert!(orthogonality_error(&a.w_src) < 1e-10);
    }

    #[test]
    fn self_learning_rejects_empty_seed() {
        let fx = fixture(10, 3, 0.0);
        assert!(self_learn(&fx.src, &fx.tgt, &TranslationLexicon::new(), &SelfLearnConfig::default()).is_err());
    }

    #[test]
    fn postprocess_noop_and_zero_power() {
        let fx = fixture(60, 5, 0.05);
        let aligned = build_aligned_matrices(&fx.lexicon, &fx.src, &fx.tgt).unwrap();
        let pair = align_proc(&aligned).unwrap();
        let same = vecmap_postprocess(&pair, &aligned, &PostprocessOptions::default()).unwrap();
        assert_eq!(same.w_src, pair.w_src);
        assert_eq!(same.w_tgt, pair.w_tgt);

        // mapping both sides by U and V differs from U·Vᵀ only by a common rotation
        let dimmed = vecmap_postprocess(
            &pair,
            &aligned,
            &PostprocessOptions {
                dim: Some(5),
                ..Default::default()
            },
        )
        .unwrap();
        let a = fx.src.matrix().dot(&pair.w_src).dot(&fx.tgt.matrix().t());
        let b = fx.src.matrix().dot(&dimmed.w_src).dot(&dimmed.w_tgt.t()).dot(&fx.tgt.matrix().t());
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn postprocess_whitening_needs_consistent_options() {
        let fx = fixture(40, 4, 0.0);
        let aligned = build_aligned_matrices(&fx.lexicon, &fx.src, &fx.tgt).unwrap();
        let pair = align_proc(&aligned).unwrap();
        let bad = PostprocessOptions {
            dewhiten: true,
            ..Default::default()
        };
        assert!(vecmap_postprocess(&pair, &aligned, &bad).is_err());
        let full = PostprocessOptions {
            whiten: true,
            src_reweight: 0.5,
            tgt_reweight: 0.5,
            dewhiten: true,
            dim: Some(3),
        };
        let out = vecmap_postprocess(&pair, &aligned, &full).unwrap();
        assert_eq!(out.w_src.dim(), (4, 3));
        assert!(!out.orthogonal_src);
    }

    #[test]
    fn icp_on_identical_clouds_from_identity_has_zero_loss() {
        let fx = fixture(50, 4, 0.0);
        let x = fx.src.matrix().clone();
        let cfg = IcpConfig {
            pca_dim: 4,
            lambda_cyc: 0.0,
            ..Default::default()
        };
        let trace = icp_restart(&x, &x, &Array2::eye(4), &cfg);
        assert!(trace.losses[0] < 1e-20);
        assert!(trace.converged);
    }

    #[test]
    fn inverse_maps_have_zero_cyclic_terms() {
        let fx = fixture(30, 4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w1 = random_orthogonal(4, &mut rng);
        let x = fx.src.matrix();
        let with = icp_loss(x, x, &w1, &w1.t().to_owned(), 1.0);
        let without = icp_loss(x, x, &w1, &w1.t().to_owned(), 0.0);
        assert!((with - without).abs() < 1e-20);
    }

    #[test]
    fn icp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = crate::synthetic::gaussian_cloud(12, 3, 1.0, &mut rng);
        let y = crate::synthetic::gaussian_cloud(10, 3, 1.0, &mut rng);
        let w1 = crate::synthetic::gaussian_cloud(3, 3, 1.0, &mut rng);
        let w2 = crate::synthetic::gaussian_cloud(3, 3, 1.0, &mut rng);
        let f1: Vec<usize> = (0..12).map(|i| i % 10).collect();
        let f2: Vec<usize> = (0..10).map(|j| (j * 7) % 12).collect();
        let loss = IcpLoss {
            x: &x,
            y: &y,
            yf: y.select(Axis(0), &f1),
            xf: x.select(Axis(0), &f2),
            lambda: 0.7,
        };
        let (g1, g2) = loss.gradient(&w1, &w2);
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut p = w1.clone();
                p[[i, j]] += h;
                let mut m = w1.clone();
                m[[i, j]] -= h;
                let fd = (loss.value(&p, &w2) - loss.value(&m, &w2)) / (2.0 * h);
                assert!((fd - g1[[i, j]]).abs() < 1e-5 * (1.0 + fd.abs()));
                let mut p = w2.clone();
                p[[i, j]] += h;
                let mut m = w2.clone();
                m[[i, j]] -= h;
                let fd = (loss.value(&w1, &p) - loss.value(&w1, &m)) / (2.0 * h);
                assert!((fd - g2[[i, j]]).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn icp_losses_never_increase() {
        let fx = fixture(120, 6, 0.1);
        let x = fx.src.matrix().clone();
        let y = fx.tgt.matrix().clone();
        for lambda_cyc in [0.0, 1.0] {
            let cfg = IcpConfig {
                pca_dim: 6,
                lambda_cyc,
                inner_iters: 10,
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let trace = icp_restart(&x, &y, &random_orthogonal(6, &mut rng), &cfg);
            for w in trace.losses.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{lambda_cyc}: {:?}", trace.losses);
            }
        }
    }

    #[test]
    fn gwa_degenerate_clouds_keep_product_coupling() {
        let words: Vec<String> = (0..5).map(|i| format!("w{i}")).collect();
        let same = WordVectorSpace::new(words, Array2::from_elem((5, 3), 0.5), "x").unwrap();
        let plan = gromov_wasserstein(same.matrix().view(), same.matrix().view(), &GwaConfig::default()).unwrap();
        assert!(plan.gamma.iter().all(|&g| (g - 1.0 / 25.0).abs() < 1e-12));
    }

    #[test]
    fn gwa_plan_is_rotation_invariant_and_feasible() {
        let fx = fixture(20, 6, 0.0);
        let cfg = GwaConfig::default();
        let rotated = gromov_wasserstein(fx.src.matrix().view(), fx.tgt.matrix().view(), &cfg).unwrap();
        let identical = gromov_wasserstein(fx.src.matrix().view(), fx.src.matrix().view(), &cfg).unwrap();
        assert!((&rotated.gamma - &identical.gamma).iter().all(|v| v.abs() < 1e-8));
        assert!(rotated.gamma.iter().all(|&g| g >= 0.0));
        let rows = rotated.gamma.sum_axis(Axis(1));
        let cols = rotated.gamma.sum_axis(Axis(0));
        assert!(rows.iter().chain(cols.iter()).all(|&v| (v - 0.05).abs() < 1e-6));
        assert_eq!(rotated.row_argmax(), (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn gwa_rejects_nonpositive_lambda() {
        let fx = fixture(10, 3, 0.0);
        let cfg = GwaConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(matches!(align_gwa(&fx.src, &fx.tgt, &cfg), Err(Error::InvalidArgument(_))));
    }
}
