//! Acceptance criteria, one line each. Run with `cargo test --test acceptance`.
//!
//! The full-scale check (criterion 12) runs only when `CROSSLING_FULL_SCALE=1` and the
//! paths `CROSSLING_SRC_VEC`, `CROSSLING_TGT_VEC`, `CROSSLING_TRAIN_DICT` and
//! `CROSSLING_TEST_DICT` are set.

use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crossling::clir::{clir_run, read_trec_run, run_lines, tokenize, write_trec_run, DocumentCollection, WeightingScheme};
use crossling::embedding::{load_text_embeddings, WordVectorSpace};
use crossling::eval::bli::{average_precision, bli_evaluate, csls_scores, BliResult, QueryRecord};
use crossling::eval::stats::{bonferroni, paired_ttest, shuffling_test};
use crossling::lexicon::{build_aligned_matrices, frequency_split, load_lexicon, TranslationLexicon};
use crossling::neighbors::{mean_neighbor_similarity, nearest_neighbors, Metric};
use crossling::numerics::normalize_rows;
use crossling::projection::ProjectionPair;
use crossling::supervised::{align_proc, align_proc_b, align_rcsls, ProcBConfig, RcslsConfig, RcslsProblem};
use crossling::synthetic::{gaussian_cloud, permuted_copy, rotated_pair, SyntheticConfig, SyntheticPair};
use crossling::unsupervised::{
    align_gwa, align_icp, icp_restart, self_learn, vecmap_seed, GwaConfig, IcpConfig, SelfLearnConfig,
};
use crossling::Result;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn fixture(words: usize, noise: f64) -> Result<SyntheticPair> {
    rotated_pair(&SyntheticConfig {
        words,
        noise,
        ..Default::default()
    })
}

fn held_out_map(pair: &ProjectionPair, fx: &SyntheticPair, test: &TranslationLexicon) -> Result<f64> {
    Ok(bli_evaluate(pair, &fx.src, &fx.tgt, test, Metric::Cosine)?.map)
}

fn rotation_recovery() -> Result<Outcome> {
    let started = Instant::now();
    let fx = fixture(500, 0.0)?;
    let full = align_proc(&build_aligned_matrices(&fx.lexicon, &fx.src, &fx.tgt)?)?;
    let err = (&full.w_src - &fx.rotation).mapv(|v| v * v).sum().sqrt();
    let split = frequency_split(&fx.lexicon, &[400], 100)?;
    let pair = align_proc(&build_aligned_matrices(&split.train[0], &fx.src, &fx.tgt)?)?;
    let map = held_out_map(&pair, &fx, &split.test)?;
    let secs = started.elapsed().as_secs_f64();
    Ok(check(
        err < 1e-6 && map == 1.0 && secs < 5.0,
        format!("|W-R|_F = {err:.2e}, held-out MAP {map}, {secs:.2}s"),
    ))
}

fn noise_ladder() -> Result<Outcome> {
    let mut maps = Vec::new();
    for noise in [0.01, 0.05, 0.1] {
        let fx = fixture(500, noise)?;
        let split = frequency_split(&fx.lexicon, &[400], 100)?;
        let pair = align_proc(&build_aligned_matrices(&split.train[0], &fx.src, &fx.tgt)?)?;
        maps.push(held_out_map(&pair, &fx, &split.test)?);
    }
    let monotone = maps.windows(2).all(|w| w[1] <= w[0]);
    Ok(check(monotone && maps[0] >= 0.95, format!("MAP at sigma 0.01/0.05/0.1 = {maps:?}")))
}

fn proc_b_advantage() -> Result<Outcome> {
    let fx = fixture(500, 0.05)?;
    let split = frequency_split(&fx.lexicon, &[10], 100)?;
    let seed = &split.train[0];
    let proc = align_proc(&build_aligned_matrices(seed, &fx.src, &fx.tgt)?)?;
    let cfg = ProcBConfig {
        iterations: 2,
        ..Default::default()
    };
    let boot = align_proc_b(&fx.src, &fx.tgt, seed, &cfg)?;
    let (a, b) = (held_out_map(&proc, &fx, &split.test)?, held_out_map(&boot, &fx, &split.test)?);
    let size = boot.metadata.dictionary_size;
    Ok(check(
        b >= a && size > seed.len(),
        format!("Proc {a:.4}, Proc-B {b:.4}, dictionary {} -> {size}", seed.len()),
    ))
}

fn csls_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let queries = normalize_rows(&gaussian_cloud(50, 8, 1.0, &mut rng));
    let cands = normalize_rows(&gaussian_cloud(50, 8, 1.0, &mut rng));
    let cos = queries.dot(&cands.t());
    let mut worst: f64 = 0.0;
    let mut argmax_ok = true;
    for n in [1, 5, 10] {
        // definition: mean cosine to the n nearest neighbors on the other side
        let top_mean = |vals: Vec<f64>| {
            let mut v = vals;
            v.sort_by(|a, b| b.total_cmp(a));
            v[..n].iter().sum::<f64>() / n as f64
        };
        let r_query: Vec<f64> = (0..50).map(|i| top_mean(cos.row(i).to_vec())).collect();
        let r_cand: Vec<f64> = (0..50).map(|j| top_mean(cos.column(j).to_vec())).collect();
        let lib_r_cand = mean_neighbor_similarity(cands.view(), queries.view(), n);
        let lib_r_query = mean_neighbor_similarity(queries.view(), cands.view(), n);
        let mut brute = Array2::zeros((50, 50));
        for i in 0..50 {
            let scores = csls_scores(queries.row(i), cands.view(), lib_r_query[i], lib_r_cand.view())?;
            for j in 0..50 {
                brute[[i, j]] = 2.0 * cos[[i, j]] - r_query[i] - r_cand[j];
                worst = worst.max((scores[j] - brute[[i, j]]).abs());
            }
        }
        let nn = nearest_neighbors(queries.view(), cands.view(), Metric::Csls { neighbors: n });
        for (i, &j) in nn.iter().enumerate() {
            let best = brute.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            argmax_ok &= (brute[[i, j]] - best).abs() < 1e-12;
        }
    }
    Ok(check(
        worst < 1e-12 && argmax_ok,
        format!("max |lib - brute force| = {worst:.1e} over N in {{1,5,10}}, CSLS argmax agrees={argmax_ok}"),
    ))
}

fn map_equals_mrr() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<QueryRecord> = (0..200)
        .map(|i| {
            let rank = rng.random_range(1..=60);
            QueryRecord {
                source: format!("w{i}"),
                golds: vec!["g".into()],
                best_rank: rank,
                average_precision: average_precision(&[rank]),
            }
        })
        .collect();
    let result = BliResult::from_records(records, 0)?;
    let gap = (result.map - result.mean_reciprocal_rank()).abs();
    let hand = BliResult::from_records(
        [1, 2, 4]
            .iter()
            .map(|&r| QueryRecord {
                source: format!("q{r}"),
                golds: vec!["g".into()],
                best_rank: r,
                average_precision: average_precision(&[r]),
            })
            .collect(),
        0,
    )?;
    let hand_gap = (hand.map - 7.0 / 12.0).abs();
    Ok(check(
        gap < 1e-12 && hand_gap < 1e-12,
        format!("|MAP - MRR| = {gap:.1e} on 200 queries; ranks 1,2,4 -> {:.6}", hand.map),
    ))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn exact_gw_assignment(xs: &Array2<f64>, xt: &Array2<f64>) -> Vec<usize> {
    let (a, b) = (normalize_rows(xs), normalize_rows(xt));
    let (c1, c2) = (a.dot(&a.t()), b.dot(&b.t()));
    let n = xs.nrows();
    let loss = |p: &[usize]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            for k in 0..n {
                total += (c1[[i, k]] - c2[[p[i], p[k]]]).powi(2);
            }
        }
        total
    };
    permutations(n)
        .into_iter()
        .min_by(|p, q| loss(p).total_cmp(&loss(q)))
        .expect("at least one permutation")
}

/// Fraction of micro instances (caps 3..=6, seeds 100..106) whose coupling argmax equals
/// the exact assignment. The target is a permuted, rotated and possibly noisy copy.
fn gwa_agreement(noise: f64) -> Result<(usize, usize)> {
    let mut matched = 0;
    let mut cases = 0;
    for cap in 3..=6 {
        for seed in 100..106 {
            let fx = rotated_pair(&SyntheticConfig {
                words: cap,
                dim: 4,
                noise,
                seed,
                ..Default::default()
            })?;
            let (tgt, _) = permuted_copy(&fx.tgt, seed + 1000)?;
            let cfg = GwaConfig {
                cap,
                ..Default::default()
            };
            let (_, plan) = align_gwa(&fx.src, &tgt, &cfg)?;
            let exact = exact_gw_assignment(fx.src.matrix(), tgt.matrix());
            cases += 1;
            matched += (plan.row_argmax() == exact) as usize;
        }
    }
    Ok((matched, cases))
}

fn gwa_micro() -> Result<Outcome> {
    let started = Instant::now();
    let (matched, cases) = gwa_agreement(0.0)?;
    // reported only: with noise the exact optimum can be a near tie the entropic plan misses
    let (noisy, noisy_cases) = gwa_agreement(0.1)?;
    let fx = fixture(20, 0.0)?;
    let (_, plan) = align_gwa(
        &fx.src,
        &fx.src,
        &GwaConfig {
            cap: 20,
            ..Default::default()
        },
    )?;
    let identity = plan.row_argmax() == (0..20).collect::<Vec<_>>();
    let secs = started.elapsed().as_secs_f64();
    Ok(check(
        matched == cases && identity && secs < 30.0,
        format!(
            "exact GW matched {matched}/{cases} (noisy, ungated: {noisy}/{noisy_cases}), cap-20 identity={identity}, {secs:.2}s"
        ),
    ))
}

fn icp_recovery() -> Result<Outcome> {
    let fx = fixture(300, 0.0)?;
    let test = TranslationLexicon::from_pairs(fx.lexicon.pairs()[200..].iter().cloned());
    let cfg = IcpConfig {
        pca_dim: 10,
        restarts: 20,
        seed: 2024,
        ..Default::default()
    };
    let pair = align_icp(&fx.src, &fx.tgt, &cfg)?;
    let map = held_out_map(&pair, &fx, &test)?;

    let exact_cfg = IcpConfig {
        pca_dim: 10,
        lambda_cyc: 0.0,
        ..Default::default()
    };
    let x = gaussian_cloud(300, 10, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let y = gaussian_cloud(300, 10, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut monotone = true;
    for _ in 0..10 {
        let init = crossling::numerics::random_orthogonal(10, &mut rng);
        let trace = icp_restart(&x, &y, &init, &exact_cfg);
        monotone &= trace.losses.windows(2).all(|w| w[1] <= w[0]);
    }
    Ok(check(
        map >= 0.8 && monotone,
        format!("held-out MAP {map:.4} (20 restarts); lambda_cyc=0 losses nonincreasing={monotone}"),
    ))
}

fn vecmap_pipeline() -> Result<Outcome> {
    let fx = fixture(500, 0.0)?;
    let (perm_src, perm) = permuted_copy(&fx.src, 17)?;
    let seed = vecmap_seed(&fx.src, &perm_src, 4000)?;
    // source word i must map to the row holding word i in the permuted copy
    let exact = seed.len() == perm.len() && seed.pairs().iter().all(|(s, t)| s == t);

    let noisy = fixture(500, 0.05)?;
    let init = vecmap_seed(&noisy.src, &noisy.tgt, 4000)?;
    let cfg = SelfLearnConfig {
        seed: 42,
        ..Default::default()
    };
    let (pair, trace) = self_learn(&noisy.src, &noisy.tgt, &init, &cfg)?;
    let test = TranslationLexicon::from_pairs(noisy.lexicon.pairs()[400..].iter().cloned());
    let map = held_out_map(&pair, &noisy, &test)?;
    Ok(check(
        exact && map >= 0.9,
        format!(
            "permutation recovered={exact}; self-learning MAP {map:.4} after {} rounds",
            trace.sizes.len()
        ),
    ))
}

fn rcsls_checks() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = gaussian_cloud(8, 5, 1.0, &mut rng);
    let y = gaussian_cloud(8, 5, 1.0, &mut rng);
    let full_src = gaussian_cloud(40, 5, 1.0, &mut rng);
    let full_tgt = gaussian_cloud(40, 5, 1.0, &mut rng);
    let w = Array2::from_shape_simple_fn((5, 5), || rng.sample::<f64, _>(StandardNormal));
    let problem = RcslsProblem::new(x, y, full_src, full_tgt, 2)?;
    let sets = problem.neighbor_sets(&w);
    let g = problem.gradient(&w, &sets);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let mut plus = w.clone();
            plus[[i, j]] += h;
            let mut minus = w.clone();
            minus[[i, j]] -= h;
            let fd = (problem.objective(&plus, &sets) - problem.objective(&minus, &sets)) / (2.0 * h);
            worst = worst.max((fd - g[[i, j]]).abs() / fd.abs().max(g[[i, j]].abs()).max(1e-8));
        }
    }

    let fx = fixture(500, 0.0)?;
    let split = frequency_split(&fx.lexicon, &[400], 100)?;
    let aligned = build_aligned_matrices(&split.train[0], &fx.src, &fx.tgt)?;
    let mut lowest: f64 = 1.0;
    for epochs in 1..=10 {
        let cfg = RcslsConfig {
            epochs,
            ..Default::default()
        };
        let pair = align_rcsls(&aligned, fx.src.matrix(), fx.tgt.matrix(), &cfg)?;
        lowest = lowest.min(held_out_map(&pair, &fx, &split.test)?);
    }
    Ok(check(
        worst < 1e-4 && lowest >= 0.99,
        format!("max relative gradient error {worst:.1e}; lowest MAP over epochs 1..10 = {lowest:.4}"),
    ))
}

fn stats_calibration() -> Result<Outcome> {
    let trials = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut t_rejects, mut s_rejects) = (0, 0);
    for trial in 0..trials {
        let a: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        t_rejects += (paired_ttest(&a, &b)? < 0.05) as usize;
        s_rejects += (shuffling_test(&a, &b, 500, trial as u64)? < 0.05) as usize;
    }
    let (t_rate, s_rate) = (t_rejects as f64 / trials as f64, s_rejects as f64 / trials as f64);
    let bonf = bonferroni(0.05, 5)?;
    let same = [0.2, 0.4, 0.9, 0.1];
    let identical = paired_ttest(&same, &same)? == 1.0 && shuffling_test(&same, &same, 1000, 0)? == 1.0;
    let calibrated = (t_rate - 0.05).abs() <= 0.015 && (s_rate - 0.05).abs() <= 0.015;
    Ok(check(
        calibrated && bonf == 0.01 && identical,
        format!("null rejection t-test {t_rate:.4}, shuffle {s_rate:.4} ({trials} trials); bonferroni(0.05,5) = {bonf}; identical p = 1: {identical}"),
    ))
}

fn hand_scored_map(
    docs: &[(String, Vec<String>)],
    queries: &[(String, Vec<String>)],
    qrels: &[(String, String)],
    space: &WordVectorSpace,
) -> f64 {
    let mean = |tokens: &[String]| -> Array1<f64> {
        let rows: Vec<_> = tokens.iter().filter_map(|t| space.vector(t)).collect();
        let mut v = Array1::zeros(space.dim());
        for r in &rows {
            v += r;
        }
        v / rows.len() as f64
    };
    let cosine = |a: &Array1<f64>, b: &Array1<f64>| a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt());
    let mut aps = Vec::new();
    for (qid, qt) in queries {
        let q = mean(qt);
        let mut scored: Vec<(f64, &str)> = docs.iter().map(|(d, t)| (cosine(&q, &mean(t)), d.as_str())).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let mut hits = 0;
        let mut precision_sum = 0.0;
        for (k, (_, d)) in scored.iter().enumerate() {
            if qrels.iter().any(|(q, r)| q == qid && r == d) {
                hits += 1;
                precision_sum += hits as f64 / (k + 1) as f64;
            }
        }
        aps.push(precision_sum / hits as f64);
    }
    aps.iter().sum::<f64>() / aps.len() as f64
}

fn clir_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let words: Vec<String> = ["apple", "banana", "cherry", "grape", "lemon", "mango", "olive", "peach"]
        .map(String::from)
        .to_vec();
    let space = WordVectorSpace::new(words.clone(), gaussian_cloud(8, 6, 1.0, &mut rng), "fruit")?;
    let text = |i: usize| -> String {
        (0..4).map(|k| words[(i * 3 + k * 5) % 8].as_str()).collect::<Vec<_>>().join(", ")
    };
    let docs: Vec<(String, Vec<String>)> = (0..5).map(|i| (format!("d{i}"), tokenize(&text(i)))).collect();
    let queries = vec![
        ("q1".to_string(), tokenize("Apple; banana!")),
        ("q2".to_string(), tokenize("the OLIVE and a peach")),
    ];
    let qrels: Vec<(String, String)> = [("q1", "d0"), ("q1", "d3"), ("q2", "d2"), ("q2", "d4")]
        .map(|(q, d)| (q.to_string(), d.to_string()))
        .to_vec();
    let expected = hand_scored_map(&docs, &queries, &qrels, &space);
    let collection = DocumentCollection::new(docs, queries, qrels)?;
    let run = clir_run(&collection, &ProjectionPair::identity(6), &space, &space, WeightingScheme::Uniform)?;
    let gap = (run.map - expected).abs();

    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("run.trec");
    write_trec_run(&run, "acceptance", &path)?;
    let parsed = read_trec_run(std::io::BufReader::new(std::fs::File::open(&path).expect("run file")), "run")?;
    let round_trip = parsed == run_lines(&run, "acceptance");
    Ok(check(
        gap < 1e-12 && round_trip,
        format!("MAP {:.6} vs hand-scored {expected:.6}; TREC run round-trips={round_trip}", run.map),
    ))
}

fn full_scale() -> Result<Outcome> {
    if std::env::var("CROSSLING_FULL_SCALE").as_deref() != Ok("1") {
        return Ok(Outcome::Skip("set CROSSLING_FULL_SCALE=1 and the data paths to run".into()));
    }
    let var = |k: &str| std::env::var(k).map_err(|_| crossling::Error::Config(format!("{k} is not set")));
    let chain = crossling::embedding::PreprocessChain::parse("unit,center,unit")?;
    let src = crossling::embedding::normalize(&load_text_embeddings(var("CROSSLING_SRC_VEC")?.as_ref(), Some(200_000))?, &chain)?;
    let tgt = crossling::embedding::normalize(&load_text_embeddings(var("CROSSLING_TGT_VEC")?.as_ref(), Some(200_000))?, &chain)?;
    let train = load_lexicon(var("CROSSLING_TRAIN_DICT")?.as_ref())?;
    let test = load_lexicon(var("CROSSLING_TEST_DICT")?.as_ref())?;
    let started = Instant::now();
    let pair = align_proc(&build_aligned_matrices(&train, &src, &tgt)?)?;
    let map = bli_evaluate(&pair, &src, &tgt, &test, Metric::Cosine)?.map;
    Ok(check(
        (0.3..=0.7).contains(&map),
        format!("test MAP {map:.4} on {} x {} words ({:.1}s)", src.len(), tgt.len(), started.elapsed().as_secs_f64()),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 12] = [
        ("rotation recovery", rotation_recovery),
        ("noise ladder", noise_ladder),
        ("Proc-B advantage", proc_b_advantage),
        ("CSLS oracle", csls_oracle),
        ("MAP equals MRR", map_equals_mrr),
        ("GWA micro scale", gwa_micro),
        ("ICP recovery", icp_recovery),
        ("VecMap pipeline", vecmap_pipeline),
        ("RCSLS gradient", rcsls_checks),
        ("statistics calibration", stats_calibration),
        ("CLIR oracle", clir_oracle),
        ("full-scale smoke", full_scale),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.to_lowercase().contains(&f.to_lowercase())) {
            continue;
        }
        let (status, detail) = match run() {
            Ok(Outcome::Pass(d)) => ("PASS", d),
            Ok(Outcome::Skip(d)) => ("SKIP", d),
            Ok(Outcome::Fail(d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        failed += (status == "FAIL") as usize;
        println!("criterion {:>2} {status} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
