//! Entropic Gromov-Wasserstein matching of two point clouds from their internal
//! similarity structure alone.

use crossling::synthetic::{permuted_copy, rotated_pair, SyntheticConfig};
use crossling::unsupervised::{align_gwa, GwaConfig};

fn main() -> crossling::Result<()> {
    let fx = rotated_pair(&SyntheticConfig {
        words: 200,
        ..Default::default()
    })?;
    let (tgt, perm) = permuted_copy(&fx.tgt, 5)?;
    let cfg = GwaConfig {
        cap: 200,
        ..Default::default()
    };
    let (pair, plan) = align_gwa(&fx.src, &tgt, &cfg)?;

    // source row i should land on the target row holding its image
    let mut inverse = vec![0; perm.len()];
    for (k, &i) in perm.iter().enumerate() {
        inverse[i] = k;
    }
    let hits = plan.row_argmax().iter().enumerate().filter(|&(i, &j)| inverse[i] == j).count();
    println!("coupling argmax correct for {hits}/{} words", perm.len());
    println!("marginal violation {:.2e}, map orthogonal={}", plan.violation, pair.orthogonal_src);
    Ok(())
}
