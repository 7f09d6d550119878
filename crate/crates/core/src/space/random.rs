use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mat, NormExpr, NormedSpace};
use crate::linalg;

/// Gauge of `conv(±e_i, ±v_j)` with `k − dim` Haar-random unit vectors `v_j`.
pub fn random_space(dim: usize, k: usize, seed: u64) -> NormedSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = k.saturating_sub(dim);
    let mut m = DMatrix::zeros(dim + extra, dim);
    for i in 0..dim {
        m[(i, i)] = 1.0;
    }
    for j in 0..extra {
        let u = linalg::random_unit(dim, &mut rng);
        m.row_mut(dim + j).copy_from(&u.transpose());
    }
    NormedSpace::unchecked(format!("rand{dim}_{k}_{seed}"), NormExpr::polytope_v(Mat::from_dmatrix(&m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_included_and_seed_is_deterministic() {
        let a = random_space(2, 2, 11);
        assert_eq!(a.expr(), &NormExpr::l1(2));
        assert!(a.validate(1e-8).is_empty());
        let b = random_space(3, 8, 7);
        assert!(b.tree_eq(&random_space(3, 8, 7)));
        assert!(!b.tree_eq(&random_space(3, 8, 8)));
        assert!(b.validate(1e-8).is_empty());
    }
}
