use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::optimize::{self, MapFamily, SlpOptions};
use super::{embed_distortion, opnorm};
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::space::{Mat, NormExpr, NormedSpace};

/// Best pair `(u, v)` found for the pairing condition `⟨u x, v x′⟩ = ⟨x, x′⟩`.
/// A heuristic: a large residual never proves infeasibility.
#[derive(Clone, Debug)]
pub struct BifiniteReport {
    pub dist_u: f64,
    pub dist_v: f64,
    /// `sup |⟨u x, v x′⟩ − ⟨x, x′⟩|` over the unit balls of `A` and `A′`.
    pub residual: f64,
    pub feasible: bool,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub converged: bool,
}

fn section(x: &NormedSpace, map: &DMatrix<f64>, name: &str) -> Result<NormedSpace> {
    NormedSpace::new(
        name,
        NormExpr::Section {
            parent: Arc::new(x.expr().clone()),
            map: Mat::from_dmatrix(map),
        },
    )
}

/// `uᵀ v = p` as linear equations on the row-major entries of `v`.
fn pairing_on_v(u: &DMatrix<f64>, p: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (m, k) = u.shape();
    let k2 = p.ncols();
    let mut c = DMatrix::zeros(k * k2, m * k2);
    let mut d = DVector::zeros(k * k2);
    for i in 0..k {
        for j in 0..k2 {
            let row = i * k2 + j;
            for r in 0..m {
                c[(row, r * k2 + j)] = u[(r, i)];
            }
            d[row] = p[(i, j)];
        }
    }
    (c, d)
}

/// `uᵀ v = p` as linear equations on the row-major entries of `u`.
fn pairing_on_u(v: &DMatrix<f64>, p: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (m, k2) = v.shape();
    let k = p.nrows();
    let mut c = DMatrix::zeros(k * k2, m * k);
    let mut d = DVector::zeros(k * k2);
    for i in 0..k {
        for j in 0..k2 {
            let row = i * k2 + j;
            for r in 0..m {
                c[(row, r * k + i)] = v[(r, j)];
            }
            d[row] = p[(i, j)];
        }
    }
    (c, d)
}

/// Minimizes distortion over `fam` from the projections of `seeds`.
fn refine(
    fam: &MapFamily,
    seeds: &[DMatrix<f64>],
    src: &NormedSpace,
    dst: &NormedSpace,
) -> Option<optimize::SlpResult> {
    let starts: Vec<DMatrix<f64>> = seeds.iter().map(|s| fam.point(&fam.coords(s))).collect();
    optimize::multistart(fam, &starts, src, dst, SlpOptions::default()).0
}

/// Searches for `u: A → Y` and `v: A′ → Y*` of small distortion satisfying the
/// pairing condition exactly; `A = (a_map(ℝᵏ), ‖·‖_X)` and
/// `A′ = (a2_map(ℝᵏ′), ‖·‖_{X*})`.
pub fn bifinite_check(
    x: &NormedSpace,
    a_map: &DMatrix<f64>,
    a2_map: &DMatrix<f64>,
    y: &NormedSpace,
    eps: f64,
    cfg: &ToleranceConfig,
) -> Result<BifiniteReport> {
    if !linalg::is_injective(a_map, cfg.tau_rank) || !linalg::is_injective(a2_map, cfg.tau_rank) {
        return Err(Error::NotInjective);
    }
    let a = section(x, a_map, "A")?;
    let a2 = section(&x.dual(), a2_map, "A'")?;
    let ys = y.dual();
    let p = a_map.transpose() * a2_map;
    let eu = embed_distortion(&a, y, cfg, &[])?;
    let ev = embed_distortion(&a2, &ys, cfg, &[])?;
    let mut u = eu.witness.as_ref().map(|w| w.map.clone()).ok_or(Error::NotInjective)?;
    let v_free = ev.witness.as_ref().map(|w| w.map.clone()).ok_or(Error::NotInjective)?;
    let mut v = v_free.clone();
    let mut converged = true;
    let mut dist_u = eu.value;
    let mut dist_v = ev.value;
    for round in 0..3 {
        let (c, d) = pairing_on_v(&u, &p);
        if let Some(fam) = MapFamily::constrained(ys.dim(), a2.dim(), &c, &d) {
            let seeds = if round == 0 { vec![v_free.clone()] } else { vec![v.clone(), v_free.clone()] };
            if let Some(r) = refine(&fam, &seeds, &a2, &ys) {
                converged &= r.converged;
                v = r.u;
                dist_v = r.eval.distortion();
            }
        }
        let (c, d) = pairing_on_u(&v, &p);
        if let Some(fam) = MapFamily::constrained(y.dim(), a.dim(), &c, &d) {
            if let Some(r) = refine(&fam, &[u.clone()], &a, y) {
                converged &= r.converged;
                u = r.u;
                dist_u = r.eval.distortion();
            }
        }
    }
    let defect = u.transpose() * &v - &p;
    let residual = opnorm::op_norm_pairs(&defect, &a2, &a.dual()).value;
    Ok(BifiniteReport {
        dist_u,
        dist_v,
        residual,
        feasible: residual <= eps,
        u,
        v,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pair_in_the_same_space() {
        let x = NormedSpace::l1(2);
        let i = DMatrix::identity(2, 2);
        let r = bifinite_check(&x, &i, &i, &x, 1e-9, &ToleranceConfig::with_seed(1)).unwrap();
        assert!(r.dist_u < 1.0 + 1e-7 && r.dist_v < 1.0 + 1e-7);
        assert!(r.residual < 1e-9);
    }

    #[test]
    fn lines_in_the_euclidean_plane() {
        let x = NormedSpace::euclidean(2);
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let r = bifinite_check(&x, &e1, &e1, &x, 1e-9, &ToleranceConfig::with_seed(1)).unwrap();
        assert!(r.residual < 1e-9 && r.feasible);
    }
}
