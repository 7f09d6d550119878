//! Amalgamation pushouts `W = (B₁ ⊕_p B₂)/H`, coamalgamation by duality and
//! distortion scans over `p`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calculus;
use crate::config::ToleranceConfig;
use crate::distance::opnorm::op_norm_pairs;
use crate::error::{Error, Result};
use crate::linalg;
use crate::report::fmt_f64;
use crate::space::{random_space, Exponent, NormedSpace, DEFAULT_TOL_RANK};
use crate::witness::Witness;

/// How far an injective map is from an isometric embedding:
/// `max(‖j‖, 1) · max(‖j⁻¹‖, 1)`, which is 1 exactly for isometries.
pub fn isometric_deviation(w: &Witness) -> f64 {
    w.norm_fwd.max(1.0) * w.norm_bwd.max(1.0)
}

#[derive(Clone, Debug)]
pub struct PushoutResult {
    pub w: NormedSpace,
    /// `B₁ ⊕_p B₂`.
    pub c: NormedSpace,
    /// `[i₁; −i₂]`, whose range is `H`.
    pub h: DMatrix<f64>,
    /// Cokernel map `C → W` with orthonormal rows.
    pub q: DMatrix<f64>,
    pub j1: Witness,
    pub j2: Witness,
    pub dist_j1: f64,
    pub dist_j2: f64,
    /// `sup_{‖a‖ ≤ 1} ‖j₁ i₁ a − j₂ i₂ a‖_W`.
    pub commutation_residual: f64,
    pub p: Exponent,
}

impl PushoutResult {
    pub fn certified(&self) -> bool {
        self.j1.certified && self.j2.certified
    }
}

fn check_map(map: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if map.ncols() != cols {
        return Err(Error::DimensionMismatch {
            expected: cols,
            found: map.ncols(),
        });
    }
    if map.nrows() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: map.nrows(),
        });
    }
    Ok(())
}

pub fn pushout(
    a: &NormedSpace,
    b1: &NormedSpace,
    b2: &NormedSpace,
    i1: &DMatrix<f64>,
    i2: &DMatrix<f64>,
    p: Exponent,
) -> Result<PushoutResult> {
    if !p.is_valid() {
        return Err(Error::InvalidP(p.0));
    }
    check_map(i1, b1.dim(), a.dim())?;
    check_map(i2, b2.dim(), a.dim())?;
    if !linalg::is_injective(i1, DEFAULT_TOL_RANK) || !linalg::is_injective(i2, DEFAULT_TOL_RANK) {
        return Err(Error::NotInjective);
    }
    let (n1, n2) = (b1.dim(), b2.dim());
    let c = calculus::lp_sum(p, &[b1.clone(), b2.clone()])?;
    let mut h = DMatrix::zeros(n1 + n2, a.dim());
    h.rows_mut(0, n1).copy_from(i1);
    h.rows_mut(n1, n2).copy_from(&(-i2));
    let q = linalg::cokernel_map(&h, DEFAULT_TOL_RANK);
    let w = calculus::quotient_f64(&c, &q)?.renamed(format!("W({},{};{p})", b1.name(), b2.name()));
    let j1m = q.columns(0, n1).into_owned();
    let j2m = q.columns(n1, n2).into_owned();
    let defect = &j1m * i1 - &j2m * i2;
    let commutation_residual = op_norm_pairs(&defect, a, &w).value;
    let j1 = Witness::measure(j1m, b1, &w)?;
    let j2 = Witness::measure(j2m, b2, &w)?;
    Ok(PushoutResult {
        dist_j1: isometric_deviation(&j1),
        dist_j2: isometric_deviation(&j2),
        w,
        c,
        h,
        q,
        j1,
        j2,
        commutation_residual,
        p,
    })
}

#[derive(Clone, Debug)]
pub struct CoamalgamResult {
    pub f: NormedSpace,
    /// Surjections `F → B₁`, `F → B₂`.
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub norm_h1: f64,
    pub norm_h2: f64,
    /// `‖h₁ H₁ − h₂ H₂‖` from `F` to `A`.
    pub residual: f64,
    /// The pushout of the dual diagram.
    pub dual: PushoutResult,
}

/// Dualizes `h₁: B₁ → A`, `h₂: B₂ → A`, forms the pushout of the duals and
/// dualizes back: `F = W*`, `Hᵢ = jᵢᵀ`.
pub fn coamalgam(
    a: &NormedSpace,
    b1: &NormedSpace,
    b2: &NormedSpace,
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    p: Exponent,
    cfg: &ToleranceConfig,
) -> Result<CoamalgamResult> {
    check_map(h1, a.dim(), b1.dim())?;
    check_map(h2, a.dim(), b2.dim())?;
    if !linalg::is_surjective(h1, DEFAULT_TOL_RANK) || !linalg::is_surjective(h2, DEFAULT_TOL_RANK) {
        return Err(Error::NotSurjective);
    }
    for (h, b) in [(h1, b1), (h2, b2)] {
        let n = op_norm_pairs(h, b, a).value;
        if n > 1.0 + cfg.tau_opt {
            return Err(Error::Precondition(format!("surjection has norm {n} > 1")));
        }
    }
    let dual = pushout(&a.dual(), &b1.dual(), &b2.dual(), &h1.transpose(), &h2.transpose(), p)?;
    let f = dual.w.dual();
    let g1 = dual.j1.map.transpose();
    let g2 = dual.j2.map.transpose();
    let norm_h1 = op_norm_pairs(&g1, &f, b1).value;
    let norm_h2 = op_norm_pairs(&g2, &f, b2).value;
    let residual = op_norm_pairs(&(h1 * &g1 - h2 * &g2), &f, a).value;
    Ok(CoamalgamResult {
        f,
        h1: g1,
        h2: g2,
        norm_h1,
        norm_h2,
        residual,
        dual,
    })
}

/// `2^{1 − 1/p}`, the largest distortion of the pushout embeddings for
/// isometric `i₁, i₂`.
pub fn pushout_bound(p: Exponent) -> f64 {
    if p.is_inf() {
        2.0
    } else {
        2f64.powf(1.0 - 1.0 / p.0)
    }
}

#[derive(Clone, Debug)]
pub struct ScanRow {
    pub p: Exponent,
    pub trial: usize,
    pub dim_a: usize,
    pub dim_b1: usize,
    pub dim_b2: usize,
    pub dist_j1: f64,
    pub dist_j2: f64,
    pub bound: f64,
    pub residual: f64,
    pub certified: bool,
}

/// A triple with isometric embeddings: `A` is a section of a random `B₁`, and
/// `B₂ = A ⊕_r R` with `r ∈ {1, ∞}`.
pub fn random_triple(trial_seed: u64) -> Result<(NormedSpace, NormedSpace, NormedSpace, DMatrix<f64>, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let n1 = rng.gen_range(2..=3);
    let k = rng.gen_range(1..n1);
    let extra = rng.gen_range(1..=2);
    let b1 = random_space(n1, n1 + rng.gen_range(1..=3), rng.gen());
    let i1 = linalg::random_frame(n1, k, &mut rng);
    let a = calculus::section_f64(&b1, &i1)?.renamed("A");
    let r = random_space(extra, extra + rng.gen_range(0..=2), rng.gen());
    let glue = if rng.gen_bool(0.5) { Exponent::ONE } else { Exponent::INF };
    let b2 = calculus::lp_sum(glue, &[a.clone(), r])?.renamed("B2");
    let mut i2 = DMatrix::zeros(k + extra, k);
    i2.view_mut((0, 0), (k, k)).fill_with_identity();
    Ok((a, b1.renamed("B1"), b2, i1, i2))
}

fn line_triple() -> (NormedSpace, NormedSpace, NormedSpace, DMatrix<f64>, DMatrix<f64>) {
    let r = NormedSpace::euclidean(1);
    let id = DMatrix::identity(1, 1);
    (r.clone(), r.clone(), r, id.clone(), id)
}

/// Trial 0 is the 1-D triple `A = B₁ = B₂ = ℝ`; later trials are seeded
/// random triples.
pub fn amalgam_distortion_scan(p_grid: &[Exponent], trials: usize, seed: u64) -> Result<Vec<ScanRow>> {
    let jobs: Vec<(Exponent, usize)> = p_grid
        .iter()
        .flat_map(|&p| (0..trials).map(move |t| (p, t)))
        .collect();
    jobs.par_iter()
        .map(|&(p, t)| {
            let (a, b1, b2, i1, i2) = if t == 0 {
                line_triple()
            } else {
                random_triple(linalg::mix_seed(seed, t as u64))?
            };
            let r = pushout(&a, &b1, &b2, &i1, &i2, p)?;
            Ok(ScanRow {
                p,
                trial: t,
                dim_a: a.dim(),
                dim_b1: b1.dim(),
                dim_b2: b2.dim(),
                dist_j1: r.dist_j1,
                dist_j2: r.dist_j2,
                bound: pushout_bound(p),
                residual: r.commutation_residual,
                certified: r.certified(),
            })
        })
        .collect()
}

pub fn write_scan_csv<W: std::io::Write>(rows: &[ScanRow], seed: u64, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "p", "trial", "dimA", "dimB1", "dimB2", "dist_j1", "dist_j2", "bound", "certified", "seed",
    ])?;
    for r in rows {
        out.write_record([
            r.p.to_string(),
            r.trial.to_string(),
            r.dim_a.to_string(),
            r.dim_b1.to_string(),
            r.dim_b2.to_string(),
            fmt_f64(r.dist_j1),
            fmt_f64(r.dist_j2),
            fmt_f64(r.bound),
            r.certified.to_string(),
            seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn line_pushouts() {
        let (a, b1, b2, i1, i2) = line_triple();
        let r = pushout(&a, &b1, &b2, &i1, &i2, Exponent::TWO).unwrap();
        let j1_one = r.w.norm(&(&r.j1.map * DVector::from_element(1, 1.0)));
        assert!((j1_one - 0.5f64.sqrt()).abs() < 1e-7, "{j1_one}");
        assert!((r.dist_j1 - 2f64.sqrt()).abs() < 1e-6);
        assert!(r.commutation_residual <= 1e-12);
        let r = pushout(&a, &b1, &b2, &i1, &i2, Exponent::ONE).unwrap();
        assert!((r.dist_j1 - 1.0).abs() < 1e-9);
        let r = pushout(&a, &b1, &b2, &i1, &i2, Exponent::INF).unwrap();
        assert!((r.dist_j1 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn random_triples_respect_the_bound() {
        for t in 1..6 {
            let (a, b1, b2, i1, i2) = random_triple(t).unwrap();
            let r = pushout(&a, &b1, &b2, &i1, &i2, Exponent::ONE).unwrap();
            assert!(r.dist_j1 <= 1.0 + 1e-7 && r.dist_j2 <= 1.0 + 1e-7, "{t}: {} {}", r.dist_j1, r.dist_j2);
            assert!(r.commutation_residual <= 1e-12);
        }
    }

    #[test]
    fn coamalgam_of_lines() {
        let r = NormedSpace::euclidean(1);
        let id = DMatrix::identity(1, 1);
        let cfg = ToleranceConfig::default();
        let c = coamalgam(&r, &r, &r, &id, &id, Exponent::ONE, &cfg).unwrap();
        assert!((c.norm_h1 - 1.0).abs() < 1e-9 && c.residual < 1e-12);
        let c = coamalgam(&r, &r, &r, &id, &id, Exponent::TWO, &cfg).unwrap();
        assert!((c.norm_h1 - 0.5f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn scan_bound_column() {
        let rows = amalgam_distortion_scan(&[Exponent::ONE, Exponent::TWO, Exponent::INF], 1, 3).unwrap();
        let bounds: Vec<f64> = rows.iter().map(|r| r.bound).collect();
        assert_eq!(bounds[0], 1.0);
        assert!((bounds[1] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(bounds[2], 2.0);
    }
}
