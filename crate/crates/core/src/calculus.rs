//! Duals, sections, quotients, ℓ_p-sums, annihilators and the isometric
//! identifications between them.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::distance::opnorm::op_norm_pairs;
use crate::error::{Error, Result};
use crate::linalg;
use crate::space::{Exponent, Mat, NormExpr, NormedSpace, DEFAULT_TOL_RANK};
use crate::witness::Witness;

pub fn dual_space(x: &NormedSpace) -> NormedSpace {
    x.dual()
}

/// `(ℝᵏ, ‖u·‖_X)` for an injective `u` with `X.dim` rows.
pub fn section(x: &NormedSpace, u: &Mat) -> Result<NormedSpace> {
    if u.nrows() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: u.nrows(),
        });
    }
    if !linalg::is_injective(&u.to_dmatrix(), DEFAULT_TOL_RANK) {
        return Err(Error::NotInjective);
    }
    if u.ncols() == 0 {
        return Ok(NormedSpace::zero());
    }
    NormedSpace::new(
        format!("sec({})", x.name()),
        NormExpr::Section {
            parent: Arc::new(x.expr().clone()),
            map: u.clone(),
        },
    )
}

/// `(ℝᵏ, inf{‖x‖ : q x = ·})` for a surjective `q` with `X.dim` columns.
pub fn quotient(x: &NormedSpace, q: &Mat) -> Result<NormedSpace> {
    if q.ncols() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: q.ncols(),
        });
    }
    if !linalg::is_surjective(&q.to_dmatrix(), DEFAULT_TOL_RANK) {
        return Err(Error::NotSurjective);
    }
    if q.nrows() == 0 {
        return Ok(NormedSpace::zero());
    }
    NormedSpace::new(
        format!("quo({})", x.name()),
        NormExpr::Quotient {
            parent: Arc::new(x.expr().clone()),
            map: q.clone(),
        },
    )
}

pub fn section_f64(x: &NormedSpace, u: &DMatrix<f64>) -> Result<NormedSpace> {
    section(x, &Mat::from_dmatrix(u))
}

pub fn quotient_f64(x: &NormedSpace, q: &DMatrix<f64>) -> Result<NormedSpace> {
    quotient(x, &Mat::from_dmatrix(q))
}

pub fn lp_sum(p: Exponent, spaces: &[NormedSpace]) -> Result<NormedSpace> {
    if !p.is_valid() {
        return Err(Error::InvalidP(p.0));
    }
    if spaces.is_empty() {
        return Err(Error::Precondition("an l_p-sum needs at least one part".into()));
    }
    let name = spaces.iter().map(NormedSpace::name).collect::<Vec<_>>().join(&format!("+{p}"));
    NormedSpace::new(
        format!("({name})"),
        NormExpr::LpSum {
            p,
            parts: spaces.iter().map(|s| Arc::new(s.expr().clone())).collect(),
        },
    )
}

/// `A⊥ ⊂ B*` as a section of the dual along an orthonormal basis of `ker a_mapᵀ`.
pub fn annihilator(b: &NormedSpace, a_map: &DMatrix<f64>) -> Result<NormedSpace> {
    let (_, space) = annihilator_with_basis(b, a_map)?;
    Ok(space)
}

fn annihilator_with_basis(b: &NormedSpace, a_map: &DMatrix<f64>) -> Result<(DMatrix<f64>, NormedSpace)> {
    check_embedding(b, a_map)?;
    let k = linalg::kernel(&a_map.transpose(), DEFAULT_TOL_RANK);
    let space = if k.ncols() == 0 {
        NormedSpace::zero()
    } else {
        section_f64(&b.dual(), &k)?.renamed(format!("ann({})", b.name()))
    };
    Ok((k, space))
}

fn check_embedding(b: &NormedSpace, map: &DMatrix<f64>) -> Result<()> {
    if map.nrows() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: map.nrows(),
        });
    }
    if !linalg::is_injective(map, DEFAULT_TOL_RANK) {
        return Err(Error::NotInjective);
    }
    Ok(())
}

/// `A* ≅ B*/A⊥`: the identity of `ℝᵏ` from the dual of the section to the
/// quotient of `B*` by the restriction map `a_mapᵀ`.
pub fn subspace_dual_witness(b: &NormedSpace, a_map: &DMatrix<f64>) -> Result<Witness> {
    check_embedding(b, a_map)?;
    let a = section_f64(b, a_map)?;
    let target = quotient_f64(&b.dual(), &a_map.transpose())?;
    Witness::measure(DMatrix::identity(a.dim(), a.dim()), &a.dual(), &target)
}

/// `(B/E)* ↪ B*` with image `E⊥`: the map `f ↦ f∘q` written in the
/// annihilator's basis, `q` a cokernel map of `e_map`.
pub fn quotient_dual_witness(b: &NormedSpace, e_map: &DMatrix<f64>) -> Result<Witness> {
    let (k, ann) = annihilator_with_basis(b, e_map)?;
    let q = linalg::cokernel_map(e_map, DEFAULT_TOL_RANK);
    let quo = quotient_f64(b, &q)?;
    let map = k.transpose() * q.transpose();
    Witness::measure(map, &quo.dual(), &ann)
}

/// The evaluation map `X → X**`.
pub fn bidual_witness(x: &NormedSpace) -> Result<Witness> {
    let n = x.dim();
    Witness::measure(DMatrix::identity(n, n), x, &x.dual().dual())
}

/// Restriction `E* → W*` and the induced map `E*/W⊥ → W*`.
#[derive(Clone, Debug)]
pub struct Restriction {
    /// `f ↦ f∘w_map`, that is `w_mapᵀ`.
    pub map: DMatrix<f64>,
    pub op_norm: f64,
    pub op_certified: bool,
    /// From `E*/W⊥` (coordinates of an orthonormal cokernel of the
    /// annihilator basis) to `W*`.
    pub induced: Witness,
}

pub fn restriction_surjection(e: &NormedSpace, w_map: &DMatrix<f64>) -> Result<Restriction> {
    let (k, _) = annihilator_with_basis(e, w_map)?;
    let w = section_f64(e, w_map)?;
    let map = w_map.transpose();
    let r = op_norm_pairs(&map, &e.dual(), &w.dual());
    let c = linalg::cokernel_map(&k, DEFAULT_TOL_RANK);
    let quo = quotient_f64(&e.dual(), &c)?;
    let induced = Witness::measure(&map * c.transpose(), &quo, &w.dual())?;
    Ok(Restriction {
        map,
        op_norm: r.value,
        op_certified: r.certified,
        induced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn duals_of_classical_spaces() {
        assert!(dual_space(&NormedSpace::l1(2)).tree_eq(&NormedSpace::linf(2)));
        assert!(dual_space(&NormedSpace::linf(3)).tree_eq(&NormedSpace::l1(3)));
    }

    #[test]
    fn sections_and_quotients_of_the_plane() {
        let diag = section_f64(&NormedSpace::linf(2), &col(&[1.0, 1.0])).unwrap();
        assert!((diag.norm(&DVector::from_element(1, -3.0)) - 3.0).abs() < 1e-12);
        let q = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let y = DVector::from_element(1, 1.0);
        assert!((quotient_f64(&NormedSpace::l1(2), &q).unwrap().norm(&y) - 1.0).abs() < 1e-12);
        assert!((quotient_f64(&NormedSpace::linf(2), &q).unwrap().norm(&y) - 0.5).abs() < 1e-12);
        assert!(matches!(section_f64(&NormedSpace::l1(2), &DMatrix::zeros(2, 1)), Err(Error::NotInjective)));
        assert!(matches!(quotient_f64(&NormedSpace::l1(2), &DMatrix::zeros(1, 2)), Err(Error::NotSurjective)));
    }

    #[test]
    fn sums_of_lines() {
        let s = lp_sum(Exponent::TWO, &[NormedSpace::euclidean(1), NormedSpace::euclidean(1)]).unwrap();
        assert!((s.norm(&DVector::from_vec(vec![3.0, 4.0])) - 5.0).abs() < 1e-12);
        assert!(matches!(lp_sum(Exponent(0.5), &[NormedSpace::l1(1)]), Err(Error::InvalidP(_))));
    }

    #[test]
    fn annihilator_edge_cases() {
        let b = NormedSpace::l1(2);
        let ann = annihilator(&b, &col(&[1.0, 0.0])).unwrap();
        assert_eq!(ann.dim(), 1);
        assert!((ann.norm(&DVector::from_element(1, 1.0)) - 1.0).abs() < 1e-12);
        assert_eq!(annihilator(&b, &DMatrix::identity(2, 2)).unwrap().dim(), 0);
        assert_eq!(annihilator(&b, &DMatrix::zeros(2, 0)).unwrap().dim(), 2);
    }

    #[test]
    fn theorem_one_witnesses_on_small_cases() {
        let b = NormedSpace::l1(2);
        let w = subspace_dual_witness(&b, &col(&[1.0, 0.0])).unwrap();
        assert!((w.distortion - 1.0).abs() < 1e-9);
        let w = quotient_dual_witness(&b, &col(&[1.0, -1.0])).unwrap();
        assert!((w.distortion - 1.0).abs() < 1e-9);
        let w = quotient_dual_witness(&b, &DMatrix::zeros(2, 0)).unwrap();
        assert!((w.distortion - 1.0).abs() < 1e-9);
        let w = bidual_witness(&crate::space::random_space(3, 6, 4)).unwrap();
        assert!(w.distortion <= 1.0 + 1e-9);
    }

    #[test]
    fn restriction_to_a_coordinate_line() {
        let r = restriction_surjection(&NormedSpace::l1(2), &col(&[1.0, 0.0])).unwrap();
        assert!((r.op_norm - 1.0).abs() < 1e-12);
        assert!((r.induced.distortion - 1.0).abs() < 1e-12);
        let r = restriction_surjection(&NormedSpace::l1(2), &DMatrix::identity(2, 2)).unwrap();
        assert!((r.induced.distortion - 1.0).abs() < 1e-12);
    }
}
