//! Operator norms, Banach–Mazur estimates, embedding distortion and the
//! finite bifinite-representability check.

mod bifinite;
pub mod opnorm;
pub mod optimize;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

pub use bifinite::{bifinite_check, BifiniteReport};
pub use opnorm::{NormPair, OpNorm};
pub use optimize::{MapFamily, SlpOptions};

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::space::io::f64_to_value;
use crate::space::NormedSpace;
use crate::witness::Witness;

/// `‖T‖` as a map from `x` to `y`.
pub fn op_norm(t: &DMatrix<f64>, x: &NormedSpace, y: &NormedSpace) -> Result<OpNorm> {
    if t.ncols() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: t.ncols(),
        });
    }
    if t.nrows() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: y.dim(),
            found: t.nrows(),
        });
    }
    Ok(opnorm::op_norm_pairs(t, x, y))
}

/// Result of a distance or distortion estimate.
#[derive(Clone, Debug)]
pub struct EstimateReport {
    /// `∞` when no injective map exists.
    pub value: f64,
    pub witness: Option<Witness>,
    pub certified: bool,
    pub restarts_used: usize,
    pub seed: u64,
    /// `false` when some local search hit its iteration cap.
    pub converged: bool,
}

impl EstimateReport {
    fn infinite(seed: u64) -> Self {
        Self {
            value: f64::INFINITY,
            witness: None,
            certified: true,
            restarts_used: 0,
            seed,
            converged: true,
        }
    }

    fn from_witness(w: Witness, restarts_used: usize, seed: u64, converged: bool) -> Self {
        Self {
            value: w.distortion,
            certified: w.certified,
            witness: Some(w),
            restarts_used,
            seed,
            converged,
        }
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("value".into(), f64_to_value(self.value));
        obj.insert("certified".into(), Value::Bool(self.certified));
        obj.insert("restarts_used".into(), self.restarts_used.into());
        obj.insert("seed".into(), self.seed.into());
        obj.insert("converged".into(), Value::Bool(self.converged));
        obj.insert(
            "witness".into(),
            self.witness.as_ref().map_or(Value::Null, Witness::to_json_value),
        );
        Value::Object(obj)
    }
}

/// Second-moment matrix of boundary points, a rough ellipsoidal shape of the ball.
fn shape_matrix(x: &NormedSpace) -> DMatrix<f64> {
    let n = x.dim();
    if let Some(q) = x.quad() {
        return q.inv_gram.clone();
    }
    let pts = match x.vertex_reps() {
        Some(v) => v,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(linalg::mix_seed(0x5a4e, n as u64));
            let mut dirs: Vec<DVector<f64>> = (0..n)
                .map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }))
                .collect();
            for _ in 0..3 * n {
                dirs.push(linalg::random_unit(n, &mut rng));
            }
            dirs.iter().map(|g| x.support(g).1).collect()
        }
    };
    let mut s = DMatrix::zeros(n, n);
    for p in &pts {
        s += p * p.transpose();
    }
    s /= pts.len().max(1) as f64;
    let ridge = 1e-9 * s.trace().max(1e-300);
    s + DMatrix::identity(n, n) * ridge
}

fn sym_pow(s: &DMatrix<f64>, e: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(1e-300).powf(e)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Identity-like start, then shape-normalized random frames, one RNG stream
/// per restart.
fn starts(a: &NormedSpace, y: &NormedSpace, cfg: &ToleranceConfig, warm: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let (m, k) = (y.dim(), a.dim());
    let mut out: Vec<DMatrix<f64>> = warm
        .iter()
        .filter(|w| w.shape() == (m, k))
        .cloned()
        .collect();
    out.push(DMatrix::identity(m, k));
    let left = sym_pow(&shape_matrix(y), 0.5);
    let right = sym_pow(&shape_matrix(a), -0.5);
    out.push(&left * DMatrix::identity(m, k) * &right);
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(linalg::mix_seed(cfg.seed, r as u64));
        let f = linalg::random_frame(m, k, &mut rng);
        out.push(&left * f * &right);
    }
    out
}

fn canonical_key(x: &NormedSpace) -> String {
    serde_json::to_string(&crate::space::io::expr_to_value(x.canonical())).expect("json value serializes")
}

/// Upper estimate of the Banach–Mazur distance `d(X, Y)`.
///
/// `warm` maps (from `x` to `y`) are refined alongside the seeded starts, so
/// the result is never worse than any supplied map.
pub fn bm_distance_upper(x: &NormedSpace, y: &NormedSpace, cfg: &ToleranceConfig, warm: &[DMatrix<f64>]) -> Result<EstimateReport> {
    if x.dim() != y.dim() {
        return Ok(EstimateReport::infinite(cfg.seed));
    }
    let n = x.dim();
    if n <= 1 || x.tree_eq(y) {
        let map = if n == 1 {
            DMatrix::from_element(1, 1, x.norm(&DVector::from_element(1, 1.0)) / y.norm(&DVector::from_element(1, 1.0)))
        } else {
            DMatrix::identity(n, n)
        };
        return Ok(EstimateReport::from_witness(Witness::measure(map, x, y)?, 0, cfg.seed, true));
    }
    if let (Some(qx), Some(qy)) = (x.quad(), y.quad()) {
        let uy_inv = qy.upper.clone().try_inverse().ok_or(Error::NotInjective)?;
        let w = Witness::measure(uy_inv * &qx.upper, x, y)?;
        return Ok(EstimateReport::from_witness(w, 0, cfg.seed, true));
    }
    if canonical_key(x) > canonical_key(y) {
        let warm_inv: Vec<DMatrix<f64>> = warm.iter().filter_map(|w| w.clone().try_inverse()).collect();
        let r = search(y, x, cfg, &warm_inv)?;
        let w = r.witness.as_ref().expect("search returns a witness").inverse()?;
        return Ok(EstimateReport::from_witness(w, r.restarts_used, cfg.seed, r.converged));
    }
    search(x, y, cfg, warm)
}

/// Whether the search finds an isomorphism of distortion at most `bound`.
/// All starts stop at the first success.
pub fn within_distance(x: &NormedSpace, y: &NormedSpace, bound: f64, cfg: &ToleranceConfig) -> bool {
    if x.dim() != y.dim() {
        return false;
    }
    if x.dim() <= 1 || x.tree_eq(y) || (x.quad().is_some() && y.quad().is_some()) {
        return bm_distance_upper(x, y, cfg, &[]).is_ok_and(|r| r.value <= bound);
    }
    let (a, y) = if canonical_key(x) > canonical_key(y) { (y, x) } else { (x, y) };
    let opts = SlpOptions {
        target: bound,
        ..SlpOptions::default()
    };
    let fam = MapFamily::full(y.dim(), a.dim());
    let st = starts(a, y, cfg, &[]);
    optimize::multistart(&fam, &st, a, y, opts)
        .0
        .is_some_and(|r| r.value() <= bound)
}

fn search(a: &NormedSpace, y: &NormedSpace, cfg: &ToleranceConfig, warm: &[DMatrix<f64>]) -> Result<EstimateReport> {
    let fam = MapFamily::full(y.dim(), a.dim());
    let st = starts(a, y, cfg, warm);
    let (best, used) = optimize::multistart(&fam, &st, a, y, SlpOptions::default());
    let best = best.ok_or_else(|| Error::Solver("no start produced an injective map".into()))?;
    let converged = best.converged;
    let w = Witness::measure(best.u, a, y)?;
    Ok(EstimateReport::from_witness(w, used, cfg.seed, converged))
}

/// Smallest distortion `‖u‖·‖u⁻¹‖` found for an embedding of `a` into `y`,
/// with the inverse taken on the range.
pub fn embed_distortion(a: &NormedSpace, y: &NormedSpace, cfg: &ToleranceConfig, warm: &[DMatrix<f64>]) -> Result<EstimateReport> {
    if a.dim() > y.dim() {
        return Ok(EstimateReport::infinite(cfg.seed));
    }
    if a.dim() == y.dim() {
        return bm_distance_upper(a, y, cfg, warm);
    }
    if let (Some(qa), Some(qy)) = (a.quad(), y.quad()) {
        let mut block = DMatrix::zeros(y.dim(), a.dim());
        block.rows_mut(0, a.dim()).copy_from(&qa.upper);
        let uy_inv = qy.upper.clone().try_inverse().ok_or(Error::NotInjective)?;
        let w = Witness::measure(uy_inv * block, a, y)?;
        return Ok(EstimateReport::from_witness(w, 0, cfg.seed, true));
    }
    if a.dim() <= 1 {
        let mut map = DMatrix::zeros(y.dim(), a.dim());
        if a.dim() == 1 {
            map[(0, 0)] = 1.0;
        }
        return Ok(EstimateReport::from_witness(Witness::measure(map, a, y)?, 0, cfg.seed, true));
    }
    search(a, y, cfg, warm)
}

/// Distortion of `u` as a map from `a` into `y`, measured without search.
pub fn distortion_of(u: &DMatrix<f64>, a: &NormedSpace, y: &NormedSpace) -> Result<f64> {
    Ok(Witness::measure(u.clone(), a, y)?.distortion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Exponent;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::with_seed(7)
    }

    #[test]
    fn distance_to_itself_is_one() {
        let x = crate::space::random_space(3, 6, 1);
        let r = bm_distance_upper(&x, &x, &cfg(), &[]).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn l1_and_linf_in_the_plane_are_isometric() {
        let r = bm_distance_upper(&NormedSpace::l1(2), &NormedSpace::linf(2), &cfg(), &[]).unwrap();
        assert!(r.value <= 1.0 + 1e-6, "{}", r.value);
        assert!(r.certified);
        let back = bm_distance_upper(&NormedSpace::linf(2), &NormedSpace::l1(2), &cfg(), &[]).unwrap();
        assert!((back.value - r.value).abs() < 2e-7);
    }

    #[test]
    fn mismatched_dimensions_are_infinitely_far() {
        let r = bm_distance_upper(&NormedSpace::l1(1), &NormedSpace::l1(2), &cfg(), &[]).unwrap();
        assert!(r.value.is_infinite() && r.witness.is_none());
    }

    #[test]
    fn embeddings_of_small_spaces() {
        let r = embed_distortion(&NormedSpace::l1(2), &NormedSpace::l1(3), &cfg(), &[]).unwrap();
        assert!(r.value < 1.0 + 1e-7);
        let r = embed_distortion(&NormedSpace::l1(2), &NormedSpace::lp(Exponent::TWO, 3), &cfg(), &[]).unwrap();
        assert!(r.value <= 2f64.sqrt() + 1e-6 && r.value > 1.41, "{}", r.value);
    }

    #[test]
    fn reports_are_deterministic() {
        let x = crate::space::random_space(3, 5, 2);
        let y = crate::space::random_space(3, 5, 3);
        let a = bm_distance_upper(&x, &y, &cfg(), &[]).unwrap();
        let b = bm_distance_upper(&x, &y, &cfg(), &[]).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
