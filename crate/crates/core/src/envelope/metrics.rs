use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::calculus;
use crate::config::ToleranceConfig;
use crate::distance::opnorm::op_norm_pairs;
use crate::distance::optimize::{self, MapFamily, SlpOptions};
use crate::distance::{bm_distance_upper, embed_distortion};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, RowKind};
use crate::space::NormedSpace;
use crate::witness::Witness;

/// Maps `u` (`rows × cols`) with `l · u · r = t`.
fn sandwich_family(rows: usize, cols: usize, l: &DMatrix<f64>, r: &DMatrix<f64>, t: &DMatrix<f64>) -> Option<MapFamily> {
    let (p, q) = t.shape();
    let mut c = DMatrix::zeros(p * q, rows * cols);
    let mut d = DVector::zeros(p * q);
    for i in 0..p {
        for k in 0..q {
            for j in 0..rows {
                for m in 0..cols {
                    c[(i * q + k, j * cols + m)] = l[(i, j)] * r[(m, k)];
                }
            }
            d[i * q + k] = t[(i, k)];
        }
    }
    MapFamily::constrained(rows, cols, &c, &d)
}

/// Smallest measured distortion over the family, refined from `seeds` and
/// `cfg.restarts` random perturbations of the first seed.
fn best_in_family(
    fam: &MapFamily,
    seeds: &[DMatrix<f64>],
    src: &NormedSpace,
    dst: &NormedSpace,
    cfg: &ToleranceConfig,
) -> Option<Witness> {
    let mut starts: Vec<DMatrix<f64>> = seeds.iter().map(|s| fam.point(&fam.coords(s))).collect();
    let base = starts.first().cloned().unwrap_or_else(|| fam.base.clone());
    let scale = base.amax().max(1.0);
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(linalg::mix_seed(cfg.seed, r as u64));
        let g = DMatrix::from_fn(fam.rows, fam.cols, |_, _| StandardNormal.sample(&mut rng));
        let s: DMatrix<f64> = &base + g * (0.5 * scale);
        starts.push(fam.point(&fam.coords(&s)));
    }
    let (best, _) = optimize::multistart(fam, &starts, src, dst, SlpOptions::default());
    let mut out = best.and_then(|b| Witness::measure(b.u, src, dst).ok());
    for s in starts.iter().take(seeds.len()) {
        if let Ok(w) = Witness::measure(s.clone(), src, dst) {
            if out.as_ref().is_none_or(|o| w.distortion < o.distortion) {
                out = Some(w);
            }
        }
    }
    out
}

/// Best distortion found for an extension `î: B → E` of `i: A → E`, where
/// `A = a_map(ℝᵏ) ⊂ B`. The search keeps `î ∘ a_map = i` exactly; for
/// `delta > 0` an unconstrained embedding of `B` also counts when it moves
/// `A` by at most `delta`.
pub fn extension_defect(
    e: &NormedSpace,
    b: &NormedSpace,
    a_map: &DMatrix<f64>,
    i: &DMatrix<f64>,
    delta: f64,
    cfg: &ToleranceConfig,
) -> Result<f64> {
    if a_map.nrows() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: a_map.nrows(),
        });
    }
    if i.shape() != (e.dim(), a_map.ncols()) {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            found: i.nrows(),
        });
    }
    if !linalg::is_injective(a_map, cfg.tau_rank) {
        return Err(Error::NotInjective);
    }
    let a = calculus::section_f64(b, a_map)?;
    let mut best = f64::INFINITY;
    if b.dim() <= e.dim() {
        let id_e = DMatrix::identity(e.dim(), e.dim());
        if let Some(fam) = sandwich_family(e.dim(), b.dim(), &id_e, a_map, i) {
            let pa = linalg::pinv(a_map);
            let mut seeds = vec![i * &pa];
            if let Ok(Some(w)) = embed_distortion(b, e, cfg, &[]).map(|r| r.witness) {
                seeds.push(&w.map + (i - &w.map * a_map) * &pa);
                if delta > 0.0 {
                    let moved = op_norm_pairs(&(&w.map * a_map - i), &a, e).value;
                    if moved <= delta {
                        best = best.min(w.distortion);
                    }
                }
            }
            if let Some(w) = best_in_family(&fam, &seeds, b, e, cfg) {
                best = best.min(w.distortion);
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::BudgetExhausted { best })
    }
}

/// `count` pairs of unit vectors of `e` from the seeded Gaussian stream.
pub fn sample_unit_pairs(e: &NormedSpace, count: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || {
        let v = linalg::random_unit(e.dim(), &mut rng);
        let n = e.norm(&v);
        v / n
    };
    (0..count).map(|_| (unit(), unit())).collect()
}

/// Reflection-and-scale map sending `a` to `b` in the Euclidean structure of
/// `e` when it has one, else in the coordinate one.
fn transport(e: &NormedSpace, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let (u, u_inv) = match e.quad() {
        Some(q) => (q.upper.clone(), q.upper.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(n, n))),
        None => (DMatrix::identity(n, n), DMatrix::identity(n, n)),
    };
    let (x, y) = (&u * a, &u * b);
    let s = y.norm() / x.norm();
    let (xu, yu) = (&x / x.norm(), &y / y.norm());
    let w = &xu - &yu;
    let h = if w.norm() < 1e-14 {
        DMatrix::identity(n, n)
    } else {
        let w = &w / w.norm();
        DMatrix::identity(n, n) - &w * w.transpose() * 2.0
    };
    u_inv * h * u * s
}

/// Largest over `pairs` of the best distortion found for an automorphism
/// `u` of `e` with `u a = b`; `1` for no pairs.
pub fn transitivity_defect(e: &NormedSpace, pairs: &[(DVector<f64>, DVector<f64>)], cfg: &ToleranceConfig) -> f64 {
    let n = e.dim();
    pairs
        .par_iter()
        .map(|(a, b)| {
            if (a - b).amax() <= cfg.tau_num * (1.0 + a.amax()) {
                return 1.0;
            }
            let id = DMatrix::identity(n, n);
            let col = |v: &DVector<f64>| DMatrix::from_column_slice(n, 1, v.as_slice());
            let Some(fam) = sandwich_family(n, n, &id, &col(a), &col(b)) else {
                return f64::INFINITY;
            };
            let shear = &id + (b - a) * a.transpose() / a.norm_squared();
            let seeds = [transport(e, a, b), shear];
            best_in_family(&fam, &seeds, e, e, cfg).map_or(f64::INFINITY, |w| w.distortion)
        })
        .reduce(|| 1.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct ProjectionConstant {
    pub value: f64,
    /// Minimizing projection `P` onto the range of `a_map`.
    pub projection: DMatrix<f64>,
    /// `true` for the vertex-facet LP.
    pub certified: bool,
}

/// `λ(A ⊂ X) = min ‖P‖` over projections onto `A = a_map(ℝᵏ)`.
pub fn projection_constant(x: &NormedSpace, a_map: &DMatrix<f64>, cfg: &ToleranceConfig) -> Result<ProjectionConstant> {
    let n = x.dim();
    if a_map.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a_map.nrows(),
        });
    }
    if a_map.ncols() == 0 {
        return Err(Error::Precondition("projection onto the zero subspace".into()));
    }
    if !linalg::is_injective(a_map, cfg.tau_rank) {
        return Err(Error::NotInjective);
    }
    let k = a_map.ncols();
    if k == n {
        return Ok(ProjectionConstant {
            value: 1.0,
            projection: DMatrix::identity(n, n),
            certified: true,
        });
    }
    if let (Some(verts), Some(facets)) = (x.vertex_reps(), x.facet_reps()) {
        if let Some(r) = projection_lp(a_map, &verts, &facets) {
            return Ok(r);
        }
    }
    Ok(projection_descent(x, a_map))
}

/// Left inverses `v` as variables; `|fᵀ a v x| ≤ t` for every facet `f` and vertex `x`.
fn projection_lp(a_map: &DMatrix<f64>, verts: &[DVector<f64>], facets: &[DVector<f64>]) -> Option<ProjectionConstant> {
    let (n, k) = a_map.shape();
    let mut lp = LinearProgram::<f64>::new();
    let v: Vec<usize> = (0..k * n).map(|_| lp.add_var(false)).collect();
    let t = lp.add_var(false);
    lp.set_objective(t, 1.0);
    for r in 0..k {
        for c in 0..k {
            let row = (0..n).map(|j| (v[r * n + j], a_map[(j, c)])).collect();
            lp.add_row(row, RowKind::Eq, if r == c { 1.0 } else { 0.0 });
        }
    }
    for f in facets {
        let fa = a_map.transpose() * f;
        for x in verts {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(k * n + 1);
            for r in 0..k {
                for j in 0..n {
                    row.push((v[r * n + j], fa[r] * x[j]));
                }
            }
            let mut lower = row.clone();
            row.push((t, -1.0));
            lp.add_row(row, RowKind::Le, 0.0);
            lower.push((t, 1.0));
            lp.add_row(lower, RowKind::Ge, 0.0);
        }
    }
    let sol = lp.solve().ok()?;
    let vm = DMatrix::from_fn(k, n, |r, j| sol.x[v[r * n + j]]);
    Some(ProjectionConstant {
        value: sol.objective.max(1.0),
        projection: a_map * vm,
        certified: true,
    })
}

/// Cutting planes with a shrinking box, started from the orthogonal projection.
fn projection_descent(x: &NormedSpace, a_map: &DMatrix<f64>) -> ProjectionConstant {
    let (n, k) = a_map.shape();
    let norm_of = |p: &DMatrix<f64>| {
        let r = op_norm_pairs(p, x, x);
        let on_range = x
            .column_norms(&(p * a_map))
            .iter()
            .zip(x.column_norms(a_map))
            .map(|(a, b)| a / b)
            .fold(0.0, f64::max);
        (r.value.max(on_range), r.pairs)
    };
    let mut v = linalg::pinv(a_map);
    let mut p = a_map * &v;
    let (mut val, pairs) = norm_of(&p);
    let mut cuts: Vec<(DVector<f64>, DVector<f64>)> = pairs.into_iter().map(|q| (q.x, q.g)).collect();
    let mut rho = v.amax().max(1.0);
    for _ in 0..80 {
        let mut lp = LinearProgram::<f64>::new();
        let dv: Vec<usize> = (0..k * n).map(|_| lp.add_var(false)).collect();
        let t = lp.add_var(false);
        lp.set_objective(t, 1.0);
        for r in 0..k {
            for c in 0..k {
                let row = (0..n).map(|j| (dv[r * n + j], a_map[(j, c)])).collect();
                lp.add_row(row, RowKind::Eq, 0.0);
            }
        }
        for (xv, g) in &cuts {
            let ga = a_map.transpose() * g;
            let base = g.dot(&(&p * xv));
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(k * n + 1);
            for r in 0..k {
                for j in 0..n {
                    row.push((dv[r * n + j], ga[r] * xv[j]));
                }
            }
            row.push((t, -1.0));
            lp.add_row(row, RowKind::Le, -base);
        }
        for &d in &dv {
            lp.add_row(vec![(d, 1.0)], RowKind::Le, rho);
            lp.add_row(vec![(d, 1.0)], RowKind::Ge, -rho);
        }
        let Ok(sol) = lp.solve() else { break };
        if val - sol.objective <= 1e-10 * val {
            break;
        }
        let trial_v = &v + DMatrix::from_fn(k, n, |r, j| sol.x[dv[r * n + j]]);
        let trial_p = a_map * &trial_v;
        let (trial_val, pairs) = norm_of(&trial_p);
        cuts.extend(pairs.into_iter().map(|q| (q.x, q.g)));
        if trial_val < val {
            v = trial_v;
            p = trial_p;
            val = trial_val;
        } else {
            rho *= 0.5;
        }
        if rho < 1e-10 {
            break;
        }
    }
    ProjectionConstant {
        value: val,
        projection: p,
        certified: false,
    }
}

/// Largest projection constant over `e` itself and `samples` sampled
/// sections of each proper dimension.
pub fn lambda_prime(e: &NormedSpace, samples: usize, seed: u64, cfg: &ToleranceConfig) -> f64 {
    let n = e.dim();
    let frames: Vec<DMatrix<f64>> = (1..n)
        .flat_map(|k| (0..samples).map(move |j| (k, j)))
        .map(|(k, j)| linalg::low_discrepancy_frame(n, k, linalg::mix_seed(seed, (k * 1000 + j) as u64)))
        .collect();
    frames
        .par_iter()
        .map(|f| projection_constant(e, f, cfg).map_or(f64::INFINITY, |r| r.value))
        .reduce(|| 1.0, f64::max)
}

/// Best distortion found for an automorphism `I` of `x` lifting an isometry
/// `i` between the quotients by `h_y` and `h_z`: `i ∘ h_y = h_z ∘ I`. When
/// `i` is not given it is searched for and must be isometric within `τ_opt`.
pub fn cohomogeneity_defect(
    x: &NormedSpace,
    h_y: &DMatrix<f64>,
    h_z: &DMatrix<f64>,
    i: Option<&DMatrix<f64>>,
    cfg: &ToleranceConfig,
) -> Result<f64> {
    let n = x.dim();
    if h_y.nrows() != h_z.nrows() {
        return Err(Error::NoIsometryBetweenQuotients(format!(
            "quotient dimensions {} and {} differ",
            h_y.nrows(),
            h_z.nrows()
        )));
    }
    let qy = calculus::quotient_f64(x, h_y)?;
    let qz = calculus::quotient_f64(x, h_z)?;
    let i = match i {
        Some(m) => {
            let w = Witness::measure(m.clone(), &qy, &qz)?;
            if w.distortion > 1.0 + cfg.tau_opt {
                return Err(Error::NoIsometryBetweenQuotients(format!("given map has distortion {}", w.distortion)));
            }
            m.clone()
        }
        None => {
            let r = bm_distance_upper(&qy, &qz, cfg, &[])?;
            match r.witness {
                Some(w) if r.value <= 1.0 + cfg.tau_opt => w.map,
                _ => {
                    return Err(Error::NoIsometryBetweenQuotients(format!(
                        "best distance found is {}",
                        r.value
                    )))
                }
            }
        }
    };
    let target = &i * h_y;
    let id = DMatrix::identity(n, n);
    let fam = sandwich_family(n, n, h_z, &id, &target)
        .ok_or_else(|| Error::NoIsometryBetweenQuotients("lifting constraint is inconsistent".into()))?;
    let pz = linalg::pinv(h_z);
    let seed = &pz * &target + (&id - &pz * h_z);
    best_in_family(&fam, &[seed], x, x, cfg)
        .map(|w| w.distortion)
        .ok_or(Error::BudgetExhausted { best: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::with_seed(3)
    }

    #[test]
    fn projections_onto_diagonals_and_axes() {
        let d = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let r = projection_constant(&NormedSpace::linf(2), &d, &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7 && r.certified);
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let r = projection_constant(&NormedSpace::l1(2), &e1, &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
        let x = NormedSpace::lp(crate::space::Exponent(3.0), 3);
        let r = projection_constant(&x, &DMatrix::identity(3, 3), &cfg()).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn plane_in_linf3_has_projection_constant_above_one() {
        // The sum-zero plane of ℓ∞³ has λ = 4/3.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 1.0, 0.0, -1.0]);
        let r = projection_constant(&NormedSpace::linf(3), &a, &cfg()).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn transitivity_of_small_spaces() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let d = transitivity_defect(&NormedSpace::linf(2), &[(a.clone(), b)], &cfg());
        assert!(d >= 1.2, "{d}");
        let d = transitivity_defect(&NormedSpace::linf(2), &[(a.clone(), a)], &cfg());
        assert_eq!(d, 1.0);
        let e = NormedSpace::euclidean(3);
        let d = transitivity_defect(&e, &sample_unit_pairs(&e, 3, 1), &cfg());
        assert!(d <= 1.0 + 1e-6, "{d}");
    }

    #[test]
    fn extensions() {
        let b = NormedSpace::l1(2);
        let i = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let d = extension_defect(&NormedSpace::l1(2), &b, &DMatrix::identity(2, 2), &i, 0.0, &cfg()).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let i = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let e = NormedSpace::euclidean(3);
        let d = extension_defect(&e, &NormedSpace::euclidean(2), &a, &i, 0.0, &cfg()).unwrap();
        assert!(d <= 1.0 + 1e-6, "{d}");
        let big = extension_defect(&NormedSpace::l1(1), &b, &a, &DMatrix::from_element(1, 1, 1.0), 0.0, &cfg());
        assert!(matches!(big, Err(Error::BudgetExhausted { .. })));
    }

    #[test]
    fn cohomogeneity_cases() {
        let x = NormedSpace::euclidean(3);
        let hy = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let d = cohomogeneity_defect(&x, &hy, &hy, Some(&DMatrix::identity(2, 2)), &cfg()).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        let hz = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let d = cohomogeneity_defect(&x, &hy, &hz, None, &cfg()).unwrap();
        assert!(d <= 1.0 + 1e-6, "{d}");
        let h1 = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        assert!(matches!(
            cohomogeneity_defect(&x, &hy, &h1, None, &cfg()),
            Err(Error::NoIsometryBetweenQuotients(_))
        ));
    }
}
