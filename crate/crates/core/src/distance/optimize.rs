//! Local minimization of `‖u‖·‖u⁻¹‖` over an affine family of maps by
//! sequential linear programming with a trust region.
//!
//! Each iterate contributes cutting planes: pairs `(x, g)` with
//! `⟨g, u x⟩ = ‖u‖` bound the forward norm from below, and pairs `(a, h)`
//! with `⟨h, u a⟩ = ‖u a‖` model the smallest image norm on the source
//! sphere. The LP minimizes the linearized log-distortion
//! `s/‖u‖ − c·‖u⁻¹‖` subject to those rows and a box on the step.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::opnorm::{inverse_norm_pairs, op_norm_pairs, NormPair};
use crate::linalg;
use crate::lp::{LinearProgram, RowKind};
use crate::space::{NormedSpace, DEFAULT_TOL_RANK};

/// Maps `u(θ) = base + Σ θ_k dirs_k`.
#[derive(Clone, Debug)]
pub struct MapFamily {
    pub rows: usize,
    pub cols: usize,
    pub base: DMatrix<f64>,
    pub dirs: Vec<DMatrix<f64>>,
    /// Scaling an admissible map keeps it admissible.
    pub homogeneous: bool,
}

impl MapFamily {
    /// All `rows × cols` matrices.
    pub fn full(rows: usize, cols: usize) -> Self {
        let mut dirs = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let mut e = DMatrix::zeros(rows, cols);
                e[(i, j)] = 1.0;
                dirs.push(e);
            }
        }
        Self {
            rows,
            cols,
            base: DMatrix::zeros(rows, cols),
            dirs,
            homogeneous: true,
        }
    }

    /// Matrices `u` with `c · vec(u) = d`, where `vec` stacks rows.
    /// Returns `None` when the system is inconsistent.
    pub fn constrained(rows: usize, cols: usize, c: &DMatrix<f64>, d: &DVector<f64>) -> Option<Self> {
        let x0 = linalg::pinv(c) * d;
        if (c * &x0 - d).amax() > 1e-8 * (1.0 + d.amax()) {
            return None;
        }
        let ker = linalg::kernel(c, 1e-10);
        let to_mat = |v: DVector<f64>| DMatrix::from_row_slice(rows, cols, v.as_slice());
        Some(Self {
            rows,
            cols,
            base: to_mat(x0),
            dirs: ker.column_iter().map(|k| to_mat(k.into_owned())).collect(),
            homogeneous: d.amax() == 0.0,
        })
    }

    pub fn point(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut u = self.base.clone();
        for (t, d) in theta.iter().zip(&self.dirs) {
            if *t != 0.0 {
                u += d * *t;
            }
        }
        u
    }

    /// Least-squares coordinates of `u` (exact when `u` is in the family).
    pub fn coords(&self, u: &DMatrix<f64>) -> Vec<f64> {
        if self.dirs.is_empty() {
            return Vec::new();
        }
        let n = self.rows * self.cols;
        let b = DMatrix::from_fn(n, self.dirs.len(), |r, k| {
            self.dirs[k][(r / self.cols, r % self.cols)]
        });
        let diff = u - &self.base;
        let rhs = DVector::from_fn(n, |r, _| diff[(r / self.cols, r % self.cols)]);
        (linalg::pinv(&b) * rhs).iter().cloned().collect()
    }
}

/// Norms of an injective map with their supporting pairs.
///
/// For square maps `inv_pairs` support `‖u⁻¹‖` directly (`x` on the unit
/// sphere of the target, `g` in the source dual); otherwise they hold source
/// unit vectors `x` with small `‖u x‖` and norming functionals `g` of `u x`.
#[derive(Clone, Debug)]
pub struct MapEval {
    pub fwd: f64,
    pub inv: f64,
    pub certified: bool,
    pub fwd_pairs: Vec<NormPair>,
    pub inv_pairs: Vec<NormPair>,
}

impl MapEval {
    pub fn distortion(&self) -> f64 {
        self.fwd * self.inv
    }
}

pub fn evaluate(u: &DMatrix<f64>, a: &NormedSpace, y: &NormedSpace) -> Option<MapEval> {
    let (inv, inv_pairs, inv_cert) = if u.nrows() == u.ncols() {
        if !linalg::is_injective(u, DEFAULT_TOL_RANK) {
            return None;
        }
        let v = u.clone().try_inverse()?;
        let r = op_norm_pairs(&v, y, a);
        (r.value, r.pairs, r.certified)
    } else {
        let r = inverse_norm_pairs(u, a, y, DEFAULT_TOL_RANK)?;
        (r.value, r.pairs, r.certified)
    };
    let fwd = op_norm_pairs(u, a, y);
    if !(fwd.value.is_finite() && inv.is_finite() && fwd.value > 0.0) {
        return None;
    }
    Some(MapEval {
        fwd: fwd.value,
        inv,
        certified: fwd.certified && inv_cert,
        fwd_pairs: fwd.pairs,
        inv_pairs,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SlpOptions {
    pub max_iter: usize,
    /// Stop when the predicted decrease of the log-distortion falls below this.
    pub tol: f64,
    /// Stop every start once one reaches this distortion (`0` disables).
    pub target: f64,
}

impl Default for SlpOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-12,
            target: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SlpResult {
    pub u: DMatrix<f64>,
    pub eval: MapEval,
    pub converged: bool,
    pub iterations: usize,
}

impl SlpResult {
    pub fn value(&self) -> f64 {
        self.eval.distortion()
    }
}

/// Functionals on the unit sphere of `space`'s dual that attain `‖v‖`:
/// every active facet for polytopes, one norming functional otherwise.
fn active_functionals(space: &NormedSpace, v: &DVector<f64>) -> Vec<DVector<f64>> {
    if let Some(facets) = space.facet_reps() {
        let vals: Vec<f64> = facets.iter().map(|f| f.dot(v)).collect();
        let top = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut out: Vec<DVector<f64>> = facets
            .iter()
            .zip(&vals)
            .filter(|(_, x)| x.abs() >= top * (1.0 - 1e-9) && top > 0.0)
            .map(|(f, x)| if *x >= 0.0 { f.clone() } else { -f })
            .collect();
        out.truncate(8);
        if !out.is_empty() {
            return out;
        }
    }
    vec![space.norming_functional(v)]
}

const MAX_FWD_CUTS: usize = 64;
const MAX_INV_CUTS: usize = 24;

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn cap<T>(v: &mut Vec<T>, n: usize) {
    if v.len() > n {
        let drop = v.len() - n;
        v.drain(0..drop);
    }
}

/// Forward cuts `⟨g, (u + Δ) x⟩ ≤ s`, valid lower bounds of `‖u + Δ‖`.
fn add_fwd_cuts(cuts: &mut Vec<(DVector<f64>, DVector<f64>)>, pairs: &[NormPair], u: &DMatrix<f64>, y: &NormedSpace) {
    for p in pairs {
        if !finite(&p.x) {
            continue;
        }
        for g in active_functionals(y, &(u * &p.x)) {
            if finite(&g) {
                cuts.push((p.x.clone(), g));
            }
        }
    }
    cap(cuts, MAX_FWD_CUTS);
}

/// Runs the trust-region SLP from `theta`.
///
/// Square maps use the exact max-model of `‖u⁻¹‖` through
/// `(u + Δ)⁻¹ ≈ V − V Δ V`; embeddings model the smallest image norm with
/// barycentric norming functionals at the current iterate.
pub fn slp(
    fam: &MapFamily,
    theta: Vec<f64>,
    a: &NormedSpace,
    y: &NormedSpace,
    opts: SlpOptions,
) -> Option<SlpResult> {
    slp_until(fam, theta, a, y, opts, &AtomicBool::new(false))
}

fn slp_until(
    fam: &MapFamily,
    theta: Vec<f64>,
    a: &NormedSpace,
    y: &NormedSpace,
    opts: SlpOptions,
    stop: &AtomicBool,
) -> Option<SlpResult> {
    let square = fam.rows == fam.cols;
    let mut theta = theta;
    let mut u = fam.point(&theta);
    let mut cur = evaluate(&u, a, y)?;
    if fam.dirs.is_empty() {
        return Some(SlpResult {
            u,
            eval: cur,
            converged: true,
            iterations: 0,
        });
    }
    if fam.homogeneous {
        let s = 1.0 / cur.fwd;
        theta.iter_mut().for_each(|t| *t *= s);
        u = fam.point(&theta);
        cur = evaluate(&u, a, y)?;
    }
    let scale = |u: &DMatrix<f64>| u.amax().max(1e-12);
    let mut rho = 0.25 * scale(&u);
    let mut fwd_cuts: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    // Square: (w, φ) with ⟨φ, V w⟩ ≈ ‖V‖; embedding: (a, ·) source points.
    let mut inv_cuts: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    let add_inv = |cuts: &mut Vec<(DVector<f64>, DVector<f64>)>, ev: &MapEval, u: &DMatrix<f64>| {
        for p in &ev.inv_pairs {
            if !finite(&p.x) {
                continue;
            }
            if square {
                if let Some(v) = u.clone().try_inverse() {
                    for g in active_functionals(a, &(&v * &p.x)) {
                        cuts.push((p.x.clone(), g));
                    }
                }
            } else {
                cuts.push((p.x.clone(), p.g.clone()));
            }
        }
        cap(cuts, MAX_INV_CUTS);
    };
    add_fwd_cuts(&mut fwd_cuts, &cur.fwd_pairs, &u, y);
    add_inv(&mut inv_cuts, &cur, &u);
    let nd = fam.dirs.len();
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        if cur.distortion() <= opts.target {
            stop.store(true, Ordering::Relaxed);
        }
        if stop.load(Ordering::Relaxed) {
            break;
        }
        it += 1;
        let n = cur.fwd;
        let m = cur.inv;
        let mut lp = LinearProgram::<f64>::new();
        let dv: Vec<usize> = (0..nd).map(|_| lp.add_var(false)).collect();
        let sv = lp.add_var(false);
        let tv = lp.add_var(false);
        lp.set_objective(sv, 1.0 / n);
        for (x, g) in &fwd_cuts {
            let base = g.dot(&(&u * x));
            let mut row: Vec<(usize, f64)> = dv
                .iter()
                .zip(&fam.dirs)
                .map(|(&v, d)| (v, g.dot(&(d * x))))
                .collect();
            row.push((sv, -1.0));
            lp.add_row(row, RowKind::Le, -base);
        }
        if square {
            let v = match u.clone().try_inverse() {
                Some(v) => v,
                None => break,
            };
            lp.set_objective(tv, 1.0 / m);
            for (w, phi) in &inv_cuts {
                let vw = &v * w;
                let phiv = v.transpose() * phi;
                let base = phi.dot(&vw);
                let mut row: Vec<(usize, f64)> = dv
                    .iter()
                    .zip(&fam.dirs)
                    .map(|(&var, d)| (var, -phiv.dot(&(d * &vw))))
                    .collect();
                row.push((tv, -1.0));
                lp.add_row(row, RowKind::Le, -base);
            }
        } else {
            lp.set_objective(tv, -m);
            for (x, g) in inv_cuts.iter_mut() {
                *g = y.central_norming_functional(&(&u * &*x));
                let base = g.dot(&(&u * &*x));
                let mut row: Vec<(usize, f64)> = dv
                    .iter()
                    .zip(&fam.dirs)
                    .map(|(&var, d)| (var, -g.dot(&(d * &*x))))
                    .collect();
                row.push((tv, 1.0));
                lp.add_row(row, RowKind::Le, base);
            }
        }
        for &v in &dv {
            lp.add_row(vec![(v, 1.0)], RowKind::Le, rho);
            lp.add_row(vec![(v, 1.0)], RowKind::Ge, -rho);
        }
        let sol = match lp.solve() {
            Ok(s) => s,
            Err(_) => break,
        };
        let pred = if square { 2.0 - sol.objective } else { -sol.objective };
        if !(pred > opts.tol) {
            converged = true;
            break;
        }
        let step: Vec<f64> = dv.iter().map(|&v| sol.x[v]).collect();
        let trial_theta: Vec<f64> = theta.iter().zip(&step).map(|(t, d)| t + d).collect();
        let trial_u = fam.point(&trial_theta);
        let trial = evaluate(&trial_u, a, y);
        let step_len = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match trial {
            Some(t) => {
                add_fwd_cuts(&mut fwd_cuts, &t.fwd_pairs, &trial_u, y);
                add_inv(&mut inv_cuts, &t, &trial_u);
                let actual = (cur.distortion() / t.distortion()).ln();
                let ratio = actual / pred;
                if actual > 0.0 && ratio > 0.05 {
                    theta = trial_theta;
                    u = trial_u;
                    cur = t;
                    if ratio > 0.75 && step_len >= 0.99 * rho {
                        rho *= 2.0;
                    } else if ratio < 0.25 {
                        rho *= 0.5;
                    }
                    if fam.homogeneous {
                        let s = 1.0 / cur.fwd;
                        theta.iter_mut().for_each(|t| *t *= s);
                        u = fam.point(&theta);
                        rho *= s;
                        cur = evaluate(&u, a, y)?;
                    }
                } else {
                    rho = 0.5 * step_len.min(rho);
                }
            }
            None => rho = 0.5 * step_len.min(rho),
        }
        if rho < 1e-13 * scale(&u) {
            converged = true;
            break;
        }
    }
    Some(SlpResult {
        u,
        eval: cur,
        converged,
        iterations: it,
    })
}

/// Refines every start and returns the best result (ties keep the earliest
/// start), plus how many starts produced an injective map. With a positive
/// `opts.target` all starts stop once one reaches it, so only the fact that
/// the target was reached is reproducible, not the returned map.
pub fn multistart(
    fam: &MapFamily,
    starts: &[DMatrix<f64>],
    a: &NormedSpace,
    y: &NormedSpace,
    opts: SlpOptions,
) -> (Option<SlpResult>, usize) {
    let stop = AtomicBool::new(false);
    let results: Vec<Option<SlpResult>> = starts
        .par_iter()
        .map(|s| slp_until(fam, fam.coords(s), a, y, opts, &stop))
        .collect();
    let used = results.iter().filter(|r| r.is_some()).count();
    let mut best: Option<SlpResult> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.value() < b.value()) {
            best = Some(r);
        }
    }
    (best, used)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_the_l1_linf_isometry_from_a_rotation() {
        let x = NormedSpace::l1(2);
        let y = NormedSpace::linf(2);
        let fam = MapFamily::full(2, 2);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let start = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let r = slp(&fam, fam.coords(&start), &x, &y, SlpOptions::default()).unwrap();
        assert!(r.value() < 1.0 + 1e-9, "{}", r.value());
        assert!(r.eval.certified);
    }

    #[test]
    fn constrained_family_keeps_constraint() {
        // u e1 = e1 in a 2x2 family.
        let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let d = DVector::from_column_slice(&[1.0, 0.0]);
        let fam = MapFamily::constrained(2, 2, &c, &d).unwrap();
        assert_eq!(fam.dirs.len(), 2);
        assert!(!fam.homogeneous);
        let u = fam.point(&[0.3, -2.0]);
        assert!((u[(0, 0)] - 1.0).abs() < 1e-12 && u[(1, 0)].abs() < 1e-12);
        let e = NormedSpace::euclidean(2);
        let r = slp(&fam, vec![0.7, 3.0], &e, &e, SlpOptions::default()).unwrap();
        assert!(r.value() < 1.0 + 1e-7, "{}", r.value());
        assert!((r.u[(0, 0)] - 1.0).abs() < 1e-9);
    }
}
