use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg;
use crate::space::{Compiled, NormExpr, NormedSpace, Mat};

/// `x` on the unit sphere of the source and `g` on the unit sphere of the
/// target dual with `⟨g, T x⟩ = value`.
#[derive(Clone, Debug)]
pub struct NormPair {
    pub x: DVector<f64>,
    pub g: DVector<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct OpNorm {
    pub value: f64,
    /// `true` when the value is an exact maximum over a finite vertex set
    /// (or a closed form), not a local ascent.
    pub certified: bool,
    /// Near-maximal pairs, best first.
    pub pairs: Vec<NormPair>,
}

const PAIR_WINDOW: f64 = 0.02;
const MAX_PAIRS: usize = 10;

/// Whether norm evaluation is an exact finite maximum or an LP.
pub fn exact_eval(s: &NormedSpace) -> bool {
    fn walk(c: &Compiled) -> bool {
        match c {
            Compiled::Zero | Compiled::Quadratic(_) | Compiled::Polytope(_) => true,
            Compiled::Sum { parts, .. } => parts.iter().all(walk),
            Compiled::Section { inner, .. } => walk(inner),
            Compiled::Program { expr, .. } | Compiled::Quotient { expr, .. } => expr.is_polyhedral(),
        }
    }
    walk(s.compiled())
}

/// `‖T‖` from `x` to `y` with near-active pairs.
pub fn op_norm_pairs(t: &DMatrix<f64>, x: &NormedSpace, y: &NormedSpace) -> OpNorm {
    debug_assert_eq!(t.ncols(), x.dim());
    debug_assert_eq!(t.nrows(), y.dim());
    if x.dim() == 0 || y.dim() == 0 || t.iter().all(|v| *v == 0.0) {
        return OpNorm {
            value: 0.0,
            certified: true,
            pairs: Vec::new(),
        };
    }
    if let (Some(qx), Some(qy)) = (x.quad(), y.quad()) {
        let ux_inv = qx.upper.clone().try_inverse().expect("Cholesky factor is invertible");
        let a = &qy.upper * t * &ux_inv;
        let svd = a.svd(false, true);
        let vt = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let top = svd.singular_values[order[0]];
        let pairs = order
            .iter()
            .filter(|&&i| svd.singular_values[i] >= top * (1.0 - PAIR_WINDOW))
            .take(MAX_PAIRS)
            .map(|&i| {
                let xv = &ux_inv * vt.row(i).transpose();
                finish_pair(t, x, y, xv)
            })
            .collect();
        return OpNorm {
            value: top,
            certified: true,
            pairs,
        };
    }
    if x.dim() == 1 {
        let xv = DVector::from_element(1, 1.0 / x.norm(&DVector::from_element(1, 1.0)));
        let p = finish_pair(t, x, y, xv);
        return OpNorm {
            value: p.value,
            certified: exact_eval(y),
            pairs: vec![p],
        };
    }
    let verts = x.vertex_reps();
    let facets = y.facet_reps();
    let use_vertices = match (&verts, &facets) {
        (Some(v), Some(f)) => v.len() <= f.len(),
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) if x.dim() == 2 && cheap_norm(x.compiled()) && cheap_norm(y.compiled()) => {
            return plane_scan(t, x, y)
        }
        (None, None) if y.dim() == 2 && cheap_norm(x.dual().compiled()) && cheap_norm(y.dual().compiled()) => {
            let tt = t.transpose();
            let r = plane_scan(&tt, &y.dual(), &x.dual());
            let pairs = r
                .pairs
                .iter()
                .map(|p| finish_pair(t, x, y, x.support(&(&tt * &p.x)).1))
                .collect();
            return OpNorm { pairs, ..r };
        }
        (None, None) => return ascent(t, x, y),
    };
    if use_vertices {
        let verts = verts.expect("checked");
        let vals: Vec<f64> = verts.iter().map(|v| y.norm(&(t * v))).collect();
        let pairs = top_indices(&vals)
            .into_iter()
            .map(|i| finish_pair(t, x, y, verts[i].clone()))
            .collect::<Vec<_>>();
        OpNorm {
            value: max_of(&vals),
            certified: exact_eval(y),
            pairs,
        }
    } else {
        let facets = facets.expect("checked");
        let xd = x.dual();
        let tt = t.transpose();
        let vals: Vec<f64> = facets.iter().map(|f| xd.norm(&(&tt * f))).collect();
        let pairs = top_indices(&vals)
            .into_iter()
            .map(|i| {
                let (_, xv) = x.support(&(&tt * &facets[i]));
                let value = facets[i].dot(&(t * &xv));
                NormPair {
                    x: xv,
                    g: facets[i].clone(),
                    value,
                }
            })
            .collect();
        OpNorm {
            value: max_of(&vals),
            certified: exact_eval(&xd),
            pairs,
        }
    }
}

fn max_of(vals: &[f64]) -> f64 {
    vals.iter().cloned().fold(f64::NEG_INFINITY, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

fn top_indices(vals: &[f64]) -> Vec<usize> {
    let m = max_of(vals);
    let mut idx: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] >= m * (1.0 - PAIR_WINDOW))
        .collect();
    idx.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    idx.truncate(MAX_PAIRS);
    idx
}

/// Normalizes `xv` in `x` and attaches a norming functional of `T xv`.
fn finish_pair(t: &DMatrix<f64>, x: &NormedSpace, y: &NormedSpace, xv: DVector<f64>) -> NormPair {
    let nx = x.norm(&xv);
    let xv = if nx > 0.0 { xv / nx } else { xv };
    let tx = t * &xv;
    let g = y.norming_functional(&tx);
    NormPair {
        value: y.norm(&tx),
        x: xv,
        g,
    }
}

/// Norm evaluation without a solver.
fn cheap_norm(c: &Compiled) -> bool {
    match c {
        Compiled::Zero | Compiled::Quadratic(_) | Compiled::Polytope(_) => true,
        Compiled::Sum { parts, .. } => parts.iter().all(cheap_norm),
        Compiled::Section { inner, .. } => cheap_norm(inner),
        Compiled::Quotient { .. } | Compiled::Program { .. } => false,
    }
}

const SCAN_ANGLES: usize = 720;

/// Dense angle scan over a 2-D source with golden-section refinement of the
/// best brackets; a lower bound accurate to the refinement tolerance.
fn plane_scan(t: &DMatrix<f64>, x: &NormedSpace, y: &NormedSpace) -> OpNorm {
    let dir = |th: f64| DVector::from_vec(vec![th.cos(), th.sin()]);
    let ratio = |th: f64| {
        let u = dir(th);
        y.norm(&(t * &u)) / x.norm(&u)
    };
    let h = std::f64::consts::PI / SCAN_ANGLES as f64;
    let vals: Vec<f64> = (0..SCAN_ANGLES).map(|k| ratio(k as f64 * h)).collect();
    let m = max_of(&vals);
    let mut peaks: Vec<usize> = (0..SCAN_ANGLES)
        .filter(|&k| {
            let (l, r) = (vals[(k + SCAN_ANGLES - 1) % SCAN_ANGLES], vals[(k + 1) % SCAN_ANGLES]);
            vals[k] >= l && vals[k] >= r && vals[k] >= m * (1.0 - PAIR_WINDOW)
        })
        .collect();
    peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    peaks.truncate(MAX_PAIRS);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut found: Vec<NormPair> = peaks
        .into_iter()
        .map(|k| {
            let (mut a, mut b) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
            let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
            let (mut fc, mut fd) = (ratio(c), ratio(d));
            for _ in 0..40 {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - g * (b - a);
                    fc = ratio(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + g * (b - a);
                    fd = ratio(d);
                }
            }
            let th = if fc.max(fd) >= vals[k] { if fc >= fd { c } else { d } } else { k as f64 * h };
            finish_pair(t, x, y, dir(th))
        })
        .collect();
    found.sort_by(|a, b| b.value.total_cmp(&a.value));
    let value = found.first().map_or(m, |p| p.value);
    OpNorm {
        value,
        certified: false,
        pairs: found,
    }
}

/// Alternating support-point ascent; a lower bound on `‖T‖`.
fn ascent(t: &DMatrix<f64>, x: &NormedSpace, y: &NormedSpace) -> OpNorm {
    let n = x.dim();
    let mut starts: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(linalg::mix_seed(0x0b5e_55ed, n as u64));
    for _ in 0..n.min(4) {
        starts.push(linalg::random_unit(n, &mut rng));
    }
    let tt = t.transpose();
    let mut found: Vec<NormPair> = Vec::new();
    for s in starts {
        let mut cur = finish_pair(t, x, y, s);
        for _ in 0..60 {
            if cur.value <= 0.0 || cur.g.iter().any(|v| !v.is_finite()) {
                break;
            }
            let (_, xn) = x.support(&(&tt * &cur.g));
            let next = finish_pair(t, x, y, xn);
            if !(next.value > cur.value * (1.0 + 1e-12)) {
                break;
            }
            cur = next;
        }
        found.push(cur);
    }
    found.sort_by(|a, b| b.value.total_cmp(&a.value));
    let value = found.first().map_or(0.0, |p| p.value);
    found.retain(|p| p.value >= value * (1.0 - PAIR_WINDOW));
    found.truncate(MAX_PAIRS);
    OpNorm {
        value,
        certified: false,
        pairs: found,
    }
}

/// `‖u⁻¹‖` on the range of an injective `u` from `a` into `y`.
///
/// Pairs hold `x` on the unit sphere of `a` and `g` norming `u x` in `y`,
/// ordered by increasing `‖u x‖` (`value` field), so the first pair attains
/// `‖u x‖ = 1 / ‖u⁻¹‖`.
pub fn inverse_norm_pairs(u: &DMatrix<f64>, a: &NormedSpace, y: &NormedSpace, tol_rank: f64) -> Option<OpNorm> {
    let k = a.dim();
    if k == 0 {
        return Some(OpNorm {
            value: 0.0,
            certified: true,
            pairs: Vec::new(),
        });
    }
    if !linalg::is_injective(u, tol_rank) {
        return None;
    }
    let inner = if u.nrows() == k {
        let inv = u.clone().try_inverse()?;
        let r = op_norm_pairs(&inv, y, a);
        let pairs = r
            .pairs
            .iter()
            .map(|p| (inv.clone() * &p.x, p.g.clone()))
            .collect::<Vec<_>>();
        (r.value, r.certified, pairs)
    } else {
        let sec = NormedSpace::unchecked(
            "range",
            NormExpr::Section {
                parent: std::sync::Arc::new(y.canonical().clone()),
                map: Mat::from_dmatrix(u),
            },
        );
        let r = op_norm_pairs(&DMatrix::identity(k, k), &sec, a);
        let pairs = r.pairs.iter().map(|p| (p.x.clone(), p.g.clone())).collect();
        (r.value, r.certified, pairs)
    };
    let (value, certified, raw) = inner;
    let pairs = raw
        .into_iter()
        .filter_map(|(s, _)| {
            let ns = a.norm(&s);
            if !(ns > 0.0) {
                return None;
            }
            let xv = s / ns;
            let ux = u * &xv;
            Some(NormPair {
                value: y.norm(&ux),
                g: y.norming_functional(&ux),
                x: xv,
            })
        })
        .collect();
    Some(OpNorm {
        value,
        certified,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Exponent;

    #[test]
    fn identity_norms_between_classical_spaces() {
        let i2 = DMatrix::identity(2, 2);
        let r = op_norm_pairs(&i2, &NormedSpace::l1(2), &NormedSpace::euclidean(2));
        assert!((r.value - 1.0).abs() < 1e-12 && r.certified);
        let r = op_norm_pairs(&i2, &NormedSpace::linf(2), &NormedSpace::l1(2));
        assert!((r.value - 2.0).abs() < 1e-12 && r.certified);
        let p = &r.pairs[0];
        assert!((p.g.dot(&p.x) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_closed_form() {
        let t = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 5.0]);
        let e = NormedSpace::euclidean(2);
        let r = op_norm_pairs(&t, &e, &e);
        let want = t.singular_values().max();
        assert!((r.value - want).abs() < 1e-12);
    }

    #[test]
    fn inverse_norm_of_embedding() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let r = inverse_norm_pairs(&u, &NormedSpace::l1(2), &NormedSpace::euclidean(3), 1e-8).unwrap();
        assert!((r.value - 2f64.sqrt()).abs() < 1e-9);
        let p = &r.pairs[0];
        assert!((p.value - 1.0 / 2f64.sqrt()).abs() < 1e-9);
        assert!(inverse_norm_pairs(&DMatrix::zeros(3, 2), &NormedSpace::l1(2), &NormedSpace::l1(3), 1e-8).is_none());
    }

    #[test]
    fn ascent_reaches_vertex_value_on_smooth_target() {
        let x = NormedSpace::lp(Exponent(3.0), 3);
        let y = NormedSpace::lp(Exponent(1.5), 3);
        let t = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, -0.3, 0.4, 0.0, 1.0]);
        let r = op_norm_pairs(&t, &x, &y);
        assert!(!r.certified);
        let p = &r.pairs[0];
        assert!((y.norm(&(&t * &p.x)) - r.value).abs() < 1e-9);
        assert!((x.norm(&p.x) - 1.0).abs() < 1e-9);
    }
}
