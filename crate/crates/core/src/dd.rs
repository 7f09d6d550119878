//! Double description for centrally symmetric polytopes.
//!
//! A symmetric polytope `{x : |⟨aᵢ, x⟩| ≤ 1}` is homogenized to the cone
//! `{(x, s) : s ± ⟨aᵢ, x⟩ ≥ 0}` whose extreme rays are `(v, 1)` for the
//! vertices `v`. Rays are updated one constraint at a time with the
//! combinatorial adjacency test. The same routine converts V to H, since the
//! facet normals of `conv(±V)` are the vertices of `{f : |⟨v, f⟩| ≤ 1}`.

use fixedbitset::FixedBitSet;
use nalgebra::{DMatrix, DVector};

/// Largest ambient dimension the conversion accepts.
pub const MAX_DIM: usize = 6;
/// Largest number of output elements (one per antipodal pair).
pub const MAX_OUTPUT: usize = 4096;
const MAX_WORKING_RAYS: usize = 60_000;
const EPS: f64 = 1e-9;

struct Ray {
    v: DVector<f64>,
    zeros: FixedBitSet,
}

/// Vertices (one per antipodal pair) of `{x : |⟨aᵢ, x⟩| ≤ 1}`.
///
/// Returns `None` when the rows do not span, the dimension exceeds
/// [`MAX_DIM`], or the output would exceed [`MAX_OUTPUT`].
pub fn symmetric_vertices(rows: &[DVector<f64>], dim: usize) -> Option<Vec<DVector<f64>>> {
    if dim == 0 || dim > MAX_DIM {
        return None;
    }
    let base = dedup_directions(rows);
    if base.is_empty() {
        return None;
    }
    if dim == 1 {
        let c = base.iter().map(|a| a[0].abs()).fold(0.0, f64::max);
        return (c > 0.0).then(|| vec![DVector::from_element(1, 1.0 / c)]);
    }

    // Homogenized constraint rows, both signs per direction.
    let d = dim + 1;
    let mut hs: Vec<DVector<f64>> = Vec::with_capacity(2 * base.len());
    for a in &base {
        for sign in [1.0, -1.0] {
            let mut h = DVector::zeros(d);
            for i in 0..dim {
                h[i] = sign * a[i];
            }
            h[dim] = 1.0;
            let n = h.norm();
            hs.push(h / n);
        }
    }
    let m = hs.len();

    // Initial simplicial cone from d independent rows.
    let mut chosen: Vec<usize> = Vec::with_capacity(d);
    let mut basis = DMatrix::<f64>::zeros(0, d);
    for (k, h) in hs.iter().enumerate() {
        let mut trial = basis.clone().insert_row(basis.nrows(), 0.0);
        trial.set_row(trial.nrows() - 1, &h.transpose());
        if trial.rank(1e-10) == trial.nrows() {
            basis = trial;
            chosen.push(k);
            if chosen.len() == d {
                break;
            }
        }
    }
    if chosen.len() < d {
        return None;
    }
    let inv = basis.try_inverse()?;
    let mut rays: Vec<Ray> = (0..d)
        .map(|j| {
            let v = inv.column(j).into_owned();
            let mut zeros = FixedBitSet::with_capacity(m);
            for (k, &row) in chosen.iter().enumerate() {
                if k != j {
                    zeros.insert(row);
                }
            }
            let n = v.norm();
            Ray { v: v / n, zeros }
        })
        .collect();

    for (k, h) in hs.iter().enumerate() {
        if chosen.contains(&k) {
            continue;
        }
        let vals: Vec<f64> = rays.iter().map(|r| h.dot(&r.v)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] > EPS).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] < -EPS).collect();
        if neg.is_empty() {
            for (i, r) in rays.iter_mut().enumerate() {
                if vals[i].abs() <= EPS {
                    r.zeros.insert(k);
                }
            }
            continue;
        }
        let mut fresh = Vec::new();
        for &p in &pos {
            for &q in &neg {
                let mut common = rays[p].zeros.clone();
                common.intersect_with(&rays[q].zeros);
                if common.count_ones(..) + 2 < d {
                    continue;
                }
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(i, r)| i == p || i == q || !common.is_subset(&r.zeros));
                if !adjacent {
                    continue;
                }
                let v = &rays[q].v * vals[p] - &rays[p].v * vals[q];
                let n = v.norm();
                if n < 1e-14 {
                    continue;
                }
                common.insert(k);
                fresh.push(Ray { v: v / n, zeros: common });
            }
        }
        let mut next: Vec<Ray> = Vec::with_capacity(rays.len() + fresh.len());
        for (i, mut r) in rays.into_iter().enumerate() {
            if vals[i] < -EPS {
                continue;
            }
            if vals[i].abs() <= EPS {
                r.zeros.insert(k);
            }
            next.push(r);
        }
        next.extend(fresh);
        if next.len() > MAX_WORKING_RAYS {
            return None;
        }
        rays = next;
    }

    let mut out: Vec<DVector<f64>> = Vec::new();
    for r in &rays {
        let s = r.v[dim];
        if s <= EPS {
            // Unbounded direction: the rows were not full rank after all.
            return None;
        }
        let x = DVector::from_iterator(dim, (0..dim).map(|i| r.v[i] / s));
        out.push(canonical_sign(x));
    }
    let out = dedup_points(out);
    (out.len() <= MAX_OUTPUT).then_some(out)
}

/// Facet normals (one per antipodal pair) of `conv(±points)`, normalized so
/// the facet is `⟨f, x⟩ = 1`.
pub fn symmetric_facets(points: &[DVector<f64>], dim: usize) -> Option<Vec<DVector<f64>>> {
    symmetric_vertices(points, dim)
}

/// Flips the sign so the first non-negligible coordinate is positive.
pub fn canonical_sign(mut x: DVector<f64>) -> DVector<f64> {
    let scale = x.amax().max(1e-300);
    if let Some(first) = x.iter().find(|c| c.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            x.neg_mut();
        }
    }
    x
}

fn dedup_points(mut pts: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        let dup = out.iter().any(|q| (q - &p).amax() <= 1e-9 * (1.0 + p.amax()));
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Drops zero rows and keeps one row per (anti)parallel class of equal length.
fn dedup_directions(rows: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let nonzero: Vec<DVector<f64>> = rows
        .iter()
        .filter(|r| r.amax() > 1e-14)
        .map(|r| canonical_sign(r.clone()))
        .collect();
    dedup_points(nonzero)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    fn contains(set: &[DVector<f64>], p: &DVector<f64>) -> bool {
        set.iter().any(|q| (q - p).amax() < 1e-9 || (q + p).amax() < 1e-9)
    }

    #[test]
    fn cube_vertices() {
        for n in 1..=4 {
            let rows: Vec<_> = (0..n).map(|i| e(n, i)).collect();
            let v = symmetric_vertices(&rows, n).unwrap();
            assert_eq!(v.len(), 1 << (n - 1));
            assert!(v.iter().all(|x| x.iter().all(|c| (c.abs() - 1.0).abs() < 1e-12)));
        }
    }

    #[test]
    fn cross_polytope_vertices() {
        // ℓ₁³ ball = {|±x ± y ± z| ≤ 1}
        let mut rows = Vec::new();
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                rows.push(DVector::from_vec(vec![1.0, s1, s2]));
            }
        }
        let v = symmetric_vertices(&rows, 3).unwrap();
        assert_eq!(v.len(), 3);
        for i in 0..3 {
            assert!(contains(&v, &e(3, i)));
        }
    }

    #[test]
    fn facets_of_hexagon() {
        let pts = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.5, 3f64.sqrt() / 2.0]),
            DVector::from_vec(vec![-0.5, 3f64.sqrt() / 2.0]),
            DVector::from_vec(vec![0.2, 0.1]),
        ];
        let f = symmetric_facets(&pts, 2).unwrap();
        assert_eq!(f.len(), 3);
        for fac in &f {
            let best = pts.iter().map(|p| fac.dot(p).abs()).fold(0.0, f64::max);
            assert!((best - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_rows_rejected() {
        assert!(symmetric_vertices(&[e(2, 0)], 2).is_none());
        let rows: Vec<_> = (0..7).map(|i| e(7, i)).collect();
        assert!(symmetric_vertices(&rows, 7).is_none());
    }

    #[test]
    fn random_round_trip_preserves_support() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in 2..=4 {
            let pts: Vec<DVector<f64>> = (0..8)
                .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let facets = symmetric_facets(&pts, n).unwrap();
            let verts = symmetric_vertices(&facets, n).unwrap();
            // every recovered vertex is one of the inputs (up to sign)
            assert!(verts.iter().all(|v| contains(&pts, v)));
            // every input lies in the polytope
            for p in &pts {
                let g = facets.iter().map(|f| f.dot(p).abs()).fold(0.0, f64::max);
                assert!(g <= 1.0 + 1e-9);
            }
        }
    }
}
