//! Dense linear-algebra helpers on `nalgebra` matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Numerical rank with relative tolerance `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax.max(1.0)).count()
}

pub fn is_injective(m: &DMatrix<f64>, tol: f64) -> bool {
    rank(m, tol) == m.ncols()
}

pub fn is_surjective(m: &DMatrix<f64>, tol: f64) -> bool {
    rank(m, tol) == m.nrows()
}

/// Orthonormal basis of the column space, from QR with column pivoting.
pub fn orthonormal_range(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    let d = r.nrows().min(r.ncols());
    let r00 = r[(0, 0)].abs();
    if r00 == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let k = (0..d).filter(|&i| r[(i, i)].abs() > tol * r00.max(1.0)).count();
    let mut basis = q.columns(0, k).into_owned();
    for j in 0..k {
        fix_sign(&mut basis, j);
    }
    basis
}

/// Orthonormal completion of an orthonormal set of columns.
///
/// Repeatedly adds the standard basis vector with the largest residual, so
/// the result is deterministic and well conditioned.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    let start = cols.len();
    while cols.len() < n {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..n {
            let mut v = DVector::zeros(n);
            v[i] = 1.0;
            for _ in 0..2 {
                for c in &cols {
                    let d = c.dot(&v);
                    v -= c * d;
                }
            }
            let nv = v.norm();
            if best.as_ref().is_none_or(|(b, _)| nv > *b + 1e-12) {
                best = Some((nv, v));
            }
        }
        let (nv, v) = best.expect("n > 0");
        cols.push(v / nv);
    }
    let extra = &cols[start..];
    if extra.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(extra)
}

/// Orthonormal basis (columns) of `ker m`.
pub fn kernel(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let row_space = orthonormal_range(&m.transpose(), tol);
    orthonormal_complement(&row_space)
}

/// Surjection with orthonormal rows whose kernel is the range of `h`.
pub fn cokernel_map(h: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    orthonormal_complement(&orthonormal_range(h, tol)).transpose()
}

/// Moore–Penrose pseudo-inverse.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    m.clone()
        .pseudo_inverse(1e-13)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

fn fix_sign(m: &mut DMatrix<f64>, j: usize) {
    let col = m.column(j);
    let pivot = col
        .iter()
        .cloned()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() + 1e-12 { x } else { acc });
    if pivot < 0.0 {
        m.column_mut(j).neg_mut();
    }
}

/// Orthonormal columns spanning the same space as `m` (full column rank input).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&g)
}

/// Random `n × k` frame with orthonormal columns.
pub fn random_frame<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&g)
}

pub fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let nv = g.norm();
        if nv > 1e-8 {
            return g / nv;
        }
    }
}

const PRIMES: [u64; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Deterministic `n × k` orthonormal frame from the `index`-th Halton point
/// pushed through the Gaussian quantile function.
pub fn low_discrepancy_frame(n: usize, k: usize, index: u64) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut idx = index + 1;
    loop {
        let g = DMatrix::from_fn(n, k, |i, j| {
            let base = PRIMES[(i * k + j) % PRIMES.len()];
            let shift = ((i * k + j) / PRIMES.len()) as f64 * 0.5;
            let u = (halton(idx, base) + shift).fract().clamp(1e-9, 1.0 - 1e-9);
            normal.inverse_cdf(u)
        });
        if rank(&g, 1e-6) == k {
            return orthonormalize(&g);
        }
        idx += 7919;
    }
}

/// SplitMix64 step, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_and_cokernel() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = kernel(&m, 1e-10);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).amax() < 1e-12);
        assert!((k.transpose() * &k - DMatrix::identity(2, 2)).amax() < 1e-12);

        let h = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let q = cokernel_map(&h, 1e-10);
        assert_eq!(q.shape(), (1, 2));
        assert!((&q * &h).amax() < 1e-12);
    }

    #[test]
    fn kernel_of_empty_map_is_identity() {
        let m = DMatrix::<f64>::zeros(0, 3);
        assert_eq!(kernel(&m, 1e-10), DMatrix::identity(3, 3));
        let full = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kernel(&full, 1e-10).ncols(), 0);
    }

    #[test]
    fn frames_are_orthonormal_and_deterministic() {
        let a = low_discrepancy_frame(4, 2, 3);
        let b = low_discrepancy_frame(4, 2, 3);
        assert_eq!(a, b);
        assert!((a.transpose() * &a - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}
