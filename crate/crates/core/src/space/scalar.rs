use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// A matrix entry: a binary float or an exact rational read from a file.
///
/// Arithmetic stays exact when both operands are exact.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Float(f64),
    Exact(BigRational),
}

impl Scalar {
    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Float(x) => *x,
            Scalar::Exact(q) => q.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// Exact value of the entry; floats convert to their dyadic value.
    pub fn to_rational(&self) -> Option<BigRational> {
        match self {
            Scalar::Float(x) => BigRational::from_float(*x),
            Scalar::Exact(q) => Some(q.clone()),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Scalar::Float(x) => x.is_finite(),
            Scalar::Exact(_) => true,
        }
    }

    pub fn zero_like(exact: bool) -> Self {
        if exact {
            Scalar::Exact(BigRational::zero())
        } else {
            Scalar::Float(0.0)
        }
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a * b),
            _ => Scalar::Float(self.to_f64() * other.to_f64()),
        }
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a + b),
            _ => Scalar::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn exact_int(n: i64) -> Self {
        Scalar::Exact(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn exact_ratio(n: i64, d: i64) -> Self {
        Scalar::Exact(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Float(x) => write!(f, "{x}"),
            Scalar::Exact(q) if q.denom().is_one() => write!(f, "{}", q.numer()),
            Scalar::Exact(q) => write!(f, "{}/{}", q.numer(), q.denom()),
        }
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Float(x)
    }
}

/// Row-major matrix of [`Scalar`] entries as stored in expression trees.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<Scalar>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<Scalar>>, cols: usize) -> Self {
        let r = rows.len();
        let data: Vec<Scalar> = rows.into_iter().flatten().collect();
        Self::new(r, cols, data)
    }

    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_rows(
            rows.iter().map(|r| r.iter().map(|&x| Scalar::Float(x)).collect()).collect(),
            cols,
        )
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(Scalar::Float(m[(i, j)]));
            }
        }
        Self::new(m.nrows(), m.ncols(), data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![Scalar::Float(0.0); n * n];
        for i in 0..n {
            data[i * n + i] = Scalar::Float(1.0);
        }
        Self::new(n, n, data)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.data
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_f64())
    }

    pub fn transpose(&self) -> Mat {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        Mat::new(self.cols, self.rows, data)
    }

    /// Product that stays exact when both factors are exact.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shapes");
        let exact = self.data.iter().chain(&other.data).all(Scalar::is_exact);
        let mut data = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                if exact {
                    let mut acc = Scalar::zero_like(true);
                    for k in 0..self.cols {
                        acc = acc.add(&self.get(i, k).mul(other.get(k, j)));
                    }
                    data.push(acc);
                } else {
                    let s: f64 = (0..self.cols)
                        .map(|k| self.get(i, k).to_f64() * other.get(k, j).to_f64())
                        .sum();
                    data.push(Scalar::Float(s));
                }
            }
        }
        Mat::new(self.rows, other.cols, data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(Scalar::is_finite)
    }

    pub fn is_exact(&self) -> bool {
        self.data.iter().all(Scalar::is_exact)
    }
}
