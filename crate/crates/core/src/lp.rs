//! Dense two-phase simplex over a generic ordered field.
//!
//! The same code runs over `f64` (with pivot tolerances) and over
//! `BigRational` (exact, Bland's rule throughout). Problems are small and
//! dense: a few hundred rows at most.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Field operations plus the sign tests the pivoting rules need.
pub trait LpNum:
    Clone
    + fmt::Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Exact arithmetic: no tolerances and Bland's rule for every pivot.
    const EXACT: bool;

    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn is_negligible(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
}

const F64_EPS: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

impl LpNum for f64 {
    const EXACT: bool = false;

    fn is_pos(&self) -> bool {
        *self > F64_EPS
    }
    fn is_neg(&self) -> bool {
        *self < -F64_EPS
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl LpNum for BigRational {
    const EXACT: bool = true;

    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Row<T> {
    pub coeffs: Vec<(usize, T)>,
    pub kind: RowKind,
    pub rhs: T,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Infeasible => write!(f, "linear program is infeasible"),
            LpError::Unbounded => write!(f, "linear program is unbounded"),
            LpError::IterationLimit => write!(f, "simplex iteration limit reached"),
        }
    }
}

impl std::error::Error for LpError {}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
}

/// `minimize c·x` subject to linear rows. Variables are free unless marked
/// nonnegative.
#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    nonneg: Vec<bool>,
    objective: Vec<T>,
    rows: Vec<Row<T>>,
}

impl<T: LpNum> LinearProgram<T> {
    pub fn new() -> Self {
        Self {
            nonneg: Vec::new(),
            objective: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.nonneg.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, nonneg: bool) -> usize {
        self.nonneg.push(nonneg);
        self.objective.push(T::zero());
        self.nonneg.len() - 1
    }

    pub fn set_objective(&mut self, var: usize, coeff: T) {
        self.objective[var] = coeff;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, kind: RowKind, rhs: T) {
        debug_assert!(coeffs.iter().all(|(j, _)| *j < self.num_vars()));
        self.rows.push(Row { coeffs, kind, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution<T>, LpError> {
        Tableau::build(self).run(self)
    }
}

impl<T: LpNum> Default for LinearProgram<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Plus(usize),
    Minus(usize),
    Slack,
    Artificial,
}

struct Tableau<T> {
    // m rows, each `ncols + 1` long; the last entry is the rhs.
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
    cols: Vec<ColKind>,
}

impl<T: LpNum> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let mut cols = Vec::new();
        let mut var_cols = Vec::with_capacity(lp.num_vars());
        for (j, &nn) in lp.nonneg.iter().enumerate() {
            let plus = cols.len();
            cols.push(ColKind::Plus(j));
            let minus = if nn {
                None
            } else {
                cols.push(ColKind::Minus(j));
                Some(cols.len() - 1)
            };
            var_cols.push((plus, minus));
        }

        // Normalize rows to nonnegative rhs.
        let mut norm_rows: Vec<(Vec<(usize, T)>, RowKind, T)> = Vec::with_capacity(lp.rows.len());
        for r in &lp.rows {
            if r.rhs.is_neg() || (T::EXACT && r.rhs < T::zero()) {
                let kind = match r.kind {
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                    RowKind::Eq => RowKind::Eq,
                };
                let coeffs = r.coeffs.iter().map(|(j, c)| (*j, -c.clone())).collect();
                norm_rows.push((coeffs, kind, -r.rhs.clone()));
            } else {
                norm_rows.push((r.coeffs.clone(), r.kind, r.rhs.clone()));
            }
        }

        let m = norm_rows.len();
        let mut slack_col = vec![None; m];
        for (i, (_, kind, _)) in norm_rows.iter().enumerate() {
            if *kind != RowKind::Eq {
                slack_col[i] = Some(cols.len());
                cols.push(ColKind::Slack);
            }
        }
        let mut basis = vec![usize::MAX; m];
        let mut art_col = vec![None; m];
        for (i, (_, kind, _)) in norm_rows.iter().enumerate() {
            if *kind == RowKind::Le {
                basis[i] = slack_col[i].unwrap();
            } else {
                art_col[i] = Some(cols.len());
                cols.push(ColKind::Artificial);
            }
        }

        let ncols = cols.len();
        let mut a = vec![vec![T::zero(); ncols + 1]; m];
        for (i, (coeffs, kind, rhs)) in norm_rows.into_iter().enumerate() {
            let row = &mut a[i];
            for (j, c) in coeffs {
                let (plus, minus) = var_cols[j];
                row[plus] = row[plus].clone() + c.clone();
                if let Some(mc) = minus {
                    row[mc] = row[mc].clone() - c;
                }
            }
            if let Some(s) = slack_col[i] {
                row[s] = match kind {
                    RowKind::Le => T::one(),
                    _ => -T::one(),
                };
            }
            if let Some(ac) = art_col[i] {
                row[ac] = T::one();
                basis[i] = ac;
            }
            row[ncols] = rhs;
        }
        Self { a, basis, cols }
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let n = self.ncols() + 1;
        let p = self.a[r][c].clone();
        for k in 0..n {
            let v = self.a[r][k].clone() / p.clone();
            self.a[r][k] = v;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c].clone();
            if f.is_zero() {
                continue;
            }
            for k in 0..n {
                if !pivot_row[k].is_zero() {
                    row[k] = row[k].clone() - f.clone() * pivot_row[k].clone();
                }
            }
            row[c] = T::zero();
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[T]) -> Vec<T> {
        let n = self.ncols();
        let mut red = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b].clone();
            if cb.is_zero() {
                continue;
            }
            for (j, rj) in red.iter_mut().enumerate().take(n) {
                if !self.a[i][j].is_zero() {
                    *rj = rj.clone() - cb.clone() * self.a[i][j].clone();
                }
            }
        }
        red
    }

    /// Runs simplex iterations for `cost` over columns allowed by `allowed`.
    fn optimize(&mut self, cost: &[T], allowed: &[bool]) -> Result<(), LpError> {
        let n = self.ncols();
        let max_iter = 50 * (n + self.a.len()) + 1000;
        let mut stall = 0usize;
        let mut last_obj: Option<T> = None;
        for _ in 0..max_iter {
            let red = self.reduced_costs(cost);
            let bland = T::EXACT || stall > 30;
            let mut enter = None;
            for j in 0..n {
                if !allowed[j] || self.basis.contains(&j) || !red[j].is_neg() {
                    continue;
                }
                match enter {
                    None => {
                        enter = Some(j);
                        if bland {
                            break;
                        }
                    }
                    Some(e) => {
                        if red[j] < red[e] {
                            enter = Some(j);
                        }
                    }
                }
            }
            let Some(e) = enter else {
                return Ok(());
            };
            let leave = if T::EXACT { self.exact_ratio(e) } else { self.harris_ratio(e) };
            let Some(r) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, e);
            let obj = self.objective_value(cost);
            match &last_obj {
                Some(lo) if !(lo.clone() - obj.clone()).is_pos() => stall += 1,
                _ => stall = 0,
            }
            last_obj = Some(obj);
        }
        Err(LpError::IterationLimit)
    }

    /// Minimum-ratio row with ties broken by the smallest basic column.
    fn exact_ratio(&self, e: usize) -> Option<usize> {
        let n = self.ncols();
        let mut leave: Option<usize> = None;
        let mut best_ratio: Option<T> = None;
        for i in 0..self.a.len() {
            let aie = &self.a[i][e];
            if !aie.is_pos() {
                continue;
            }
            let ratio = self.a[i][n].clone() / aie.clone();
            let better = match &best_ratio {
                None => true,
                Some(br) => {
                    let d = ratio.clone() - br.clone();
                    if d.is_neg() {
                        true
                    } else if d.is_pos() {
                        false
                    } else {
                        self.basis[i] < self.basis[leave.unwrap()]
                    }
                }
            };
            if better {
                best_ratio = Some(ratio);
                leave = Some(i);
            }
        }
        leave
    }

    /// Two-pass ratio test: among rows whose ratio is within a feasibility
    /// tolerance of the minimum, pivot on the largest entry.
    fn harris_ratio(&self, e: usize) -> Option<usize> {
        let n = self.ncols();
        let col: Vec<f64> = self.a.iter().map(|r| r[e].to_f64()).collect();
        let rhs: Vec<f64> = self.a.iter().map(|r| r[n].to_f64().max(0.0)).collect();
        let bound = (0..col.len())
            .filter(|&i| col[i] > PIVOT_TOL)
            .map(|i| (rhs[i] + FEAS_TOL) / col[i])
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let mut leave: Option<usize> = None;
        for i in 0..col.len() {
            if col[i] > PIVOT_TOL && rhs[i] / col[i] <= bound {
                let better = match leave {
                    None => true,
                    Some(l) => col[i] > col[l] || (col[i] == col[l] && self.basis[i] < self.basis[l]),
                };
                if better {
                    leave = Some(i);
                }
            }
        }
        leave
    }

    fn objective_value(&self, cost: &[T]) -> T {
        let n = self.ncols();
        let mut v = T::zero();
        for (i, &b) in self.basis.iter().enumerate() {
            v = v + cost[b].clone() * self.a[i][n].clone();
        }
        v
    }

    fn run(mut self, lp: &LinearProgram<T>) -> Result<LpSolution<T>, LpError> {
        let n = self.ncols();
        let has_art = self.cols.contains(&ColKind::Artificial);
        if has_art {
            let cost: Vec<T> = self
                .cols
                .iter()
                .map(|c| if *c == ColKind::Artificial { T::one() } else { T::zero() })
                .collect();
            let allowed = vec![true; n];
            self.optimize(&cost, &allowed)?;
            if self.objective_value(&cost).is_pos() {
                return Err(LpError::Infeasible);
            }
            // Drive remaining artificials out of the basis, dropping redundant rows.
            let mut i = 0;
            while i < self.a.len() {
                if self.cols[self.basis[i]] == ColKind::Artificial {
                    let pick = (0..n)
                        .filter(|&j| self.cols[j] != ColKind::Artificial && !self.a[i][j].is_negligible())
                        .max_by(|&j, &k| {
                            let (x, y) = (self.a[i][j].to_f64().abs(), self.a[i][k].to_f64().abs());
                            x.total_cmp(&y).then(k.cmp(&j))
                        });
                    match pick {
                        Some(j) => {
                            self.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            self.a.remove(i);
                            self.basis.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }

        let mut cost = vec![T::zero(); n];
        for (k, c) in self.cols.iter().enumerate() {
            match c {
                ColKind::Plus(j) => cost[k] = lp.objective[*j].clone(),
                ColKind::Minus(j) => cost[k] = -lp.objective[*j].clone(),
                _ => {}
            }
        }
        let allowed: Vec<bool> = self.cols.iter().map(|c| *c != ColKind::Artificial).collect();
        self.optimize(&cost, &allowed)?;

        let mut x = vec![T::zero(); lp.num_vars()];
        for (i, &b) in self.basis.iter().enumerate() {
            let v = self.a[i][n].clone();
            match self.cols[b] {
                ColKind::Plus(j) => x[j] = x[j].clone() + v,
                ColKind::Minus(j) => x[j] = x[j].clone() - v,
                _ => {}
            }
        }
        let objective = x
            .iter()
            .zip(&lp.objective)
            .fold(T::zero(), |acc, (xi, ci)| acc + xi.clone() * ci.clone());
        Ok(LpSolution { x, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn small_max_problem() {
        // max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, x,y >= 0  -> 12 at (4,0)
        let mut lp = LinearProgram::<f64>::new();
        let x = lp.add_var(true);
        let y = lp.add_var(true);
        lp.set_objective(x, -3.0);
        lp.set_objective(y, -2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], RowKind::Le, 4.0);
        lp.add_row(vec![(x, 1.0), (y, 3.0)], RowKind::Le, 6.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 12.0).abs() < 1e-12);
        assert!((s.x[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |a| + |b| s.t. a + b = 1 via a = a, t >= ±a...
        let mut lp = LinearProgram::<f64>::new();
        let a = lp.add_var(false);
        let b = lp.add_var(false);
        let s = lp.add_var(false);
        let t = lp.add_var(false);
        lp.set_objective(s, 1.0);
        lp.set_objective(t, 1.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], RowKind::Eq, -3.0);
        lp.add_row(vec![(a, 1.0), (s, -1.0)], RowKind::Le, 0.0);
        lp.add_row(vec![(a, -1.0), (s, -1.0)], RowKind::Le, 0.0);
        lp.add_row(vec![(b, 1.0), (t, -1.0)], RowKind::Le, 0.0);
        lp.add_row(vec![(b, -1.0), (t, -1.0)], RowKind::Le, 0.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::<f64>::new();
        let x = lp.add_var(true);
        lp.add_row(vec![(x, 1.0)], RowKind::Le, -1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);

        let mut lp = LinearProgram::<f64>::new();
        let x = lp.add_var(false);
        lp.set_objective(x, 1.0);
        lp.add_row(vec![(x, 1.0)], RowKind::Le, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn exact_rational_optimum() {
        // min x + y s.t. 3x + y >= 1, x + 3y >= 1 -> 1/2 at (1/4, 1/4)
        let mut lp = LinearProgram::<BigRational>::new();
        let x = lp.add_var(true);
        let y = lp.add_var(true);
        lp.set_objective(x, q(1, 1));
        lp.set_objective(y, q(1, 1));
        lp.add_row(vec![(x, q(3, 1)), (y, q(1, 1))], RowKind::Ge, q(1, 1));
        lp.add_row(vec![(x, q(1, 1)), (y, q(3, 1))], RowKind::Ge, q(1, 1));
        let s = lp.solve().unwrap();
        assert_eq!(s.objective, q(1, 2));
        assert_eq!(s.x, vec![q(1, 4), q(1, 4)]);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::<f64>::new();
        let x = lp.add_var(true);
        let y = lp.add_var(true);
        lp.set_objective(x, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], RowKind::Eq, 2.0);
        lp.add_row(vec![(x, 2.0), (y, 2.0)], RowKind::Eq, 4.0);
        let s = lp.solve().unwrap();
        assert!(s.objective.abs() < 1e-12);
        assert!((s.x[1] - 2.0).abs() < 1e-12);
    }
}
