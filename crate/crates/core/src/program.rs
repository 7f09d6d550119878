//! Small convex programs over free variables: linear rows plus second-order
//! and power cones. Purely linear programs go to the dense simplex in
//! [`crate::lp`]; anything with a cone goes to Clarabel.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::lp::{LinearProgram, LpError, LpNum, RowKind};

/// An affine expression `Σ cᵢ·xᵢ + k` in program variables.
#[derive(Clone, Debug)]
pub struct Aff<T> {
    pub terms: Vec<(usize, T)>,
    pub constant: T,
}

impl<T: LpNum> Aff<T> {
    pub fn var(v: usize) -> Self {
        Self {
            terms: vec![(v, T::one())],
            constant: T::zero(),
        }
    }

    pub fn constant(k: T) -> Self {
        Self {
            terms: Vec::new(),
            constant: k,
        }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    pub fn scaled(&self, s: &T) -> Self {
        Self {
            terms: self.terms.iter().map(|(v, c)| (*v, c.clone() * s.clone())).collect(),
            constant: self.constant.clone() * s.clone(),
        }
    }

    pub fn add(&mut self, other: &Aff<T>) {
        self.terms.extend(other.terms.iter().cloned());
        self.constant = self.constant.clone() + other.constant.clone();
    }

    pub fn sub(&mut self, other: &Aff<T>) {
        self.add(&other.scaled(&(-T::one())));
    }

    /// Linear combination `Σ wᵢ·affᵢ`.
    pub fn combine(weights: &[T], affs: &[Aff<T>]) -> Self {
        let mut out = Aff::zero();
        for (w, a) in weights.iter().zip(affs) {
            if w.is_zero() {
                continue;
            }
            out.add(&a.scaled(w));
        }
        out.compact();
        out
    }

    /// Merges repeated variables.
    pub fn compact(&mut self) {
        if self.terms.len() < 2 {
            return;
        }
        self.terms.sort_by_key(|(v, _)| *v);
        let mut merged: Vec<(usize, T)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms.drain(..) {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc = lc.clone() + c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| !c.is_zero());
        self.terms = merged;
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .fold(self.constant.clone(), |acc, (v, c)| acc + c.clone() * x[*v].clone())
    }
}

#[derive(Clone, Debug)]
pub enum Cone {
    /// `‖(a₁..aₖ)‖₂ ≤ a₀`.
    SecondOrder(Vec<Aff<f64>>),
    /// `x^α·y^(1−α) ≥ |z|`, `x, y ≥ 0`.
    Power {
        x: Aff<f64>,
        y: Aff<f64>,
        z: Aff<f64>,
        alpha: f64,
    },
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum ProgramError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("conic solver stopped with status {0}")]
    Conic(String),
    #[error("program has cones but exact arithmetic was requested")]
    ConesInExactMode,
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub x: Vec<T>,
    pub objective: T,
}

/// `minimize c·x` over free variables subject to `eq = 0`, `le ≤ 0`, cones.
#[derive(Clone, Debug)]
pub struct Program<T> {
    nvars: usize,
    objective: Vec<(usize, T)>,
    eqs: Vec<Aff<T>>,
    les: Vec<Aff<T>>,
    cones: Vec<Cone>,
}

impl<T: LpNum> Default for Program<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: LpNum> Program<T> {
    pub fn new() -> Self {
        Self {
            nvars: 0,
            objective: Vec::new(),
            eqs: Vec::new(),
            les: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn has_cones(&self) -> bool {
        !self.cones.is_empty()
    }

    pub fn new_var(&mut self) -> usize {
        self.nvars += 1;
        self.nvars - 1
    }

    pub fn new_vars(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.new_var()).collect()
    }

    pub fn minimize(&mut self, terms: Vec<(usize, T)>) {
        self.objective = terms;
    }

    pub fn add_eq(&mut self, mut a: Aff<T>) {
        a.compact();
        self.eqs.push(a);
    }

    pub fn add_le(&mut self, mut a: Aff<T>) {
        a.compact();
        self.les.push(a);
    }

    /// Solves a cone-free program with the simplex method.
    pub fn solve_linear(&self) -> Result<Solution<T>, ProgramError> {
        if self.has_cones() {
            return Err(ProgramError::ConesInExactMode);
        }
        let mut lp = LinearProgram::<T>::new();
        for _ in 0..self.nvars {
            lp.add_var(false);
        }
        for (v, c) in &self.objective {
            lp.set_objective(*v, c.clone());
        }
        for e in &self.eqs {
            lp.add_row(e.terms.clone(), RowKind::Eq, -e.constant.clone());
        }
        for l in &self.les {
            lp.add_row(l.terms.clone(), RowKind::Le, -l.constant.clone());
        }
        let s = lp.solve()?;
        Ok(Solution {
            x: s.x,
            objective: s.objective,
        })
    }
}

impl Program<f64> {
    pub fn add_cone(&mut self, mut cone: Cone) {
        match &mut cone {
            Cone::SecondOrder(parts) => parts.iter_mut().for_each(Aff::compact),
            Cone::Power { x, y, z, .. } => {
                x.compact();
                y.compact();
                z.compact();
            }
        }
        self.cones.push(cone);
    }

    pub fn solve(&self) -> Result<Solution<f64>, ProgramError> {
        if self.has_cones() {
            self.solve_conic()
        } else {
            self.solve_linear()
        }
    }

    /// Interior-point solve; also usable for purely linear programs.
    pub fn solve_conic(&self) -> Result<Solution<f64>, ProgramError> {
        let n = self.nvars;
        let mut ii = Vec::new();
        let mut jj = Vec::new();
        let mut vv = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut push_row = |aff: &Aff<f64>, sign: f64, b: &mut Vec<f64>| {
            // s = b - A x; `sign = -1` gives s = -aff, `sign = 1` gives s = aff.
            let r = b.len();
            for (v, c) in &aff.terms {
                ii.push(r);
                jj.push(*v);
                vv.push(-sign * c);
            }
            b.push(sign * aff.constant);
        };
        for e in &self.eqs {
            push_row(e, -1.0, &mut b);
        }
        if !self.eqs.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.eqs.len()));
        }
        for l in &self.les {
            push_row(l, -1.0, &mut b);
        }
        if !self.les.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(self.les.len()));
        }
        for cone in &self.cones {
            match cone {
                Cone::SecondOrder(parts) => {
                    for p in parts {
                        push_row(p, 1.0, &mut b);
                    }
                    cones.push(SupportedConeT::SecondOrderConeT(parts.len()));
                }
                Cone::Power { x, y, z, alpha } => {
                    push_row(x, 1.0, &mut b);
                    push_row(y, 1.0, &mut b);
                    push_row(z, 1.0, &mut b);
                    cones.push(SupportedConeT::PowerConeT(*alpha));
                }
            }
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for (v, c) in &self.objective {
            q[*v] += c;
        }
        let settings = DefaultSettings {
            verbose: false,
            max_iter: 300,
            tol_gap_abs: 1e-11,
            tol_gap_rel: 1e-11,
            tol_feas: 1e-11,
            tol_ktratio: 1e-9,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| ProgramError::Conic(format!("{e:?}")))?;
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let x = solver.solution.x.clone();
                let objective = self.objective.iter().map(|(v, c)| c * x[*v]).sum();
                Ok(Solution { x, objective })
            }
            other => Err(ProgramError::Conic(format!("{other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_cone_distance() {
        // min t s.t. ‖(x - 3, y - 4)‖ ≤ t with x = y = 0 -> 5
        let mut p = Program::<f64>::new();
        let t = p.new_var();
        p.minimize(vec![(t, 1.0)]);
        p.add_cone(Cone::SecondOrder(vec![
            Aff::var(t),
            Aff::constant(3.0),
            Aff::constant(4.0),
        ]));
        let s = p.solve().unwrap();
        assert!((s.objective - 5.0).abs() < 1e-8);
    }

    #[test]
    fn power_cone_three_norm() {
        // ‖(1, 1)‖₃ = 2^(1/3)
        let mut p = Program::<f64>::new();
        let t = p.new_var();
        let r = p.new_vars(2);
        p.minimize(vec![(t, 1.0)]);
        for &ri in &r {
            p.add_cone(Cone::Power {
                x: Aff::var(ri),
                y: Aff::var(t),
                z: Aff::constant(1.0),
                alpha: 1.0 / 3.0,
            });
        }
        let mut sum = Aff::zero();
        for &ri in &r {
            sum.add(&Aff::var(ri));
        }
        sum.sub(&Aff::var(t));
        p.add_le(sum);
        let s = p.solve().unwrap();
        assert!((s.objective - 2f64.powf(1.0 / 3.0)).abs() < 1e-7);
    }

    #[test]
    fn linear_routes_agree() {
        let mut p = Program::<f64>::new();
        let x = p.new_var();
        let y = p.new_var();
        p.minimize(vec![(x, 1.0), (y, 2.0)]);
        let mut c1 = Aff::constant(1.0);
        c1.sub(&Aff::var(x));
        c1.sub(&Aff::var(y));
        p.add_le(c1);
        p.add_le(Aff::var(x).scaled(&-1.0));
        p.add_le(Aff::var(y).scaled(&-1.0));
        let a = p.solve_linear().unwrap();
        let b = p.solve_conic().unwrap();
        assert!((a.objective - 1.0).abs() < 1e-12);
        assert!((b.objective - 1.0).abs() < 1e-8);
    }
}
