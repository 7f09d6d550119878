//! Evaluation forms for canonical norm trees.
//!
//! Trees are flattened bottom-up where possible: Euclidean-type subtrees
//! become a Gram matrix, polyhedral subtrees become explicit facet and
//! vertex lists (double description, capped). Everything else is evaluated
//! by building a linear or conic program over the epigraph of the tree.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;

use super::expr::{Exponent, NormExpr};
use super::scalar::Scalar;
use crate::dd;
use crate::error::{Error, Result};
use crate::lp::LpNum;
use crate::program::{Aff, Cone, Program};

/// `‖x‖ = √(xᵀ G x)`.
#[derive(Clone, Debug)]
pub struct Quad {
    pub gram: DMatrix<f64>,
    /// `U` with `G = UᵀU`.
    pub upper: DMatrix<f64>,
    pub inv_gram: DMatrix<f64>,
}

impl Quad {
    pub fn from_gram(gram: DMatrix<f64>) -> Option<Quad> {
        let g = (&gram + gram.transpose()) * 0.5;
        let chol = g.clone().cholesky()?;
        let upper = chol.l().transpose();
        let inv_gram = chol.inverse();
        Some(Quad {
            gram: g,
            upper,
            inv_gram,
        })
    }

    pub fn scalar(c: f64) -> Quad {
        Quad::from_gram(DMatrix::from_element(1, 1, c * c)).expect("positive scale")
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        (&self.upper * x).norm()
    }

    pub fn dual_norm(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(&self.inv_gram * g)).max(0.0).sqrt()
    }
}

/// Irredundant facet normals and vertices, one per antipodal pair.
#[derive(Clone, Debug)]
pub struct Poly {
    pub dim: usize,
    pub facets: Vec<DVector<f64>>,
    pub vertices: Vec<DVector<f64>>,
}

impl Poly {
    pub fn from_facets(dim: usize, rows: &[DVector<f64>]) -> Option<Poly> {
        let vertices = dd::symmetric_vertices(rows, dim)?;
        let facets = dd::symmetric_facets(&vertices, dim)?;
        Some(Poly {
            dim,
            facets,
            vertices,
        })
    }

    pub fn from_vertices(dim: usize, pts: &[DVector<f64>]) -> Option<Poly> {
        let facets = dd::symmetric_facets(pts, dim)?;
        let vertices = dd::symmetric_vertices(&facets, dim)?;
        Some(Poly {
            dim,
            facets,
            vertices,
        })
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.facets.iter().map(|f| f.dot(x).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub enum Compiled {
    Zero,
    Quadratic(Quad),
    Polytope(Poly),
    /// `ℓ_p`-sum evaluated blockwise; parts keep their own forms.
    Sum { p: Exponent, parts: Vec<Compiled> },
    /// `‖M x‖_inner` for injective `M`; the support function needs a solver.
    Section { map: DMatrix<f64>, inner: Box<Compiled>, expr: Arc<NormExpr> },
    /// Image of the inner ball under surjective `M`; the norm needs a solver.
    Quotient { map: DMatrix<f64>, inner: Box<Compiled>, expr: Arc<NormExpr> },
    Program { dim: usize, expr: Arc<NormExpr> },
}

impl Compiled {
    pub fn dim(&self) -> usize {
        match self {
            Compiled::Zero => 0,
            Compiled::Quadratic(q) => q.dim(),
            Compiled::Polytope(p) => p.dim,
            Compiled::Sum { parts, .. } => parts.iter().map(Compiled::dim).sum(),
            Compiled::Section { map, .. } => map.ncols(),
            Compiled::Quotient { map, .. } => map.nrows(),
            Compiled::Program { dim, .. } => *dim,
        }
    }

    /// Facets and vertices when the ball is a polytope (including 1-D).
    pub fn polytope(&self) -> Option<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        match self {
            Compiled::Polytope(p) => Some((p.facets.clone(), p.vertices.clone())),
            Compiled::Quadratic(q) if q.dim() == 1 => {
                let c = q.gram[(0, 0)].sqrt();
                Some((
                    vec![DVector::from_element(1, c)],
                    vec![DVector::from_element(1, 1.0 / c)],
                ))
            }
            _ => None,
        }
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        match self {
            Compiled::Zero => 0.0,
            Compiled::Quadratic(q) => q.norm(x),
            Compiled::Polytope(p) => p.norm(x),
            Compiled::Sum { p, parts } => {
                let mut off = 0;
                let vals: Vec<f64> = parts
                    .iter()
                    .map(|k| {
                        let d = k.dim();
                        let v = k.norm(&x.rows(off, d).into_owned());
                        off += d;
                        v
                    })
                    .collect();
                p_combine(*p, &vals)
            }
            Compiled::Section { map, inner, .. } => inner.norm(&(map * x)),
            Compiled::Program { expr, .. } | Compiled::Quotient { expr, .. } => {
                program_norm(expr, x.as_slice()).unwrap_or(f64::NAN)
            }
        }
    }

    /// `(h(g), x)` with `h(g) = sup{⟨g, x⟩ : ‖x‖ ≤ 1}` attained at `x`.
    pub fn support(&self, g: &DVector<f64>) -> (f64, DVector<f64>) {
        self.support_with(g, false)
    }

    /// Like [`Compiled::support`], but on a polytope face returns the
    /// barycenter of the maximizing vertices instead of one of them.
    pub fn central_support(&self, g: &DVector<f64>) -> (f64, DVector<f64>) {
        self.support_with(g, true)
    }

    fn support_with(&self, g: &DVector<f64>, central: bool) -> (f64, DVector<f64>) {
        let n = g.len();
        match self {
            Compiled::Zero => (0.0, DVector::zeros(0)),
            Compiled::Quadratic(q) => {
                let y = &q.inv_gram * g;
                let v = g.dot(&y).max(0.0).sqrt();
                if v == 0.0 {
                    (0.0, DVector::zeros(n))
                } else {
                    (v, y / v)
                }
            }
            Compiled::Polytope(p) => {
                let mut best = (f64::NEG_INFINITY, DVector::zeros(n));
                for v in &p.vertices {
                    let d = g.dot(v);
                    if d.abs() > best.0 {
                        best = (d.abs(), if d >= 0.0 { v.clone() } else { -v });
                    }
                }
                if central && best.0 > 0.0 {
                    let mut sum = DVector::zeros(n);
                    let mut count = 0.0;
                    for v in &p.vertices {
                        let d = g.dot(v);
                        if d.abs() >= best.0 * (1.0 - 1e-9) {
                            sum += if d >= 0.0 { v.clone() } else { -v };
                            count += 1.0;
                        }
                    }
                    best.1 = sum / count;
                }
                best
            }
            Compiled::Sum { p, parts } => {
                let mut off = 0;
                let pieces: Vec<(f64, DVector<f64>)> = parts
                    .iter()
                    .map(|k| {
                        let d = k.dim();
                        let r = k.support_with(&g.rows(off, d).into_owned(), central);
                        off += d;
                        r
                    })
                    .collect();
                let s: Vec<f64> = pieces.iter().map(|(v, _)| *v).collect();
                let q = p.conjugate();
                let total = p_combine(q, &s);
                let weights: Vec<f64> = if total == 0.0 {
                    vec![0.0; s.len()]
                } else if q.is_inf() {
                    let best = s
                        .iter()
                        .enumerate()
                        .fold(0, |b, (i, v)| if *v > s[b] { i } else { b });
                    (0..s.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect()
                } else if q.0 == 1.0 {
                    vec![1.0; s.len()]
                } else {
                    s.iter().map(|v| (v / total).powf(q.0 - 1.0)).collect()
                };
                let mut x = DVector::zeros(n);
                let mut off = 0;
                for ((_, pt), w) in pieces.iter().zip(&weights) {
                    x.rows_mut(off, pt.len()).copy_from(&(pt * *w));
                    off += pt.len();
                }
                (total, x)
            }
            Compiled::Quotient { map, inner, .. } => {
                let (v, x) = inner.support_with(&(map.transpose() * g), central);
                (v, map * x)
            }
            Compiled::Program { expr, .. } | Compiled::Section { expr, .. } => support_program(expr, g.as_slice())
                .unwrap_or_else(|_| (f64::NAN, DVector::zeros(n))),
        }
    }
}

/// Form of the dual norm, when it can be read off without recompiling.
pub fn polar(c: &Compiled) -> Option<Compiled> {
    match c {
        Compiled::Zero => Some(Compiled::Zero),
        Compiled::Quadratic(q) => Quad::from_gram(q.inv_gram.clone()).map(Compiled::Quadratic),
        Compiled::Polytope(p) => Some(Compiled::Polytope(Poly {
            dim: p.dim,
            facets: p.vertices.clone(),
            vertices: p.facets.clone(),
        })),
        Compiled::Sum { p, parts } => Some(Compiled::Sum {
            p: p.conjugate(),
            parts: parts.iter().map(polar).collect::<Option<Vec<_>>>()?,
        }),
        Compiled::Section { map, inner, expr } => Some(Compiled::Quotient {
            map: map.transpose(),
            inner: Box::new(polar(inner)?),
            expr: Arc::new(dual_expr(expr)),
        }),
        Compiled::Quotient { map, inner, expr } => Some(Compiled::Section {
            map: map.transpose(),
            inner: Box::new(polar(inner)?),
            expr: Arc::new(dual_expr(expr)),
        }),
        Compiled::Program { .. } => None,
    }
}

fn dual_expr(expr: &Arc<NormExpr>) -> NormExpr {
    super::expr::canonicalize(&NormExpr::Dual { parent: expr.clone() })
}

/// Flattens a canonical tree.
pub fn compile(expr: &NormExpr) -> Compiled {
    let c = compile_node(expr);
    if c.dim() == 1 && matches!(c, Compiled::Program { .. } | Compiled::Section { .. } | Compiled::Quotient { .. }) {
        let v = c.norm(&DVector::from_element(1, 1.0));
        if v > 0.0 && v.is_finite() {
            return Compiled::Quadratic(Quad::scalar(v));
        }
    }
    c
}

fn program(expr: &NormExpr) -> Compiled {
    Compiled::Program {
        dim: expr.dim(),
        expr: Arc::new(expr.clone()),
    }
}

fn rows_of(m: &super::scalar::Mat) -> Vec<DVector<f64>> {
    (0..m.nrows())
        .map(|i| DVector::from_iterator(m.ncols(), m.row(i).iter().map(Scalar::to_f64)))
        .collect()
}

fn one_dim_from_facets(facets: &[DVector<f64>]) -> Compiled {
    let c = facets.iter().map(|f| f[0].abs()).fold(0.0, f64::max);
    Compiled::Quadratic(Quad::scalar(c))
}

fn compile_node(expr: &NormExpr) -> Compiled {
    if expr.dim() == 0 {
        return Compiled::Zero;
    }
    match expr {
        NormExpr::PolytopeH { dim, functionals } => {
            let rows = rows_of(functionals);
            if *dim == 1 {
                return one_dim_from_facets(&rows);
            }
            Poly::from_facets(*dim, &rows).map_or_else(|| program(expr), Compiled::Polytope)
        }
        NormExpr::PolytopeV { dim, vertices } => {
            let rows = rows_of(vertices);
            if *dim == 1 {
                let m = rows.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
                return Compiled::Quadratic(Quad::scalar(1.0 / m));
            }
            Poly::from_vertices(*dim, &rows).map_or_else(|| program(expr), Compiled::Polytope)
        }
        NormExpr::LpSum { p, parts } => {
            if parts.len() == 1 {
                return compile(&parts[0]);
            }
            let kids: Vec<Compiled> = parts.iter().map(|q| compile(q)).collect();
            let dim = expr.dim();
            let blockwise = || Compiled::Sum { p: *p, parts: kids.clone() };
            if *p == Exponent::TWO
                && kids.iter().all(|k| matches!(k, Compiled::Zero | Compiled::Quadratic(_)))
            {
                let mut g = DMatrix::zeros(dim, dim);
                let mut off = 0;
                for k in &kids {
                    if let Compiled::Quadratic(q) = k {
                        let d = q.dim();
                        g.view_mut((off, off), (d, d)).copy_from(&q.gram);
                        off += d;
                    }
                }
                return Quad::from_gram(g).map_or_else(blockwise, Compiled::Quadratic);
            }
            if p.is_polyhedral() && dim <= dd::MAX_DIM {
                let mut pieces = Vec::new();
                let mut off = 0;
                for k in &kids {
                    let d = k.dim();
                    if d > 0 {
                        match k.polytope() {
                            Some(pc) => pieces.push((off, d, pc)),
                            None => return blockwise(),
                        }
                    }
                    off += d;
                }
                let embed = |off: usize, v: &DVector<f64>| {
                    let mut w = DVector::zeros(dim);
                    w.rows_mut(off, v.len()).copy_from(v);
                    w
                };
                let poly = if p.0 == 1.0 {
                    let verts: Vec<_> = pieces
                        .iter()
                        .flat_map(|(o, _, (_, vs))| vs.iter().map(move |v| embed(*o, v)))
                        .collect();
                    Poly::from_vertices(dim, &verts)
                } else {
                    let facets: Vec<_> = pieces
                        .iter()
                        .flat_map(|(o, _, (fs, _))| fs.iter().map(move |f| embed(*o, f)))
                        .collect();
                    Poly::from_facets(dim, &facets)
                };
                return poly.map_or_else(blockwise, Compiled::Polytope);
            }
            blockwise()
        }
        NormExpr::Section { parent, map } => {
            let u = map.to_dmatrix();
            match compile(parent) {
                Compiled::Zero => Compiled::Zero,
                Compiled::Quadratic(q) => Quad::from_gram(u.transpose() * &q.gram * &u)
                    .map_or_else(|| program(expr), Compiled::Quadratic),
                c @ Compiled::Polytope(_) => {
                    let (facets, _) = c.polytope().expect("polytope");
                    let ut = u.transpose();
                    let rows: Vec<_> = facets.iter().map(|f| &ut * f).collect();
                    if u.ncols() == 1 {
                        return one_dim_from_facets(&rows);
                    }
                    Poly::from_facets(u.ncols(), &rows)
                        .map_or_else(|| program(expr), Compiled::Polytope)
                }
                Compiled::Sum { p, parts } if p.is_inf() && u.ncols() <= dd::MAX_DIM => {
                    match block_reps(&parts, false) {
                        Some(facets) => {
                            let ut = u.transpose();
                            let rows: Vec<_> = facets.iter().map(|f| &ut * f).collect();
                            if u.ncols() == 1 {
                                return one_dim_from_facets(&rows);
                            }
                            Poly::from_facets(u.ncols(), &rows).map_or_else(|| program(expr), Compiled::Polytope)
                        }
                        None => Compiled::Section {
                            map: u,
                            inner: Box::new(Compiled::Sum { p, parts }),
                            expr: Arc::new(expr.clone()),
                        },
                    }
                }
                c @ Compiled::Sum { .. } => Compiled::Section {
                    map: u,
                    inner: Box::new(c),
                    expr: Arc::new(expr.clone()),
                },
                Compiled::Section { map, inner, .. } => Compiled::Section {
                    map: map * u,
                    inner,
                    expr: Arc::new(expr.clone()),
                },
                Compiled::Quotient { .. } | Compiled::Program { .. } => program(expr),
            }
        }
        NormExpr::Quotient { parent, map } => {
            let q = map.to_dmatrix();
            match compile(parent) {
                Compiled::Zero => Compiled::Zero,
                Compiled::Quadratic(quad) => {
                    let m = &q * &quad.inv_gram * q.transpose();
                    match m.try_inverse() {
                        Some(g) => Quad::from_gram(g).map_or_else(|| program(expr), Compiled::Quadratic),
                        None => program(expr),
                    }
                }
                c @ Compiled::Polytope(_) => {
                    let (_, verts) = c.polytope().expect("polytope");
                    let pts: Vec<_> = verts.iter().map(|v| &q * v).collect();
                    if q.nrows() == 1 {
                        let m = pts.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
                        return Compiled::Quadratic(Quad::scalar(1.0 / m));
                    }
                    Poly::from_vertices(q.nrows(), &pts)
                        .map_or_else(|| program(expr), Compiled::Polytope)
                }
                Compiled::Sum { p, parts } if p.0 == 1.0 && q.nrows() <= dd::MAX_DIM => {
                    match block_reps(&parts, true) {
                        Some(verts) => {
                            let pts: Vec<_> = verts.iter().map(|v| &q * v).collect();
                            if q.nrows() == 1 {
                                let m = pts.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
                                return Compiled::Quadratic(Quad::scalar(1.0 / m));
                            }
                            Poly::from_vertices(q.nrows(), &pts).map_or_else(|| program(expr), Compiled::Polytope)
                        }
                        None => Compiled::Quotient {
                            map: q,
                            inner: Box::new(Compiled::Sum { p, parts }),
                            expr: Arc::new(expr.clone()),
                        },
                    }
                }
                c @ Compiled::Sum { .. } => Compiled::Quotient {
                    map: q,
                    inner: Box::new(c),
                    expr: Arc::new(expr.clone()),
                },
                Compiled::Quotient { map, inner, .. } => Compiled::Quotient {
                    map: q * map,
                    inner,
                    expr: Arc::new(expr.clone()),
                },
                Compiled::Section { .. } | Compiled::Program { .. } => program(expr),
            }
        }
        NormExpr::Dual { .. } => compile(&super::expr::canonicalize(expr)),
    }
}

/// Vertices (or facets) of every polytopal block, padded into the full
/// coordinates. These are all vertices of an `ℓ₁`-sum and all facets of an
/// `ℓ∞`-sum.
fn block_reps(parts: &[Compiled], vertices: bool) -> Option<Vec<DVector<f64>>> {
    let dim: usize = parts.iter().map(Compiled::dim).sum();
    let mut out = Vec::new();
    let mut off = 0;
    for k in parts {
        let d = k.dim();
        if d > 0 {
            let (fs, vs) = k.polytope()?;
            for r in if vertices { vs } else { fs } {
                let mut w = DVector::zeros(dim);
                w.rows_mut(off, d).copy_from(&r);
                out.push(w);
            }
        }
        off += d;
    }
    Some(out)
}

/// `‖(v₁, …, v_k)‖_p` of non-negative reals.
pub fn p_combine(p: Exponent, vals: &[f64]) -> f64 {
    if p.is_inf() {
        vals.iter().cloned().fold(0.0, f64::max)
    } else if p.0 == 1.0 {
        vals.iter().sum()
    } else {
        let m = vals.iter().cloned().fold(0.0, f64::max);
        if m == 0.0 || m.is_nan() {
            return m;
        }
        m * vals.iter().map(|v| (v / m).powf(p.0)).sum::<f64>().powf(1.0 / p.0)
    }
}

/// Scalars the epigraph builder can emit.
pub trait ProgNum: LpNum {
    fn from_scalar(s: &Scalar) -> Self;
    /// Adds `‖(parts)‖_p ≤ t` for `p ∉ {1, ∞}`.
    fn add_p_cone(prog: &mut Program<Self>, p: Exponent, t: &Aff<Self>, parts: &[Aff<Self>]) -> Result<()>;
}

impl ProgNum for f64 {
    fn from_scalar(s: &Scalar) -> Self {
        s.to_f64()
    }

    fn add_p_cone(prog: &mut Program<f64>, p: Exponent, t: &Aff<f64>, parts: &[Aff<f64>]) -> Result<()> {
        if p == Exponent::TWO {
            let mut cone = vec![t.clone()];
            cone.extend(parts.iter().cloned());
            prog.add_cone(Cone::SecondOrder(cone));
            return Ok(());
        }
        let r = prog.new_vars(parts.len());
        for (ri, part) in r.iter().zip(parts) {
            prog.add_cone(Cone::Power {
                x: Aff::var(*ri),
                y: t.clone(),
                z: part.clone(),
                alpha: 1.0 / p.0,
            });
        }
        let mut sum = Aff::zero();
        for ri in &r {
            sum.add(&Aff::var(*ri));
        }
        sum.sub(t);
        prog.add_le(sum);
        Ok(())
    }
}

impl ProgNum for BigRational {
    fn from_scalar(s: &Scalar) -> Self {
        s.to_rational().expect("finite entry")
    }

    fn add_p_cone(_: &mut Program<Self>, _: Exponent, _: &Aff<Self>, _: &[Aff<Self>]) -> Result<()> {
        Err(Error::NotPolyhedral)
    }
}

/// Adds constraints expressing `‖x‖_expr ≤ t`.
pub fn epigraph<T: ProgNum>(
    prog: &mut Program<T>,
    expr: &NormExpr,
    x: &[Aff<T>],
    t: &Aff<T>,
) -> Result<()> {
    match expr {
        NormExpr::PolytopeH { functionals, .. } => {
            if functionals.ncols() == 0 {
                prog.add_le(t.scaled(&-T::one()));
            }
            for i in 0..functionals.nrows() {
                let w: Vec<T> = functionals.row(i).iter().map(T::from_scalar).collect();
                let a = Aff::combine(&w, x);
                let mut up = a.clone();
                up.sub(t);
                prog.add_le(up);
                let mut down = a.scaled(&-T::one());
                down.sub(t);
                prog.add_le(down);
            }
        }
        NormExpr::PolytopeV { dim, vertices } => {
            let k = vertices.nrows();
            let lam = prog.new_vars(k);
            let mu = prog.new_vars(k);
            for i in 0..*dim {
                let mut row = x[i].clone();
                for j in 0..k {
                    let c = T::from_scalar(vertices.get(j, i));
                    row.terms.push((lam[j], -c));
                }
                prog.add_eq(row);
            }
            let mut total = Aff::zero();
            for j in 0..k {
                let mut a = Aff::var(lam[j]);
                a.terms.push((mu[j], -T::one()));
                prog.add_le(a);
                let mut b = Aff::var(lam[j]).scaled(&-T::one());
                b.terms.push((mu[j], -T::one()));
                prog.add_le(b);
                total.add(&Aff::var(mu[j]));
            }
            total.sub(t);
            prog.add_le(total);
        }
        NormExpr::LpSum { p, parts } => {
            if parts.len() == 1 {
                return epigraph(prog, &parts[0], x, t);
            }
            let mut off = 0;
            let blocks: Vec<&[Aff<T>]> = parts
                .iter()
                .map(|q| {
                    let d = q.dim();
                    let b = &x[off..off + d];
                    off += d;
                    b
                })
                .collect();
            if p.is_inf() {
                for (q, b) in parts.iter().zip(blocks) {
                    epigraph(prog, q, b, t)?;
                }
            } else {
                let ts: Vec<Aff<T>> = prog.new_vars(parts.len()).into_iter().map(Aff::var).collect();
                if p.0 == 1.0 {
                    let mut sum = Aff::zero();
                    for ti in &ts {
                        sum.add(ti);
                    }
                    sum.sub(t);
                    prog.add_le(sum);
                } else {
                    T::add_p_cone(prog, *p, t, &ts)?;
                }
                for ((q, b), ti) in parts.iter().zip(blocks).zip(&ts) {
                    epigraph(prog, q, b, ti)?;
                }
            }
        }
        NormExpr::Section { parent, map } => {
            let y: Vec<Aff<T>> = (0..map.nrows())
                .map(|i| {
                    let w: Vec<T> = map.row(i).iter().map(T::from_scalar).collect();
                    Aff::combine(&w, x)
                })
                .collect();
            epigraph(prog, parent, &y, t)?;
        }
        NormExpr::Quotient { parent, map } => {
            let z: Vec<Aff<T>> = prog.new_vars(map.ncols()).into_iter().map(Aff::var).collect();
            for i in 0..map.nrows() {
                let w: Vec<T> = map.row(i).iter().map(T::from_scalar).collect();
                let mut row = Aff::combine(&w, &z);
                row.sub(&x[i]);
                prog.add_eq(row);
            }
            epigraph(prog, parent, &z, t)?;
        }
        NormExpr::Dual { .. } => {
            return epigraph(prog, &super::expr::canonicalize(expr), x, t);
        }
    }
    Ok(())
}

/// Norm of `x` by minimizing the epigraph variable.
pub fn program_norm(expr: &NormExpr, x: &[f64]) -> Result<f64> {
    let mut prog = Program::<f64>::new();
    let t = prog.new_var();
    prog.minimize(vec![(t, 1.0)]);
    let xs: Vec<Aff<f64>> = x.iter().map(|&v| Aff::constant(v)).collect();
    epigraph(&mut prog, expr, &xs, &Aff::var(t))?;
    let sol = match prog.solve() {
        Ok(s) => s,
        Err(_) => prog.solve_conic()?,
    };
    Ok(sol.objective.max(0.0))
}

/// Exact norm for polyhedral trees with rational data.
pub fn program_norm_exact(expr: &NormExpr, x: &[BigRational]) -> Result<BigRational> {
    let mut prog = Program::<BigRational>::new();
    let t = prog.new_var();
    prog.minimize(vec![(t, BigRational::from_integer(1.into()))]);
    let xs: Vec<Aff<BigRational>> = x.iter().map(|v| Aff::constant(v.clone())).collect();
    epigraph(&mut prog, expr, &xs, &Aff::var(t))?;
    Ok(prog.solve_linear()?.objective)
}

/// `sup{⟨g, x⟩ : ‖x‖ ≤ 1}` and a maximizer.
pub fn support_program(expr: &NormExpr, g: &[f64]) -> Result<(f64, DVector<f64>)> {
    let n = g.len();
    let mut prog = Program::<f64>::new();
    let xv = prog.new_vars(n);
    prog.minimize(xv.iter().zip(g).map(|(v, c)| (*v, -c)).collect());
    let xs: Vec<Aff<f64>> = xv.iter().map(|&v| Aff::var(v)).collect();
    epigraph(&mut prog, expr, &xs, &Aff::constant(1.0))?;
    let sol = match prog.solve() {
        Ok(s) => s,
        Err(_) => prog.solve_conic()?,
    };
    let x = DVector::from_iterator(n, xv.iter().map(|&v| sol.x[v]));
    Ok((-sol.objective, x))
}
