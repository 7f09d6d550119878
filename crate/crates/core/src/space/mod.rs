//! Norm representation, evaluation, validation and file format.

mod compile;
mod expr;
pub mod io;
mod random;
mod scalar;
mod validate;

use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;

pub use compile::{epigraph, p_combine, program_norm, program_norm_exact, support_program, Compiled, Poly, ProgNum, Quad};
pub use expr::{canonicalize, Exponent, NormExpr};
pub use io::NumberMode;
pub use random::random_space;
pub use scalar::{Mat, Scalar};
pub use validate::{validate_expr, Diagnostic, DiagnosticKind};

use crate::dd;
use crate::error::{Error, Result};

pub const DEFAULT_TOL_RANK: f64 = 1e-8;

/// A named norm on `ℝⁿ`. Cheap to clone; evaluation data is built lazily
/// and shared between clones.
#[derive(Clone)]
pub struct NormedSpace {
    inner: Arc<Inner>,
}

struct Inner {
    name: String,
    expr: NormExpr,
    canonical: OnceLock<NormExpr>,
    compiled: OnceLock<Compiled>,
    dual: OnceLock<NormedSpace>,
}

impl fmt::Debug for NormedSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormedSpace")
            .field("name", &self.inner.name)
            .field("dim", &self.dim())
            .finish()
    }
}

impl NormedSpace {
    /// Validates `expr` and wraps it.
    pub fn new(name: impl Into<String>, expr: NormExpr) -> Result<Self> {
        Self::with_tolerance(name, expr, DEFAULT_TOL_RANK)
    }

    pub fn with_tolerance(name: impl Into<String>, expr: NormExpr, tol_rank: f64) -> Result<Self> {
        let diags = validate_expr(&expr, tol_rank);
        if !diags.is_empty() {
            return Err(Error::InvalidSpace(diags));
        }
        Ok(Self::unchecked(name, expr))
    }

    pub(crate) fn unchecked(name: impl Into<String>, expr: NormExpr) -> Self {
        Self {
            inner: Arc::new(Inner {
                name: name.into(),
                expr,
                canonical: OnceLock::new(),
                compiled: OnceLock::new(),
                dual: OnceLock::new(),
            }),
        }
    }

    pub fn l1(n: usize) -> Self {
        Self::unchecked(format!("l1^{n}"), NormExpr::l1(n))
    }

    pub fn linf(n: usize) -> Self {
        Self::unchecked(format!("linf^{n}"), NormExpr::linf(n))
    }

    pub fn lp(p: Exponent, n: usize) -> Self {
        Self::unchecked(format!("l{p}^{n}"), NormExpr::lp(p, n))
    }

    pub fn euclidean(n: usize) -> Self {
        Self::lp(Exponent::TWO, n)
    }

    /// The zero-dimensional space.
    pub fn zero() -> Self {
        Self::unchecked("0", NormExpr::linf(0))
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        let s = Self::unchecked(name, self.inner.expr.clone());
        if let Some(c) = self.inner.compiled.get() {
            let _ = s.inner.compiled.set(c.clone());
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.inner.expr.dim()
    }

    pub fn expr(&self) -> &NormExpr {
        &self.inner.expr
    }

    /// Equivalent tree without dual nodes.
    pub fn canonical(&self) -> &NormExpr {
        self.inner.canonical.get_or_init(|| canonicalize(&self.inner.expr))
    }

    pub fn tree_eq(&self, other: &NormedSpace) -> bool {
        self.canonical() == other.canonical()
    }

    pub fn compiled(&self) -> &Compiled {
        self.inner.compiled.get_or_init(|| compile::compile(self.canonical()))
    }

    pub fn validate(&self, tol_rank: f64) -> Vec<Diagnostic> {
        validate_expr(&self.inner.expr, tol_rank)
    }

    /// `‖x‖`; `NaN` if an underlying solver failed.
    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.compiled().norm(x)
    }

    pub fn eval_norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let v = self.norm(&DVector::from_column_slice(x));
        if v.is_nan() {
            return Err(Error::Solver(format!("norm evaluation failed in {}", self.name())));
        }
        Ok(v)
    }

    /// Exact norm by rational linear programming; polyhedral trees only.
    pub fn eval_norm_exact(&self, x: &[BigRational]) -> Result<BigRational> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !self.canonical().is_polyhedral() {
            return Err(Error::NotPolyhedral);
        }
        program_norm_exact(self.canonical(), x)
    }

    /// `(sup{⟨g, x⟩ : ‖x‖ ≤ 1}, maximizer)`.
    pub fn support(&self, g: &DVector<f64>) -> (f64, DVector<f64>) {
        self.compiled().support(g)
    }

    /// A functional of dual norm one with `⟨g, x⟩ = ‖x‖`.
    pub fn norming_functional(&self, x: &DVector<f64>) -> DVector<f64> {
        self.dual().support(x).1
    }

    /// Norming functional at the barycenter of the dual face, when not unique.
    pub fn central_norming_functional(&self, x: &DVector<f64>) -> DVector<f64> {
        self.dual().compiled().central_support(x).1
    }

    pub fn dual(&self) -> NormedSpace {
        self.inner
            .dual
            .get_or_init(|| {
                let name = match self.inner.name.strip_suffix('*') {
                    Some(base) if !base.ends_with('*') => format!("{base}**"),
                    _ => format!("{}*", self.inner.name),
                };
                let d = Self::unchecked(name, canonicalize(&NormExpr::Dual {
                    parent: Arc::new(self.inner.expr.clone()),
                }));
                let polar = compile::polar(self.compiled());
                if let Some(c) = polar {
                    let _ = d.inner.compiled.set(c);
                }
                d
            })
            .clone()
    }

    /// Gram matrix when the norm is Euclidean-type.
    pub fn quad(&self) -> Option<&Quad> {
        match self.compiled() {
            Compiled::Quadratic(q) => Some(q),
            _ => None,
        }
    }

    /// One representative per antipodal pair of unit-ball vertices.
    pub fn vertex_reps(&self) -> Option<Vec<DVector<f64>>> {
        self.compiled().polytope().map(|(_, v)| v)
    }

    /// One representative per antipodal pair of dual-ball vertices (facet normals).
    pub fn facet_reps(&self) -> Option<Vec<DVector<f64>>> {
        self.compiled().polytope().map(|(f, _)| f)
    }

    /// All extreme points of the unit ball (both signs) for polytopal trees.
    pub fn ball_vertices(&self) -> Result<Vec<DVector<f64>>> {
        if self.dim() == 0 {
            return Ok(Vec::new());
        }
        if self.dim() > dd::MAX_DIM || !self.canonical().is_polyhedral() {
            return Err(Error::PolytopeUnavailable);
        }
        let reps = self.vertex_reps().ok_or(Error::PolytopeUnavailable)?;
        Ok(reps.iter().flat_map(|v| [v.clone(), -v]).collect())
    }

    /// The matrix of `x ↦ ‖x‖` evaluated along the columns of `m`.
    pub fn column_norms(&self, m: &DMatrix<f64>) -> Vec<f64> {
        m.column_iter().map(|c| self.norm(&c.into_owned())).collect()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        io::space_to_value(&self.inner.name, &self.inner.expr)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("json value serializes")
    }

    pub fn from_json_str(text: &str, mode: NumberMode) -> Result<Self> {
        let (name, _, expr) = io::parse_space_text(text, mode)?;
        Self::new(name, expr)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path, mode: NumberMode) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Mat;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn trivial_evaluations() {
        assert_eq!(NormedSpace::linf(2).eval_norm(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(NormedSpace::l1(2).eval_norm(&[1.0, 1.0]).unwrap(), 2.0);
        let s = NormedSpace::lp(Exponent::TWO, 2);
        assert!((s.eval_norm(&[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(
            s.eval_norm(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn general_p_sum_uses_the_conic_path() {
        let leaf = Arc::new(NormExpr::Section {
            parent: Arc::new(NormExpr::l1(2)),
            map: Mat::from_f64_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]),
        });
        let e = NormExpr::LpSum {
            p: Exponent(3.0),
            parts: vec![leaf.clone(), Arc::new(NormExpr::lp(Exponent(1.5), 2))],
        };
        let s = NormedSpace::new("mix", e).unwrap();
        let x = [0.3, -0.7, 1.1, 0.4];
        let a = 0.3f64.abs() + (0.3f64 - 0.7).abs();
        let b = (1.1f64.powf(1.5) + 0.4f64.powf(1.5)).powf(1.0 / 1.5);
        let want = (a.powi(3) + b.powi(3)).cbrt();
        assert!((s.eval_norm(&x).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn quotient_norms_match_hand_values() {
        let q = Mat::from_f64_rows(&[vec![1.0, 1.0]]);
        let l1q = NormedSpace::new("a", NormExpr::Quotient { parent: Arc::new(NormExpr::l1(2)), map: q.clone() }).unwrap();
        let linfq = NormedSpace::new("b", NormExpr::Quotient { parent: Arc::new(NormExpr::linf(2)), map: q }).unwrap();
        assert!((l1q.eval_norm(&[3.0]).unwrap() - 3.0).abs() < 1e-12);
        assert!((linfq.eval_norm(&[3.0]).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ball_vertices_of_small_polytopes() {
        let mut got: Vec<Vec<f64>> = NormedSpace::linf(2)
            .ball_vertices()
            .unwrap()
            .iter()
            .map(|p| p.iter().map(|x| x.round()).collect())
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]);
        assert_eq!(NormedSpace::l1(2).ball_vertices().unwrap().len(), 4);
        let disk = NormExpr::LpSum {
            p: Exponent::TWO,
            parts: vec![Arc::new(NormExpr::l1(1)), Arc::new(NormExpr::l1(1))],
        };
        assert!(matches!(
            NormedSpace::new("disk", disk).unwrap().ball_vertices(),
            Err(Error::PolytopeUnavailable)
        ));
    }

    #[test]
    fn dual_support_matches_norm() {
        let x = NormedSpace::l1(3);
        let g = v(&[0.2, -0.9, 0.4]);
        let (h, pt) = x.support(&g);
        assert!((h - 0.9).abs() < 1e-12);
        assert!((g.dot(&pt) - h).abs() < 1e-12);
        assert!((x.dual().norm(&g) - 0.9).abs() < 1e-12);
        assert_eq!(x.dual().name(), "l1^3*");
        assert_eq!(x.dual().dual().name(), "l1^3**");
    }

    #[test]
    fn exact_evaluation_on_rational_data() {
        let text = r#"{"name":"r","dim":2,"norm":{"kind":"polytope_v","vertices":[["1/3","1/7"],["-2/5",1]]}}"#;
        let s = NormedSpace::from_json_str(text, NumberMode::Rational).unwrap();
        let x = [BigRational::new(1.into(), 2.into()), BigRational::new(1.into(), 3.into())];
        let n = s.eval_norm_exact(&x).unwrap();
        let fl = s.eval_norm(&[0.5, 1.0 / 3.0]).unwrap();
        assert!((num_traits::ToPrimitive::to_f64(&n).unwrap() - fl).abs() < 1e-12);
    }

    #[test]
    fn zero_dimensional_space() {
        let z = NormedSpace::zero();
        assert_eq!(z.dim(), 0);
        assert_eq!(z.eval_norm(&[]).unwrap(), 0.0);
        assert_eq!(z.dual().dim(), 0);
    }
}
