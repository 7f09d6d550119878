use std::fmt;
use std::sync::Arc;

use super::scalar::Mat;

/// Sum exponent `p ∈ [1, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn is_valid(self) -> bool {
        self.0 >= 1.0 && !self.0.is_nan()
    }

    pub fn is_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// Hölder conjugate `p*` with `1/p + 1/p* = 1`.
    pub fn conjugate(self) -> Exponent {
        if self.0 == 1.0 {
            Exponent::INF
        } else if self.is_inf() {
            Exponent::ONE
        } else if self.0 == 2.0 {
            Exponent::TWO
        } else {
            Exponent(self.0 / (self.0 - 1.0))
        }
    }

    /// `true` when sums with this exponent keep polytopes polytopal.
    pub fn is_polyhedral(self) -> bool {
        self.0 == 1.0 || self.is_inf()
    }

    pub fn parse(s: &str) -> Option<Exponent> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t == "∞" {
            return Some(Exponent::INF);
        }
        t.parse::<f64>().ok().map(Exponent)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Expression tree defining a symmetric norm on `ℝⁿ`.
///
/// Polytope leaves store one functional (or vertex) per antipodal pair; the
/// norm takes absolute values so symmetry holds structurally.
#[derive(Clone, Debug, PartialEq)]
pub enum NormExpr {
    /// `‖x‖ = maxᵢ |⟨fᵢ, x⟩|`, functionals as rows.
    PolytopeH { dim: usize, functionals: Mat },
    /// Gauge of `conv(±vᵢ)`, vertices as rows.
    PolytopeV { dim: usize, vertices: Mat },
    /// `(Σ ‖xᵢ‖^p)^{1/p}` over consecutive coordinate blocks.
    LpSum { p: Exponent, parts: Vec<Arc<NormExpr>> },
    /// `‖x‖ = ‖u x‖_parent` with `u` injective (rows = parent dim).
    Section { parent: Arc<NormExpr>, map: Mat },
    /// `‖y‖ = inf{‖x‖_parent : q x = y}` with `q` surjective (cols = parent dim).
    Quotient { parent: Arc<NormExpr>, map: Mat },
    /// `‖f‖ = sup{⟨f, x⟩ : ‖x‖_parent ≤ 1}`.
    Dual { parent: Arc<NormExpr> },
}

impl NormExpr {
    pub fn dim(&self) -> usize {
        match self {
            NormExpr::PolytopeH { dim, .. } | NormExpr::PolytopeV { dim, .. } => *dim,
            NormExpr::LpSum { parts, .. } => parts.iter().map(|p| p.dim()).sum(),
            NormExpr::Section { map, .. } => map.ncols(),
            NormExpr::Quotient { map, .. } => map.nrows(),
            NormExpr::Dual { parent } => parent.dim(),
        }
    }

    pub fn polytope_h(functionals: Mat) -> Self {
        NormExpr::PolytopeH {
            dim: functionals.ncols(),
            functionals,
        }
    }

    pub fn polytope_v(vertices: Mat) -> Self {
        NormExpr::PolytopeV {
            dim: vertices.ncols(),
            vertices,
        }
    }

    /// `ℓ₁ⁿ` as the gauge of the cross-polytope.
    pub fn l1(n: usize) -> Self {
        NormExpr::polytope_v(Mat::identity(n))
    }

    /// `ℓ∞ⁿ` as the max of coordinate functionals.
    pub fn linf(n: usize) -> Self {
        NormExpr::polytope_h(Mat::identity(n))
    }

    /// `ℓ_pⁿ` as a `p`-sum of one-dimensional leaves.
    pub fn lp(p: Exponent, n: usize) -> Self {
        if p.0 == 1.0 {
            return Self::l1(n);
        }
        if p.is_inf() {
            return Self::linf(n);
        }
        let leaf = Arc::new(NormExpr::linf(1));
        NormExpr::LpSum {
            p,
            parts: vec![leaf; n],
        }
    }

    pub fn contains_dual(&self) -> bool {
        match self {
            NormExpr::Dual { .. } => true,
            NormExpr::PolytopeH { .. } | NormExpr::PolytopeV { .. } => false,
            NormExpr::LpSum { parts, .. } => parts.iter().any(|p| p.contains_dual()),
            NormExpr::Section { parent, .. } | NormExpr::Quotient { parent, .. } => {
                parent.contains_dual()
            }
        }
    }

    /// `true` when every sum in the tree is an ℓ₁ or ℓ∞ sum.
    pub fn is_polyhedral(&self) -> bool {
        match self {
            NormExpr::PolytopeH { .. } | NormExpr::PolytopeV { .. } => true,
            NormExpr::LpSum { p, parts } => {
                (p.is_polyhedral() || parts.len() == 1) && parts.iter().all(|q| q.is_polyhedral())
            }
            NormExpr::Section { parent, .. }
            | NormExpr::Quotient { parent, .. }
            | NormExpr::Dual { parent } => parent.is_polyhedral(),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            NormExpr::PolytopeH { .. } | NormExpr::PolytopeV { .. } => 0,
            NormExpr::LpSum { parts, .. } => parts.iter().map(|p| p.node_count()).sum(),
            NormExpr::Section { parent, .. }
            | NormExpr::Quotient { parent, .. }
            | NormExpr::Dual { parent } => parent.node_count(),
        }
    }
}

/// Rewrites the tree into an equivalent one without `Dual` nodes.
///
/// Duals are pushed to the leaves (H and V swap, sums take the conjugate
/// exponent, sections and quotients swap with transposed maps); sections of
/// H-polytopes and quotients of V-polytopes collapse into leaves.
/// `dualize` is an involution on the output, so `Dual(Dual(N))` returns
/// exactly `canonicalize(N)`.
pub fn canonicalize(expr: &NormExpr) -> NormExpr {
    match expr {
        NormExpr::PolytopeH { .. } | NormExpr::PolytopeV { .. } => expr.clone(),
        NormExpr::LpSum { p, parts } => NormExpr::LpSum {
            p: *p,
            parts: parts.iter().map(|q| Arc::new(canonicalize(q))).collect(),
        },
        NormExpr::Section { parent, map } => simplify_section(canonicalize(parent), map.clone()),
        NormExpr::Quotient { parent, map } => simplify_quotient(canonicalize(parent), map.clone()),
        NormExpr::Dual { parent } => dualize(&canonicalize(parent)),
    }
}

/// Dual of an expression that is already canonical.
fn dualize(expr: &NormExpr) -> NormExpr {
    match expr {
        NormExpr::PolytopeH { dim, functionals } => NormExpr::PolytopeV {
            dim: *dim,
            vertices: functionals.clone(),
        },
        NormExpr::PolytopeV { dim, vertices } => NormExpr::PolytopeH {
            dim: *dim,
            functionals: vertices.clone(),
        },
        NormExpr::LpSum { p, parts } => NormExpr::LpSum {
            p: p.conjugate(),
            parts: parts.iter().map(|q| Arc::new(dualize(q))).collect(),
        },
        NormExpr::Section { parent, map } => simplify_quotient(dualize(parent), map.transpose()),
        NormExpr::Quotient { parent, map } => simplify_section(dualize(parent), map.transpose()),
        NormExpr::Dual { parent } => canonicalize(parent),
    }
}

fn simplify_section(parent: NormExpr, map: Mat) -> NormExpr {
    match parent {
        NormExpr::PolytopeH { functionals, .. } if map.ncols() > 0 => {
            NormExpr::polytope_h(functionals.matmul(&map))
        }
        parent => NormExpr::Section {
            parent: Arc::new(parent),
            map,
        },
    }
}

fn simplify_quotient(parent: NormExpr, map: Mat) -> NormExpr {
    match parent {
        NormExpr::PolytopeV { vertices, .. } if map.nrows() > 0 => {
            NormExpr::polytope_v(vertices.matmul(&map.transpose()))
        }
        parent => NormExpr::Quotient {
            parent: Arc::new(parent),
            map,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual(e: NormExpr) -> NormExpr {
        NormExpr::Dual { parent: Arc::new(e) }
    }

    #[test]
    fn dual_of_l1_is_linf() {
        let c = canonicalize(&dual(NormExpr::l1(2)));
        assert_eq!(c, NormExpr::linf(2));
        assert_eq!(canonicalize(&dual(NormExpr::linf(3))), NormExpr::l1(3));
    }

    #[test]
    fn double_dual_collapses() {
        let inner = NormExpr::Section {
            parent: Arc::new(NormExpr::l1(3)),
            map: Mat::from_f64_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]),
        };
        let e = NormExpr::LpSum {
            p: Exponent(3.0),
            parts: vec![Arc::new(inner), Arc::new(NormExpr::linf(2))],
        };
        let c = canonicalize(&e);
        assert_eq!(canonicalize(&dual(dual(e.clone()))), c);
        assert!(!canonicalize(&dual(e)).contains_dual());
    }

    #[test]
    fn section_of_h_polytope_collapses() {
        let e = NormExpr::Section {
            parent: Arc::new(NormExpr::linf(2)),
            map: Mat::from_f64_rows(&[vec![1.0], vec![1.0]]),
        };
        match canonicalize(&e) {
            NormExpr::PolytopeH { dim, functionals } => {
                assert_eq!(dim, 1);
                assert_eq!(functionals.nrows(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conjugate_exponents() {
        assert_eq!(Exponent(1.0).conjugate(), Exponent::INF);
        assert_eq!(Exponent::INF.conjugate(), Exponent::ONE);
        assert_eq!(Exponent(3.0).conjugate(), Exponent(1.5));
        assert_eq!(Exponent(1.5).conjugate(), Exponent(3.0));
    }
}
