use std::fmt;

use serde::Serialize;

use super::expr::NormExpr;
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    RankDeficient,
    DimensionMismatch,
    InvalidP,
    NotInjective,
    NotSurjective,
    EmptySum,
    NonFinite,
    Empty,
}

/// One validation finding, located by a path from the root (`norm.parts[1].parent`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}: {}", self.path, self.kind, self.message)
    }
}

/// Collects every structural problem in the tree; never fails.
pub fn validate_expr(expr: &NormExpr, tol_rank: f64) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    walk(expr, "norm", tol_rank, &mut out);
    out
}

fn push(out: &mut Vec<Diagnostic>, path: &str, kind: DiagnosticKind, message: String) {
    out.push(Diagnostic {
        path: path.to_string(),
        kind,
        message,
    });
}

fn walk(expr: &NormExpr, path: &str, tol: f64, out: &mut Vec<Diagnostic>) {
    match expr {
        NormExpr::PolytopeH { dim, functionals: m } | NormExpr::PolytopeV { dim, vertices: m } => {
            let what = if matches!(expr, NormExpr::PolytopeH { .. }) {
                "functionals"
            } else {
                "vertices"
            };
            if m.ncols() != *dim {
                push(
                    out,
                    path,
                    DiagnosticKind::DimensionMismatch,
                    format!("{what} have length {} but dim is {dim}", m.ncols()),
                );
                return;
            }
            if !m.all_finite() {
                push(out, path, DiagnosticKind::NonFinite, format!("non-finite {what}"));
                return;
            }
            if *dim > 0 && m.nrows() == 0 {
                push(out, path, DiagnosticKind::Empty, format!("no {what}"));
                return;
            }
            let r = linalg::rank(&m.to_dmatrix(), tol);
            if r < *dim {
                push(
                    out,
                    path,
                    DiagnosticKind::RankDeficient,
                    format!("{what} span rank {r} < dim {dim}; the norm is degenerate"),
                );
            }
        }
        NormExpr::LpSum { p, parts } => {
            if !p.is_valid() {
                push(out, path, DiagnosticKind::InvalidP, format!("p = {p} outside [1, inf]"));
            }
            if parts.is_empty() {
                push(out, path, DiagnosticKind::EmptySum, "sum has no parts".into());
            }
            for (i, part) in parts.iter().enumerate() {
                walk(part, &format!("{path}.parts[{i}]"), tol, out);
            }
        }
        NormExpr::Section { parent, map } => {
            let child = format!("{path}.parent");
            walk(parent, &child, tol, out);
            if !map.all_finite() {
                push(out, path, DiagnosticKind::NonFinite, "non-finite map".into());
                return;
            }
            if map.nrows() != parent.dim() {
                push(
                    out,
                    path,
                    DiagnosticKind::DimensionMismatch,
                    format!("section map has {} rows, parent dim {}", map.nrows(), parent.dim()),
                );
                return;
            }
            if linalg::rank(&map.to_dmatrix(), tol) != map.ncols() {
                push(out, path, DiagnosticKind::NotInjective, "section map is not injective".into());
            }
        }
        NormExpr::Quotient { parent, map } => {
            let child = format!("{path}.parent");
            walk(parent, &child, tol, out);
            if !map.all_finite() {
                push(out, path, DiagnosticKind::NonFinite, "non-finite map".into());
                return;
            }
            if map.ncols() != parent.dim() {
                push(
                    out,
                    path,
                    DiagnosticKind::DimensionMismatch,
                    format!("quotient map has {} cols, parent dim {}", map.ncols(), parent.dim()),
                );
                return;
            }
            if linalg::rank(&map.to_dmatrix(), tol) != map.nrows() {
                push(
                    out,
                    path,
                    DiagnosticKind::NotSurjective,
                    "quotient map is not surjective".into(),
                );
            }
        }
        NormExpr::Dual { parent } => walk(parent, &format!("{path}.parent"), tol, out),
    }
}
