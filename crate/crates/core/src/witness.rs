use nalgebra::DMatrix;
use serde_json::{Map, Value};

use crate::distance::opnorm::{inverse_norm_pairs, op_norm_pairs};
use crate::error::{Error, Result};
use crate::space::io::{f64_from_value, f64_to_value, matrix_from_value, matrix_to_value, parse_space_text};
use crate::space::{Mat, NormedSpace, NumberMode, DEFAULT_TOL_RANK};

/// An injective map with measured operator norms of it and its inverse on
/// the range.
#[derive(Clone, Debug)]
pub struct Witness {
    pub map: DMatrix<f64>,
    pub source: NormedSpace,
    pub target: NormedSpace,
    pub norm_fwd: f64,
    pub norm_bwd: f64,
    pub distortion: f64,
    pub certified: bool,
}

impl Witness {
    /// Measures `map: source → target`.
    pub fn measure(map: DMatrix<f64>, source: &NormedSpace, target: &NormedSpace) -> Result<Witness> {
        if map.ncols() != source.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: map.ncols(),
            });
        }
        if map.nrows() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                found: map.nrows(),
            });
        }
        if source.dim() == 0 {
            return Ok(Witness {
                map,
                source: source.clone(),
                target: target.clone(),
                norm_fwd: 1.0,
                norm_bwd: 1.0,
                distortion: 1.0,
                certified: true,
            });
        }
        let fwd = op_norm_pairs(&map, source, target);
        let bwd = inverse_norm_pairs(&map, source, target, DEFAULT_TOL_RANK).ok_or(Error::NotInjective)?;
        Ok(Witness {
            distortion: fwd.value * bwd.value,
            norm_fwd: fwd.value,
            norm_bwd: bwd.value,
            certified: fwd.certified && bwd.certified,
            map,
            source: source.clone(),
            target: target.clone(),
        })
    }

    pub fn identity(x: &NormedSpace) -> Result<Witness> {
        Self::measure(DMatrix::identity(x.dim(), x.dim()), x, x)
    }

    /// The inverse map of a square witness, re-measured.
    pub fn inverse(&self) -> Result<Witness> {
        let inv = self.map.clone().try_inverse().ok_or(Error::NotInjective)?;
        Self::measure(inv, &self.target, &self.source)
    }

    /// `next ∘ self`, re-measured.
    pub fn then(&self, next: &Witness) -> Result<Witness> {
        Self::measure(&next.map * &self.map, &self.source, &next.target)
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("source".into(), self.source.to_json_value());
        obj.insert("target".into(), self.target.to_json_value());
        obj.insert("map".into(), matrix_to_value(&Mat::from_dmatrix(&self.map)));
        obj.insert("norm_fwd".into(), f64_to_value(self.norm_fwd));
        obj.insert("norm_bwd".into(), f64_to_value(self.norm_bwd));
        obj.insert("distortion".into(), f64_to_value(self.distortion));
        obj.insert("certified".into(), Value::Bool(self.certified));
        Value::Object(obj)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("json value serializes")
    }

    /// Reads a witness file; stored norms are taken as written.
    pub fn from_json_str(text: &str) -> Result<Witness> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: Some(e.line()),
            field: "<json>".into(),
            message: e.to_string(),
        })?;
        let get = |k: &str| {
            v.get(k).ok_or_else(|| Error::Parse {
                line: None,
                field: k.into(),
                message: "missing field".into(),
            })
        };
        let space = |k: &str| -> Result<NormedSpace> {
            let text = serde_json::to_string(get(k)?)?;
            let (name, _, expr) = parse_space_text(&text, NumberMode::Float)?;
            NormedSpace::new(name, expr)
        };
        let source = space("source")?;
        let target = space("target")?;
        let m = matrix_from_value(get("map")?, NumberMode::Float, "map", Some(source.dim()))?.to_dmatrix();
        let num = |k: &str| -> Result<f64> {
            f64_from_value(get(k)?).ok_or_else(|| Error::Parse {
                line: None,
                field: k.into(),
                message: "expected a number".into(),
            })
        };
        let norm_fwd = num("norm_fwd")?;
        let norm_bwd = num("norm_bwd")?;
        Ok(Witness {
            distortion: norm_fwd * norm_bwd,
            map: m,
            source,
            target,
            norm_fwd,
            norm_bwd,
            certified: get("certified")?.as_bool().unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_witness_between_l1_and_linf() {
        let h = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, -0.5]);
        let w = Witness::measure(h, &NormedSpace::l1(2), &NormedSpace::linf(2)).unwrap();
        assert!((w.distortion - 1.0).abs() < 1e-12);
        assert!(w.certified);
        let inv = w.inverse().unwrap();
        assert!((inv.distortion - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let w = Witness::identity(&NormedSpace::l1(3)).unwrap();
        let back = Witness::from_json_str(&w.to_json_string()).unwrap();
        assert_eq!(back.map, w.map);
        assert_eq!(back.distortion, w.distortion);
        assert!(back.source.tree_eq(&w.source));
    }

    #[test]
    fn rejects_singular_maps() {
        let z = DMatrix::zeros(2, 2);
        assert!(matches!(
            Witness::measure(z, &NormedSpace::l1(2), &NormedSpace::l1(2)),
            Err(Error::NotInjective)
        ));
    }
}
