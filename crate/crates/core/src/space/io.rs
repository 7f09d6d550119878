//! `.space.json` reading and writing.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};
use serde_json::{Map, Number, Value};

use super::expr::{Exponent, NormExpr};
use super::scalar::{Mat, Scalar};
use crate::error::{Error, Result};

/// How numeric literals in a file become [`Scalar`]s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NumberMode {
    #[default]
    Float,
    /// Decimal literals and `"p/q"` strings are read as exact rationals.
    Rational,
}

fn perr(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line: None,
        field: path.to_string(),
        message: message.into(),
    }
}

/// Exact value of a decimal literal such as `-1.25e-3`.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int, frac) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let shift = exp - frac.len() as i64;
    let ten = BigInt::from(10);
    let mut q = if shift >= 0 {
        BigRational::from_integer(digits * Pow::pow(&ten, shift as u64))
    } else {
        BigRational::new(digits, Pow::pow(&ten, (-shift) as u64))
    };
    if neg {
        q = -q;
    }
    Some(q)
}

/// Parses `"p/q"` (or an integer string).
pub fn parse_ratio(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                return None;
            }
            Some(BigRational::new(p, q))
        }
        None => parse_decimal(s),
    }
}

fn scalar_from_value(v: &Value, mode: NumberMode, path: &str) -> Result<Scalar> {
    let q = match v {
        Value::Number(n) => {
            if mode == NumberMode::Float {
                return n
                    .as_f64()
                    .map(Scalar::Float)
                    .ok_or_else(|| perr(path, "number out of range"));
            }
            parse_decimal(n.as_str()).ok_or_else(|| perr(path, "malformed number"))?
        }
        Value::String(s) => parse_ratio(s).ok_or_else(|| perr(path, format!("malformed rational {s:?}")))?,
        _ => return Err(perr(path, "expected a number or \"p/q\" string")),
    };
    Ok(match mode {
        NumberMode::Rational => Scalar::Exact(q),
        NumberMode::Float => Scalar::Float(q.to_f64().unwrap_or(f64::NAN)),
    })
}

pub fn matrix_from_value(v: &Value, mode: NumberMode, path: &str, cols_hint: Option<usize>) -> Result<Mat> {
    let rows = v.as_array().ok_or_else(|| perr(path, "expected an array of rows"))?;
    let mut cols = None;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let entries = row.as_array().ok_or_else(|| perr(&rp, "expected a row array"))?;
        match cols {
            None => cols = Some(entries.len()),
            Some(c) if c != entries.len() => {
                return Err(perr(
                    &rp,
                    format!("row has length {} but earlier rows have length {c}", entries.len()),
                ))
            }
            _ => {}
        }
        let vals = entries
            .iter()
            .enumerate()
            .map(|(j, e)| scalar_from_value(e, mode, &format!("{rp}[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        out.push(vals);
    }
    let cols = cols.or(cols_hint).unwrap_or(0);
    Ok(Mat::from_rows(out, cols))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| perr(&format!("{path}.{key}"), "missing field"))
}

fn exponent_from_value(v: &Value, path: &str) -> Result<Exponent> {
    match v {
        Value::Number(n) => n.as_f64().map(Exponent).ok_or_else(|| perr(path, "bad exponent")),
        Value::String(s) => Exponent::parse(s)
            .or_else(|| parse_ratio(s).and_then(|q| q.to_f64()).map(Exponent))
            .ok_or_else(|| perr(path, format!("bad exponent {s:?}"))),
        _ => Err(perr(path, "expected a number or \"inf\"")),
    }
}

fn dim_field(obj: &Map<String, Value>, path: &str) -> Result<Option<usize>> {
    match obj.get("dim") {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|d| Some(d as usize))
            .ok_or_else(|| perr(&format!("{path}.dim"), "expected a non-negative integer")),
    }
}

/// Reads one norm node.
pub fn expr_from_value(v: &Value, mode: NumberMode, path: &str) -> Result<NormExpr> {
    let obj = v.as_object().ok_or_else(|| perr(path, "expected an object"))?;
    let kind = field(obj, "kind", path)?
        .as_str()
        .ok_or_else(|| perr(&format!("{path}.kind"), "expected a string"))?;
    match kind {
        "polytope_h" | "polytope_v" => {
            let key = if kind == "polytope_h" { "functionals" } else { "vertices" };
            let dim = dim_field(obj, path)?;
            let m = matrix_from_value(field(obj, key, path)?, mode, &format!("{path}.{key}"), dim)?;
            let dim = match dim {
                Some(d) if m.nrows() > 0 && m.ncols() != d => {
                    return Err(perr(
                        &format!("{path}.{key}"),
                        format!("rows have length {} but dim is {d}", m.ncols()),
                    ))
                }
                Some(d) => d,
                None => m.ncols(),
            };
            Ok(if kind == "polytope_h" {
                NormExpr::PolytopeH { dim, functionals: m }
            } else {
                NormExpr::PolytopeV { dim, vertices: m }
            })
        }
        "lp_sum" => {
            let p = exponent_from_value(field(obj, "p", path)?, &format!("{path}.p"))?;
            let parts = field(obj, "parts", path)?
                .as_array()
                .ok_or_else(|| perr(&format!("{path}.parts"), "expected an array"))?
                .iter()
                .enumerate()
                .map(|(i, q)| expr_from_value(q, mode, &format!("{path}.parts[{i}]")).map(Arc::new))
                .collect::<Result<Vec<_>>>()?;
            Ok(NormExpr::LpSum { p, parts })
        }
        "section" | "quotient" => {
            let parent = expr_from_value(field(obj, "parent", path)?, mode, &format!("{path}.parent"))?;
            let mp = format!("{path}.map");
            let raw = field(obj, "map", path)?;
            if kind == "section" {
                let map = matrix_from_value(raw, mode, &mp, None)?;
                Ok(NormExpr::Section { parent: Arc::new(parent), map })
            } else {
                let map = matrix_from_value(raw, mode, &mp, Some(parent.dim()))?;
                Ok(NormExpr::Quotient { parent: Arc::new(parent), map })
            }
        }
        "dual" => {
            let parent = expr_from_value(field(obj, "parent", path)?, mode, &format!("{path}.parent"))?;
            Ok(NormExpr::Dual { parent: Arc::new(parent) })
        }
        other => Err(perr(&format!("{path}.kind"), format!("unknown node kind {other:?}"))),
    }
}

pub fn scalar_to_value(s: &Scalar) -> Value {
    match s {
        Scalar::Float(x) => Number::from_f64(*x).map_or(Value::Null, Value::Number),
        Scalar::Exact(q) if q.denom().is_one() => {
            Value::Number(Number::from_string_unchecked(q.numer().to_string()))
        }
        Scalar::Exact(q) => Value::String(format!("{}/{}", q.numer(), q.denom())),
    }
}

pub fn matrix_to_value(m: &Mat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array(m.row(i).iter().map(scalar_to_value).collect()))
            .collect(),
    )
}

fn exponent_to_value(p: Exponent) -> Value {
    if p.is_inf() {
        Value::String("inf".into())
    } else {
        Number::from_f64(p.0).map_or(Value::Null, Value::Number)
    }
}

pub fn expr_to_value(e: &NormExpr) -> Value {
    let mut obj = Map::new();
    match e {
        NormExpr::PolytopeH { dim, functionals } => {
            obj.insert("kind".into(), "polytope_h".into());
            obj.insert("dim".into(), (*dim).into());
            obj.insert("functionals".into(), matrix_to_value(functionals));
        }
        NormExpr::PolytopeV { dim, vertices } => {
            obj.insert("kind".into(), "polytope_v".into());
            obj.insert("dim".into(), (*dim).into());
            obj.insert("vertices".into(), matrix_to_value(vertices));
        }
        NormExpr::LpSum { p, parts } => {
            obj.insert("kind".into(), "lp_sum".into());
            obj.insert("p".into(), exponent_to_value(*p));
            obj.insert("parts".into(), Value::Array(parts.iter().map(|q| expr_to_value(q)).collect()));
        }
        NormExpr::Section { parent, map } => {
            obj.insert("kind".into(), "section".into());
            obj.insert("map".into(), matrix_to_value(map));
            obj.insert("parent".into(), expr_to_value(parent));
        }
        NormExpr::Quotient { parent, map } => {
            obj.insert("kind".into(), "quotient".into());
            obj.insert("map".into(), matrix_to_value(map));
            obj.insert("parent".into(), expr_to_value(parent));
        }
        NormExpr::Dual { parent } => {
            obj.insert("kind".into(), "dual".into());
            obj.insert("parent".into(), expr_to_value(parent));
        }
    }
    Value::Object(obj)
}

/// Parses a whole space file into `(name, dim, expr)` without validating the norm.
pub fn parse_space_text(text: &str, mode: NumberMode) -> Result<(String, usize, NormExpr)> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: Some(e.line()),
        field: "<json>".into(),
        message: e.to_string(),
    })?;
    let obj = v.as_object().ok_or_else(|| perr("<root>", "expected an object"))?;
    let name = match obj.get("name") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(perr("name", "expected a string")),
        None => String::new(),
    };
    let expr = expr_from_value(field(obj, "norm", "")?, mode, "norm")?;
    let dim = match dim_field(obj, "")? {
        Some(d) if d != expr.dim() => {
            return Err(perr("dim", format!("dim is {d} but the norm acts on dimension {}", expr.dim())))
        }
        Some(d) => d,
        None => expr.dim(),
    };
    Ok((name, dim, expr))
}

pub fn space_to_value(name: &str, expr: &NormExpr) -> Value {
    let mut obj = Map::new();
    obj.insert("name".into(), name.into());
    obj.insert("dim".into(), expr.dim().into());
    obj.insert("norm".into(), expr_to_value(expr));
    Value::Object(obj)
}

/// Shortest round-tripping decimal for an `f64`, as written in files.
pub fn f64_to_value(x: f64) -> Value {
    if x.is_finite() {
        Number::from_f64(x).map_or(Value::Null, Value::Number)
    } else if x.is_nan() {
        Value::Null
    } else if x.is_sign_positive() {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

/// Reads an `f64` written by [`f64_to_value`].
pub fn f64_from_value(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
        Value::String(s) => parse_ratio(s).and_then(|q| q.to_f64()),
        Value::Null => Some(f64::NAN),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse_decimal("0.1").unwrap(), BigRational::new(1.into(), 10.into()));
        assert_eq!(parse_decimal("-2.5e2").unwrap(), BigRational::from_integer((-250).into()));
        assert_eq!(parse_decimal("3E-2").unwrap(), BigRational::new(3.into(), 100.into()));
        assert!(parse_decimal("1.2.3").is_none());
        assert_eq!(parse_ratio(" 3/6 ").unwrap(), BigRational::new(1.into(), 2.into()));
        assert!(parse_ratio("1/0").is_none());
    }

    #[test]
    fn inf_exponent_parses() {
        let text = r#"{"name":"s","dim":2,"norm":{"kind":"lp_sum","p":"inf","parts":[
            {"kind":"polytope_h","functionals":[[1]]},{"kind":"polytope_h","functionals":[[1]]}]}}"#;
        let (_, dim, e) = parse_space_text(text, NumberMode::Float).unwrap();
        assert_eq!(dim, 2);
        match e {
            NormExpr::LpSum { p, .. } => assert!(p.is_inf()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = r#"{"name":"s","dim":2,"norm":{"kind":"polytope_v","vertices":[[1,0],[0]]}}"#;
        match parse_space_text(text, NumberMode::Float) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "norm.vertices[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let text = "{\n\"name\": \"s\",\n\"dim\": 2,,\n}";
        match parse_space_text(text, NumberMode::Float) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rational_round_trip_is_bit_exact() {
        let text = r#"{"name":"q","dim":2,"norm":{"kind":"section","map":[["1/3", 0.1],[2, "-7/5"]],
            "parent":{"kind":"polytope_v","dim":2,"vertices":[[1,0],[0,1]]}}}"#;
        let (name, _, e) = parse_space_text(text, NumberMode::Rational).unwrap();
        let out = serde_json::to_string(&space_to_value(&name, &e)).unwrap();
        let (_, _, back) = parse_space_text(&out, NumberMode::Rational).unwrap();
        assert_eq!(back, e);
        assert!(out.contains("\"1/10\""));
    }

    #[test]
    fn float_round_trip_preserves_bits() {
        let m = Mat::from_f64_rows(&[vec![0.1 + 0.2, -1e-300], vec![std::f64::consts::PI, 3.0]]);
        let e = NormExpr::polytope_h(m);
        let out = serde_json::to_string(&space_to_value("f", &e)).unwrap();
        let (_, _, back) = parse_space_text(&out, NumberMode::Float).unwrap();
        assert_eq!(back, e);
    }
}
