//! Finite samples of Minkowski bases and the class procedures acting on them.

mod ops;
mod probes;

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::calculus;
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::space::io::{matrix_from_value, matrix_to_value};
use crate::space::{Exponent, Mat, NormedSpace, NumberMode};

pub use ops::{d2_expand, hq_closure, op_dual, op_h, op_q, star_family, sum_sample, ClosureReport, StarReport};
pub use probes::{
    check_base_axioms, f_vs_ff_experiment, spectrum_probe, verify_identities, write_spectrum_csv, AxiomReport,
    ExchangeRow, FfReport, IdentityReport, SpectrumRow,
};

/// Limits that truncate the infinite closures to finite samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureBudget {
    pub max_dim: usize,
    pub max_count: usize,
    pub samples_per_space: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for ClosureBudget {
    fn default() -> Self {
        Self {
            max_dim: 4,
            max_count: 24,
            samples_per_space: 1,
            rounds: 2,
            seed: 0,
        }
    }
}

impl ClosureBudget {
    pub fn check(&self) -> Result<()> {
        if self.max_dim == 0 || self.max_count == 0 || self.rounds == 0 {
            return Err(Error::Precondition("budget entries must be positive".into()));
        }
        if self.max_dim > crate::dd::MAX_DIM {
            return Err(Error::Precondition(format!(
                "max_dim {} exceeds {}",
                self.max_dim,
                crate::dd::MAX_DIM
            )));
        }
        Ok(())
    }
}

/// How a member was built from given spaces.
#[derive(Clone, Debug)]
pub enum Trace {
    Given(NormedSpace),
    Section { parent: Box<Trace>, map: DMatrix<f64> },
    Quotient { parent: Box<Trace>, map: DMatrix<f64> },
    Dual(Box<Trace>),
    Sum { p: Exponent, parts: Vec<Trace> },
}

impl Trace {
    pub fn rebuild(&self) -> Result<NormedSpace> {
        match self {
            Trace::Given(s) => Ok(s.clone()),
            Trace::Section { parent, map } => calculus::section_f64(&parent.rebuild()?, map),
            Trace::Quotient { parent, map } => calculus::quotient_f64(&parent.rebuild()?, map),
            Trace::Dual(parent) => Ok(parent.rebuild()?.dual()),
            Trace::Sum { p, parts } => {
                let spaces = parts.iter().map(Trace::rebuild).collect::<Result<Vec<_>>>()?;
                calculus::lp_sum(*p, &spaces)
            }
        }
    }

    pub fn to_json_value(&self) -> Value {
        let mat = |m: &DMatrix<f64>| matrix_to_value(&Mat::from_dmatrix(m));
        match self {
            Trace::Given(s) => json!({"op": "given", "space": s.to_json_value()}),
            Trace::Section { parent, map } => json!({"op": "section", "map": mat(map), "parent": parent.to_json_value()}),
            Trace::Quotient { parent, map } => json!({"op": "quotient", "map": mat(map), "parent": parent.to_json_value()}),
            Trace::Dual(parent) => json!({"op": "dual", "parent": parent.to_json_value()}),
            Trace::Sum { p, parts } => json!({
                "op": "sum",
                "p": crate::space::io::f64_to_value(p.0),
                "parts": parts.iter().map(Trace::to_json_value).collect::<Vec<_>>(),
            }),
        }
    }

    pub fn from_json_value(v: &Value) -> Result<Trace> {
        let bad = |msg: &str| Error::Parse {
            line: None,
            field: "provenance".into(),
            message: msg.into(),
        };
        let parent = || -> Result<Box<Trace>> {
            Ok(Box::new(Trace::from_json_value(v.get("parent").ok_or_else(|| bad("missing parent"))?)?))
        };
        let map = || -> Result<DMatrix<f64>> {
            let m = v.get("map").ok_or_else(|| bad("missing map"))?;
            Ok(matrix_from_value(m, NumberMode::Float, "provenance.map", None)?.to_dmatrix())
        };
        match v.get("op").and_then(Value::as_str) {
            Some("given") => {
                let text = serde_json::to_string(v.get("space").ok_or_else(|| bad("missing space"))?)?;
                Ok(Trace::Given(NormedSpace::from_json_str(&text, NumberMode::Float)?))
            }
            Some("section") => Ok(Trace::Section {
                parent: parent()?,
                map: map()?,
            }),
            Some("quotient") => Ok(Trace::Quotient {
                parent: parent()?,
                map: map()?,
            }),
            Some("dual") => Ok(Trace::Dual(parent()?)),
            Some("sum") => {
                let p = v
                    .get("p")
                    .and_then(crate::space::io::f64_from_value)
                    .ok_or_else(|| bad("missing p"))?;
                let parts = v
                    .get("parts")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("missing parts"))?
                    .iter()
                    .map(Trace::from_json_value)
                    .collect::<Result<Vec<_>>>()?;
                Ok(Trace::Sum { p: Exponent(p), parts })
            }
            _ => Err(bad("unknown op")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Member {
    pub space: NormedSpace,
    pub trace: Trace,
}

impl Member {
    pub fn given(space: NormedSpace) -> Self {
        Self {
            trace: Trace::Given(space.clone()),
            space,
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }
}

/// Members pairwise farther apart than `1 + dedup_eps` in each dimension.
#[derive(Clone, Debug)]
pub struct SpaceFamily {
    pub members: Vec<Member>,
    pub dedup_eps: f64,
    pub seed: u64,
}

impl SpaceFamily {
    pub fn spaces(&self) -> Vec<NormedSpace> {
        self.members.iter().map(|m| m.space.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn max_dim(&self) -> usize {
        self.members.iter().map(Member::dim).max().unwrap_or(0)
    }

    pub fn from_spaces(spaces: &[NormedSpace], cfg: &ToleranceConfig) -> SpaceFamily {
        family_dedup(spaces.iter().cloned().map(Member::given).collect(), cfg)
    }

    /// Writes one space file per member and a `family.json` manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (i, m) in self.members.iter().enumerate() {
            let file = format!("{i:03}_{}.space.json", file_stem(m.space.name()));
            m.space.save(&dir.join(&file))?;
            entries.push(json!({"file": file, "name": m.space.name(), "trace": m.trace.to_json_value()}));
        }
        let manifest = json!({
            "dedup_eps": self.dedup_eps,
            "seed": self.seed,
            "provenance": entries,
        });
        fs::write(dir.join("family.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Reads a family directory. Without a manifest every `.space.json` file
    /// becomes a given member, in file-name order.
    pub fn load(dir: &Path, cfg: &ToleranceConfig) -> Result<SpaceFamily> {
        let manifest = dir.join("family.json");
        if !manifest.exists() {
            let mut files: Vec<_> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(".space.json"))
                .collect();
            files.sort();
            let spaces = files
                .iter()
                .map(|f| NormedSpace::load(f, NumberMode::Float))
                .collect::<Result<Vec<_>>>()?;
            return Ok(SpaceFamily::from_spaces(&spaces, cfg));
        }
        let v: Value = serde_json::from_str(&fs::read_to_string(&manifest)?)?;
        let entries = v.get("provenance").and_then(Value::as_array).ok_or_else(|| Error::Parse {
            line: None,
            field: "provenance".into(),
            message: "missing list".into(),
        })?;
        let mut members = Vec::new();
        for e in entries {
            let file = e.get("file").and_then(Value::as_str).ok_or_else(|| Error::Parse {
                line: None,
                field: "provenance.file".into(),
                message: "missing file".into(),
            })?;
            let space = NormedSpace::load(&dir.join(file), NumberMode::Float)?;
            let trace = match e.get("trace") {
                Some(t) => Trace::from_json_value(t)?,
                None => Trace::Given(space.clone()),
            };
            members.push(Member { space, trace });
        }
        Ok(SpaceFamily {
            members,
            dedup_eps: v.get("dedup_eps").and_then(Value::as_f64).unwrap_or(cfg.dedup_eps),
            seed: v.get("seed").and_then(Value::as_u64).unwrap_or(cfg.seed),
        })
    }
}

fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    s.chars().take(48).collect()
}

/// Whether two spaces of equal dimension are within `1 + eps`.
pub(crate) fn near(x: &NormedSpace, y: &NormedSpace, eps: f64, cfg: &ToleranceConfig) -> bool {
    if x.dim() != y.dim() {
        return false;
    }
    if x.dim() <= 1 || x.tree_eq(y) || (x.quad().is_some() && y.quad().is_some()) {
        return true;
    }
    crate::distance::within_distance(x, y, 1.0 + eps, cfg)
}

/// Greedy deduplication in `(dim, name)` order; the first member of each
/// near-isometry cluster is kept.
pub fn family_dedup(mut cands: Vec<Member>, cfg: &ToleranceConfig) -> SpaceFamily {
    cands.sort_by(|a, b| a.dim().cmp(&b.dim()).then_with(|| a.space.name().cmp(b.space.name())));
    let mut kept: Vec<Member> = Vec::new();
    for c in cands {
        let dup = kept
            .par_iter()
            .filter(|k| k.dim() == c.dim())
            .any(|k| near(&k.space, &c.space, cfg.dedup_eps, cfg));
        if !dup {
            kept.push(c);
        }
    }
    SpaceFamily {
        members: kept,
        dedup_eps: cfg.dedup_eps,
        seed: cfg.seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::with_seed(3)
    }

    #[test]
    fn isometric_planes_collapse() {
        let f = SpaceFamily::from_spaces(&[NormedSpace::l1(2), NormedSpace::linf(2)], &cfg());
        assert_eq!(f.len(), 1);
        let f = SpaceFamily::from_spaces(&[NormedSpace::l1(3), NormedSpace::l1(3)], &cfg());
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn cube_and_octahedron_stay_apart() {
        let f = SpaceFamily::from_spaces(&[NormedSpace::l1(3), NormedSpace::linf(3)], &cfg());
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn traces_round_trip_through_files() {
        let base = NormedSpace::l1(3);
        let t = Trace::Quotient {
            parent: Box::new(Trace::Dual(Box::new(Trace::Given(base)))),
            map: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]),
        };
        let m = Member {
            space: t.rebuild().unwrap(),
            trace: t,
        };
        let fam = SpaceFamily {
            members: vec![m],
            dedup_eps: 0.02,
            seed: 5,
        };
        let dir = tempfile::tempdir().unwrap();
        fam.save(dir.path()).unwrap();
        let back = SpaceFamily::load(dir.path(), &cfg()).unwrap();
        assert_eq!(back.seed, 5);
        let rebuilt = back.members[0].trace.rebuild().unwrap();
        assert!(rebuilt.tree_eq(&fam.members[0].space));
        assert!(back.members[0].space.tree_eq(&fam.members[0].space));
    }
}
