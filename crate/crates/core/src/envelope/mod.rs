//! Staged approximations `E_k` of a space of almost universal disposition,
//! built by repeated pushouts, and the metrics reported along the chain.

mod metrics;

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

pub use metrics::{
    cohomogeneity_defect, extension_defect, lambda_prime, projection_constant, sample_unit_pairs, transitivity_defect,
    ProjectionConstant,
};

use crate::amalgam::pushout;
use crate::calculus;
use crate::classes::SpaceFamily;
use crate::config::ToleranceConfig;
use crate::distance::embed_distortion;
use crate::error::{Error, Result};
use crate::linalg;
use crate::report::fmt_f64;
use crate::space::io::{f64_from_value, f64_to_value, matrix_from_value, matrix_to_value, space_to_value};
use crate::space::{Exponent, Mat, NormedSpace, NumberMode};
use crate::witness::Witness;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeBudget {
    /// Stages whose pushout would exceed this dimension are skipped.
    pub max_dim: usize,
    /// Sampled sections per (member, dimension) in the task queue.
    pub samples: usize,
    pub seed: u64,
}

impl Default for EnvelopeBudget {
    fn default() -> Self {
        Self {
            max_dim: 6,
            samples: 1,
            seed: 0,
        }
    }
}

impl EnvelopeBudget {
    pub fn check(&self) -> Result<()> {
        if self.max_dim == 0 || self.max_dim > crate::dd::MAX_DIM {
            return Err(Error::Precondition(format!(
                "max_dim must be in 1..={}",
                crate::dd::MAX_DIM
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// `A = B`, a family member, embedded into `E_k`.
    Member,
    /// `A` a sampled section of `E_k` of this dimension, copied into `B`.
    Section { dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Task {
    pub kind: TaskKind,
    pub member: usize,
    pub sample: usize,
}

/// Members first, then their proper section dimensions with `samples` draws each.
pub fn task_queue(family: &[NormedSpace], budget: &EnvelopeBudget) -> Vec<Task> {
    let mut out: Vec<Task> = (0..family.len())
        .map(|member| Task {
            kind: TaskKind::Member,
            member,
            sample: 0,
        })
        .collect();
    for (member, b) in family.iter().enumerate() {
        for dim in 1..b.dim() {
            for sample in 0..budget.samples {
                out.push(Task {
                    kind: TaskKind::Section { dim },
                    member,
                    sample,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct HistoryEntry {
    /// The step builds `E_{stage+1}` from `E_stage`.
    pub stage: usize,
    pub task: String,
    pub kind: TaskKind,
    pub member: usize,
    /// Orthonormal frame of `A ⊂ E_stage` for section tasks.
    pub frame: Option<DMatrix<f64>>,
    /// `A → E_stage`.
    pub i1: DMatrix<f64>,
    /// `A → B`.
    pub i2: DMatrix<f64>,
    /// `E_stage → E_{stage+1}` (identity when skipped).
    pub chain: DMatrix<f64>,
    pub dist_j1: f64,
    pub dist_j2: f64,
    pub skipped: Option<String>,
}

#[derive(Clone, Debug)]
pub struct EnvelopeState {
    pub stage: usize,
    pub e: NormedSpace,
    pub p: Exponent,
    pub family: Vec<NormedSpace>,
    /// `E_0, …, E_stage`.
    pub stages: Vec<NormedSpace>,
    pub history: Vec<HistoryEntry>,
    /// Position in the task queue.
    pub rng_cursor: u64,
    pub budget: EnvelopeBudget,
}

/// `E₀`: the `ℓ_p`-sum of the leading members that fit in `max_dim` (the
/// first member always).
fn base_space(family: &[NormedSpace], p: Exponent, max_dim: usize) -> Result<NormedSpace> {
    let mut parts: Vec<NormedSpace> = Vec::new();
    let mut dim = 0;
    for (i, m) in family.iter().enumerate() {
        if i == 0 || dim + m.dim() <= max_dim {
            dim += m.dim();
            parts.push(m.clone());
        }
    }
    let e = if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        calculus::lp_sum(p, &parts)?
    };
    Ok(e.renamed("E0"))
}

fn stage_name(k: usize) -> String {
    format!("E{k}")
}

fn skipped_entry(stage: usize, task: String, t: &Task, dim: usize, reason: String) -> HistoryEntry {
    HistoryEntry {
        stage,
        task,
        kind: t.kind,
        member: t.member,
        frame: None,
        i1: DMatrix::zeros(0, 0),
        i2: DMatrix::zeros(0, 0),
        chain: DMatrix::identity(dim, dim),
        dist_j1: 1.0,
        dist_j2: 1.0,
        skipped: Some(reason),
    }
}

fn describe(t: &Task, family: &[NormedSpace]) -> String {
    let b = family[t.member].name();
    match t.kind {
        TaskKind::Member => format!("{b} -> E"),
        TaskKind::Section { dim } => format!("sec{dim}.{} of E -> {b}", t.sample),
    }
}

/// `A` and the pair `(i₁: A → E, i₂: A → B)` scaled so that
/// `‖i₁ a‖ ≤ ‖i₂ a‖`, which keeps `E → E_{k+1}` contractive on `A`-directions.
fn prepare(
    t: &Task,
    e: &NormedSpace,
    b: &NormedSpace,
    cursor: u64,
    budget: &EnvelopeBudget,
    cfg: &ToleranceConfig,
) -> std::result::Result<(NormedSpace, Option<DMatrix<f64>>, DMatrix<f64>, DMatrix<f64>), String> {
    match t.kind {
        TaskKind::Member => {
            let r = embed_distortion(b, e, cfg, &[]).map_err(|err| err.to_string())?;
            let w = r.witness.ok_or_else(|| format!("{} does not embed", b.name()))?;
            let i1 = &w.map / w.norm_fwd;
            Ok((b.clone(), None, i1, DMatrix::identity(b.dim(), b.dim())))
        }
        TaskKind::Section { dim } => {
            let frame = linalg::low_discrepancy_frame(e.dim(), dim, linalg::mix_seed(budget.seed, cursor));
            let a = calculus::section_f64(e, &frame).map_err(|err| err.to_string())?;
            let r = embed_distortion(&a, b, cfg, &[]).map_err(|err| err.to_string())?;
            let w = r.witness.ok_or_else(|| format!("section does not embed into {}", b.name()))?;
            let i2 = &w.map * w.norm_bwd;
            Ok((a, Some(frame.clone()), frame, i2))
        }
    }
}

impl EnvelopeState {
    pub fn new(family: &SpaceFamily, p: Exponent, budget: EnvelopeBudget) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::Precondition("the envelope needs a nonempty family".into()));
        }
        if !p.is_valid() {
            return Err(Error::InvalidP(p.0));
        }
        budget.check()?;
        let spaces = family.spaces();
        let e = base_space(&spaces, p, budget.max_dim)?;
        Ok(Self {
            stage: 0,
            e: e.clone(),
            p,
            family: spaces,
            stages: vec![e],
            history: Vec::new(),
            rng_cursor: 0,
            budget,
        })
    }

    /// Runs the next queued task and appends `E_{stage+1}`.
    pub fn step(&mut self, cfg: &ToleranceConfig) -> Result<()> {
        let queue = task_queue(&self.family, &self.budget);
        let t = queue[(self.rng_cursor % queue.len() as u64) as usize];
        let cursor = self.rng_cursor;
        self.rng_cursor += 1;
        let b = self.family[t.member].clone();
        let n = self.e.dim();
        let task = describe(&t, &self.family);
        let grown = match t.kind {
            TaskKind::Member => n,
            TaskKind::Section { dim } => n + b.dim() - dim,
        };
        let entry = if grown > self.budget.max_dim {
            skipped_entry(self.stage, task, &t, n, format!("dimension {grown} exceeds max_dim {}", self.budget.max_dim))
        } else {
            match prepare(&t, &self.e, &b, cursor, &self.budget, cfg) {
                Err(reason) => skipped_entry(self.stage, task, &t, n, reason),
                Ok((a, frame, i1, i2)) => {
                    let po = pushout(&a, &self.e, &b, &i1, &i2, self.p)?;
                    let w = po.w.renamed(stage_name(self.stage + 1));
                    let entry = HistoryEntry {
                        stage: self.stage,
                        task,
                        kind: t.kind,
                        member: t.member,
                        frame,
                        i1,
                        i2,
                        chain: po.j1.map.clone(),
                        dist_j1: po.dist_j1,
                        dist_j2: po.dist_j2,
                        skipped: None,
                    };
                    self.e = w;
                    entry
                }
            }
        };
        if entry.skipped.is_some() {
            self.e = self.e.renamed(stage_name(self.stage + 1));
        }
        self.history.push(entry);
        self.stage += 1;
        self.stages.push(self.e.clone());
        Ok(())
    }

    /// Rebuilds every stage from `E₀` and the recorded maps, without search.
    pub fn replay(&self) -> Result<Vec<NormedSpace>> {
        replay_stages(&self.family, self.p, &self.budget, &self.history)
    }

    /// Composition of chain maps `E_j → E_k`.
    pub fn chain_map(&self, j: usize, k: usize) -> DMatrix<f64> {
        let n = self.stages[j].dim();
        let mut m = DMatrix::identity(n, n);
        for h in &self.history[j..k] {
            m = &h.chain * m;
        }
        m
    }

    pub fn log(&self) -> Vec<String> {
        self.history
            .iter()
            .filter_map(|h| h.skipped.as_ref().map(|r| format!("stage {}: skipped {} ({r})", h.stage + 1, h.task)))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (k, s) in self.stages.iter().enumerate() {
            s.save(&dir.join(format!("stage_{k}.space.json")))?;
        }
        let entries: Vec<Value> = self.history.iter().map(entry_to_value).collect();
        let doc = json!({
            "p": f64_to_value(self.p.0),
            "seed": self.budget.seed,
            "max_dim": self.budget.max_dim,
            "samples": self.budget.samples,
            "rng_cursor": self.rng_cursor,
            "family": self.family.iter().map(|s| space_to_value(s.name(), s.expr())).collect::<Vec<_>>(),
            "history": entries,
        });
        fs::write(dir.join("history.json"), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    /// Reads `history.json` and replays it.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("history.json"))?;
        let doc: Value = serde_json::from_str(&text)?;
        let bad = |f: &str| Error::Parse {
            line: None,
            field: f.into(),
            message: "missing or malformed".into(),
        };
        let p = Exponent(doc.get("p").and_then(f64_from_value).ok_or_else(|| bad("p"))?);
        let budget = EnvelopeBudget {
            max_dim: doc.get("max_dim").and_then(Value::as_u64).ok_or_else(|| bad("max_dim"))? as usize,
            samples: doc.get("samples").and_then(Value::as_u64).ok_or_else(|| bad("samples"))? as usize,
            seed: doc.get("seed").and_then(Value::as_u64).ok_or_else(|| bad("seed"))?,
        };
        let family = doc
            .get("family")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("family"))?
            .iter()
            .map(|v| NormedSpace::from_json_str(&v.to_string(), NumberMode::Float))
            .collect::<Result<Vec<_>>>()?;
        let history = doc
            .get("history")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("history"))?
            .iter()
            .enumerate()
            .map(|(i, v)| entry_from_value(v, &format!("history[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let rng_cursor = doc.get("rng_cursor").and_then(Value::as_u64).ok_or_else(|| bad("rng_cursor"))?;
        let stages = replay_stages(&family, p, &budget, &history)?;
        Ok(Self {
            stage: history.len(),
            e: stages.last().expect("E0").clone(),
            p,
            family,
            stages,
            history,
            rng_cursor,
            budget,
        })
    }
}

fn replay_stages(family: &[NormedSpace], p: Exponent, budget: &EnvelopeBudget, history: &[HistoryEntry]) -> Result<Vec<NormedSpace>> {
    let mut e = base_space(family, p, budget.max_dim)?;
    let mut out = vec![e.clone()];
    for h in history {
        let b = family.get(h.member).ok_or_else(|| Error::Precondition(format!("history names member {}", h.member)))?;
        e = if h.skipped.is_some() {
            e.renamed(stage_name(h.stage + 1))
        } else {
            let a = match (&h.kind, &h.frame) {
                (TaskKind::Member, _) => b.clone(),
                (TaskKind::Section { .. }, Some(f)) => calculus::section_f64(&e, f)?,
                (TaskKind::Section { .. }, None) => {
                    return Err(Error::Precondition(format!("stage {} lacks its section frame", h.stage)))
                }
            };
            pushout(&a, &e, b, &h.i1, &h.i2, p)?.w.renamed(stage_name(h.stage + 1))
        };
        out.push(e.clone());
    }
    Ok(out)
}

fn mat_value(m: &DMatrix<f64>) -> Value {
    json!({"rows": m.nrows(), "cols": m.ncols(), "data": matrix_to_value(&Mat::from_dmatrix(m))})
}

fn mat_from(v: &Value, path: &str) -> Result<DMatrix<f64>> {
    let bad = || Error::Parse {
        line: None,
        field: path.into(),
        message: "expected {rows, cols, data}".into(),
    };
    let rows = v.get("rows").and_then(Value::as_u64).ok_or_else(bad)? as usize;
    let cols = v.get("cols").and_then(Value::as_u64).ok_or_else(bad)? as usize;
    let m = matrix_from_value(v.get("data").ok_or_else(bad)?, NumberMode::Float, path, Some(cols))?.to_dmatrix();
    if m.shape() != (rows, cols) {
        return Err(bad());
    }
    Ok(m)
}

fn entry_to_value(h: &HistoryEntry) -> Value {
    let mut o = Map::new();
    o.insert("stage".into(), h.stage.into());
    o.insert("task".into(), h.task.clone().into());
    let (kind, dim) = match h.kind {
        TaskKind::Member => ("member", Value::Null),
        TaskKind::Section { dim } => ("section", dim.into()),
    };
    o.insert("kind".into(), kind.into());
    o.insert("section_dim".into(), dim);
    o.insert("member".into(), h.member.into());
    o.insert("frame".into(), h.frame.as_ref().map_or(Value::Null, mat_value));
    o.insert("i1".into(), mat_value(&h.i1));
    o.insert("i2".into(), mat_value(&h.i2));
    o.insert("chain".into(), mat_value(&h.chain));
    o.insert("dist_j1".into(), f64_to_value(h.dist_j1));
    o.insert("dist_j2".into(), f64_to_value(h.dist_j2));
    o.insert("skipped".into(), h.skipped.clone().map_or(Value::Null, Value::String));
    Value::Object(o)
}

fn entry_from_value(v: &Value, path: &str) -> Result<HistoryEntry> {
    let bad = |f: &str| Error::Parse {
        line: None,
        field: format!("{path}.{f}"),
        message: "missing or malformed".into(),
    };
    let get = |f: &str| v.get(f).ok_or_else(|| bad(f));
    let kind = match get("kind")?.as_str() {
        Some("member") => TaskKind::Member,
        Some("section") => TaskKind::Section {
            dim: get("section_dim")?.as_u64().ok_or_else(|| bad("section_dim"))? as usize,
        },
        _ => return Err(bad("kind")),
    };
    let frame = match get("frame")? {
        Value::Null => None,
        f => Some(mat_from(f, &format!("{path}.frame"))?),
    };
    Ok(HistoryEntry {
        stage: get("stage")?.as_u64().ok_or_else(|| bad("stage"))? as usize,
        task: get("task")?.as_str().ok_or_else(|| bad("task"))?.to_string(),
        kind,
        member: get("member")?.as_u64().ok_or_else(|| bad("member"))? as usize,
        frame,
        i1: mat_from(get("i1")?, &format!("{path}.i1"))?,
        i2: mat_from(get("i2")?, &format!("{path}.i2"))?,
        chain: mat_from(get("chain")?, &format!("{path}.chain"))?,
        dist_j1: f64_from_value(get("dist_j1")?).ok_or_else(|| bad("dist_j1"))?,
        dist_j2: f64_from_value(get("dist_j2")?).ok_or_else(|| bad("dist_j2"))?,
        skipped: get("skipped")?.as_str().map(str::to_string),
    })
}

/// `E₀` followed by `stages` pushout steps.
pub fn build_envelope(
    family: &SpaceFamily,
    stages: usize,
    p: Exponent,
    budget: &EnvelopeBudget,
    cfg: &ToleranceConfig,
) -> Result<EnvelopeState> {
    let mut st = EnvelopeState::new(family, p, *budget)?;
    for _ in 0..stages {
        st.step(cfg)?;
    }
    Ok(st)
}

#[derive(Clone, Debug)]
pub struct UniversalityRow {
    pub stage: usize,
    pub dim: usize,
    pub probe: String,
    pub distortion: f64,
    pub certified: bool,
}

/// Embedding distortion of each probe into every recorded stage. The best
/// map found at stage `k`, pushed along the chain, is a warm start at stage
/// `k + 1`, and the reported value never exceeds its measured distortion.
pub fn universality_report(state: &EnvelopeState, probes: &[NormedSpace], cfg: &ToleranceConfig) -> Vec<UniversalityRow> {
    let per_probe: Vec<Vec<UniversalityRow>> = probes
        .par_iter()
        .map(|probe| {
            let mut rows = Vec::new();
            let mut prev: Option<DMatrix<f64>> = None;
            for (k, e) in state.stages.iter().enumerate() {
                let warm: Vec<DMatrix<f64>> = match (&prev, k) {
                    (Some(u), k) if k > 0 => vec![&state.history[k - 1].chain * u],
                    _ => Vec::new(),
                };
                let mut best = (f64::INFINITY, true, None);
                if probe.dim() <= e.dim() {
                    if let Ok(r) = embed_distortion(probe, e, cfg, &warm) {
                        if let Some(w) = r.witness {
                            best = (w.distortion, w.certified, Some(w.map));
                        }
                    }
                    for u in warm {
                        if let Ok(w) = Witness::measure(u, probe, e) {
                            if w.distortion < best.0 {
                                best = (w.distortion, w.certified, Some(w.map));
                            }
                        }
                    }
                }
                rows.push(UniversalityRow {
                    stage: k,
                    dim: e.dim(),
                    probe: probe.name().to_string(),
                    distortion: best.0,
                    certified: best.1,
                });
                prev = best.2;
            }
            rows
        })
        .collect();
    let mut out: Vec<UniversalityRow> = per_probe.into_iter().flatten().collect();
    out.sort_by_key(|a| a.stage);
    out
}

/// Per-stage metrics next to the universality rows.
#[derive(Clone, Debug)]
pub struct StageMetrics {
    pub stage: usize,
    pub extension_defect: f64,
    pub transitivity_defect: f64,
    pub lambda_prime: f64,
}

/// Extension defect of the next queued task, transitivity over `pairs`
/// sampled unit pairs and `λ′` over sampled sections, for every stage.
pub fn stage_metrics(state: &EnvelopeState, pairs: usize, cfg: &ToleranceConfig) -> Vec<StageMetrics> {
    let queue = task_queue(&state.family, &state.budget);
    state
        .stages
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let ext = queue
                .iter()
                .cycle()
                .skip(k % queue.len())
                .take(queue.len())
                .find(|t| t.kind == TaskKind::Member)
                .and_then(|t| {
                    let b = &state.family[t.member];
                    let w = embed_distortion(b, e, cfg, &[]).ok()?.witness?;
                    let id = DMatrix::identity(b.dim(), b.dim());
                    extension_defect(e, b, &id, &w.map, 0.0, cfg).ok()
                })
                .unwrap_or(f64::INFINITY);
            let sample = sample_unit_pairs(e, pairs, linalg::mix_seed(state.budget.seed, k as u64));
            StageMetrics {
                stage: k,
                extension_defect: ext,
                transitivity_defect: transitivity_defect(e, &sample, cfg),
                lambda_prime: lambda_prime(e, state.budget.samples, state.budget.seed, cfg),
            }
        })
        .collect()
}

pub fn write_report_csv<W: std::io::Write>(
    state: &EnvelopeState,
    rows: &[UniversalityRow],
    metrics: &[StageMetrics],
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "stage",
        "dim",
        "probe",
        "distortion",
        "extension_defect",
        "transitivity_defect",
        "lambda_prime",
        "p",
        "seed",
        "certified",
    ])?;
    for r in rows {
        let m = metrics.iter().find(|m| m.stage == r.stage);
        let f = |g: fn(&StageMetrics) -> f64| m.map_or(String::new(), |m| fmt_f64(g(m)));
        out.write_record([
            r.stage.to_string(),
            r.dim.to_string(),
            r.probe.clone(),
            fmt_f64(r.distortion),
            f(|m| m.extension_defect),
            f(|m| m.transitivity_defect),
            f(|m| m.lambda_prime),
            fmt_f64(state.p.0),
            state.budget.seed.to_string(),
            r.certified.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::with_seed(7)
    }

    #[test]
    fn zero_stages_is_the_sum() {
        let f = SpaceFamily::from_spaces(&[NormedSpace::l1(2), NormedSpace::linf(3)], &cfg());
        let st = build_envelope(&f, 0, Exponent::TWO, &EnvelopeBudget::default(), &cfg()).unwrap();
        assert_eq!(st.e.dim(), 5);
        assert!(st.e.tree_eq(&calculus::lp_sum(Exponent::TWO, &f.spaces()).unwrap()));
    }

    #[test]
    fn queue_lists_members_then_sections() {
        let fam = [NormedSpace::l1(2), NormedSpace::linf(3)];
        let q = task_queue(&fam, &EnvelopeBudget::default());
        assert_eq!(q.len(), 2 + 1 + 2);
        assert_eq!(q[0].kind, TaskKind::Member);
        assert_eq!(q[4].kind, TaskKind::Section { dim: 2 });
    }

    #[test]
    fn history_round_trips_through_a_directory() {
        let f = SpaceFamily::from_spaces(&[NormedSpace::l1(2)], &cfg());
        let budget = EnvelopeBudget {
            max_dim: 3,
            ..EnvelopeBudget::default()
        };
        let st = build_envelope(&f, 3, Exponent::ONE, &budget, &cfg()).unwrap();
        assert!(st.e.dim() <= 3);
        let dir = tempfile::tempdir().unwrap();
        st.save(dir.path()).unwrap();
        let back = EnvelopeState::load(dir.path()).unwrap();
        for (a, b) in st.stages.iter().zip(&back.stages) {
            assert!(a.tree_eq(b));
        }
    }
}
