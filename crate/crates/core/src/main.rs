use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use normcalc::amalgam;
use normcalc::calculus;
use normcalc::classes::{self, ClosureBudget, SpaceFamily};
use normcalc::distance::{self, EstimateReport};
use normcalc::envelope::{self, EnvelopeBudget, EnvelopeState};
use normcalc::report::fmt_f64;
use normcalc::space::io::{f64_to_value, matrix_from_value, parse_ratio};
use normcalc::space::{Mat, NumberMode};
use normcalc::{Error, Exponent, NormedSpace, Result, ToleranceConfig};

#[derive(Parser, Debug)]
#[command(name = "normcalc", version, about = "Batch driver for the normed-space calculus")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    group: Group,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    #[arg(long, global = true)]
    tol_num: Option<f64>,
    #[arg(long, global = true)]
    tol_opt: Option<f64>,
    #[arg(long, global = true)]
    dedup_eps: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with code 3 when an estimate is uncertified or a budget runs out.
    #[arg(long, global = true)]
    strict: bool,
    /// Read numbers in space files as exact rationals.
    #[arg(long, global = true)]
    exact: bool,
    /// Output file (or directory for families and envelope states).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Group {
    #[command(subcommand)]
    Space(SpaceCmd),
    #[command(subcommand)]
    Calc(CalcCmd),
    #[command(subcommand)]
    Dist(DistCmd),
    #[command(subcommand)]
    Class(ClassCmd),
    #[command(subcommand)]
    Amalgam(AmalgamCmd),
    #[command(subcommand)]
    Envelope(EnvelopeCmd),
}

#[derive(Subcommand, Debug)]
enum SpaceCmd {
    /// Norm of a vector.
    Eval {
        #[arg(long)]
        space: PathBuf,
        /// Comma-separated entries; decimals or p/q.
        #[arg(long, allow_hyphen_values = true)]
        vector: String,
    },
    Dual {
        #[arg(long)]
        space: PathBuf,
    },
    Validate {
        #[arg(long)]
        space: PathBuf,
    },
}

/// Matrices are a JSON file (a row array, or an object with a `map` field)
/// or inline rows such as `1,0;0,1`.
#[derive(Subcommand, Debug)]
enum CalcCmd {
    Section {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        map: String,
    },
    Quotient {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        map: String,
    },
    Sum {
        #[arg(long, value_parser = parse_exponent)]
        p: Exponent,
        #[arg(long, num_args = 1.., required = true)]
        spaces: Vec<PathBuf>,
    },
    Annihilator {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        map: String,
    },
    Restrict {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        map: String,
    },
}

#[derive(Subcommand, Debug)]
enum DistCmd {
    /// Upper estimate of the Banach–Mazur distance.
    Bm {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Smallest distortion found for an embedding of `a` into `b`.
    Embed {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    Bifinite {
        #[arg(long)]
        x: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        a_map: String,
        #[arg(long, allow_hyphen_values = true)]
        a2_map: String,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
}

#[derive(Args, Debug, Clone)]
struct FamilyArgs {
    /// Family directory.
    #[arg(long)]
    family: Option<PathBuf>,
    /// Space files forming the family.
    #[arg(long, num_args = 1..)]
    spaces: Vec<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
struct BudgetArgs {
    #[arg(long, default_value_t = ClosureBudget::default().max_dim)]
    max_dim: usize,
    #[arg(long, default_value_t = ClosureBudget::default().max_count)]
    max_count: usize,
    #[arg(long, default_value_t = ClosureBudget::default().samples_per_space)]
    samples: usize,
    #[arg(long, default_value_t = ClosureBudget::default().rounds)]
    rounds: usize,
}

#[derive(Subcommand, Debug)]
enum ClassCmd {
    Close {
        #[command(flatten)]
        fam: FamilyArgs,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    Star {
        #[command(flatten)]
        fam: FamilyArgs,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    Verify {
        #[command(flatten)]
        fam: FamilyArgs,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    Axioms {
        #[command(flatten)]
        fam: FamilyArgs,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    Spectrum {
        #[command(flatten)]
        fam: FamilyArgs,
        #[arg(long, value_delimiter = ',', value_parser = parse_exponent, default_value = "1,2,inf")]
        p: Vec<Exponent>,
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    Ffexp {
        #[command(flatten)]
        fam: FamilyArgs,
        #[arg(long)]
        probe: PathBuf,
        #[command(flatten)]
        budget: BudgetArgs,
    },
}

#[derive(Subcommand, Debug)]
enum AmalgamCmd {
    /// Pushout of `i1: A → B1`, `i2: A → B2` in the `p`-sum.
    Push {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b1: PathBuf,
        #[arg(long)]
        b2: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        i1: String,
        #[arg(long, allow_hyphen_values = true)]
        i2: String,
        #[arg(long, value_parser = parse_exponent, default_value = "1")]
        p: Exponent,
    },
    /// Co-amalgam of surjections `h1: B1 → A`, `h2: B2 → A`.
    Coamalgam {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b1: PathBuf,
        #[arg(long)]
        b2: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        h1: String,
        #[arg(long, allow_hyphen_values = true)]
        h2: String,
        #[arg(long, value_parser = parse_exponent, default_value = "1")]
        p: Exponent,
    },
    Scan {
        #[arg(long, value_delimiter = ',', value_parser = parse_exponent, default_value = "1,2,inf")]
        p: Vec<Exponent>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

#[derive(Subcommand, Debug)]
enum EnvelopeCmd {
    Build {
        #[command(flatten)]
        fam: FamilyArgs,
        #[arg(long, default_value_t = 6)]
        stages: usize,
        #[arg(long, value_parser = parse_exponent, default_value = "1")]
        p: Exponent,
        #[arg(long, default_value_t = EnvelopeBudget::default().max_dim)]
        max_dim: usize,
        #[arg(long, default_value_t = EnvelopeBudget::default().samples)]
        samples: usize,
    },
    /// Universality rows for the probes, with per-stage metrics if asked.
    Report {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        probes: Vec<PathBuf>,
        #[arg(long)]
        metrics: bool,
        #[arg(long, default_value_t = 2)]
        pairs: usize,
    },
    /// Runs more stages on a saved state.
    Extend {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 1)]
        stages: usize,
    },
    Transitivity {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 4)]
        pairs: usize,
    },
    /// Projection constant of a subspace, or the sampled λ′ without `--map`.
    Lambda {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        map: Option<String>,
        #[arg(long, default_value_t = 1)]
        samples: usize,
    },
}

fn parse_exponent(s: &str) -> std::result::Result<Exponent, String> {
    Exponent::parse(s)
        .filter(|p| p.is_valid())
        .ok_or_else(|| format!("{s:?} is not an exponent in [1, inf]"))
}

fn parse_err(field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line: None,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_number(s: &str, field: &str) -> Result<f64> {
    parse_ratio(s)
        .and_then(|q| num_traits::ToPrimitive::to_f64(&q))
        .ok_or_else(|| parse_err(field, format!("bad number {s:?}")))
}

fn parse_matrix(arg: &str, field: &str, mode: NumberMode) -> Result<Mat> {
    let path = Path::new(arg);
    if path.is_file() {
        let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let rows = v.get("map").unwrap_or(&v);
        return matrix_from_value(rows, mode, field, None);
    }
    let rows: Vec<Value> = arg
        .split(';')
        .map(|r| Value::Array(r.split(',').map(|e| Value::String(e.trim().to_string())).collect()))
        .collect();
    matrix_from_value(&Value::Array(rows), mode, field, None)
}

struct Ctx {
    cfg: ToleranceConfig,
    common: Common,
    /// Set when an estimate is uncertified or a search ran out of budget.
    budget_hit: bool,
}

impl Ctx {
    fn mode(&self) -> NumberMode {
        if self.common.exact {
            NumberMode::Rational
        } else {
            NumberMode::Float
        }
    }

    fn load(&self, path: &Path) -> Result<NormedSpace> {
        NormedSpace::load(path, self.mode())
    }

    fn matrix(&self, arg: &str, field: &str) -> Result<DMatrix<f64>> {
        Ok(parse_matrix(arg, field, NumberMode::Float)?.to_dmatrix())
    }

    fn family(&self, fam: &FamilyArgs) -> Result<SpaceFamily> {
        let mut spaces = match &fam.family {
            Some(dir) => SpaceFamily::load(dir, &self.cfg)?.spaces(),
            None => Vec::new(),
        };
        for f in &fam.spaces {
            spaces.push(self.load(f)?);
        }
        if spaces.is_empty() {
            return Err(Error::Precondition("give --family or --spaces".into()));
        }
        Ok(SpaceFamily::from_spaces(&spaces, &self.cfg))
    }

    fn closure_budget(&self, b: BudgetArgs) -> Result<ClosureBudget> {
        let budget = ClosureBudget {
            max_dim: b.max_dim,
            max_count: b.max_count,
            samples_per_space: b.samples,
            rounds: b.rounds,
            seed: self.cfg.seed,
        };
        budget.check()?;
        Ok(budget)
    }

    fn note_estimate(&mut self, r: &EstimateReport) {
        if !r.certified || !r.converged {
            self.budget_hit = true;
        }
    }

    /// Writes `text` to `--out` or stdout.
    fn emit(&self, text: &str) -> Result<()> {
        match &self.common.out {
            Some(p) => fs::write(p, text)?,
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
            }
        }
        Ok(())
    }

    fn emit_json(&self, mut v: Value) -> Result<()> {
        if let Value::Object(obj) = &mut v {
            obj.insert("config".into(), self.config_value());
        }
        self.emit(&(serde_json::to_string_pretty(&v)? + "\n"))
    }

    fn csv_buffer(&self, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.emit(&String::from_utf8_lossy(&buf))
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.common.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    fn config_value(&self) -> Value {
        json!({
            "tolerances": serde_json::to_value(&self.cfg).unwrap_or(Value::Null),
            "strict": self.common.strict,
            "exact": self.common.exact,
            "threads": self.common.threads,
            "out": self.common.out.as_ref().map(|p| p.display().to_string()),
        })
    }
}

/// `foo.report.json` becomes `foo.witness.json`; without `--out` the witness
/// lands in the working directory as `<verb>.witness.json`.
fn witness_path(out: Option<&Path>, verb: &str) -> PathBuf {
    match out {
        Some(p) => {
            let s = p.to_string_lossy();
            let stem = s
                .strip_suffix(".report.json")
                .or_else(|| s.strip_suffix(".json"))
                .unwrap_or(&s);
            PathBuf::from(format!("{stem}.witness.json"))
        }
        None => PathBuf::from(format!("{verb}.witness.json")),
    }
}

fn run_space(ctx: &mut Ctx, cmd: SpaceCmd) -> Result<()> {
    match cmd {
        SpaceCmd::Eval { space, vector } => {
            let x = ctx.load(&space)?;
            let parts: Vec<&str> = vector.split(',').map(str::trim).collect();
            if parts.len() != x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: x.dim(),
                    found: parts.len(),
                });
            }
            if ctx.common.exact {
                let v = parts
                    .iter()
                    .map(|s| parse_ratio(s).ok_or_else(|| parse_err("vector", format!("bad number {s:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                ctx.emit(&format!("{}\n", x.eval_norm_exact(&v)?))
            } else {
                let v = parts
                    .iter()
                    .map(|s| parse_number(s, "vector"))
                    .collect::<Result<Vec<_>>>()?;
                ctx.emit(&format!("{}\n", fmt_f64(x.eval_norm(&v)?)))
            }
        }
        SpaceCmd::Dual { space } => {
            let x = ctx.load(&space)?;
            ctx.emit(&(x.dual().to_json_string() + "\n"))
        }
        SpaceCmd::Validate { space } => {
            let x = ctx.load(&space)?;
            ctx.emit_json(json!({
                "name": x.name(),
                "dim": x.dim(),
                "valid": true,
                "polyhedral": x.expr().is_polyhedral(),
                "seed": ctx.cfg.seed,
            }))
        }
    }
}

fn run_calc(ctx: &mut Ctx, cmd: CalcCmd) -> Result<()> {
    let mode = ctx.mode();
    match cmd {
        CalcCmd::Section { space, map } => {
            let x = ctx.load(&space)?;
            let s = calculus::section(&x, &parse_matrix(&map, "map", mode)?)?;
            ctx.emit(&(s.to_json_string() + "\n"))
        }
        CalcCmd::Quotient { space, map } => {
            let x = ctx.load(&space)?;
            let s = calculus::quotient(&x, &parse_matrix(&map, "map", mode)?)?;
            ctx.emit(&(s.to_json_string() + "\n"))
        }
        CalcCmd::Sum { p, spaces } => {
            let parts = spaces.iter().map(|f| ctx.load(f)).collect::<Result<Vec<_>>>()?;
            let s = calculus::lp_sum(p, &parts)?;
            ctx.emit(&(s.to_json_string() + "\n"))
        }
        CalcCmd::Annihilator { space, map } => {
            let x = ctx.load(&space)?;
            let s = calculus::annihilator(&x, &ctx.matrix(&map, "map")?)?;
            ctx.emit(&(s.to_json_string() + "\n"))
        }
        CalcCmd::Restrict { space, map } => {
            let e = ctx.load(&space)?;
            let r = calculus::restriction_surjection(&e, &ctx.matrix(&map, "map")?)?;
            let certified = r.op_certified && r.induced.certified;
            ctx.budget_hit |= !certified;
            ctx.emit_json(json!({
                "op_norm": f64_to_value(r.op_norm),
                "induced_distortion": f64_to_value(r.induced.distortion),
                "certified": certified,
                "seed": ctx.cfg.seed,
            }))
        }
    }
}


fn estimate_json(ctx: &Ctx, kind: &str, a: &NormedSpace, b: &NormedSpace, r: &EstimateReport) -> Value {
    let mut v = r.to_json_value();
    if let Value::Object(obj) = &mut v {
        obj.insert("kind".into(), kind.into());
        obj.insert("a".into(), a.name().into());
        obj.insert("b".into(), b.name().into());
        obj.remove("witness");
        obj.insert("seed".into(), ctx.cfg.seed.into());
    }
    v
}

fn run_dist(ctx: &mut Ctx, cmd: DistCmd) -> Result<()> {
    let (verb, a, b) = match cmd {
        DistCmd::Bm { a, b } => ("bm", a, b),
        DistCmd::Embed { a, b } => ("embed", a, b),
        DistCmd::Bifinite {
            x,
            a_map,
            a2_map,
            y,
            eps,
        } => {
            let x = ctx.load(&x)?;
            let y = ctx.load(&y)?;
            let u = ctx.matrix(&a_map, "a_map")?;
            let v = ctx.matrix(&a2_map, "a2_map")?;
            let r = distance::bifinite_check(&x, &u, &v, &y, eps, &ctx.cfg)?;
            ctx.budget_hit |= !r.converged || !r.feasible;
            return ctx.emit_json(json!({
                "dist_u": f64_to_value(r.dist_u),
                "dist_v": f64_to_value(r.dist_v),
                "residual": f64_to_value(r.residual),
                "feasible": r.feasible,
                "converged": r.converged,
                "certified": false,
                "seed": ctx.cfg.seed,
            }));
        }
    };
    let x = ctx.load(&a)?;
    let y = ctx.load(&b)?;
    let r = if verb == "bm" {
        distance::bm_distance_upper(&x, &y, &ctx.cfg, &[])?
    } else {
        distance::embed_distortion(&x, &y, &ctx.cfg, &[])?
    };
    ctx.note_estimate(&r);
    if let Some(w) = &r.witness {
        let path = witness_path(ctx.common.out.as_deref(), verb);
        fs::write(&path, w.to_json_string() + "\n")?;
        eprintln!("witness written to {}", path.display());
    }
    ctx.emit_json(estimate_json(ctx, verb, &x, &y, &r))
}

fn family_json(f: &SpaceFamily) -> Value {
    Value::Array(
        f.members
            .iter()
            .map(|m| json!({"name": m.space.name(), "dim": m.dim()}))
            .collect(),
    )
}

fn run_class(ctx: &mut Ctx, cmd: ClassCmd) -> Result<()> {
    let seed = ctx.cfg.seed;
    match cmd {
        ClassCmd::Close { fam, budget } => {
            let family = ctx.family(&fam)?;
            let budget = ctx.closure_budget(budget)?;
            let (closed, report) = classes::hq_closure(&family, &budget, &ctx.cfg);
            let dir = ctx.out_dir("closure");
            closed.save(&dir)?;
            eprintln!("{} members written to {}", closed.len(), dir.display());
            let mut buf = Vec::new();
            report.write_csv(seed, &mut buf)?;
            std::io::stdout().write_all(&buf)?;
            Ok(())
        }
        ClassCmd::Star { fam, budget } => {
            let family = ctx.family(&fam)?;
            let budget = ctx.closure_budget(budget)?;
            let (star, report) = classes::star_family(&family, &budget, &ctx.cfg);
            let dir = ctx.out_dir("star");
            star.save(&dir)?;
            let v = json!({
                "defect": f64_to_value(report.defect()),
                "defect_ab": f64_to_value(report.defect_ab),
                "defect_ba": f64_to_value(report.defect_ba),
                "path_a": family_json(&report.path_a),
                "path_b": family_json(&report.path_b),
                "family_dir": dir.display().to_string(),
                "certified": false,
                "seed": seed,
                "config": ctx.config_value(),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        }
        ClassCmd::Verify { fam, budget } => {
            let family = ctx.family(&fam)?;
            let budget = ctx.closure_budget(budget)?;
            let r = classes::verify_identities(&family, &budget, &ctx.cfg);
            let exchange: Vec<Value> = r
                .exchange
                .iter()
                .map(|e| {
                    json!({
                        "member": e.member,
                        "sub_dim": e.sub_dim,
                        "quotient_dual": f64_to_value(e.quotient_dual),
                        "subspace_dual": f64_to_value(e.subspace_dual),
                        "certified": e.certified,
                    })
                })
                .collect();
            ctx.emit_json(json!({
                "max_bidual": f64_to_value(r.max_bidual()),
                "max_exchange": f64_to_value(r.max_exchange()),
                "hq_defect": f64_to_value(r.hq_defect),
                "bidual": r.bidual.iter().map(|(n, d)| json!({"member": n, "distortion": f64_to_value(*d)})).collect::<Vec<_>>(),
                "exchange": exchange,
                "seed": seed,
            }))
        }
        ClassCmd::Axioms { fam, budget } => {
            let family = ctx.family(&fam)?;
            let budget = ctx.closure_budget(budget)?;
            let r = classes::check_base_axioms(&family, &budget, &ctx.cfg);
            ctx.emit_json(json!({
                "h_defect": f64_to_value(r.h_defect()),
                "a0_max": f64_to_value(r.a0_max()),
                "h_rows": r.h_rows.iter().map(|(m, s, d)| json!({"member": m, "section": s, "defect": f64_to_value(*d)})).collect::<Vec<_>>(),
                "a0_rows": r.a0_rows.iter().map(|(a, b, x, y)| json!({"a": a, "b": b, "dist_a": f64_to_value(*x), "dist_b": f64_to_value(*y)})).collect::<Vec<_>>(),
                "c_note": r.c_note,
                "certified": false,
                "seed": seed,
            }))
        }
        ClassCmd::Spectrum { fam, p, n_max, eps } => {
            let family = ctx.family(&fam)?;
            let rows = classes::spectrum_probe(&family, &p, n_max, eps, &ctx.cfg);
            ctx.csv_buffer(|buf| classes::write_spectrum_csv(&rows, seed, buf))
        }
        ClassCmd::Ffexp { fam, probe, budget } => {
            let family = ctx.family(&fam)?;
            let budget = ctx.closure_budget(budget)?;
            let probe = ctx.load(&probe)?;
            let r = classes::f_vs_ff_experiment(&probe, &family, &budget, &ctx.cfg);
            let bif = r.bifinite.as_ref().map_or(Value::Null, |b| {
                json!({
                    "dist_u": f64_to_value(b.dist_u),
                    "dist_v": f64_to_value(b.dist_v),
                    "residual": f64_to_value(b.residual),
                    "feasible": b.feasible,
                })
            });
            ctx.emit_json(json!({
                "sum": r.sum_name,
                "embed": f64_to_value(r.embed),
                "bifinite": bif,
                "certified": false,
                "seed": seed,
            }))
        }
    }
}

fn run_amalgam(ctx: &mut Ctx, cmd: AmalgamCmd) -> Result<()> {
    let seed = ctx.cfg.seed;
    match cmd {
        AmalgamCmd::Push { a, b1, b2, i1, i2, p } => {
            let (a, b1, b2) = (ctx.load(&a)?, ctx.load(&b1)?, ctx.load(&b2)?);
            let r = amalgam::pushout(&a, &b1, &b2, &ctx.matrix(&i1, "i1")?, &ctx.matrix(&i2, "i2")?, p)?;
            ctx.budget_hit |= !r.certified();
            ctx.emit_json(json!({
                "p": p.to_string(),
                "dist_j1": f64_to_value(r.dist_j1),
                "dist_j2": f64_to_value(r.dist_j2),
                "bound": f64_to_value(amalgam::pushout_bound(p)),
                "commutation_residual": f64_to_value(r.commutation_residual),
                "certified": r.certified(),
                "seed": seed,
                "w": r.w.to_json_value(),
                "j1": r.j1.to_json_value(),
                "j2": r.j2.to_json_value(),
            }))
        }
        AmalgamCmd::Coamalgam { a, b1, b2, h1, h2, p } => {
            let (a, b1, b2) = (ctx.load(&a)?, ctx.load(&b1)?, ctx.load(&b2)?);
            let r = amalgam::coamalgam(&a, &b1, &b2, &ctx.matrix(&h1, "h1")?, &ctx.matrix(&h2, "h2")?, p, &ctx.cfg)?;
            ctx.budget_hit |= !r.dual.certified();
            ctx.emit_json(json!({
                "p": p.to_string(),
                "norm_h1": f64_to_value(r.norm_h1),
                "norm_h2": f64_to_value(r.norm_h2),
                "residual": f64_to_value(r.residual),
                "certified": r.dual.certified(),
                "seed": seed,
                "f": r.f.to_json_value(),
            }))
        }
        AmalgamCmd::Scan { p, trials } => {
            let rows = amalgam::amalgam_distortion_scan(&p, trials, seed)?;
            ctx.budget_hit |= rows.iter().any(|r| !r.certified);
            ctx.csv_buffer(|buf| amalgam::write_scan_csv(&rows, seed, buf))
        }
    }
}

fn run_envelope(ctx: &mut Ctx, cmd: EnvelopeCmd) -> Result<()> {
    let seed = ctx.cfg.seed;
    match cmd {
        EnvelopeCmd::Build {
            fam,
            stages,
            p,
            max_dim,
            samples,
        } => {
            let family = ctx.family(&fam)?;
            let budget = EnvelopeBudget { max_dim, samples, seed };
            budget.check()?;
            let st = envelope::build_envelope(&family, stages, p, &budget, &ctx.cfg)?;
            let dir = ctx.out_dir("envelope");
            st.save(&dir)?;
            for line in st.log() {
                eprintln!("{line}");
            }
            let v = json!({
                "stage": st.stage,
                "dims": st.stages.iter().map(NormedSpace::dim).collect::<Vec<_>>(),
                "state_dir": dir.display().to_string(),
                "p": p.to_string(),
                "seed": seed,
                "config": ctx.config_value(),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        }
        EnvelopeCmd::Report {
            state,
            probes,
            metrics,
            pairs,
        } => {
            let st = EnvelopeState::load(&state)?;
            let probes = probes.iter().map(|f| ctx.load(f)).collect::<Result<Vec<_>>>()?;
            let rows = envelope::universality_report(&st, &probes, &ctx.cfg);
            ctx.budget_hit |= rows.iter().any(|r| !r.certified);
            let m = if metrics {
                envelope::stage_metrics(&st, pairs, &ctx.cfg)
            } else {
                Vec::new()
            };
            ctx.csv_buffer(|buf| envelope::write_report_csv(&st, &rows, &m, buf))
        }
        EnvelopeCmd::Extend { state, stages } => {
            let mut st = EnvelopeState::load(&state)?;
            for _ in 0..stages {
                st.step(&ctx.cfg)?;
            }
            let dir = ctx.common.out.clone().unwrap_or(state);
            st.save(&dir)?;
            for line in st.log() {
                eprintln!("{line}");
            }
            let v = json!({
                "stage": st.stage,
                "dims": st.stages.iter().map(NormedSpace::dim).collect::<Vec<_>>(),
                "state_dir": dir.display().to_string(),
                "seed": st.budget.seed,
                "config": ctx.config_value(),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        }
        EnvelopeCmd::Transitivity { space, pairs } => {
            let e = ctx.load(&space)?;
            let sample = envelope::sample_unit_pairs(&e, pairs, seed);
            let d = envelope::transitivity_defect(&e, &sample, &ctx.cfg);
            ctx.emit_json(json!({
                "space": e.name(),
                "pairs": pairs,
                "transitivity_defect": f64_to_value(d),
                "certified": false,
                "seed": seed,
            }))
        }
        EnvelopeCmd::Lambda { space, map, samples } => {
            let e = ctx.load(&space)?;
            match map {
                Some(m) => {
                    let a = ctx.matrix(&m, "map")?;
                    let r = envelope::projection_constant(&e, &a, &ctx.cfg)?;
                    ctx.budget_hit |= !r.certified;
                    ctx.emit_json(json!({
                        "space": e.name(),
                        "lambda": f64_to_value(r.value),
                        "projection": r.projection.row_iter().map(|row| row.iter().map(|x| f64_to_value(*x)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                        "certified": r.certified,
                        "seed": seed,
                    }))
                }
                None => {
                    let l = envelope::lambda_prime(&e, samples, seed, &ctx.cfg);
                    ctx.emit_json(json!({
                        "space": e.name(),
                        "lambda_prime": f64_to_value(l),
                        "samples": samples,
                        "certified": false,
                        "seed": seed,
                    }))
                }
            }
        }
    }
}

fn resolve_config(c: &Common) -> Result<ToleranceConfig> {
    let mut cfg = ToleranceConfig::with_seed(c.seed);
    if let Some(r) = c.restarts {
        cfg.restarts = r;
    }
    if let Some(t) = c.tol_num {
        cfg.tau_num = t;
    }
    if let Some(t) = c.tol_opt {
        cfg.tau_opt = t;
    }
    if let Some(e) = c.dedup_eps {
        cfg.dedup_eps = e;
    }
    cfg.check()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => 4,
        Error::BudgetExhausted { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = resolve_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Precondition(e.to_string()))?;
    }
    let mut ctx = Ctx {
        cfg,
        common: cli.common,
        budget_hit: false,
    };
    eprintln!("config {}", ctx.config_value());
    match cli.group {
        Group::Space(c) => run_space(&mut ctx, c)?,
        Group::Calc(c) => run_calc(&mut ctx, c)?,
        Group::Dist(c) => run_dist(&mut ctx, c)?,
        Group::Class(c) => run_class(&mut ctx, c)?,
        Group::Amalgam(c) => run_amalgam(&mut ctx, c)?,
        Group::Envelope(c) => run_envelope(&mut ctx, c)?,
    }
    Ok(ctx.budget_hit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    let strict = cli.common.strict;
    match run(cli) {
        Ok(true) if strict => {
            eprintln!("strict: an estimate is uncertified or ran out of budget");
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == 3 && !strict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(code)
            }
        }
    }
}
