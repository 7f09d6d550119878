//! Acceptance suite: one pass/fail line per criterion. Runs without the libtest
//! harness so the lines always reach the terminal.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use normcalc::amalgam::{self, pushout};
use normcalc::calculus::{bidual_witness, lp_sum, quotient_dual_witness, restriction_surjection, section_f64, subspace_dual_witness};
use normcalc::classes::{self, ClosureBudget, SpaceFamily};
use normcalc::distance::bm_distance_upper;
use normcalc::envelope::{self, build_envelope, projection_constant, EnvelopeBudget, EnvelopeState};
use normcalc::linalg;
use normcalc::space::{canonicalize, random_space, NumberMode};
use normcalc::{Exponent, NormExpr, NormedSpace, ToleranceConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A V- or H-described random polytope of dimension 2 to 4.
fn random_polytope(seed: u64) -> NormedSpace {
    let mut r = rng(seed);
    let n = r.gen_range(2..=4);
    let k = n + r.gen_range(0..=4);
    let v = random_space(n, k, r.gen());
    if r.gen_bool(0.5) {
        return v;
    }
    let NormExpr::PolytopeV { vertices, .. } = v.expr() else {
        unreachable!()
    };
    NormedSpace::new(format!("h{seed}"), NormExpr::polytope_h(vertices.clone())).unwrap()
}

fn nest_duals(x: &NormedSpace, depth: usize) -> NormedSpace {
    let mut e = x.expr().clone();
    for _ in 0..depth {
        e = NormExpr::Dual { parent: e.into() };
    }
    NormedSpace::new(format!("{}_d{depth}", x.name()), e).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst = 1.0f64;
    let mut canon_ok = true;
    for s in 0..200u64 {
        let x = random_polytope(linalg::mix_seed(1, s));
        let w = bidual_witness(&x).unwrap();
        worst = worst.max(w.distortion);
        let nested = nest_duals(&x, 1 + (s % 3) as usize);
        let c = canonicalize(nested.expr());
        canon_ok &= !c.contains_dual() && canonicalize(&c) == c;
    }
    outcome(
        worst <= 1.0 + 1e-9 && canon_ok,
        format!("max bidual distortion {worst:.3e} - 1 = {:.3e}; canonicalize clean and idempotent: {canon_ok}", worst - 1.0),
    )
}

fn criterion_2() -> Outcome {
    let (mut wq, mut ws) = (1.0f64, 1.0f64);
    let mut certified = 0;
    for s in 0..50u64 {
        let mut r = rng(linalg::mix_seed(2, s));
        let b = random_polytope(r.gen());
        let k = r.gen_range(1..b.dim());
        let e = linalg::random_frame(b.dim(), k, &mut r);
        let q = quotient_dual_witness(&b, &e).unwrap();
        let sd = subspace_dual_witness(&b, &e).unwrap();
        wq = wq.max(q.distortion);
        ws = ws.max(sd.distortion);
        certified += usize::from(q.certified && sd.certified);
    }
    outcome(
        wq <= 1.0 + 1e-6 && ws <= 1.0 + 1e-6,
        format!("quotient-dual max {wq:.12}, subspace-dual max {ws:.12}, certified pairs {certified}/50"),
    )
}

/// `‖f‖_{X*} = max_v |f·v|` read straight off the vertex list.
fn vertex_dual_norm(x: &NormedSpace, f: &[f64]) -> f64 {
    let NormExpr::PolytopeV { vertices, .. } = x.expr() else {
        panic!("expected a vertex description")
    };
    let m = vertices.to_dmatrix();
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * f[j]).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for s in 0..20u64 {
        let mut r = rng(linalg::mix_seed(3, s));
        let na = r.gen_range(1..=2);
        let nb = r.gen_range(1..=2);
        let a = random_space(na, na + r.gen_range(0..=3), r.gen());
        let b = random_space(nb, nb + r.gen_range(0..=3), r.gen());
        let sum_dual = lp_sum(Exponent::TWO, &[a.clone(), b.clone()]).unwrap().dual();
        let dual_sum = lp_sum(Exponent::TWO, &[a.dual(), b.dual()]).unwrap();
        for _ in 0..1000 {
            let f: Vec<f64> = (0..na + nb).map(|_| r.gen_range(-1.0..1.0)).collect();
            let oracle = vertex_dual_norm(&a, &f[..na]).hypot(vertex_dual_norm(&b, &f[na..]));
            let fv = DVector::from_vec(f);
            let x = sum_dual.norm(&fv);
            let y = dual_sum.norm(&fv);
            worst = worst.max((x - y).abs()).max((x - oracle).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max disagreement {worst:.3e} over 20 x 1000 functionals"))
}

fn criterion_4() -> Outcome {
    let (mut res, mut d1, mut d2) = (0.0f64, 1.0f64, 1.0f64);
    for t in 0..100u64 {
        let (a, b1, b2, i1, i2) = amalgam::random_triple(linalg::mix_seed(4, t)).unwrap();
        let p1 = pushout(&a, &b1, &b2, &i1, &i2, Exponent::ONE).unwrap();
        let p2 = pushout(&a, &b1, &b2, &i1, &i2, Exponent::TWO).unwrap();
        res = res.max(p1.commutation_residual).max(p2.commutation_residual);
        d1 = d1.max(p1.dist_j1).max(p1.dist_j2);
        d2 = d2.max(p2.dist_j1).max(p2.dist_j2);
    }
    let line = NormedSpace::euclidean(1);
    let id = DMatrix::identity(1, 1);
    let lp = pushout(&line, &line, &line, &id, &id, Exponent::TWO).unwrap();
    let j1_one = lp.w.norm(&(&lp.j1.map * DVector::from_element(1, 1.0)));
    let line_ok = (j1_one - 0.5f64.sqrt()).abs() <= 1e-7;
    let grid = [Exponent::ONE, Exponent(1.5), Exponent::TWO, Exponent(4.0), Exponent::INF];
    let scan = amalgam::amalgam_distortion_scan(&grid, 3, 4).unwrap();
    let scan_ok = scan.iter().all(|r| {
        let closed = if r.p.is_inf() { 2.0 } else { 2f64.powf(1.0 - 1.0 / r.p.0) };
        let bound_ok = (r.bound - closed).abs() <= 1e-12;
        let line_hits = r.trial != 0 || (r.dist_j1 - closed).abs() <= 1e-7;
        bound_ok && line_hits && r.dist_j1.max(r.dist_j2) <= closed + 1e-6
    });
    outcome(
        res <= 1e-12 && d1 <= 1.0 + 1e-7 && d2 <= 2f64.sqrt() + 1e-6 && line_ok && scan_ok,
        format!(
            "residual {res:.3e}; p=1 max {d1:.12}; p=2 max {d2:.9}; |j1(1)| {j1_one:.12}; scan matches 2^(1-1/p): {scan_ok}"
        ),
    )
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus() -> Vec<NormedSpace> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".space.json"))
        .collect();
    files.sort();
    files.iter().map(|f| NormedSpace::load(f, NumberMode::Float).unwrap()).collect()
}

fn criterion_5() -> Outcome {
    let cfg = ToleranceConfig::with_seed(5);
    let spaces = corpus();
    let mut self_worst = 1.0f64;
    let mut r = rng(5);
    for x in &spaces {
        // A random linear image of X, so the search has to recover the map.
        let n = x.dim();
        let t = linalg::random_orthogonal(n, &mut r) * DMatrix::from_fn(n, n, |i, j| if i == j { r.gen_range(0.5..2.0) } else { 0.0 });
        let copy = section_f64(x, &t).unwrap();
        for y in [x, &copy] {
            self_worst = self_worst.max(bm_distance_upper(x, y, &cfg, &[]).unwrap().value);
        }
    }
    let l1 = NormedSpace::l1(2);
    let linf = NormedSpace::linf(2);
    let r = bm_distance_upper(&l1, &linf, &cfg, &[]).unwrap();
    let mismatch = bm_distance_upper(&NormedSpace::l1(2), &NormedSpace::l1(3), &cfg, &[]).unwrap().value;
    let hex = spaces.iter().find(|s| s.name() == "hexagon").unwrap();
    let l2 = NormedSpace::euclidean(2);
    let runs: Vec<_> = (0..2).map(|_| bm_distance_upper(hex, &l2, &cfg, &[]).unwrap()).collect();
    let same = runs[0].value.to_bits() == runs[1].value.to_bits()
        && runs[0].witness.as_ref().unwrap().map == runs[1].witness.as_ref().unwrap().map;
    outcome(
        self_worst <= 1.0 + 1e-7 && r.value <= 1.0 + 1e-6 && r.certified && mismatch == f64::INFINITY && same,
        format!(
            "{} corpus spaces, max d(X,X) {self_worst:.12}; d(l1^2,linf^2) {:.12} certified {}; mismatch {mismatch}; reruns identical {same} (hexagon-l2 {:.9})",
            spaces.len(),
            r.value,
            r.certified,
            runs[0].value
        ),
    )
}

fn euclid_defect(spaces: &[NormedSpace], cfg: &ToleranceConfig) -> f64 {
    spaces
        .iter()
        .map(|x| bm_distance_upper(x, &NormedSpace::euclidean(x.dim()), cfg, &[]).unwrap().value)
        .fold(1.0, f64::max)
}

fn criterion_6() -> Outcome {
    let cfg = ToleranceConfig::with_seed(6);
    let seed = SpaceFamily::from_spaces(&[NormedSpace::euclidean(2)], &cfg);
    let budget = ClosureBudget::default();
    let mut worst = 1.0f64;
    let mut count = 0;
    let mut cur = classes::d2_expand(&seed, &budget, &cfg);
    worst = worst.max(euclid_defect(&cur.spaces(), &cfg));
    for _ in 0..budget.rounds {
        cur = classes::op_h(&classes::op_q(&cur, &budget, &cfg), &budget, &cfg);
        worst = worst.max(euclid_defect(&cur.spaces(), &cfg));
        count += cur.len();
    }
    let (hq, _) = classes::hq_closure(&seed, &budget, &cfg);
    let (star, rep) = classes::star_family(&seed, &budget, &cfg);
    for f in [&hq, &star, &rep.path_a, &rep.path_b] {
        worst = worst.max(euclid_defect(&f.spaces(), &cfg));
        count += f.len();
    }
    let st = build_envelope(&seed, 4, Exponent::TWO, &EnvelopeBudget::default(), &cfg).unwrap();
    worst = worst.max(euclid_defect(&st.stages, &cfg));
    count += st.stages.len();
    outcome(
        worst <= 1.0 + 1e-6,
        format!("{count} spaces over closure rounds, star paths and 4 envelope stages; max bm to l2^k {worst:.12}"),
    )
}

fn criterion_7() -> Outcome {
    let cfg = ToleranceConfig::with_seed(0);
    let seed = SpaceFamily::from_spaces(&[NormedSpace::l1(2)], &cfg);
    let (_, rep) = classes::star_family(&seed, &ClosureBudget::default(), &cfg);
    let d = rep.defect();
    outcome(
        d <= 0.05,
        format!(
            "achieved defect {d:.6} (a->b {:.6}, b->a {:.6}; {} and {} members)",
            rep.defect_ab,
            rep.defect_ba,
            rep.path_a.len(),
            rep.path_b.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = ToleranceConfig::with_seed(0);
    let fam = SpaceFamily::from_spaces(&[NormedSpace::l1(2), NormedSpace::linf(3)], &cfg);
    let st = build_envelope(&fam, 6, Exponent::ONE, &EnvelopeBudget::default(), &cfg).unwrap();
    let probes = [
        lp_sum(Exponent::INF, &[NormedSpace::l1(2), NormedSpace::l1(1)]).unwrap(),
        NormedSpace::linf(2),
    ];
    let rows = envelope::universality_report(&st, &probes, &cfg);
    let mut monotone = true;
    let mut columns = Vec::new();
    for p in &probes {
        let col: Vec<f64> = rows.iter().filter(|r| r.probe == p.name()).map(|r| r.distortion).collect();
        monotone &= col.windows(2).all(|w| w[1] <= w[0] + 1e-6);
        columns.push(format!(
            "{}: [{}]",
            p.name(),
            col.iter().map(|d| format!("{d:.9}")).collect::<Vec<_>>().join(", ")
        ));
    }
    let replay = st.replay().unwrap();
    let mut identical = replay.len() == st.stages.len() && replay.iter().zip(&st.stages).all(|(a, b)| a.tree_eq(b));
    let dir = tempfile::tempdir().unwrap();
    st.save(dir.path()).unwrap();
    let back = EnvelopeState::load(dir.path()).unwrap();
    identical &= back.replay().unwrap().iter().zip(&st.stages).all(|(a, b)| a.tree_eq(b));
    outcome(
        monotone && identical,
        format!("non-increasing {monotone}; replay tree-identical {identical}; {}", columns.join("; ")),
    )
}

fn criterion_9() -> Outcome {
    let cfg = ToleranceConfig::with_seed(9);
    let mut self_worst = 0.0f64;
    for s in 0..10u64 {
        let x = random_polytope(linalg::mix_seed(90, s));
        let id = DMatrix::identity(x.dim(), x.dim());
        self_worst = self_worst.max((projection_constant(&x, &id, &cfg).unwrap().value - 1.0).abs());
    }
    let diag = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
    let pd = projection_constant(&NormedSpace::linf(2), &diag, &cfg).unwrap();
    let mut low = f64::INFINITY;
    for s in 0..100u64 {
        let mut r = rng(linalg::mix_seed(9, s));
        let x = random_polytope(r.gen());
        let k = r.gen_range(1..x.dim());
        let a = linalg::random_frame(x.dim(), k, &mut r);
        low = low.min(projection_constant(&x, &a, &cfg).unwrap().value);
    }
    outcome(
        self_worst <= 1e-9 && (pd.value - 1.0).abs() <= 1e-7 && pd.certified && low >= 1.0 - 1e-9,
        format!(
            "|lambda(X,X)-1| {self_worst:.3e}; lambda(diag, linf^2) {:.12} certified {}; min over 100 random {low:.9}",
            pd.value, pd.certified
        ),
    )
}

fn criterion_10() -> Outcome {
    let (mut op_dev, mut induced) = (0.0f64, 1.0f64);
    for s in 0..50u64 {
        let mut r = rng(linalg::mix_seed(10, s));
        let e = random_polytope(r.gen());
        let k = r.gen_range(1..e.dim());
        let w = linalg::random_frame(e.dim(), k, &mut r);
        let res = restriction_surjection(&e, &w).unwrap();
        op_dev = op_dev.max((res.op_norm - 1.0).abs());
        induced = induced.max(res.induced.distortion);
    }
    outcome(
        op_dev <= 1e-6 && induced <= 1.0 + 1e-6,
        format!("max |op norm - 1| {op_dev:.3e}; max induced distortion {induced:.12}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 duality algebra", criterion_1),
        ("2 exchange identities", criterion_2),
        ("3 l2-sum duality", criterion_3),
        ("4 pushout contract", criterion_4),
        ("5 distance sanity", criterion_5),
        ("6 euclidean stability", criterion_6),
        ("7 star paths", criterion_7),
        ("8 envelope universality", criterion_8),
        ("9 projection constants", criterion_9),
        ("10 restriction surjection", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        let num = name.split(' ').next().unwrap();
        if !filter.is_empty() && !filter.iter().any(|a| a == num) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {name}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
