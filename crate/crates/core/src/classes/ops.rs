use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{family_dedup, ClosureBudget, Member, SpaceFamily, Trace};
use crate::calculus;
use crate::config::ToleranceConfig;
use crate::distance::{bm_distance_upper, embed_distortion};
use crate::linalg;
use crate::space::{Exponent, NormedSpace};

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn coordinate_frame(n: usize, idx: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}

/// Halton index of the `j`-th sampled `k`-frame; depends only on the shape so
/// equal spaces receive equal samples wherever they occur.
fn sample_index(seed: u64, k: usize, j: usize) -> u64 {
    seed.wrapping_mul(1 << 20).wrapping_add((k as u64) << 10).wrapping_add(j as u64)
}

/// Coordinate frames of every size below `n`, then sampled frames.
pub(super) fn frames(n: usize, budget: &ClosureBudget) -> Vec<(String, DMatrix<f64>)> {
    let mut out = Vec::new();
    for k in 1..n {
        for idx in subsets(n, k) {
            let tag = idx.iter().map(|i| i.to_string()).collect::<String>();
            out.push((format!("c{tag}"), coordinate_frame(n, &idx)));
        }
        for j in 0..budget.samples_per_space {
            out.push((format!("s{k}.{j}"), linalg::low_discrepancy_frame(n, k, sample_index(budget.seed, k, j))));
        }
    }
    out
}

fn sections_of(m: &Member, budget: &ClosureBudget) -> Vec<Member> {
    frames(m.dim(), budget)
        .into_iter()
        .filter_map(|(tag, u)| {
            let s = calculus::section_f64(&m.space, &u).ok()?;
            Some(Member {
                space: s.renamed(format!("{}|{tag}", m.space.name())),
                trace: Trace::Section {
                    parent: Box::new(m.trace.clone()),
                    map: u,
                },
            })
        })
        .collect()
}

fn quotients_of(m: &Member, budget: &ClosureBudget) -> Vec<Member> {
    frames(m.dim(), budget)
        .into_iter()
        .filter_map(|(tag, u)| {
            let q = u.transpose();
            let s = calculus::quotient_f64(&m.space, &q).ok()?;
            Some(Member {
                space: s.renamed(format!("{}/{tag}", m.space.name())),
                trace: Trace::Quotient {
                    parent: Box::new(m.trace.clone()),
                    map: q,
                },
            })
        })
        .collect()
}

fn finish(cands: Vec<Member>, budget: &ClosureBudget, cfg: &ToleranceConfig) -> SpaceFamily {
    let mut f = family_dedup(cands, cfg);
    f.members.truncate(budget.max_count);
    f
}

/// Members together with their coordinate and sampled sections.
pub fn op_h(family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> SpaceFamily {
    let mut cands = family.members.clone();
    for m in &family.members {
        cands.extend(sections_of(m, budget));
    }
    finish(cands, budget, cfg)
}

/// Members together with their coordinate and sampled quotients.
pub fn op_q(family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> SpaceFamily {
    let mut cands = family.members.clone();
    for m in &family.members {
        cands.extend(quotients_of(m, budget));
    }
    finish(cands, budget, cfg)
}

pub fn op_dual(family: &SpaceFamily, cfg: &ToleranceConfig) -> SpaceFamily {
    let cands = family
        .members
        .iter()
        .map(|m| Member {
            space: m.space.dual(),
            trace: Trace::Dual(Box::new(m.trace.clone())),
        })
        .collect();
    family_dedup(cands, cfg)
}

fn sum_member(parts: &[&Member]) -> Option<Member> {
    let spaces: Vec<NormedSpace> = parts.iter().map(|m| m.space.clone()).collect();
    let s = calculus::lp_sum(Exponent::TWO, &spaces).ok()?;
    Some(Member {
        space: s,
        trace: Trace::Sum {
            p: Exponent::TWO,
            parts: parts.iter().map(|m| m.trace.clone()).collect(),
        },
    })
}

/// Closes the family under pairwise `⊕₂` up to `max_dim`.
pub fn d2_expand(family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> SpaceFamily {
    let mut cur = family.clone();
    loop {
        let mut cands = cur.members.clone();
        for i in 0..cur.members.len() {
            for j in i..cur.members.len() {
                let (a, b) = (&cur.members[i], &cur.members[j]);
                if a.dim() + b.dim() <= budget.max_dim {
                    cands.extend(sum_member(&[a, b]));
                }
            }
        }
        let next = finish(cands, budget, cfg);
        let grew = next
            .members
            .iter()
            .any(|m| !cur.members.iter().any(|c| c.space.tree_eq(&m.space)));
        cur = next;
        if !grew || cur.len() >= budget.max_count {
            return cur;
        }
    }
}

/// `⊕₂` of members taken round-robin while the dimension stays within `max_dim`.
pub fn sum_sample(family: &SpaceFamily, max_dim: usize) -> Option<Member> {
    let first = family.members.first()?;
    let mut parts: Vec<&Member> = vec![first];
    let mut dim = first.dim();
    let mut stalled = 0;
    let mut i = 1;
    while stalled < family.len() {
        let m = &family.members[i % family.len()];
        i += 1;
        if dim + m.dim() <= max_dim && m.dim() > 0 {
            parts.push(m);
            dim += m.dim();
            stalled = 0;
        } else {
            stalled += 1;
        }
    }
    if parts.len() == 1 {
        return Some(first.clone());
    }
    sum_member(&parts)
}

/// `log` of the smallest distortion of `m` into a member of `prev` of at
/// least its dimension; `∞` when there is none.
pub(super) fn distance_to_family(m: &NormedSpace, prev: &SpaceFamily, cfg: &ToleranceConfig) -> f64 {
    let mut order: Vec<&Member> = prev.members.iter().filter(|p| p.dim() >= m.dim()).collect();
    order.sort_by_key(|p| p.dim());
    let mut best = f64::INFINITY;
    for p in order {
        if m.dim() <= 1 || p.space.tree_eq(m) {
            return 0.0;
        }
        if let Ok(r) = embed_distortion(m, &p.space, cfg, &[]) {
            best = best.min(r.value.max(1.0).ln());
        }
        if best <= cfg.tau_opt {
            break;
        }
    }
    best
}

/// Per-round closure defects.
#[derive(Clone, Debug)]
pub struct ClosureReport {
    /// `(round, defect)`: the largest log-distortion from a member new in
    /// that round into the previous round's family.
    pub rounds: Vec<(usize, f64)>,
}

impl ClosureReport {
    pub fn write_csv<W: std::io::Write>(&self, seed: u64, w: W) -> crate::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "defect", "certified", "seed"])?;
        for (r, d) in &self.rounds {
            out.write_record([r.to_string(), crate::report::fmt_f64(*d), "false".into(), seed.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `d2_expand` once, then `budget.rounds` applications of `H∘Q`.
pub fn hq_closure(family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> (SpaceFamily, ClosureReport) {
    let mut cur = d2_expand(family, budget, cfg);
    let mut rounds = Vec::new();
    for r in 1..=budget.rounds {
        let next = op_h(&op_q(&cur, budget, cfg), budget, cfg);
        let fresh: Vec<&Member> = next
            .members
            .iter()
            .filter(|m| !cur.members.iter().any(|c| c.space.tree_eq(&m.space)))
            .collect();
        let defect = fresh
            .par_iter()
            .map(|m| distance_to_family(&m.space, &cur, cfg))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max);
        rounds.push((r, defect));
        cur = next;
    }
    (cur, ClosureReport { rounds })
}

/// Both descriptions of the ⋆-class and how far apart they are.
#[derive(Clone, Debug)]
pub struct StarReport {
    /// Sections of the dual of one `⊕₂`-sum of a sample.
    pub path_a: SpaceFamily,
    /// `H` of the duals of the `⊕₂`-closure.
    pub path_b: SpaceFamily,
    /// Largest log-distance from a member of `path_a` to `path_b`.
    pub defect_ab: f64,
    pub defect_ba: f64,
}

impl StarReport {
    pub fn defect(&self) -> f64 {
        self.defect_ab.max(self.defect_ba)
    }
}

fn log_bm(x: &NormedSpace, y: &NormedSpace, cfg: &ToleranceConfig) -> f64 {
    if x.dim() <= 1 || x.tree_eq(y) || (x.quad().is_some() && y.quad().is_some()) {
        return 0.0;
    }
    bm_distance_upper(x, y, cfg, &[]).map_or(f64::INFINITY, |r| r.value.max(1.0).ln())
}

fn one_sided(a: &SpaceFamily, b: &SpaceFamily, cfg: &ToleranceConfig) -> f64 {
    a.members
        .par_iter()
        .map(|m| {
            let same: Vec<&Member> = b.members.iter().filter(|p| p.dim() == m.dim()).collect();
            if same.iter().any(|p| p.space.tree_eq(&m.space)) {
                return 0.0;
            }
            same.iter().map(|p| log_bm(&m.space, &p.space, cfg)).fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

pub fn star_family(family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> (SpaceFamily, StarReport) {
    let path_a = match sum_sample(family, budget.max_dim) {
        Some(s) => {
            let dual = Member {
                space: s.space.dual(),
                trace: Trace::Dual(Box::new(s.trace)),
            };
            let seed = SpaceFamily {
                members: vec![dual],
                dedup_eps: cfg.dedup_eps,
                seed: cfg.seed,
            };
            op_h(&seed, budget, cfg)
        }
        None => family.clone(),
    };
    let path_b = op_h(&op_dual(&d2_expand(family, budget, cfg), cfg), budget, cfg);
    let report = StarReport {
        defect_ab: one_sided(&path_a, &path_b, cfg),
        defect_ba: one_sided(&path_b, &path_a, cfg),
        path_a,
        path_b: path_b.clone(),
    };
    (path_b, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::with_seed(5)
    }

    fn single(x: NormedSpace) -> SpaceFamily {
        SpaceFamily::from_spaces(&[x], &cfg())
    }

    #[test]
    fn sections_of_the_octahedron() {
        let f = op_h(&single(NormedSpace::l1(3)), &ClosureBudget::default(), &cfg());
        assert!(f.members.iter().any(|m| m.dim() == 1));
        let l12 = NormedSpace::l1(2);
        assert!(f
            .members
            .iter()
            .any(|m| m.dim() == 2 && super::super::near(&m.space, &l12, 1e-6, &cfg())));
    }

    #[test]
    fn euclidean_families_stay_euclidean() {
        let b = ClosureBudget::default();
        let e = single(NormedSpace::euclidean(3));
        for f in [op_h(&e, &b, &cfg()), op_q(&e, &b, &cfg())] {
            assert!(f.members.iter().all(|m| m.space.quad().is_some()));
        }
        let d = d2_expand(&single(NormedSpace::euclidean(1)), &b, &cfg());
        let dims: Vec<usize> = d.members.iter().map(Member::dim).collect();
        assert_eq!(dims, vec![1, 2, 3, 4]);
        assert!(d.members.iter().all(|m| m.space.quad().is_some()));
    }

    #[test]
    fn dual_of_a_family() {
        let f = op_dual(&single(NormedSpace::l1(3)), &cfg());
        assert!(f.members[0].space.tree_eq(&NormedSpace::linf(3)));
        let back = op_dual(&f, &cfg());
        assert!(back.members[0].space.tree_eq(&NormedSpace::l1(3)));
    }

    #[test]
    fn euclidean_closure_has_zero_defect() {
        let b = ClosureBudget::default();
        let (f, rep) = hq_closure(&single(NormedSpace::euclidean(2)), &b, &cfg());
        assert!(f.members.iter().all(|m| m.space.quad().is_some()));
        assert!(rep.rounds.iter().all(|(_, d)| *d <= 1e-6), "{:?}", rep.rounds);
    }
}
