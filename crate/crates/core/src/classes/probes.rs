use nalgebra::DMatrix;
use rayon::prelude::*;

use super::ops::{distance_to_family, frames, hq_closure, sum_sample};
use super::{ClosureBudget, Member, SpaceFamily};
use crate::calculus;
use crate::config::ToleranceConfig;
use crate::distance::{bifinite_check, embed_distortion, BifiniteReport};
use crate::space::{Exponent, NormedSpace};
use crate::witness::Witness;

#[derive(Clone, Debug)]
pub struct ExchangeRow {
    pub member: String,
    pub sub_dim: usize,
    pub quotient_dual: f64,
    pub subspace_dual: f64,
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct IdentityReport {
    /// `(member, distortion of X → X**)`.
    pub bidual: Vec<(String, f64)>,
    pub exchange: Vec<ExchangeRow>,
    /// Last-round defect of `hq_closure` on the family.
    pub hq_defect: f64,
}

impl IdentityReport {
    pub fn max_bidual(&self) -> f64 {
        self.bidual.iter().map(|(_, d)| *d).fold(1.0, f64::max)
    }

    pub fn max_exchange(&self) -> f64 {
        self.exchange
            .iter()
            .map(|r| r.quotient_dual.max(r.subspace_dual))
            .fold(1.0, f64::max)
    }
}

/// Bidual, exchange and idempotence checks over the family.
pub fn verify_identities(family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> IdentityReport {
    let bidual = family
        .members
        .par_iter()
        .map(|m| {
            let d = calculus::bidual_witness(&m.space).map_or(f64::INFINITY, |w| w.distortion);
            (m.space.name().to_string(), d)
        })
        .collect();
    let jobs: Vec<(&Member, DMatrix<f64>)> = family
        .members
        .iter()
        .flat_map(|m| {
            frames(m.dim(), budget)
                .into_iter()
                .filter(|(tag, _)| tag.starts_with('s'))
                .map(move |(_, e)| (m, e))
        })
        .collect();
    let exchange = jobs
        .par_iter()
        .map(|(m, e)| {
            let q = calculus::quotient_dual_witness(&m.space, e);
            let s = calculus::subspace_dual_witness(&m.space, e);
            let certified = matches!((&q, &s), (Ok(a), Ok(b)) if a.certified && b.certified);
            let d = |w: crate::Result<Witness>| w.map_or(f64::INFINITY, |w| w.distortion);
            ExchangeRow {
                member: m.space.name().to_string(),
                sub_dim: e.ncols(),
                quotient_dual: d(q),
                subspace_dual: d(s),
                certified,
            }
        })
        .collect();
    let (_, closure) = hq_closure(family, budget, cfg);
    IdentityReport {
        bidual,
        exchange,
        hq_defect: closure.rounds.last().map_or(0.0, |(_, d)| *d),
    }
}

#[derive(Clone, Debug)]
pub struct AxiomReport {
    /// `(member, section, log-distance to the family)`.
    pub h_rows: Vec<(String, String, f64)>,
    /// `(A, B, distortion of A ↪ A⊕₂B, distortion of B ↪ A⊕₂B)`.
    pub a0_rows: Vec<(String, String, f64, f64)>,
    pub c_note: &'static str,
}

impl AxiomReport {
    pub fn h_defect(&self) -> f64 {
        self.h_rows.iter().map(|r| r.2).fold(0.0, f64::max)
    }

    pub fn a0_max(&self) -> f64 {
        self.a0_rows.iter().map(|r| r.2.max(r.3)).fold(1.0, f64::max)
    }
}

pub fn check_base_axioms(family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> AxiomReport {
    let jobs: Vec<(&Member, String, DMatrix<f64>)> = family
        .members
        .iter()
        .flat_map(|m| frames(m.dim(), budget).into_iter().map(move |(t, u)| (m, t, u)))
        .collect();
    let h_rows = jobs
        .par_iter()
        .filter_map(|(m, tag, u)| {
            let s = calculus::section_f64(&m.space, u).ok()?;
            Some((m.space.name().to_string(), tag.clone(), distance_to_family(&s, family, cfg)))
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..family.len() {
        for j in i..family.len() {
            let (a, b) = (&family.members[i].space, &family.members[j].space);
            if a.dim() + b.dim() <= budget.max_dim {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    let a0_rows = pairs
        .par_iter()
        .filter_map(|(a, b)| {
            let c = calculus::lp_sum(Exponent::TWO, &[a.clone(), b.clone()]).ok()?;
            let n = c.dim();
            let mut ia = DMatrix::zeros(n, a.dim());
            ia.view_mut((0, 0), (a.dim(), a.dim())).fill_with_identity();
            let mut ib = DMatrix::zeros(n, b.dim());
            ib.view_mut((a.dim(), 0), (b.dim(), b.dim())).fill_with_identity();
            let da = Witness::measure(ia, a, &c).ok()?.distortion;
            let db = Witness::measure(ib, b, &c).ok()?.distortion;
            Some((a.name().to_string(), b.name().to_string(), da, db))
        })
        .collect();
    AxiomReport {
        h_rows,
        a0_rows,
        c_note: "property (C) quantifies over all finite-dimensional spaces and is vacuous for a finite sample",
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumRow {
    pub p: Exponent,
    pub n: usize,
    pub distortion: f64,
    pub flagged: bool,
    pub certified: bool,
}

/// Smallest distortion of `ℓ_pⁿ` into a member, for each `p` and `n ≤ n_max`.
pub fn spectrum_probe(
    family: &SpaceFamily,
    p_grid: &[Exponent],
    n_max: usize,
    eps: f64,
    cfg: &ToleranceConfig,
) -> Vec<SpectrumRow> {
    let jobs: Vec<(Exponent, usize)> = p_grid
        .iter()
        .flat_map(|&p| (1..=n_max).map(move |n| (p, n)))
        .collect();
    jobs.par_iter()
        .map(|&(p, n)| {
            let probe = NormedSpace::lp(p, n);
            let mut best = (f64::INFINITY, true);
            for m in family.members.iter().filter(|m| m.dim() >= n) {
                if let Ok(r) = embed_distortion(&probe, &m.space, cfg, &[]) {
                    if r.value < best.0 {
                        best = (r.value, r.certified);
                    }
                }
                if best.0 <= 1.0 + cfg.tau_opt {
                    break;
                }
            }
            SpectrumRow {
                p,
                n,
                distortion: best.0,
                flagged: best.0 <= 1.0 + eps,
                certified: best.1,
            }
        })
        .collect()
}

pub fn write_spectrum_csv<W: std::io::Write>(rows: &[SpectrumRow], seed: u64, w: W) -> crate::Result<()> {
    use crate::report::fmt_f64;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "n", "distortion", "flagged", "certified", "seed"])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.p.0),
            r.n.to_string(),
            fmt_f64(r.distortion),
            r.flagged.to_string(),
            r.certified.to_string(),
            seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FfReport {
    pub sum_name: String,
    pub embed: f64,
    pub bifinite: Option<BifiniteReport>,
}

/// Embedding of `probe` into a `⊕₂`-sum of the family next to the pairing
/// search for `(probe, probe*)` in the same sum.
pub fn f_vs_ff_experiment(probe: &NormedSpace, family: &SpaceFamily, budget: &ClosureBudget, cfg: &ToleranceConfig) -> FfReport {
    let sum = sum_sample(family, budget.max_dim.max(probe.dim()));
    let Some(sum) = sum.filter(|s| s.dim() >= probe.dim()) else {
        return FfReport {
            sum_name: String::new(),
            embed: f64::INFINITY,
            bifinite: None,
        };
    };
    let y = sum.space;
    let embed = embed_distortion(probe, &y, cfg, &[]).map_or(f64::INFINITY, |r| r.value);
    let id = DMatrix::identity(probe.dim(), probe.dim());
    let bifinite = bifinite_check(probe, &id, &id, &y, 1e-6, cfg).ok();
    FfReport {
        sum_name: y.name().to_string(),
        embed,
        bifinite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::with_seed(2)
    }

    #[test]
    fn spectrum_of_a_euclidean_family() {
        let f = SpaceFamily::from_spaces(&[NormedSpace::euclidean(3)], &cfg());
        let rows = spectrum_probe(&f, &[Exponent(1.0), Exponent::TWO, Exponent::INF], 2, 0.05, &cfg());
        for r in &rows {
            assert_eq!(r.flagged, r.n == 1 || r.p == Exponent::TWO, "{r:?}");
        }
    }

    #[test]
    fn axioms_for_the_euclidean_plane() {
        let f = SpaceFamily::from_spaces(&[NormedSpace::euclidean(2)], &cfg());
        let r = check_base_axioms(&f, &ClosureBudget::default(), &cfg());
        assert!(r.a0_max() <= 1.0 + 1e-9);
        assert!(r.h_defect() <= 1e-9);
    }
}
