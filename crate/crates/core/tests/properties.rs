use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use normcalc::amalgam::{pushout, pushout_bound, random_triple};
use normcalc::calculus::{lp_sum, quotient_f64, section_f64};
use normcalc::linalg;
use normcalc::space::{canonicalize, random_space, NumberMode};
use normcalc::witness::Witness;
use normcalc::{Exponent, NormExpr, NormedSpace};

fn space_and_rng(seed: u64) -> (NormedSpace, ChaCha8Rng) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.gen_range(1..=4);
    let x = random_space(n, n + r.gen_range(0..=4), r.gen());
    let x = if r.gen_bool(0.3) { x.dual() } else { x };
    (x, r)
}

fn vec_in(n: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-3.0..3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_homogeneous_and_subadditive(seed in any::<u64>(), t in -5.0f64..5.0) {
        let (x, mut r) = space_and_rng(seed);
        let u = vec_in(x.dim(), &mut r);
        let v = vec_in(x.dim(), &mut r);
        let nu = x.norm(&u);
        prop_assert!((x.norm(&(&u * t)) - t.abs() * nu).abs() <= 1e-9 * (1.0 + nu * t.abs()));
        prop_assert!(x.norm(&(&u + &v)) <= nu + x.norm(&v) + 1e-9);
    }

    #[test]
    fn norming_functional_attains_the_pairing(seed in any::<u64>()) {
        let (x, mut r) = space_and_rng(seed);
        let u = vec_in(x.dim(), &mut r);
        let g = vec_in(x.dim(), &mut r);
        let f = x.norming_functional(&u);
        let d = x.dual();
        prop_assert!((f.dot(&u) - x.norm(&u)).abs() <= 1e-7 * (1.0 + x.norm(&u)));
        prop_assert!((d.norm(&f) - 1.0).abs() <= 1e-7);
        prop_assert!(g.dot(&u).abs() <= d.norm(&g) * x.norm(&u) + 1e-9);
    }

    #[test]
    fn sections_restrict_and_quotients_contract(seed in any::<u64>()) {
        let (x, mut r) = space_and_rng(seed);
        prop_assume!(x.dim() >= 2);
        let k = r.gen_range(1..x.dim());
        let u = linalg::random_frame(x.dim(), k, &mut r);
        let s = section_f64(&x, &u).unwrap();
        let y = vec_in(k, &mut r);
        prop_assert!((s.norm(&y) - x.norm(&(&u * &y))).abs() <= 1e-8 * (1.0 + s.norm(&y)));
        let q = u.transpose();
        let quo = quotient_f64(&x, &q).unwrap();
        let v = vec_in(x.dim(), &mut r);
        prop_assert!(quo.norm(&(&q * &v)) <= x.norm(&v) + 1e-8);
    }

    #[test]
    fn sum_norms_decrease_in_p(seed in any::<u64>()) {
        let (a, mut r) = space_and_rng(seed);
        let (b, _) = space_and_rng(seed.wrapping_add(1));
        let parts = [a, b];
        let v = vec_in(parts[0].dim() + parts[1].dim(), &mut r);
        let n: Vec<f64> = [Exponent::ONE, Exponent::TWO, Exponent::INF]
            .iter()
            .map(|&p| lp_sum(p, &parts).unwrap().norm(&v))
            .collect();
        prop_assert!(n[2] <= n[1] + 1e-9 && n[1] <= n[0] + 1e-9);
    }

    #[test]
    fn canonical_form_is_dual_free_and_stable(seed in any::<u64>(), depth in 1usize..5) {
        let (x, _) = space_and_rng(seed);
        let mut e = x.expr().clone();
        for _ in 0..depth {
            e = NormExpr::Dual { parent: e.into() };
        }
        let c = canonicalize(&e);
        prop_assert!(!c.contains_dual());
        prop_assert_eq!(canonicalize(&c), c);
    }

    #[test]
    fn space_files_round_trip(seed in any::<u64>()) {
        let (x, _) = space_and_rng(seed);
        let back = NormedSpace::from_json_str(&x.to_json_string(), NumberMode::Float).unwrap();
        prop_assert!(back.tree_eq(&x));
    }

    #[test]
    fn distortion_is_at_least_one(seed in any::<u64>()) {
        let (x, mut r) = space_and_rng(seed);
        let (y, _) = space_and_rng(seed ^ 0x9e37);
        prop_assume!(y.dim() == x.dim());
        let t = DMatrix::from_fn(x.dim(), x.dim(), |_, _| r.gen_range(-1.0..1.0));
        prop_assume!(linalg::is_injective(&t, 1e-6));
        let w = Witness::measure(t, &x, &y).unwrap();
        prop_assert!(w.distortion >= 1.0 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pushouts_commute_within_the_bound(seed in any::<u64>(), p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY])) {
        let (a, b1, b2, i1, i2) = random_triple(seed).unwrap();
        let r = pushout(&a, &b1, &b2, &i1, &i2, Exponent(p)).unwrap();
        prop_assert!(r.commutation_residual <= 1e-9);
        prop_assert!(r.dist_j1.max(r.dist_j2) <= pushout_bound(Exponent(p)) + 1e-6);
    }
}
