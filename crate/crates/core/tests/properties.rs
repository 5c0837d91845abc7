use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use presheaf_mp::bp::{bp_run, normalize_log_messages, BpOptions};
use presheaf_mp::calculus::{d_dual, delta, mu_functor, zeta_functor};
use presheaf_mp::energy::{bethe_free_energy, criticality_residual, fe_differential, g_h, hamiltonians_from_factors};
use presheaf_mp::io::{canonical_model_json, model_json, parse_model, to_pretty, Model};
use presheaf_mp::mp::{delta_mp, mp_run, MpOptions};
use presheaf_mp::oracle;
use presheaf_mp::random::*;
use presheaf_mp::{FieldBundle, Hamiltonians, InnerProductWeights};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn presheaf(r: &mut ChaCha8Rng, n: usize, max_size: usize) -> presheaf_mp::FiniteSetPresheaf {
    let p = Arc::new(random_poset(r, n, 0.5));
    random_presheaf(r, p, max_size)
}

fn sup(a: &FieldBundle, b: &FieldBundle) -> f64 {
    a.zip_with(b, |x, y| x - y).sup_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zeta_and_mobius_are_inverse(seed in any::<u64>(), n in 1usize..=8, density in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let p = random_poset(&mut r, n, density);
        let v: Vec<i64> = (0..n).map(|_| r.gen_range(-50..=50)).collect();
        prop_assert_eq!(p.zeta_int(&p.mobius_int(&v)), v.clone());
        prop_assert_eq!(p.mobius_int(&p.zeta_int(&v)), v);
    }

    #[test]
    fn functorial_zeta_and_mobius_are_inverse(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 4);
        let w = random_weights(&mut r, &f);
        let v = random_bundle(&mut r, &f, -1.0, 1.0);
        prop_assert!(sup(&zeta_functor(&f, &w, &mu_functor(&f, &w, &v)), &v) < 1e-12);
        prop_assert!(sup(&mu_functor(&f, &w, &zeta_functor(&f, &w, &v)), &v) < 1e-12);
    }

    #[test]
    fn d_dual_is_the_adjoint_of_delta(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 5);
        let w = random_weights(&mut r, &f);
        let v = random_bundle(&mut r, &f, -1.0, 1.0);
        let l = random_messages(&mut r, &f, -1.0, 1.0);
        let lhs = d_dual(&f, &w, &l).dot(&v, &w);
        let rhs = l.dot(&delta(&f, &v), &f, &w);
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn g_h_inverts_the_differential(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 5);
        let h = random_hamiltonians(&mut r, &f, 2.0);
        let w = InnerProductWeights::ones(&f);
        let l = random_bundle(&mut r, &f, -2.0, 2.0);
        let back = fe_differential(&f, &h, &g_h(&h, &w, &l)).unwrap();
        prop_assert!(sup(&back, &l) < 1e-12);
    }

    #[test]
    fn quotients_preserve_mass_and_commute_with_pushforward(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 6);
        let phi = random_quotient(&mut r, &f, 2);
        let u = random_bundle(&mut r, &f, 0.0, 1.0);
        let pu = phi.push_bundle(&u);
        for a in 0..f.poset().len() {
            let s: f64 = u.get(a).iter().sum();
            let t: f64 = pu.get(a).iter().sum();
            prop_assert!((s - t).abs() < 1e-12);
            for &b in f.poset().below(a) {
                let left = phi.push_vector(b, &f.pushforward(a, b, u.get(a)).unwrap());
                let right = phi.target().pushforward(a, b, pu.get(a)).unwrap();
                prop_assert!(left.iter().zip(&right).all(|(x, y)| (x - y).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn increments_intertwine(seed in any::<u64>(), n in 1usize..=4, widen in any::<bool>()) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 5);
        let mut phi = random_quotient(&mut r, &f, 2);
        if widen {
            phi = widen_target(&mut r, &phi, 2).unwrap();
        }
        let h = random_hamiltonians(&mut r, &f, 1.0);
        let wf = random_weights(&mut r, &f);
        let wg = random_weights(&mut r, phi.target());
        prop_assert!(phi.check_theorem1(&h, &wf, &wg, 10, &mut r).unwrap() < 1e-9);
    }

    #[test]
    fn full_steps_intertwine_under_surjection(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 5);
        let phi = random_quotient(&mut r, &f, 2);
        let h = random_hamiltonians(&mut r, &f, 1.0);
        prop_assert!(phi.check_theorem3(&h, 10, &mut r).unwrap() < 1e-9);
        let (id, ip) = phi.isometry_residuals(5, &mut r);
        prop_assert!(id < 1e-12 && ip < 1e-12);
    }

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 5);
        let l = random_messages(&mut r, &f, -5.0, 5.0);
        let once = normalize_log_messages(&l);
        prop_assert!(normalize_log_messages(&once).sup_distance(&once) < 1e-12);
    }

    #[test]
    fn tree_inference_is_exact(seed in any::<u64>(), n in 1usize..=6) {
        let mut r = rng(seed);
        let spec = random_tree_spec(&mut r, n, 2);
        let factors = random_factors(&mut r, &spec, 1.0);
        let f = spec.presheaf().unwrap();
        let h = hamiltonians_from_factors(&f, &factors).unwrap();
        let marg = oracle::exact_marginals(&spec, &oracle::exact_joint(&spec, &factors).unwrap());
        let bp = bp_run(&f, &h, &BpOptions::default()).unwrap();
        prop_assert!(bp.converged);
        prop_assert!(sup(&bp.beliefs, &marg) < 1e-8);
        let mp = mp_run(&f, &h, &InnerProductWeights::ones(&f), &MpOptions::default()).unwrap();
        prop_assert!(mp.converged);
        prop_assert!(sup(&mp.beliefs, &marg) < 1e-8);
        prop_assert!(criticality_residual(&f, &h, &marg).unwrap().is_critical(1e-8, 1e-6));
    }

    #[test]
    fn bethe_free_energy_is_exact_on_trees(seed in any::<u64>(), n in 1usize..=6) {
        let mut r = rng(seed);
        let spec = random_tree_spec(&mut r, n, 2);
        let factors = random_factors(&mut r, &spec, 1.0);
        let f = spec.presheaf().unwrap();
        let h = hamiltonians_from_factors(&f, &factors).unwrap();
        let joint = oracle::exact_joint(&spec, &factors).unwrap();
        let marg = oracle::exact_marginals(&spec, &joint);
        // -ln Z = E[H_tot] - S(P) at the exact joint.
        let z: f64 = (0..joint.len())
            .map(|k| {
                let x = oracle::decode_joint(&spec, k);
                (0..spec.regions().len())
                    .map(|reg| factors.get(reg)[spec.project_joint(reg, &x)])
                    .product::<f64>()
            })
            .sum();
        let fe = bethe_free_energy(&f, &h, &marg).unwrap();
        prop_assert!((fe + z.ln()).abs() < 1e-10, "{} vs {}", fe, -z.ln());
    }

    #[test]
    fn mp_fixed_points_have_zero_increment(seed in any::<u64>(), n in 2usize..=5) {
        let mut r = rng(seed);
        let spec = random_tree_spec(&mut r, n, 2);
        let f = spec.presheaf().unwrap();
        let h = hamiltonians_from_factors(&f, &random_factors(&mut r, &spec, 0.5)).unwrap();
        let w = InnerProductWeights::ones(&f);
        let run = mp_run(&f, &h, &w, &MpOptions::default()).unwrap();
        prop_assert!(run.converged);
        prop_assert!(delta_mp(&f, &h, &w, &run.messages).sup_norm() < 1e-10);
    }

    #[test]
    fn model_files_round_trip(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let f = presheaf(&mut r, n, 4);
        let h = random_hamiltonians(&mut r, &f, 3.0);
        let m = Model { presheaf: f, hamiltonians: h, weights: None, graphical: None };
        let text = to_pretty(&canonical_model_json(&m));
        let again = parse_model(&text).unwrap();
        prop_assert_eq!(to_pretty(&canonical_model_json(&again)), text);
    }

    #[test]
    fn graphical_and_explicit_forms_agree(seed in any::<u64>(), n in 1usize..=5, extra in 0usize..=2) {
        let mut r = rng(seed);
        let extra = extra.min(n * n.saturating_sub(1) / 2 - n.saturating_sub(1));
        let spec = random_cyclic_spec(&mut r, n, extra, 2);
        let f = spec.presheaf().unwrap();
        let h = Hamiltonians::new(&f, random_bundle(&mut r, &f, -1.0, 1.0)).unwrap();
        let m = Model { presheaf: f, hamiltonians: h, weights: None, graphical: Some(spec) };
        let graphical = parse_model(&to_pretty(&model_json(&m))).unwrap();
        let explicit = parse_model(&to_pretty(&canonical_model_json(&m))).unwrap();
        prop_assert_eq!(
            to_pretty(&canonical_model_json(&graphical)),
            to_pretty(&canonical_model_json(&explicit))
        );
    }
}
