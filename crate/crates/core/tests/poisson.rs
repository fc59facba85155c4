mod common;

use common::{complete3, random_instance, random_source, random_vector, rel_err, Kind};
use exitlab_core::forms::{eval_form, lower_bound_estimate, FormView};
use exitlab_core::poisson::{
    exit_exp_moment, exit_laplace, exit_mean, solve_poisson, DomainMask, ExitFunctionals,
    ExpMoment, Side,
};
use exitlab_core::spectral::dirichlet_pair;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weak_solution_identity(seed in any::<u64>()) {
        let mut inst = random_instance(seed, 15, Kind::General);
        let c = inst.chain.clone();
        let beta = lower_bound_estimate(&c) + inst.rng.random_range(0.1..3.0);
        let xi = random_source(&mut inst.rng, &inst.mask);
        let u = solve_poisson(&c, &inst.mask, beta, &xi, Side::Primal).unwrap();
        let view = FormView::new(c.clone(), beta).unwrap();
        for _ in 0..20 {
            let f: Vec<f64> = random_vector(&mut inst.rng, c.n())
                .into_iter()
                .enumerate()
                .map(|(i, v)| if inst.mask.contains(i) { v } else { 0.0 })
                .collect();
            let lhs = eval_form(&view, &u.values, &f).unwrap();
            let rhs = c.measure().inner(&xi, &f);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn primal_dual_pairing(seed in any::<u64>()) {
        let mut inst = random_instance(seed, 15, Kind::General);
        let c = inst.chain.clone();
        let beta = lower_bound_estimate(&c) + inst.rng.random_range(0.1..3.0);
        let xi = random_source(&mut inst.rng, &inst.mask);
        let u = solve_poisson(&c, &inst.mask, beta, &xi, Side::Primal).unwrap();
        let ud = solve_poisson(&c, &inst.mask, beta, &xi, Side::Dual).unwrap();
        let a = c.measure().inner(&xi, &u.values);
        let b = c.measure().inner(&xi, &ud.values);
        let view = FormView::new(c.clone(), beta).unwrap();
        let e = eval_form(&view, &u.values, &ud.values).unwrap();
        prop_assert!(rel_err(a, b) <= 1e-10);
        prop_assert!(rel_err(a, e) <= 1e-10);
    }

    #[test]
    fn laplace_is_monotone_in_beta(seed in any::<u64>()) {
        let inst = random_instance(seed, 15, Kind::General);
        let mut prev = vec![1.0; inst.chain.n()];
        for beta in [0.1, 0.3, 1.0, 3.0, 10.0] {
            let l = exit_laplace(&inst.chain, &inst.mask, beta).unwrap();
            for (a, b) in l.iter().zip(&prev) {
                prop_assert!(*a <= b + 1e-12);
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(a));
            }
            prev = l;
        }
    }

    #[test]
    fn resolvent_is_positive(seed in any::<u64>()) {
        let mut inst = random_instance(seed, 15, Kind::General);
        let beta = inst.rng.random_range(0.05..5.0);
        let u = solve_poisson(&inst.chain, &inst.mask, beta, &inst.mask.indicator(), Side::Primal).unwrap();
        prop_assert!(u.values.iter().all(|v| *v >= -1e-14));
        let m = exit_mean(&inst.chain, &inst.mask).unwrap();
        prop_assert!(m.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn small_beta_recovers_mean(seed in any::<u64>()) {
        let inst = random_instance(seed, 15, Kind::General);
        let pi = inst.chain.measure().normalized();
        let mean = exit_mean(&inst.chain, &inst.mask).unwrap();
        // the expansion error is of order beta * max E tau
        let beta = 1e-6 / mean.iter().cloned().fold(1.0, f64::max);
        let l = pi.integrate(&exit_laplace(&inst.chain, &inst.mask, beta).unwrap());
        let m = pi.integrate(&mean);
        prop_assert!(rel_err((1.0 - l) / beta, m) <= 1e-4, "{} vs {m}", (1.0 - l) / beta);
    }

    #[test]
    fn exp_moment_edge(seed in any::<u64>()) {
        let inst = random_instance(seed, 12, Kind::Ergodic);
        let l0 = dirichlet_pair(&inst.chain, &inst.mask).unwrap().lambda0;
        let below = exit_exp_moment(&inst.chain, &inst.mask, l0 - 1e-3, l0).unwrap();
        prop_assert!(below.is_finite());
        prop_assert!(below.values().unwrap().iter().all(|v| v.is_finite() && *v >= 1.0));
        prop_assert_eq!(exit_exp_moment(&inst.chain, &inst.mask, l0, l0).unwrap(), ExpMoment::Infinite);
    }
}

#[test]
fn complete_graph_functionals() {
    let c = complete3();
    let m = DomainMask::from_states(3, &[0, 1]).unwrap();
    let f = ExitFunctionals::compute(&c, &m, 0.5, None, Some(1.0)).unwrap();
    assert!((f.mean[0] - 1.0).abs() < 1e-14 && f.mean[2] == 0.0);
    match f.exp_moment.clone().unwrap() {
        ExpMoment::Finite(v) => assert!((v[0] - 2.0).abs() < 1e-13),
        ExpMoment::Infinite => panic!("finite below the edge"),
    }
    let csv = f.to_csv(&c);
    assert!(csv.starts_with("state,laplace,mean,exp_moment\n"));
    assert_eq!(csv.lines().count(), 4);
}
