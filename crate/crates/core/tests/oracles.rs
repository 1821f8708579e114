mod common;

use mpkm_core::oracles::{
    bruteforce_fl_opt, bruteforce_kmeans_opt, dependency_graph, exact_alpha_star, exact_radii, exact_radius,
    jv_sequential, kmeans_cost, kmeans_plus_plus, paid_facilities, payment, radius_from_costs,
};
use mpkm_core::{FlInstance, KMeansInstance};
use proptest::prelude::*;
use rand::Rng;

/// Optimal facility location value by recursion over open/closed choices.
fn fl_opt_recursive(inst: &FlInstance) -> f64 {
    fn go(inst: &FlInstance, f: usize, open: &mut Vec<usize>) -> f64 {
        if f == inst.num_facilities() {
            if open.is_empty() {
                return f64::INFINITY;
            }
            let conn: f64 = (0..inst.num_clients())
                .map(|c| open.iter().map(|&g| inst.cost(c, g)).fold(f64::INFINITY, f64::min))
                .sum();
            return conn + open.len() as f64 * inst.lambda();
        }
        let closed = go(inst, f + 1, open);
        open.push(f);
        let opened = go(inst, f + 1, open);
        open.pop();
        closed.min(opened)
    }
    go(inst, 0, &mut Vec::new())
}

#[test]
fn radius_examples() {
    let one = FlInstance::colocated(&common::line(&[0.0]), 4.0).unwrap();
    assert_eq!(exact_radius(&one, 4.0, 0), 2.0);
    assert!((radius_from_costs(&[0.0, 1.0], 4.0) - 2.5f64.sqrt()).abs() <= 1e-12);
    assert_eq!(radius_from_costs(&[0.0], 0.0), 0.0);
    assert_eq!(radius_from_costs(&[], 3.0), f64::INFINITY);
}

#[test]
fn radius_matches_bisection() {
    let mut r = common::rng(42);
    for _ in 0..500 {
        let m = r.gen_range(1..20);
        let costs: Vec<f64> = (0..m).map(|_| r.gen_range(0.0..100.0)).collect();
        let lambda = r.gen_range(0.0..200.0);
        let exact = radius_from_costs(&costs, lambda);
        let reference = common::radius_by_bisection(&costs, lambda);
        assert!((exact - reference).abs() <= 1e-9 * reference.max(1.0), "{exact} vs {reference}");
    }
}

#[test]
fn alpha_star_examples() {
    let inst = FlInstance::colocated(&common::line(&[0.0]), 1.0).unwrap();
    assert_eq!(exact_alpha_star(&inst, &exact_radii(&inst), 0), 1.0);
    let fac = common::line(&[10.0]);
    let cli = common::line(&[0.0]);
    let far = FlInstance::new(&fac, &cli, 1.0).unwrap();
    assert_eq!(exact_alpha_star(&far, &[2.0], 0), 100.0);
    assert_eq!(exact_alpha_star(&far, &[20.0], 0), 400.0);
}

#[test]
fn alpha_star_rescan_on_random_instance() {
    let p = common::uniform(40, 3, 10.0, 7);
    let inst = FlInstance::colocated(&p, 5.0).unwrap();
    let radii = exact_radii(&inst);
    for c in 0..40 {
        let mut best = f64::INFINITY;
        for f in 0..40 {
            let d2 = p.cost(c, f);
            let r2 = radii[f] * radii[f];
            best = best.min(if r2 > d2 { r2 } else { d2 });
        }
        assert_eq!(exact_alpha_star(&inst, &radii, c), best);
    }
}

#[test]
fn payments_and_paid_sets() {
    let inst = FlInstance::colocated(&common::line(&[0.0, 5.0]), 4.0).unwrap();
    let alpha = vec![4.0, 1.0];
    assert_eq!(payment(&inst, &alpha, 0), 4.0);
    assert_eq!(paid_facilities(&inst, &alpha, 1.0), vec![0]);
    assert_eq!(paid_facilities(&inst, &alpha, 0.5), Vec::<usize>::new());
    assert_eq!(paid_facilities(&inst, &alpha, 4.0), vec![0, 1]);
}

#[test]
fn dependency_graph_shares_contributors() {
    let inst = FlInstance::colocated(&common::line(&[0.0, 1.0, 10.0]), 1.0).unwrap();
    let alpha1 = vec![2.0, 0.1, 0.1];
    let adj = dependency_graph(&inst, &alpha1, 1.0, &[0, 1, 2]);
    assert_eq!(adj[0], vec![1]);
    assert_eq!(adj[1], vec![0]);
    assert!(adj[2].is_empty());
}

#[test]
fn fl_opt_examples() {
    let two = FlInstance::colocated(&common::line(&[0.0, 2.0]), 1.0).unwrap();
    assert_eq!(bruteforce_fl_opt(&two).unwrap().0, 2.0);
    let two = two.with_lambda(10.0).unwrap();
    assert_eq!(bruteforce_fl_opt(&two).unwrap().0, 14.0);
    let one = FlInstance::colocated(&common::line(&[3.0]), 6.0).unwrap();
    assert_eq!(bruteforce_fl_opt(&one).unwrap(), (6.0, vec![0]));
}

#[test]
fn fl_opt_guard() {
    let p = common::line(&(0..19).map(f64::from).collect::<Vec<_>>());
    assert!(bruteforce_fl_opt(&FlInstance::colocated(&p, 1.0).unwrap()).is_err());
}

#[test]
fn fl_opt_matches_recursive_enumeration() {
    for seed in 0..10 {
        let p = common::uniform(10, 2, 6.0, seed);
        let inst = FlInstance::colocated(&p, 1.0 + seed as f64 * 3.0).unwrap();
        let (value, set) = bruteforce_fl_opt(&inst).unwrap();
        assert!((value - fl_opt_recursive(&inst)).abs() <= 1e-9 * value);
        let conn: f64 = (0..10).map(|c| set.iter().map(|&f| inst.cost(c, f)).fold(f64::INFINITY, f64::min)).sum();
        assert!((conn + set.len() as f64 * inst.lambda() - value).abs() <= 1e-9 * value);
    }
}

#[test]
fn kmeans_oracle_examples() {
    let p = common::line(&[0.0, 1.0, 2.0, 3.0]);
    assert_eq!(bruteforce_kmeans_opt(&KMeansInstance::new(p.clone(), 2).unwrap()).unwrap().0, 2.0);
    assert_eq!(bruteforce_kmeans_opt(&KMeansInstance::new(p.clone(), 4).unwrap()).unwrap().0, 0.0);
    let pairs = common::line(&[0.0, 1.0, 100.0, 101.0, 200.0, 201.0]);
    let (cost, centers) = bruteforce_kmeans_opt(&KMeansInstance::new(pairs, 3).unwrap()).unwrap();
    assert_eq!(cost, 3.0);
    assert_eq!(centers.iter().map(|c| c / 2).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn kmeans_oracle_guard() {
    let p = common::uniform(40, 2, 10.0, 1);
    assert!(bruteforce_kmeans_opt(&KMeansInstance::new(p, 20).unwrap()).is_err());
}

#[test]
fn jv_single_pair() {
    let fac = common::line(&[3.0]);
    let cli = common::line(&[0.0]);
    let inst = FlInstance::new(&fac, &cli, 2.0).unwrap();
    let jv = jv_sequential(&inst);
    assert_eq!(jv.alpha, vec![11.0]);
    assert_eq!(jv.opened, vec![0]);
    assert_eq!(jv.connection_cost, 9.0);
}

#[test]
fn jv_symmetric_pair_opens_one() {
    let inst = FlInstance::colocated(&common::line(&[0.0, 1.0]), 4.0).unwrap();
    let jv = jv_sequential(&inst);
    assert_eq!(jv.opened.len(), 1);
    assert_eq!(jv.opened, vec![0]);
}

#[test]
fn jv_nine_factor_on_random_instances() {
    for seed in 0..20 {
        let p = common::uniform(30, 2, 10.0, seed);
        let inst = FlInstance::colocated(&p, 1.0 + seed as f64).unwrap();
        let jv = jv_sequential(&inst);
        let dual: f64 = jv.alpha.iter().sum::<f64>() - jv.opened.len() as f64 * inst.lambda();
        assert!(jv.connection_cost <= 9.0 * dual * (1.0 + 1e-9), "seed {seed}");
        for (c, &f) in jv.assign.iter().enumerate() {
            assert!(jv.opened.contains(&f));
            assert_eq!(inst.cost(c, f), jv.opened.iter().map(|&g| inst.cost(c, g)).fold(f64::INFINITY, f64::min));
        }
        // dual feasibility: no facility is overpaid
        for f in 0..30 {
            assert!(payment(&inst, &jv.alpha, f) <= inst.lambda() * (1.0 + 1e-9));
        }
    }
}

#[test]
fn kmeans_plus_plus_returns_distinct_centers() {
    let p = common::uniform(50, 2, 10.0, 3);
    let z = kmeans_plus_plus(&p, 7, 11);
    assert_eq!(z.len(), 7);
    let mut d = z.clone();
    d.dedup();
    assert_eq!(d.len(), 7);
    assert!(kmeans_cost(&p, &z) < kmeans_cost(&p, &z[..1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_radius_is_tight(costs in prop::collection::vec(0.0f64..50.0, 1..15), lambda in 0.0f64..100.0) {
        let r = radius_from_costs(&costs, lambda);
        let paid: f64 = costs.iter().map(|c| (r * r - c).max(0.0)).sum();
        prop_assert!((paid - lambda).abs() <= 1e-9 * lambda.max(1.0) || (lambda == 0.0 && paid == 0.0));
    }

    #[test]
    fn jv_never_overpays(seed in any::<u64>(), lambda in 1.0f64..20.0) {
        let p = common::uniform(12, 2, 5.0, seed);
        let inst = FlInstance::colocated(&p, lambda).unwrap();
        let jv = jv_sequential(&inst);
        for f in 0..12 {
            prop_assert!(payment(&inst, &jv.alpha, f) <= lambda * (1.0 + 1e-9));
        }
        let opt = bruteforce_fl_opt(&inst).unwrap().0;
        prop_assert!(jv.connection_cost + jv.opened.len() as f64 * lambda >= opt * (1.0 - 1e-12));
    }
}

