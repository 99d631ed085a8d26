use ndarray::Array2;
use proptest::prelude::*;
use wasser_dual::metric::FiniteMetricSpace;
use wasser_dual::slope::ScalarField;
use wasser_dual::transport::{
    optimal_transport, rubinstein_value, wasserstein_inf, wasserstein_p, Coupling, DiscreteMeasure,
};
use wasser_dual::Exponent;

fn euclidean(pts: &[(f64, f64)]) -> FiniteMetricSpace {
    let n = pts.len();
    let d = Array2::from_shape_fn((n, n), |(i, j)| {
        ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
    });
    FiniteMetricSpace::from_matrix(d).unwrap()
}

fn measure(raw: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::from_masses(raw).unwrap()
}

/// Random instance: points in the plane plus three sparse-ish measures.
fn instance() -> impl Strategy<Value = (FiniteMetricSpace, [DiscreteMeasure; 3])> {
    (2usize..=20).prop_flat_map(|n| {
        let masses = || prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.01f64..1.0], n);
        (
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n),
            masses(),
            masses(),
            masses(),
        )
            .prop_filter_map("zero total mass", |(pts, a, b, c)| {
                let ok = |v: &Vec<f64>| v.iter().sum::<f64>() > 0.0;
                (ok(&a) && ok(&b) && ok(&c))
                    .then(|| (euclidean(&pts), [measure(&a), measure(&b), measure(&c)]))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wp_is_a_metric((s, [a, b, c]) in instance(), p in prop_oneof![Just(1.0), Just(2.0), 1.0f64..6.0]) {
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure| wasserstein_p(&s, x, y, p).unwrap().value;
        prop_assert!(w(&a, &a).abs() <= 1e-8);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-8);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-8);
        if w(&a, &b) <= 1e-12 {
            let gap = a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(gap <= 1e-8);
        }
    }

    #[test]
    fn plans_are_couplings_and_potentials_feasible((s, [a, b, _]) in instance(), p in 1.0f64..4.0) {
        let sol = wasserstein_p(&s, &a, &b, p).unwrap();
        Coupling::new(sol.plan.matrix().clone(), &a, &b).unwrap();
        let cost = sol.plan.lp_cost(s.dist(), p).powf(1.0 / p);
        prop_assert!((cost - sol.value).abs() <= 1e-9 * (1.0 + sol.value));
        let pot = sol.potentials.unwrap();
        let scale = s.diameter().powf(p).max(1.0);
        for x in 0..s.len() {
            for y in 0..s.len() {
                prop_assert!(pot.f_star.values()[x] <= pot.f.values()[y] + s.d(x, y).powf(p) + 1e-12 * scale);
            }
        }
        let dual = a.integrate(&pot.f_star) - b.integrate(&pot.f);
        prop_assert!((sol.value.powf(p) - dual).abs() <= 1e-8 * scale);
    }

    #[test]
    fn w1_matches_lipschitz_certificate((s, [a, b, _]) in instance()) {
        let sol = wasserstein_p(&s, &a, &b, 1.0).unwrap();
        let cert = sol.potentials.unwrap().f_star;
        let value = rubinstein_value(&s, &a, &b, &cert).unwrap();
        prop_assert!((value - sol.value).abs() <= 1e-8);
    }

    #[test]
    fn bottleneck_value_is_a_distance_entry((s, [a, b, _]) in instance()) {
        let sol = wasserstein_inf(&s, &a, &b).unwrap();
        prop_assert!(s.dist().iter().any(|&d| d == sol.value));
        Coupling::new(sol.plan.matrix().clone(), &a, &b).unwrap();
        prop_assert!(sol.plan.support_max_distance(s.dist()) <= sol.value);
    }

    #[test]
    fn holder_monotone((s, [a, b, _]) in instance()) {
        let ps = [1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 12.0];
        let mut last = 0.0;
        for p in ps {
            let w = wasserstein_p(&s, &a, &b, p).unwrap().value;
            prop_assert!(w >= last - 1e-10, "p={} w={} last={}", p, w, last);
            last = w;
        }
        prop_assert!(last <= wasserstein_inf(&s, &a, &b).unwrap().value + 1e-10);
    }
}

#[test]
fn rectangular_problem_and_infinite_exponent() {
    let d = ndarray::array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0]];
    let sol = optimal_transport(
        &[0.5, 0.5],
        &[0.25, 0.25, 0.5],
        &d,
        Exponent::finite(1.0).unwrap(),
    )
    .unwrap();
    assert!((sol.value - 0.75).abs() < 1e-12);
    let inf = optimal_transport(&[0.5, 0.5], &[0.25, 0.25, 0.5], &d, Exponent::Infinite).unwrap();
    assert_eq!(inf.value, 1.0);
}

#[test]
fn shifting_the_potential_leaves_the_gap_unchanged() {
    let s = FiniteMetricSpace::unit_torus(8).unwrap();
    let a = DiscreteMeasure::dirac(8, 0);
    let b = DiscreteMeasure::uniform(8);
    let sol = wasserstein_p(&s, &a, &b, 2.0).unwrap();
    let pot = sol.potentials.unwrap();
    assert_eq!(pot.f.values()[0], 0.0);
    let shifted = ScalarField::new(pot.f.values().iter().map(|v| v + 3.0).collect()).unwrap();
    let gap = wasser_dual::transport::kantorovich_gap(&s, &a, &b, 2.0, &shifted).unwrap();
    assert!(gap.abs() < 1e-10);
}
