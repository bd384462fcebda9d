use esg_core::{sinkhorn_solve, w2, w2_squared_exact, DiscreteMeasure, SinkhornOptions};
use proptest::prelude::*;

fn cloud(n: usize, d: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n),
        prop::collection::vec(0.05f64..1.0, n),
    )
        .prop_map(|(p, raw)| {
            let total: f64 = raw.iter().sum();
            DiscreteMeasure::new(p, raw.iter().map(|w| w / total).collect()).unwrap()
        })
}

fn uniform_cloud(n: usize, d: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec(-1.0f64..1.0, n * d).prop_map(move |p| DiscreteMeasure::uniform(d, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// In one dimension the monotone rearrangement is optimal.
    #[test]
    fn one_dimensional_sorted_matching(xs in prop::collection::vec(-3.0f64..3.0, 1..12), seed in 0u64..1000) {
        let n = xs.len();
        let ys: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * (seed as f64 + 0.5)).sin() * 2.0).collect();
        let (mut sx, mut sy) = (xs.clone(), ys.clone());
        sx.sort_by(f64::total_cmp);
        sy.sort_by(f64::total_cmp);
        let oracle: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        let a = DiscreteMeasure::uniform(1, xs).unwrap();
        let b = DiscreteMeasure::uniform(1, ys).unwrap();
        let (value, _) = w2_squared_exact(&a, &b).unwrap();
        prop_assert!((value - oracle).abs() <= 1e-12 * (1.0 + oracle), "{value} vs {oracle}");
    }

    #[test]
    fn coupling_is_a_sparse_feasible_vertex(
        (a, b) in (1usize..=3, 1usize..=9, 1usize..=9).prop_flat_map(|(d, n, m)| (cloud(n, d), cloud(m, d)))
    ) {
        let (_, c) = w2_squared_exact(&a, &b).unwrap();
        for (r, w) in c.row_sums().iter().zip(a.weights()) {
            prop_assert!((r - w).abs() <= 1e-12);
        }
        for (s, w) in c.col_sums().iter().zip(b.weights()) {
            prop_assert!((s - w).abs() <= 1e-12);
        }
        prop_assert!(c.mass.iter().all(|&g| g >= 0.0));
        prop_assert!(c.nonzeros() < a.len() + b.len());
    }

    #[test]
    fn equal_weights_give_a_permutation(
        (a, b) in (1usize..=3, 1usize..=8).prop_flat_map(|(d, n)| (uniform_cloud(n, d), uniform_cloud(n, d)))
    ) {
        let (_, c) = w2_squared_exact(&a, &b).unwrap();
        let n = a.len();
        let share = 1.0 / n as f64;
        prop_assert!(c.mass.iter().all(|&g| g == 0.0 || (g - share).abs() <= 1e-12));
        prop_assert_eq!(c.nonzeros(), n);
    }

    #[test]
    fn w2_is_a_metric(
        (a, b, c) in (1usize..=2, 1usize..=6, 1usize..=6, 1usize..=6)
            .prop_flat_map(|(d, n, m, k)| (cloud(n, d), cloud(m, d), cloud(k, d)))
    ) {
        let (ab, ba) = (w2(&a, &b).unwrap(), w2(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= w2(&a, &c).unwrap() + w2(&c, &b).unwrap() + 1e-9);
        prop_assert!(w2(&a, &a).unwrap() <= 1e-7);
    }

    /// Any plan Sinkhorn produces is feasible, so it cannot beat the optimum.
    #[test]
    fn optimum_is_below_entropic_plans(
        (a, b) in (1usize..=3, 1usize..=7, 1usize..=7).prop_flat_map(|(d, n, m)| (cloud(n, d), cloud(m, d))),
        eps in 0.5f64..5.0,
    ) {
        let (value, _) = w2_squared_exact(&a, &b).unwrap();
        let sol = sinkhorn_solve(&a, &b, eps, SinkhornOptions::default()).unwrap();
        prop_assert!(value <= sol.transport_cost() + 1e-8);
    }
}
