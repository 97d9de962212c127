use eslab_core::ensemble::{grid_from_gaussian, Axis, DensityState, GaussianDensity, ParticleEnsemble};
use eslab_core::transport::{
    gaussian_quantile_atoms, sinkhorn, w2_1d, w2_discrete_exact, w2_gaussian, GeodesicPath, SinkhornOptions,
};
use proptest::prelude::*;

fn measure(dim: usize, max_atoms: usize) -> impl Strategy<Value = ParticleEnsemble> {
    (2..=max_atoms).prop_flat_map(move |n| {
        (
            prop::collection::vec(-3.0f64..3.0, n * dim),
            prop::collection::vec(0.05f64..1.0, n),
        )
            .prop_map(move |(x, w)| ParticleEnsemble::weighted(x, dim, w).unwrap())
    })
}

fn w2(a: &ParticleEnsemble, b: &ParticleEnsemble) -> f64 {
    w2_discrete_exact(a, b).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_backend_is_a_metric(
        (a, b, c) in (1usize..=3).prop_flat_map(|d| (measure(d, 12), measure(d, 12), measure(d, 12)))
    ) {
        prop_assert!(w2(&a, &a) <= 1e-9);
        prop_assert!((w2(&a, &b) - w2(&b, &a)).abs() <= 1e-9);
        prop_assert!(w2(&a, &c) <= w2(&a, &b) + w2(&b, &c) + 1e-9);
    }

    #[test]
    fn plans_are_feasible(a in measure(2, 15), b in measure(2, 15)) {
        let (_, plan) = w2_discrete_exact(&a, &b).unwrap();
        plan.validate(a.weights(), b.weights()).unwrap();
    }

    #[test]
    fn entropic_cost_bounds_exact_from_above(a in measure(1, 10), b in measure(1, 10)) {
        let exact = w2(&a, &b).powi(2);
        // Near-degenerate weights can stall the scaling iteration; that is
        // reported as a convergence error and is not what this property tests.
        let out = sinkhorn(&a, &b, &SinkhornOptions { epsilon: 5e-2, ..Default::default() });
        prop_assume!(out.is_ok());
        let out = out.unwrap();
        out.plan.validate(a.weights(), b.weights()).unwrap();
        prop_assert!(out.plan.cost >= exact - 1e-9);
    }

    #[test]
    fn one_dimensional_backends_agree(a in measure(1, 20), b in measure(1, 20)) {
        let q = w2_1d(&DensityState::from(a.clone()), &DensityState::from(b.clone())).unwrap();
        prop_assert!((q - w2(&a, &b)).abs() <= 1e-9);
    }
}

#[test]
fn gaussian_backends_agree() {
    let pairs = [(2.0, 1.0, 0.735_758_882_342_884_6, 1.0), (0.0, 1.0, 0.0, 2.0), (-1.0, 0.5, 1.5, 1.8)];
    for (m0, s0, m1, s1) in pairs {
        let g0 = GaussianDensity::univariate(m0, s0).unwrap();
        let g1 = GaussianDensity::univariate(m1, s1).unwrap();
        let closed = w2_gaussian(&g0, &g1).unwrap();
        let atoms = w2(&gaussian_quantile_atoms(&g0, 256).unwrap(), &gaussian_quantile_atoms(&g1, 256).unwrap());
        let grid = |g: &GaussianDensity, m: f64, s: f64| -> DensityState {
            grid_from_gaussian(g, &[Axis::new(m - 9.0 * s, m + 9.0 * s, 4096).unwrap()]).unwrap().into()
        };
        let quantile = w2_1d(&grid(&g0, m0, s0), &grid(&g1, m1, s1)).unwrap();
        assert!((closed - atoms).abs() < 1e-3, "{closed} vs atoms {atoms}");
        assert!((closed - quantile).abs() < 1e-3, "{closed} vs quantile {quantile}");
    }
}

#[test]
fn bimodal_to_unimodal_grid_geodesic_is_tight() {
    let axis = Axis::new(-8.0, 8.0, 2048).unwrap();
    let bimodal = eslab_core::ensemble::GridDensity::from_fn(vec![axis], |x| {
        (-(x[0] - 2.0).powi(2) / 0.5).exp() + (-(x[0] + 2.5).powi(2) / 0.8).exp()
    })
    .unwrap()
    .normalize()
    .unwrap();
    let unimodal = grid_from_gaussian(&GaussianDensity::univariate(0.5, 1.2).unwrap(), &[axis]).unwrap();
    let path = GeodesicPath::uniform(&bimodal.into(), &unimodal.into(), 8).unwrap();
    let slack = path.action().unwrap() - path.w2_squared().unwrap();
    assert!(slack.abs() <= 1e-3, "slack {slack}");
}
