use proptest::prelude::*;
use wonham_core::bounds::compute_bounds;
use wonham_core::model::{
    coupling_rate, matrix_exponential, spectral_gap, stationary_distribution, GeneratorMatrix, ModelSpec,
};
use wonham_core::twostate::{gamma_quadrature, lambda1_quadrature, lambda_sum_closed_form, Density2D, Rule};

fn generator() -> impl Strategy<Value = GeneratorMatrix> {
    (2usize..=4).prop_flat_map(|d| {
        prop::collection::vec(0.1f64..5.0, d * d).prop_map(move |r| GeneratorMatrix::from_off_diagonal(d, |i, j| r[i * d + j]))
    })
}

fn spec() -> impl Strategy<Value = ModelSpec> {
    generator().prop_flat_map(|g| {
        let d = g.dim();
        (prop::collection::vec(-2.0f64..2.0, d), 0.2f64..5.0)
            .prop_map(move |(h, sigma)| ModelSpec::stationary(g.clone(), h, sigma).unwrap())
    })
}

/// Two-state spec with `σ ∈ [0.1, 20]`, rate ratio in `[1/4, 4]` and `|Δh| ≥ 0.2`.
fn two_state() -> impl Strategy<Value = ModelSpec> {
    (0.2f64..3.0, -2.0f64..2.0f64, -2.0f64..2.0, 0.2f64..2.0, 0.1f64..20.0).prop_map(|(a, log_ratio, h1, dh, sigma)| {
        let b = a * (log_ratio * 2f64.ln()).exp();
        ModelSpec::stationary(GeneratorMatrix::two_state(a, b), vec![h1, h1 + dh], sigma).unwrap()
    })
}

fn reversal(d: usize) -> Vec<usize> {
    (0..d).rev().collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_rows_sum_to_one(g in generator()) {
        for t in [0.1, 1.0, 10.0] {
            let e = matrix_exponential(&g, t);
            for i in 0..g.dim() {
                prop_assert!((e.row(i).sum() - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn stationary_law_is_a_fixed_point(g in generator()) {
        let mu = stationary_distribution(&g).unwrap().mu;
        for t in [0.5, 2.0] {
            let e = matrix_exponential(&g, t);
            for j in 0..g.dim() {
                let moved: f64 = (0..g.dim()).map(|i| mu[i] * e[(i, j)]).sum();
                prop_assert!((moved - mu[j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn spectral_gap_and_coupling_rate(g in generator()) {
        let gap = spectral_gap(&g).unwrap();
        prop_assert!(gap < 0.0);
        let relabelled = spectral_gap(&g.permuted(&reversal(g.dim()))).unwrap();
        prop_assert!(close(gap, relabelled, 1e-10));
        let r = coupling_rate(&g).unwrap();
        prop_assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn bound_invariances(s in spec(), c in prop::sample::select(vec![1.0, -3.0])) {
        let base = compute_bounds(&s).unwrap();
        prop_assert!(base.azl_limit <= base.azu_limit);
        let shifted = ModelSpec { h: s.h.iter().map(|h| h + c).collect(), ..s.clone() };
        let moved = compute_bounds(&shifted).unwrap();
        // Shifting h rounds each difference `h_j − h_i`; only that rounding is allowed.
        prop_assert_eq!(base.az, moved.az);
        prop_assert_eq!(base.mu_min, moved.mu_min);
        prop_assert_eq!(base.spectral, moved.spectral);
        prop_assert!(close(base.azu_limit, moved.azu_limit, 1e-12));
        prop_assert!(close(base.azl_limit, moved.azl_limit, 1e-12));

        let perm = reversal(s.dim());
        let relabelled = ModelSpec::stationary(
            s.generator.permuted(&perm),
            perm.iter().map(|&i| s.h[i]).collect(),
            s.sigma,
        )
        .unwrap();
        let p = compute_bounds(&relabelled).unwrap();
        for (x, y) in [
            (base.az, p.az),
            (base.mu_min, p.mu_min),
            (base.spectral, p.spectral),
            (base.azu_limit, p.azu_limit),
            (base.azl_limit, p.azl_limit),
        ] {
            prop_assert!(close(x, y, 1e-10), "{} vs {}", x, y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn density_is_normalized_with_mean_mu1(s in two_state()) {
        let dens = Density2D::new(&s).unwrap();
        let mu1 = stationary_distribution(&s.generator).unwrap().mu[0];
        prop_assert!(dens.quad_tolerance <= 1e-6);
        prop_assert!(dens.tail_bound <= 1e-14);
        for rule in [Rule::AdaptiveSimpson, Rule::GaussLegendre] {
            prop_assert!((dens.expect(|x, _| x, rule) - mu1).abs() <= 1e-6);
        }
    }

    #[test]
    fn two_state_identity_and_stability(s in two_state()) {
        let g = gamma_quadrature(&s).unwrap();
        prop_assert!(g < 0.0);
        let rhs = lambda_sum_closed_form(&s).unwrap() - 2.0 * lambda1_quadrature(&s).unwrap();
        prop_assert!((g - rhs).abs() <= 1e-8 * (1.0 + g.abs()));
    }

    #[test]
    fn scale_covariance(s in two_state(), c in 0.5f64..3.0) {
        let scaled = ModelSpec { h: s.h.iter().map(|h| c * h).collect(), sigma: c * s.sigma, ..s.clone() };
        prop_assert!(close(gamma_quadrature(&s).unwrap(), gamma_quadrature(&scaled).unwrap(), 1e-9));
        let (a, b) = (Density2D::new(&s).unwrap(), Density2D::new(&scaled).unwrap());
        for x in [0.1, 0.37, 0.5, 0.81] {
            prop_assert!(close(a.pdf(x).unwrap(), b.pdf(x).unwrap(), 1e-9));
        }
    }
}
