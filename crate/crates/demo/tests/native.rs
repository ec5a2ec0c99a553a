use wonham_demo::{compute_density_curve, compute_filter_sample, compute_gamma_curve, MAX_POINTS};

#[test]
fn density_curve_matches_the_benchmark() {
    let c = compute_density_curve(1.0, 1.0, 1.0, -1.0, 1.0, 200).unwrap();
    assert_eq!(c.x().len(), 200);
    // Midpoint rule on a smooth density that vanishes at both ends.
    let mass: f64 = c.pdf().iter().sum::<f64>() / 200.0;
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    assert!((c.gamma() + 3.176_827_834_681_02).abs() < 1e-10);
    assert_eq!(c.lambda_sum(), -3.0);
    assert!((c.gamma() - (c.lambda_sum() - 2.0 * c.lambda1())).abs() < 1e-8);
    let pdf = c.pdf();
    for i in [40, 70, 99] {
        assert!((pdf[i] - pdf[199 - i]).abs() <= 1e-10 * pdf[i], "{i}");
    }
}

#[test]
fn density_curve_rejects_equal_levels() {
    assert!(compute_density_curve(1.0, 1.0, 0.5, 0.5, 1.0, 10).is_err());
}

#[test]
fn gamma_curve_stays_below_the_bounds() {
    let c = compute_gamma_curve(1.0, 2.0, 1.0, -0.5, 0.2, 10.0, 25).unwrap();
    let sigma = c.sigma();
    assert_eq!(sigma.len(), 25);
    assert!((sigma[0] - 0.2).abs() < 1e-15 && (sigma[24] - 10.0).abs() < 1e-12);
    for g in c.gamma() {
        assert!(g <= c.az() && g <= c.spectral());
    }
    let (gamma, low) = (c.gamma(), c.low_snr());
    assert!((gamma[24] - low[24]).abs() < 1e-4);
    assert!(c.high_snr()[0].is_finite() && c.high_snr()[24].is_nan());
    assert!(compute_gamma_curve(1.0, 2.0, 1.0, -0.5, 2.0, 1.0, 5).is_err());
}

#[test]
fn filter_sample_is_thinned_and_reproducible() {
    let a = compute_filter_sample(1.0, 1.0, 1.0, -1.0, 1.0, 60.0, 1e-3, 10.0, 4).unwrap();
    let b = compute_filter_sample(1.0, 1.0, 1.0, -1.0, 1.0, 60.0, 1e-3, 10.0, 4).unwrap();
    assert_eq!(a.log_dist(), b.log_dist());
    assert!(a.t().len() <= MAX_POINTS + 1);
    assert!(a.state().iter().all(|&s| s == 1.0 || s == 2.0));
    assert_eq!(a.pi1()[0], 1.0);
    assert_eq!(a.pibar1()[0], 0.0);
    assert!(a.slope() < 0.0 && a.slope_error() > 0.0);
    assert!((a.slope() - a.gamma()).abs() < 1.5, "{} vs {}", a.slope(), a.gamma());
    let short = compute_filter_sample(1.0, 1.0, 1.0, -1.0, 1.0, 5.0, 1e-3, 1.0, 4).unwrap();
    assert!(short.slope().is_nan());
    assert!(compute_filter_sample(1.0, 1.0, 1.0, -1.0, 1.0, 1e4, 1e-3, 1.0, 4).is_err());
}
