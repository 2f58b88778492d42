use ipcc_wasm_demo::{density_curve, log_mu_curve, simulate_fit, simulate_fit_js};

#[test]
fn density_integrates_to_one() {
    let points = 2001;
    let xi = 25.0;
    let f = density_curve(1.5, 4.0, 0.3, xi, points).unwrap();
    let h = xi / (points - 1) as f64;
    // Trapezoid rule.
    let total = h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[points - 1]));
    assert!((total - 1.0).abs() < 1e-4, "{total}");
    assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-12), "density should be non-increasing");
}

#[test]
fn log_mu_decreases_with_risk() {
    let curve = log_mu_curve(1.0, 1.0, 25.0, -2.0, 2.0, 21).unwrap();
    assert!(curve.windows(2).all(|w| w[1] < w[0]));
    // Exponential with rate e^lp: μ = (1 - e^{-ψξ}) / ψ.
    let psi = (-2.0f64).exp();
    assert!((curve[0] - ((1.0 - (-psi * 25.0).exp()) / psi).ln()).abs() < 1e-10);
}

#[test]
fn bad_arguments_are_errors_not_panics() {
    assert!(density_curve(-1.0, 1.0, 0.0, 25.0, 10).is_err());
    assert!(density_curve(1.0, 1.0, 0.0, 25.0, 1).is_err());
    assert!(log_mu_curve(1.0, 1.0, 25.0, 1.0, -1.0, 10).is_err());
    assert!(simulate_fit(0, 10, 10, [1.0, -1.0], [1.0, -1.0], 1).is_err());
}

#[test]
fn one_dataset_three_fits() {
    let fit = simulate_fit(400, 400, 400, [1.0, -1.0], [1.0, -1.0], 5).unwrap();
    assert!(fit.converged);
    let b = fit.names.iter().position(|n| n.starts_with("beta")).unwrap();
    for j in 0..2 {
        let err = fit.estimate[b + j] - fit.truth[b + j];
        assert!(err.abs() < 4.0 * fit.sd[b + j], "{:?}", fit);
        assert!((fit.incident_only[j] - fit.truth[b + j]).abs() < 0.5);
    }
    // Prevalent cases are survivors, so pooling shrinks both log odds ratios.
    assert!(fit.pooled[0] < fit.estimate[b] && fit.pooled[1] > fit.estimate[b + 1], "{:?}", fit);

    let json = simulate_fit_js(200, 0, 200, 1.0, -1.0, 1.0, -1.0, 9).unwrap();
    assert!(json.contains("\"incident_only\":[null,null]"), "{json}");
}
