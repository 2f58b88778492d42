//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns numbers or a JSON string, so
//! the page needs no glue beyond what `wasm-bindgen` generates. The functions
//! are ordinary Rust too and are tested natively.

use ipcc::sim::{generate_dataset, replicate, summarize, SimScenario};
use ipcc::{fit_logistic, pooled_cases, FitConfig, GroupLabel, Hazard, HazardSpec, SurvivalModel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Survival(#[from] ipcc::SurvivalError),
    #[error(transparent)]
    Simulation(#[from] ipcc::sim::SimError),
    #[error(transparent)]
    Estimation(#[from] ipcc::EstimationError),
}

fn weibull(shape: f64, scale: f64, lp: f64) -> Result<SurvivalModel, DemoError> {
    let hazard = Hazard::new(&HazardSpec::Weibull, &[shape, scale])?;
    // One covariate with coefficient lp; evaluated at x = 1 it gives lp.
    Ok(SurvivalModel::new(hazard, vec![lp]))
}

fn grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, DemoError> {
    if points < 2 || !(hi > lo) {
        return Err(DemoError::Argument("need at least two points on a non-empty range".into()));
    }
    Ok((0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect())
}

/// Backward-time density S(a)/μ on `points` equally spaced a in [0, ξ], for a
/// Weibull hazard and linear predictor `lp`.
pub fn density_curve(shape: f64, scale: f64, lp: f64, xi: f64, points: usize) -> Result<Vec<f64>, DemoError> {
    let model = weibull(shape, scale, lp)?;
    Ok(grid(0.0, xi, points)?.into_iter().map(|a| model.backward_density(a, &[1.0], xi)).collect())
}

/// log μ as the survival linear predictor runs over [lo, hi].
pub fn log_mu_curve(shape: f64, scale: f64, xi: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, DemoError> {
    let model = weibull(shape, scale, 1.0)?;
    Ok(grid(lo, hi, points)?.into_iter().map(|lp| model.ln_mu(&[lp], xi)).collect())
}

#[derive(Debug, Serialize)]
pub struct DemoFit {
    pub converged: bool,
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub sd: Vec<f64>,
    /// β̂ from incident cases only.
    pub incident_only: Vec<f64>,
    /// β̂ from incident and prevalent cases pooled, ignoring survival.
    pub pooled: Vec<f64>,
    pub counts: [usize; 3],
}

/// Draws one dataset of the two-covariate scenario and fits it three ways.
pub fn simulate_fit(
    n0: usize,
    n1: usize,
    n2: usize,
    beta: [f64; 2],
    zeta: [f64; 2],
    seed: u64,
) -> Result<DemoFit, DemoError> {
    if n0 == 0 || n1 + n2 == 0 || n0 + n1 + n2 > 20_000 {
        return Err(DemoError::Argument("need controls, some cases and at most 20000 subjects".into()));
    }
    let scn = SimScenario {
        n0,
        n1,
        n2,
        beta: beta.to_vec(),
        zeta: zeta.to_vec(),
        replications: 1,
        seed,
        fit: FitConfig { n_restarts: 0, ..FitConfig::default() },
        ..SimScenario::default()
    };
    scn.validate()?;
    let outcome = replicate(&scn, 0)?;
    let converged = outcome.converged;
    let summary = summarize(&scn, vec![outcome.clone()])?;

    let data = generate_dataset(&scn, 0)?;
    let covariates = [0, 1];
    let config = FitConfig::default();
    let incident_only = if n1 > 0 {
        let subset = data.filter_groups(|g| g != GroupLabel::PrevalentCase);
        fit_logistic(&subset, &covariates, &config)?.theta_hat.beta
    } else {
        vec![f64::NAN; 2]
    };
    let pooled = fit_logistic(&pooled_cases(&data), &covariates, &config)?.theta_hat.beta;

    Ok(DemoFit {
        converged,
        names: summary.names,
        truth: summary.truth,
        estimate: outcome.estimates,
        sd: outcome.variances.iter().map(|v| v.sqrt()).collect(),
        incident_only,
        pooled,
        counts: [n0, n1, n2],
    })
}

#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve_js(shape: f64, scale: f64, lp: f64, xi: f64, points: usize) -> Result<Vec<f64>, String> {
    density_curve(shape, scale, lp, xi, points).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = logMuCurve)]
pub fn log_mu_curve_js(shape: f64, scale: f64, xi: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    log_mu_curve(shape, scale, xi, lo, hi, points).map_err(|e| e.to_string())
}

/// JSON-encoded [`DemoFit`].
#[wasm_bindgen(js_name = simulateFit)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_fit_js(
    n0: usize,
    n1: usize,
    n2: usize,
    beta1: f64,
    beta2: f64,
    zeta1: f64,
    zeta2: f64,
    seed: u32,
) -> Result<String, String> {
    let fit = simulate_fit(n0, n1, n2, [beta1, beta2], [zeta1, zeta2], seed as u64).map_err(|e| e.to_string())?;
    // NaN is not JSON; the page shows null as "–".
    serde_json::to_string(&fit).map_err(|e| e.to_string())
}
