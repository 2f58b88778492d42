//! Simulated controls, incident and prevalent cases, and the replication studies
//! built on them.
//!
//! Covariates are equicorrelated Gaussians, `X ~ N(0, Σ_X)` with unit variances
//! and correlation ρ. Incident cases are drawn from the exact exponential tilt
//! of that law, `N(Σ_X β, Σ_X)`. Prevalent cases are resampled with replacement
//! from a large `N(0, Σ_X)` pool with weights `exp(xβ + log μ(x))` and then
//! given a backward time from `S(a|x)/μ(x)` by inverse CDF.

mod study;

pub use study::{
    efficiency_curve, equivalence_search, lrt_calibration, misspecification_study, replicate,
    run_scenario, summarize, EfficiencyRow, EquivalenceRow, LrtCalibration, MisspecificationSummary,
    ReplicationOutcome, SimSummary,
};

use crate::estimation::FitConfig;
use crate::rng::{Purpose, StreamRoot};
use crate::stats::gaussian_expectation;
use crate::survival::{Hazard, SurvivalError, SurvivalModel};
use crate::types::{Dataset, HazardSpec, ModelSpec, Subject};
use nalgebra::{DMatrix, DVector};
use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("covariate covariance is not positive definite (rho = {0})")]
    NotPositiveDefinite(f64),
    #[error("tilted resampling degenerate: effective sample size {ess:.0} < 2·n2 = {}; increase the oversample factor", 2 * .n2)]
    OversampleTooSmall { ess: f64, n2: usize },
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error("{failed} of {total} replications did not converge (limit 10%); first: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
}

/// An extra covariate that enters the survival model only, built as
/// `X_extra = Σ_j loadings_j X_j + ε`, `ε ~ N(0, noise_variance)`, and left out of the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmittedCovariate {
    pub loadings: Vec<f64>,
    pub noise_variance: f64,
    pub zeta: f64,
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
    pub beta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub rho: f64,
    pub xi: f64,
    /// Hazard family and natural-scale parameters used to generate backward times.
    pub gen_family: HazardSpec,
    pub gen_params: Vec<f64>,
    /// Hazard family of the fitted model.
    pub fit_family: HazardSpec,
    pub replications: usize,
    pub seed: u64,
    /// Size of the resampling pool as a multiple of n2.
    pub oversample: usize,
    pub omitted: Option<OmittedCovariate>,
    pub fit: FitConfig,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            n0: 500,
            n1: 500,
            n2: 500,
            beta: vec![1.0, -1.0],
            zeta: vec![1.0, -1.0],
            rho: 0.5,
            xi: 25.0,
            gen_family: HazardSpec::Weibull,
            gen_params: vec![1.0, 1.0],
            fit_family: HazardSpec::Weibull,
            replications: 1000,
            seed: 1,
            oversample: 50,
            omitted: None,
            fit: FitConfig::default(),
        }
    }
}

impl SimScenario {
    /// Number of fitted covariates.
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Generated covariates: the fitted ones plus an optional omitted one.
    pub fn generated_dim(&self) -> usize {
        self.dim() + self.omitted.is_some() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.n0 == 0 || self.n1 + self.n2 == 0 {
            return bad("need n0 ≥ 1 and n1 + n2 ≥ 1".into());
        }
        if self.zeta.len() != self.beta.len() {
            return bad(format!("beta has {} entries but zeta has {}", self.beta.len(), self.zeta.len()));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return bad(format!("xi must be positive, got {}", self.xi));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.n2 > 0 && self.oversample < 2 {
            return bad("oversample must be at least 2".into());
        }
        if let Some(o) = &self.omitted {
            if o.loadings.len() != self.dim() || !(o.noise_variance >= 0.0) {
                return bad("omitted covariate needs one loading per covariate and a non-negative noise variance".into());
            }
        }
        Hazard::new(&self.gen_family, &self.gen_params)?;
        if let HazardSpec::PiecewiseConstant { breakpoints } = &self.fit_family {
            crate::types::check_breakpoints(breakpoints, self.xi).map_err(SimError::InvalidScenario)?;
        }
        covariate_cholesky(self).map(|_| ())
    }

    /// The model fitted to each replication.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::full(self.dim(), self.fit_family.clone(), self.xi)
    }

    /// Survival model used for generation, over all generated covariates.
    pub fn generating_model(&self) -> Result<SurvivalModel, SimError> {
        let hazard = Hazard::new(&self.gen_family, &self.gen_params)?;
        let mut zeta = self.zeta.clone();
        if let Some(o) = &self.omitted {
            zeta.push(o.zeta);
        }
        Ok(SurvivalModel::new(hazard, zeta))
    }

    fn beta_full(&self) -> Vec<f64> {
        let mut b = self.beta.clone();
        if self.omitted.is_some() {
            b.push(0.0);
        }
        b
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.generated_dim()).map(|k| format!("x{k}")).collect()
    }
}

/// Covariance of the generated covariates.
pub fn covariate_covariance(scn: &SimScenario) -> DMatrix<f64> {
    let d = scn.dim();
    let mut s = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { scn.rho });
    if let Some(o) = &scn.omitted {
        let l = DVector::from_column_slice(&o.loadings);
        let cross = &s * &l;
        let var = (l.transpose() * &cross)[(0, 0)] + o.noise_variance;
        s = s.resize(d + 1, d + 1, 0.0);
        for j in 0..d {
            s[(d, j)] = cross[j];
            s[(j, d)] = cross[j];
        }
        s[(d, d)] = var;
    }
    s
}

fn covariate_cholesky(scn: &SimScenario) -> Result<DMatrix<f64>, SimError> {
    covariate_covariance(scn).cholesky().map(|c| c.l()).ok_or(SimError::NotPositiveDefinite(scn.rho))
}

fn draw_gaussian<R: Rng>(n: usize, mean: &[f64], chol: &DMatrix<f64>, rng: &mut R) -> Vec<Vec<f64>> {
    let d = mean.len();
    let mut z = vec![0.0; d];
    (0..n)
        .map(|_| {
            z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            (0..d).map(|r| mean[r] + (0..=r).map(|c| chol[(r, c)] * z[c]).sum::<f64>()).collect()
        })
        .collect()
}

/// Control covariates, N(0, Σ_X).
pub fn generate_controls<R: Rng>(n0: usize, scn: &SimScenario, rng: &mut R) -> Result<Vec<Vec<f64>>, SimError> {
    let l = covariate_cholesky(scn)?;
    Ok(draw_gaussian(n0, &vec![0.0; l.nrows()], &l, rng))
}

/// Incident-case covariates, N(Σ_X β, Σ_X).
pub fn generate_incident<R: Rng>(n1: usize, scn: &SimScenario, rng: &mut R) -> Result<Vec<Vec<f64>>, SimError> {
    let sigma = covariate_covariance(scn);
    let l = covariate_cholesky(scn)?;
    let mean = &sigma * DVector::from_vec(scn.beta_full());
    Ok(draw_gaussian(n1, mean.as_slice(), &l, rng))
}

/// Prevalent cases: covariates and backward times.
pub struct PrevalentDraw {
    pub covariates: Vec<Vec<f64>>,
    pub backward_times: Vec<f64>,
    /// Effective sample size (Σw)²/Σw² of the resampling weights.
    pub ess: f64,
}

/// Prevalent cases by weighted resampling of `oversample·n2` control-law draws.
pub fn generate_prevalent<R: Rng>(
    n2: usize,
    scn: &SimScenario,
    pool_rng: &mut R,
    resample_rng: &mut R,
    time_rng: &mut R,
) -> Result<PrevalentDraw, SimError> {
    if n2 == 0 {
        return Ok(PrevalentDraw { covariates: vec![], backward_times: vec![], ess: 0.0 });
    }
    let l = covariate_cholesky(scn)?;
    let model = scn.generating_model()?;
    let beta = scn.beta_full();
    let pool = draw_gaussian(scn.oversample * n2, &vec![0.0; l.nrows()], &l, pool_rng);
    let log_w: Vec<f64> = pool
        .iter()
        .map(|x| x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + model.ln_mu(x, scn.xi))
        .collect();
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - top).exp()).collect();
    let sum: f64 = w.iter().sum();
    let ess = sum * sum / w.iter().map(|v| v * v).sum::<f64>();
    if ess < 2.0 * n2 as f64 {
        return Err(SimError::OversampleTooSmall { ess, n2 });
    }
    if ess < 10.0 * n2 as f64 {
        log::warn!("tilted resampling: effective sample size {ess:.0} is below 10·n2 = {}", 10 * n2);
    }
    let index = WeightedIndex::new(&w).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let covariates: Vec<Vec<f64>> = (0..n2).map(|_| pool[index.sample(resample_rng)].clone()).collect();
    let closed_form = model.hazard.is_unit_shape();
    let mut backward_times = Vec::with_capacity(n2);
    for x in &covariates {
        let u: f64 = time_rng.gen();
        let a = if closed_form {
            model.sample_backward_time(x, scn.xi, u)?
        } else {
            model.sample_backward_time_numeric(x, scn.xi, u)
        };
        backward_times.push(a);
    }
    Ok(PrevalentDraw { covariates, backward_times, ess })
}

/// The dataset of one replication; deterministic in (scenario seed, replication).
pub fn generate_dataset(scn: &SimScenario, replication: u64) -> Result<Dataset, SimError> {
    scn.validate()?;
    let root = StreamRoot::new(scn.seed);
    let controls = generate_controls(scn.n0, scn, &mut root.stream(replication, Purpose::Controls))?;
    let incident = generate_incident(scn.n1, scn, &mut root.stream(replication, Purpose::Incident))?;
    let prevalent = generate_prevalent(
        scn.n2,
        scn,
        &mut root.stream(replication, Purpose::PrevalentCovariates),
        &mut root.stream(replication, Purpose::PrevalentResample),
        &mut root.stream(replication, Purpose::BackwardTimes),
    )?;
    let mut subjects = Vec::with_capacity(scn.n0 + scn.n1 + scn.n2);
    subjects.extend(controls.into_iter().map(Subject::control));
    subjects.extend(incident.into_iter().map(Subject::incident));
    subjects.extend(
        prevalent.covariates.into_iter().zip(prevalent.backward_times).map(|(x, a)| Subject::prevalent(x, a)),
    );
    Ok(Dataset::new(scn.covariate_names(), subjects))
}

/// Generating values of α* and ν* (the unoffset intercepts).
///
/// α* = −βᵀΣβ/2 normalizes the incident tilt of N(0, Σ); ν* = −log E₀[exp(Xβ) μ(X)]
/// is evaluated by Gauss–Hermite quadrature under N(Σβ, Σ).
pub fn true_intercepts(scn: &SimScenario) -> Result<(f64, f64), SimError> {
    let sigma = covariate_covariance(scn);
    let l = covariate_cholesky(scn)?;
    let b = DVector::from_vec(scn.beta_full());
    let mean = &sigma * &b;
    let quad = (b.transpose() * &mean)[(0, 0)];
    let alpha_star = -quad / 2.0;
    let model = scn.generating_model()?;
    let nodes = if l.nrows() <= 2 { 64 } else { 32 };
    let e_mu = gaussian_expectation(mean.as_slice(), &l, nodes, |x| model.mu(x, scn.xi));
    let nu_star = -(quad / 2.0 + e_mu.ln());
    Ok((alpha_star, nu_star))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_with_omitted_covariate() {
        let scn = SimScenario {
            omitted: Some(OmittedCovariate { loadings: vec![0.5, 0.5], noise_variance: 0.25, zeta: 1.0 }),
            ..SimScenario::default()
        };
        let s = covariate_covariance(&scn);
        // Cov(X3, X1) = 0.5 + 0.5ρ, Var(X3) = 0.25(2 + 2ρ) + 0.25
        assert!((s[(2, 0)] - 0.75).abs() < 1e-15);
        assert!((s[(2, 2)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let scn = SimScenario { n0: 20, n1: 20, n2: 20, ..SimScenario::default() };
        let a = generate_dataset(&scn, 3).unwrap();
        let b = generate_dataset(&scn, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(&scn, 4).unwrap());
        assert!(a.subjects.iter().all(|s| s.backward_time.map_or(true, |t| (0.0..=25.0).contains(&t))));
    }

    #[test]
    fn zero_effects_give_closed_form_intercepts() {
        // β = 0, ζ = 0, unit exponential: μ = 1 − e^{−ξ} for everyone.
        let scn = SimScenario { beta: vec![0.0, 0.0], zeta: vec![0.0, 0.0], ..SimScenario::default() };
        let (a, n) = true_intercepts(&scn).unwrap();
        assert_eq!(a, 0.0);
        assert!((n + (1.0 - (-25.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn tiny_oversample_rejected() {
        let scn = SimScenario { n2: 50, oversample: 2, beta: vec![3.0, 3.0], zeta: vec![-3.0, -3.0], ..SimScenario::default() };
        assert!(matches!(generate_dataset(&scn, 0), Err(SimError::OversampleTooSmall { .. })));
    }
}
