//! Maximum-likelihood fitting: the three-group profile fit and the logistic comparators.

use crate::inference::numeric_hessian;
use crate::likelihood::{recover_masses, EmpiricalMasses, Layout, LikelihoodError, ProfileLikelihood};
use crate::optimize::{minimize, BfgsOptions};
use crate::rng::{Purpose, StreamRoot};
use crate::survival::Hazard;
use crate::types::{
    group_counts, validate_dataset, Dataset, GroupCounts, GroupLabel, HazardSpec, ModelSpec,
    ParamVector, Subject,
};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Step of the central-difference Hessian, per unconstrained coordinate.
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("likelihood cannot be evaluated at the initial point: {0}")]
    Initialization(LikelihoodError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error("complete or quasi-complete separation: no finite logistic MLE (|β| = {norm:.1})")]
    Separation { norm: f64 },
    #[error("logistic Newton-Raphson did not converge in {0} iterations")]
    LogisticNonConvergence(usize),
    #[error("the three-group model needs prevalent cases; fit the incident-only logistic model instead")]
    NoPrevalentCases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Convergence threshold on ‖score‖∞ / N.
    pub gradient_tolerance: f64,
    pub initial_theta: Option<ParamVector>,
    /// Perturbed restarts tried when the primary start does not converge.
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            initial_theta: None,
            n_restarts: 3,
            seed: 0,
        }
    }
}

/// A (β, γ) coordinate, addressed on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coordinate {
    Beta(usize),
    Hazard(usize),
    Zeta(usize),
}

/// A coordinate held fixed at a natural-scale value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    pub coordinate: Coordinate,
    pub value: f64,
}

impl Coordinate {
    fn index(self, layout: &Layout) -> Option<usize> {
        let (range, k) = match self {
            Coordinate::Beta(k) => (&layout.beta, k),
            Coordinate::Hazard(k) => (&layout.hazard, k),
            Coordinate::Zeta(k) => (&layout.zeta, k),
        };
        (k < range.len()).then(|| range.start + k)
    }

    fn to_unconstrained(self, value: f64) -> f64 {
        match self {
            Coordinate::Hazard(_) => value.ln(),
            _ => value,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub loglik: f64,
    pub converged: bool,
    pub diagnostic: String,
    /// Ω̂/N over the free unconstrained coordinates, once the inference step has run.
    pub covariance: Option<DMatrix<f64>>,
    pub masses: Option<EmpiricalMasses>,
    pub n_evals: usize,
    pub iterations: usize,
    pub counts: GroupCounts,
    pub layout: Layout,
    pub names: Vec<String>,
    /// θ̂ in optimizer coordinates (log hazard parameters).
    pub unconstrained: Vec<f64>,
    /// Score at θ̂ over all coordinates.
    pub score: Vec<f64>,
    /// Numeric Hessian of ℓ over the free coordinates.
    pub hessian: Option<DMatrix<f64>>,
    pub free: Vec<bool>,
    pub initial_loglik: f64,
}

impl FitResult {
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.free.len()).filter(|&i| self.free[i]).collect()
    }

    /// Largest |score| over free coordinates divided by N.
    pub fn scaled_gradient_norm(&self) -> f64 {
        let n = self.counts.total() as f64;
        self.free_indices().iter().fold(0.0f64, |m, &i| m.max(self.score[i].abs())) / n
    }
}

/// Three-group fit of the profile likelihood.
///
/// With no prevalent cases the problem is the two-sample logistic model, and
/// the fit is delegated to [`fit_logistic`] on controls versus incident cases.
pub fn fit_ipcc(data: &Dataset, spec: &ModelSpec, config: &FitConfig) -> Result<FitResult, EstimationError> {
    let report = validate_dataset(data, spec);
    if !report.is_ok() {
        return Err(EstimationError::InvalidData(report.to_string()));
    }
    if group_counts(data).n2 == 0 {
        let mut res = fit_logistic(data, &spec.incidence_covariates, config)?;
        res.names = Layout::new(spec, group_counts(data)).names(spec, &data.covariate_names);
        return Ok(res);
    }
    fit_profile(data, spec, config, &[])
}

/// Maximizes the profile likelihood with some (β, γ) coordinates held fixed.
pub fn fit_profile(
    data: &Dataset,
    spec: &ModelSpec,
    config: &FitConfig,
    restrictions: &[Restriction],
) -> Result<FitResult, EstimationError> {
    let lik = ProfileLikelihood::new(data, spec)?;
    let layout = lik.layout().clone();
    let counts = lik.counts();
    let n = counts.total() as f64;

    let mut free = vec![true; layout.dim];
    let mut fixed_values = Vec::with_capacity(restrictions.len());
    for r in restrictions {
        let idx = r.coordinate.index(&layout).ok_or_else(|| {
            EstimationError::InvalidData(format!("restricted coordinate {:?} is not in the model", r.coordinate))
        })?;
        free[idx] = false;
        fixed_values.push((idx, r.coordinate.to_unconstrained(r.value)));
    }

    let start = match &config.initial_theta {
        Some(theta) => theta.clone(),
        None => default_initialization(data, spec),
    };
    let mut u0 = layout.to_unconstrained(&start);
    for &(idx, v) in &fixed_values {
        u0[idx] = v;
    }
    let initial_loglik = lik.value(&u0).map_err(EstimationError::Initialization)?;

    let free_idx: Vec<usize> = (0..layout.dim).filter(|&i| free[i]).collect();
    let options = BfgsOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
    };
    let run = |start: &[f64]| {
        let mut full = start.to_vec();
        let mut g_full = vec![0.0; layout.dim];
        let objective = |v: &[f64], g: &mut [f64]| {
            for (k, &i) in free_idx.iter().enumerate() {
                full[i] = v[k];
            }
            let value = lik.value_and_score(&full, &mut g_full).ok()?;
            for (k, &i) in free_idx.iter().enumerate() {
                g[k] = -g_full[i] / n;
            }
            Some(-value / n)
        };
        let v0: Vec<f64> = free_idx.iter().map(|&i| start[i]).collect();
        let out = minimize(objective, &v0, &options);
        let mut u = start.to_vec();
        for (k, &i) in free_idx.iter().enumerate() {
            u[i] = out.x[k];
        }
        (u, out)
    };

    let (mut best_u, mut best) = run(&u0);
    let mut n_evals = best.n_evals;
    let mut iterations = best.iterations;
    let mut attempts = 1;
    if !best.converged {
        let root = StreamRoot::new(config.seed);
        let jitter = Normal::new(0.0, 0.3).expect("valid normal");
        for restart in 0..config.n_restarts {
            let mut rng = root.stream(restart as u64, Purpose::Restarts);
            let mut u = u0.clone();
            for &i in &free_idx {
                u[i] += jitter.sample(&mut rng);
            }
            if lik.value(&u).is_err() {
                continue;
            }
            let (cand_u, cand) = run(&u);
            n_evals += cand.n_evals;
            iterations += cand.iterations;
            attempts += 1;
            // Highest log-likelihood wins; near-ties keep the earlier attempt.
            let better = (cand.converged && !best.converged)
                || (cand.converged == best.converged && -cand.f * n > -best.f * n + 1e-10);
            if better {
                best_u = cand_u;
                best = cand;
            }
            if best.converged {
                break;
            }
        }
    }

    let mut score = vec![0.0; layout.dim];
    let loglik = lik.value_and_score(&best_u, &mut score)?;
    let hessian = numeric_hessian(&lik, &best_u, &free_idx, HESSIAN_STEP).ok();
    let gradient_ok = best.converged;
    let (curvature_ok, curvature_note) = match &hessian {
        Some(h) => hessian_is_nsd(h),
        None => (false, "Hessian could not be evaluated".to_string()),
    };
    let converged = gradient_ok && curvature_ok;
    let theta_hat = layout.to_params(&best_u);
    let masses = if converged { recover_masses(&theta_hat, data, spec).ok() } else { None };
    let diagnostic = format!(
        "{}; {}; {} attempt(s), {} iterations, max|score|/N = {:.2e}",
        best.message,
        curvature_note,
        attempts,
        iterations,
        free_idx.iter().fold(0.0f64, |m, &i| m.max(score[i].abs())) / n
    );
    Ok(FitResult {
        theta_hat,
        loglik,
        converged,
        diagnostic,
        covariance: None,
        masses,
        n_evals,
        iterations,
        counts,
        names: layout.names(spec, &data.covariate_names),
        layout,
        unconstrained: best_u,
        score,
        hessian,
        free,
        initial_loglik,
    })
}

fn hessian_is_nsd(h: &DMatrix<f64>) -> (bool, String) {
    if h.nrows() == 0 {
        return (true, "no free coordinates".into());
    }
    let eig = h.clone().symmetric_eigen().eigenvalues;
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 1e-6 * scale {
        (true, "Hessian negative definite".into())
    } else {
        (false, format!("Hessian not negative semidefinite (max eigenvalue {max:.3e})"))
    }
}

/// Controls versus all non-control subjects, with prevalent cases relabeled as
/// incident and backward times dropped.
pub fn pooled_cases(data: &Dataset) -> Dataset {
    let subjects = data
        .subjects
        .iter()
        .map(|s| Subject {
            group: if s.group.is_case() { GroupLabel::IncidentCase } else { GroupLabel::Control },
            covariates: s.covariates.clone(),
            backward_time: None,
        })
        .collect();
    Dataset { subjects, covariate_names: data.covariate_names.clone() }
}

/// Newton-Raphson logistic regression of case status (any non-control group) on
/// the given covariates.
///
/// The returned [`FitResult`] is laid out like a two-group profile fit:
/// `theta_hat.alpha` is the intercept and `covariance` the inverse Fisher information.
pub fn fit_logistic(data: &Dataset, covariates: &[usize], config: &FitConfig) -> Result<FitResult, EstimationError> {
    let pooled = pooled_cases(data);
    let counts = group_counts(&pooled);
    if counts.n0 == 0 || counts.n1 == 0 {
        return Err(EstimationError::InvalidData("logistic fit needs controls and cases".into()));
    }
    if let Some(&j) = covariates.iter().find(|&&j| j >= data.dim()) {
        return Err(EstimationError::InvalidData(format!("covariate index {j} out of range")));
    }
    let p = covariates.len() + 1;
    let rows: Vec<(f64, Vec<f64>)> = pooled
        .subjects
        .iter()
        .map(|s| {
            let mut x = Vec::with_capacity(p);
            x.push(1.0);
            x.extend(covariates.iter().map(|&j| s.covariates[j]));
            ((s.group == GroupLabel::IncidentCase) as u8 as f64, x)
        })
        .collect();

    let loglik_at = |b: &DVector<f64>| -> f64 {
        rows.iter()
            .map(|(y, x)| {
                let eta: f64 = x.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
                y * eta - softplus(eta)
            })
            .sum()
    };

    let mut b = DVector::<f64>::zeros(p);
    b[0] = (counts.n1 as f64 / counts.n0 as f64).ln();
    let mut ll = loglik_at(&b);
    let initial_loglik = ll;
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut grad = DVector::<f64>::zeros(p);
    for iter in 0..config.max_iterations.max(1) {
        iterations = iter + 1;
        info.fill(0.0);
        grad.fill(0.0);
        for (y, x) in &rows {
            let eta: f64 = x.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            let prob = sigmoid(eta);
            let w = prob * (1.0 - prob);
            for i in 0..p {
                grad[i] += (y - prob) * x[i];
                for j in 0..p {
                    info[(i, j)] += w * x[i] * x[j];
                }
            }
        }
        let Some(step) = info.clone().cholesky().map(|c| c.solve(&grad)) else {
            return Err(EstimationError::Separation { norm: b.rows(1, p - 1).norm() });
        };
        // Under separation the gradient vanishes while the Newton step does
        // not, so convergence is judged on the step.
        if step.amax() < 1e-10 {
            b += &step;
            ll = loglik_at(&b);
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &b + &step * t;
            let cand_ll = loglik_at(&cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                b = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let norm = b.rows(1, p - 1).norm();
        if norm > 50.0 {
            return Err(EstimationError::Separation { norm });
        }
        if !accepted || (step.amax() * t) < 1e-12 {
            converged = grad.amax() / counts.total() as f64 <= config.gradient_tolerance;
            break;
        }
    }
    if !converged {
        return Err(EstimationError::LogisticNonConvergence(iterations));
    }
    // Fisher information at the final iterate.
    info.fill(0.0);
    grad.fill(0.0);
    for (y, x) in &rows {
        let eta: f64 = x.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
        let prob = sigmoid(eta);
        let w = prob * (1.0 - prob);
        for i in 0..p {
            grad[i] += (y - prob) * x[i];
            for j in 0..p {
                info[(i, j)] += w * x[i] * x[j];
            }
        }
    }
    let covariance = info.clone().try_inverse();
    let spec = ModelSpec {
        incidence_covariates: covariates.to_vec(),
        survival_covariates: vec![],
        hazard: HazardSpec::Exponential,
        xi: 1.0,
    };
    let layout = Layout::new(&spec, counts);
    let theta_hat = ParamVector {
        alpha: b[0],
        nu: f64::NEG_INFINITY,
        beta: b.iter().skip(1).cloned().collect(),
        hazard_params: vec![],
        zeta: vec![],
    };
    Ok(FitResult {
        unconstrained: b.iter().cloned().collect(),
        score: grad.iter().cloned().collect(),
        hessian: Some(-info),
        free: vec![true; p],
        names: layout.names(&spec, &data.covariate_names),
        layout,
        theta_hat,
        loglik: ll,
        converged: true,
        diagnostic: format!("Newton-Raphson converged in {iterations} iterations"),
        covariance,
        masses: None,
        n_evals: iterations,
        iterations,
        counts,
        initial_loglik,
    })
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Starting values: pooled logistic β, ζ = 0, unit-shape hazard matched to the
/// mean backward time, intercepts from the group sizes.
pub fn default_initialization(data: &Dataset, spec: &ModelSpec) -> ParamVector {
    let counts = group_counts(data);
    let (n0, n1, n2) = (counts.n0 as f64, counts.n1 as f64, counts.n2 as f64);
    let cases = n1 + n2;
    let quick = FitConfig { max_iterations: 50, ..FitConfig::default() };
    let (intercept, beta) = match fit_logistic(data, &spec.incidence_covariates, &quick) {
        Ok(fit) => (fit.theta_hat.alpha, fit.theta_hat.beta),
        Err(_) => ((cases / n0).ln(), vec![0.0; spec.incidence_covariates.len()]),
    };
    let alpha = if counts.n1 > 0 { intercept + (n1 / cases).ln() } else { f64::NEG_INFINITY };
    if counts.n2 == 0 {
        return ParamVector {
            alpha,
            nu: f64::NEG_INFINITY,
            beta,
            hazard_params: vec![],
            zeta: vec![],
        };
    }

    let times: Vec<f64> = data.subjects.iter().filter_map(|s| s.backward_time).collect();
    let mean_a = (times.iter().sum::<f64>() / times.len() as f64).max(1e-3 * spec.xi);
    let hazard_params = match &spec.hazard {
        HazardSpec::Exponential => vec![1.0 / mean_a],
        HazardSpec::Weibull => vec![1.0, mean_a],
        HazardSpec::PiecewiseConstant { breakpoints } => (0..breakpoints.len())
            .map(|k| {
                let start = breakpoints[k];
                let end = breakpoints.get(k + 1).copied().unwrap_or(spec.xi);
                let count = times.iter().filter(|&&a| a >= start && a < end).count() as f64;
                (count / (n2 * (end - start))).max(1e-4)
            })
            .collect(),
    };
    let zeta = vec![0.0; spec.survival_covariates.len()];
    // With ζ = 0, μ is the same for everyone.
    let mu0 = Hazard::new(&spec.hazard, &hazard_params)
        .map(|h| h.ln_mu(0.0, spec.xi))
        .unwrap_or(0.0);
    let nu = intercept + (n2 / cases).ln() - mu0;
    ParamVector { alpha, nu, beta, hazard_params, zeta }
}
