//! Sandwich covariance, likelihood-ratio tests and jackknife standard errors.

use crate::estimation::{fit_profile, EstimationError, FitConfig, FitResult, Restriction};
use crate::likelihood::{Layout, LikelihoodError, ProfileLikelihood};
use crate::special::chi2_sf;
use crate::types::{Dataset, GroupLabel, ModelSpec, ParamVector};
use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

/// Information matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("singular information matrix (condition number {condition:.2e}); worst coordinate: {coordinate}")]
    SingularInformation { coordinate: String, condition: f64 },
    #[error("fit did not converge: {0}")]
    NotConverged(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("jackknife: {failures} of {total} leave-one-out fits failed")]
    Jackknife { failures: usize, total: usize },
    #[error("jackknife needs N refits; N = {n} exceeds the limit {limit}")]
    TooLarge { n: usize, limit: usize },
}

/// Ω̂/N = V̂⁻¹ Σ̂ V̂⁻¹ / N over the free coordinates `free` of a [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub omega_over_n: DMatrix<f64>,
    /// −(Hessian of ℓ)/N.
    pub v_hat: DMatrix<f64>,
    /// N⁻¹ Σ_g Σ_{i∈g} (sᵢ − s̄_g)(sᵢ − s̄_g)ᵀ.
    pub sigma_hat: DMatrix<f64>,
    pub free: Vec<usize>,
}

impl CovarianceEstimate {
    /// Standard deviations in optimizer coordinates, one per free coordinate.
    pub fn sd(&self) -> Vec<f64> {
        self.omega_over_n.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Natural-scale standard deviations over the whole layout (NaN for fixed
    /// coordinates); hazard parameters are mapped by the delta method.
    pub fn natural_sd(&self, layout: &Layout, unconstrained: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NAN; layout.dim];
        for (k, &i) in self.free.iter().enumerate() {
            let sd = self.omega_over_n[(k, k)].max(0.0).sqrt();
            out[i] = if layout.hazard.contains(&i) { unconstrained[i].exp() * sd } else { sd };
        }
        out
    }
}

/// Central-difference Hessian of ℓ at `u` over the coordinates `free`, built
/// from the analytic score and symmetrized.
///
/// If the result is not negative semidefinite, the differences are redone
/// with Richardson extrapolation (steps h and h/2).
pub fn numeric_hessian(
    lik: &ProfileLikelihood,
    u: &[f64],
    free: &[usize],
    step: f64,
) -> Result<DMatrix<f64>, LikelihoodError> {
    let h = central_hessian(lik, u, free, step)?;
    if is_nsd(&h) {
        return Ok(h);
    }
    let half = central_hessian(lik, u, free, step / 2.0)?;
    Ok((half * 4.0 - h) / 3.0)
}

fn central_hessian(
    lik: &ProfileLikelihood,
    u: &[f64],
    free: &[usize],
    step: f64,
) -> Result<DMatrix<f64>, LikelihoodError> {
    let k = free.len();
    let dim = u.len();
    let mut h = DMatrix::zeros(k, k);
    let mut x = u.to_vec();
    let mut g_plus = vec![0.0; dim];
    let mut g_minus = vec![0.0; dim];
    for (a, &i) in free.iter().enumerate() {
        x[i] = u[i] + step;
        lik.value_and_score(&x, &mut g_plus)?;
        x[i] = u[i] - step;
        lik.value_and_score(&x, &mut g_minus)?;
        x[i] = u[i];
        for (b, &j) in free.iter().enumerate() {
            h[(b, a)] = (g_plus[j] - g_minus[j]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

fn is_nsd(h: &DMatrix<f64>) -> bool {
    if h.nrows() == 0 {
        return true;
    }
    let eig = h.clone().symmetric_eigen().eigenvalues;
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    eig.iter().all(|&v| v <= 1e-6 * scale)
}

/// Sandwich covariance at natural-scale θ̂ with every coordinate free.
pub fn sandwich_covariance(
    theta_hat: &ParamVector,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<CovarianceEstimate, InferenceError> {
    let lik = ProfileLikelihood::new(data, spec)?;
    let u = lik.layout().to_unconstrained(theta_hat);
    let free: Vec<usize> = (0..u.len()).collect();
    let names = lik.layout().names(spec, &data.covariate_names);
    let hessian = numeric_hessian(&lik, &u, &free, crate::estimation::HESSIAN_STEP)?;
    assemble(&lik, &u, &free, &hessian, &names)
}

/// Sandwich covariance for a fit, reusing its Hessian.
///
/// `data` must be the dataset the fit was computed from; for the pooled
/// logistic model that is [`crate::estimation::pooled_cases`] of the input.
pub fn sandwich_for_fit(
    fit: &FitResult,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<CovarianceEstimate, InferenceError> {
    if !fit.converged {
        return Err(InferenceError::NotConverged(fit.diagnostic.clone()));
    }
    let lik_spec = if fit.layout.has_survival() {
        spec.clone()
    } else {
        ModelSpec { survival_covariates: vec![], ..spec.clone() }
    };
    let lik = ProfileLikelihood::new(data, &lik_spec)?;
    if lik.layout() != &fit.layout {
        return Err(InferenceError::Likelihood(LikelihoodError::Dimension(
            "fit layout does not match the dataset and model".into(),
        )));
    }
    let free = fit.free_indices();
    let hessian = match &fit.hessian {
        Some(h) => h.clone(),
        None => numeric_hessian(&lik, &fit.unconstrained, &free, crate::estimation::HESSIAN_STEP)?,
    };
    assemble(&lik, &fit.unconstrained, &free, &hessian, &fit.names)
}

fn assemble(
    lik: &ProfileLikelihood,
    u: &[f64],
    free: &[usize],
    hessian: &DMatrix<f64>,
    names: &[String],
) -> Result<CovarianceEstimate, InferenceError> {
    let n = lik.n() as f64;
    let dim = u.len();
    let k = free.len();
    let v_hat = -hessian / n;

    let eig = v_hat.clone().symmetric_eigen();
    let (mut lo, mut hi, mut lo_idx) = (f64::INFINITY, 0.0f64, 0);
    for (idx, &e) in eig.eigenvalues.iter().enumerate() {
        hi = hi.max(e.abs());
        if e.abs() < lo {
            lo = e.abs();
            lo_idx = idx;
        }
    }
    let condition = if k == 0 { 1.0 } else { hi / lo };
    if !(condition <= MAX_CONDITION) {
        let vec = eig.eigenvectors.column(lo_idx);
        let worst = (0..k).max_by(|&a, &b| vec[a].abs().total_cmp(&vec[b].abs())).unwrap_or(0);
        return Err(InferenceError::SingularInformation {
            coordinate: names.get(free[worst]).cloned().unwrap_or_else(|| format!("#{}", free[worst])),
            condition,
        });
    }

    let scores = lik.subject_scores(u)?;
    let groups = &lik.design().groups;
    let mut sigma = DMatrix::<f64>::zeros(k, k);
    for g in [GroupLabel::Control, GroupLabel::IncidentCase, GroupLabel::PrevalentCase] {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; k];
        for &i in &members {
            for (a, &c) in free.iter().enumerate() {
                mean[a] += scores[i * dim + c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        let mut dev = vec![0.0; k];
        for &i in &members {
            for (a, &c) in free.iter().enumerate() {
                dev[a] = scores[i * dim + c] - mean[a];
            }
            for a in 0..k {
                for b in 0..=a {
                    sigma[(a, b)] += dev[a] * dev[b];
                }
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            sigma[(b, a)] = sigma[(a, b)];
        }
    }
    sigma /= n;

    // V̂ is symmetric positive definite here; solve rather than invert twice.
    let v_inv = match v_hat.clone().cholesky() {
        Some(c) => c.inverse(),
        None => v_hat.clone().try_inverse().ok_or_else(|| InferenceError::SingularInformation {
            coordinate: "(indefinite)".into(),
            condition,
        })?,
    };
    let omega = &v_inv * &sigma * &v_inv / n;
    let omega = (&omega + omega.transpose()) * 0.5;
    Ok(CovarianceEstimate { omega_over_n: omega, v_hat, sigma_hat: sigma, free: free.to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl LrtResult {
    pub fn from_logliks(full: f64, restricted: f64, df: usize) -> Self {
        let statistic = (2.0 * (full - restricted)).max(0.0);
        let p_value = if df == 0 { 1.0 } else { chi2_sf(statistic, df) };
        LrtResult { statistic, df, p_value }
    }
}

/// Likelihood-ratio test of `restrictions` (α and ν are always profiled).
pub fn lrt(
    data: &Dataset,
    spec: &ModelSpec,
    config: &FitConfig,
    restrictions: &[Restriction],
) -> Result<LrtResult, InferenceError> {
    if restrictions.is_empty() {
        return Ok(LrtResult { statistic: 0.0, df: 0, p_value: 1.0 });
    }
    let full = fit_profile(data, spec, config, &[])?;
    lrt_against(&full, data, spec, config, restrictions)
}

/// Likelihood-ratio test given an already converged unrestricted fit.
pub fn lrt_against(
    full: &FitResult,
    data: &Dataset,
    spec: &ModelSpec,
    config: &FitConfig,
    restrictions: &[Restriction],
) -> Result<LrtResult, InferenceError> {
    if !full.converged {
        return Err(InferenceError::NotConverged(format!("full model: {}", full.diagnostic)));
    }
    if restrictions.is_empty() {
        return Ok(LrtResult { statistic: 0.0, df: 0, p_value: 1.0 });
    }
    let warm = FitConfig { initial_theta: Some(full.theta_hat.clone()), ..config.clone() };
    let restricted = fit_profile(data, spec, &warm, restrictions)?;
    if !restricted.converged {
        return Err(InferenceError::NotConverged(format!("restricted model: {}", restricted.diagnostic)));
    }
    Ok(LrtResult::from_logliks(full.loglik, restricted.loglik, restrictions.len()))
}

/// Leave-one-subject-out standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeResult {
    /// Natural scale, layout order, with α*, ν* in place of the offset intercepts.
    pub se: Vec<f64>,
    pub failures: usize,
    pub n: usize,
}

/// Largest N for which [`jackknife_se`] runs unless told otherwise.
pub const JACKKNIFE_MAX_N: usize = 5000;

/// Jackknife SEs from N refits warm-started at θ̂. Failed refits are excluded;
/// more than 5% failures is an error.
pub fn jackknife_se(
    data: &Dataset,
    spec: &ModelSpec,
    config: &FitConfig,
    fit: &FitResult,
    max_n: usize,
) -> Result<JackknifeResult, InferenceError> {
    let n = data.len();
    if n > max_n {
        return Err(InferenceError::TooLarge { n, limit: max_n });
    }
    if !fit.converged {
        return Err(InferenceError::NotConverged(fit.diagnostic.clone()));
    }
    let two_group = !fit.layout.has_survival();
    let warm = FitConfig { initial_theta: Some(fit.theta_hat.clone()), ..config.clone() };
    let estimates: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|drop| {
            let subjects = data
                .subjects
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, s)| s.clone())
                .collect();
            let reduced = Dataset { subjects, covariate_names: data.covariate_names.clone() };
            let refit = if two_group {
                crate::estimation::fit_logistic(&reduced, &spec.incidence_covariates, &warm)
            } else {
                fit_profile(&reduced, spec, &warm, &[])
            };
            match refit {
                Ok(r) if r.converged && r.layout == fit.layout => Some(natural_vector(&r)),
                _ => None,
            }
        })
        .collect();
    let ok: Vec<&Vec<f64>> = estimates.iter().flatten().collect();
    let failures = n - ok.len();
    if failures as f64 > 0.05 * n as f64 || ok.len() < 2 {
        return Err(InferenceError::Jackknife { failures, total: n });
    }
    let m = ok.len() as f64;
    let dim = fit.layout.dim;
    let se = (0..dim)
        .map(|j| {
            let mean = ok.iter().map(|v| v[j]).sum::<f64>() / m;
            let ss: f64 = ok.iter().map(|v| (v[j] - mean).powi(2)).sum();
            ((m - 1.0) / m * ss).sqrt()
        })
        .collect();
    Ok(JackknifeResult { se, failures, n })
}

/// θ̂ on the natural scale in layout order, intercepts unoffset.
pub fn natural_vector(fit: &FitResult) -> Vec<f64> {
    let layout = &fit.layout;
    let theta = &fit.theta_hat;
    let mut v = vec![0.0; layout.dim];
    if let Some(i) = layout.alpha {
        v[i] = theta.alpha_star(fit.counts);
    }
    if let Some(i) = layout.nu {
        v[i] = theta.nu_star(fit.counts);
    }
    v[layout.beta.clone()].copy_from_slice(&theta.beta);
    v[layout.hazard.clone()].copy_from_slice(&theta.hazard_params);
    v[layout.zeta.clone()].copy_from_slice(&theta.zeta);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{HazardSpec, Subject};

    #[test]
    fn lrt_p_value_and_clamp() {
        let r = LrtResult::from_logliks(-100.0, -100.0 + 1e-9, 2);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = LrtResult::from_logliks(-10.0, -10.0 - 3.841458820694124 / 2.0, 1);
        assert!((r.p_value - 0.05).abs() < 1e-9);
    }

    #[test]
    fn empty_restriction_is_trivial() {
        let mut s = Vec::new();
        s.extend((0..4).map(|k| Subject::control(vec![k as f64])));
        s.extend((0..4).map(|k| Subject::incident(vec![k as f64 + 0.5])));
        let data = Dataset::with_default_names(1, s);
        let spec = ModelSpec::full(1, HazardSpec::Exponential, 5.0);
        let r = lrt(&data, &spec, &FitConfig::default(), &[]).unwrap();
        assert_eq!((r.statistic, r.df, r.p_value), (0.0, 0, 1.0));
    }

    #[test]
    fn jackknife_guard() {
        let data = Dataset::with_default_names(1, vec![Subject::control(vec![0.0]); 10]);
        let spec = ModelSpec::full(1, HazardSpec::Exponential, 5.0);
        let dummy = crate::estimation::FitResult {
            theta_hat: ParamVector { alpha: 0.0, nu: 0.0, beta: vec![], hazard_params: vec![], zeta: vec![] },
            loglik: 0.0,
            converged: true,
            diagnostic: String::new(),
            covariance: None,
            masses: None,
            n_evals: 0,
            iterations: 0,
            counts: crate::types::group_counts(&data),
            layout: Layout::new(&spec, crate::types::group_counts(&data)),
            names: vec![],
            unconstrained: vec![],
            score: vec![],
            hessian: None,
            free: vec![],
            initial_loglik: 0.0,
        };
        let err = jackknife_se(&data, &spec, &FitConfig::default(), &dummy, 5).unwrap_err();
        assert_eq!(err, InferenceError::TooLarge { n: 10, limit: 5 });
    }
}
