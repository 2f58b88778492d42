//! Profiled three-group empirical log-likelihood.
//!
//! With the baseline covariate distribution profiled out as point masses
//! `p_i`, the log-likelihood over θ = (α, ν, β, γ) is
//!
//! ```text
//! ℓ(θ) = −Σᵢ log(1 + e^{α+xᵢβ} + e^{ν+xᵢβ+log μᵢ})
//!        + Σ_incident (α + xᵢβ)
//!        + Σ_prevalent (ν + xᵢβ + log S(aᵢ | xᵢ))
//! ```
//!
//! (the log μ of the prevalent tilt cancels against the backward-time density
//! S/μ). All derivatives are analytic except the Weibull shape direction of
//! log μ, which is a central difference (see [`crate::survival::SHAPE_FD_STEP`]).

use crate::survival::{Hazard, SurvivalError};
use crate::types::{group_counts, Dataset, GroupCounts, GroupLabel, ModelSpec, ParamVector};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LikelihoodError {
    #[error("non-finite log-likelihood contribution from subject {subject}")]
    NonFinite { subject: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dataset needs at least one control and one case")]
    EmptyGroups,
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error("constraint residual {residual:.3e} exceeds tolerance; θ is not a stationary point")]
    NonConvergence { residual: f64 },
}

/// Position of each parameter block in the unconstrained coordinate vector.
///
/// Coordinates are `[α?, ν?, β…, log(hazard params)…, ζ…]`. α is absent when
/// there are no incident cases; ν, the hazard parameters and ζ are absent when
/// there are no prevalent cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub alpha: Option<usize>,
    pub nu: Option<usize>,
    pub beta: Range<usize>,
    pub hazard: Range<usize>,
    pub zeta: Range<usize>,
    pub dim: usize,
}

impl Layout {
    pub fn new(spec: &ModelSpec, counts: GroupCounts) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            let r = next..next + n;
            next += n;
            r
        };
        let alpha = (counts.n1 > 0).then(|| take(1).start);
        let has_survival = counts.n2 > 0;
        let nu = has_survival.then(|| take(1).start);
        let beta = take(spec.incidence_covariates.len());
        let hazard = take(if has_survival { spec.hazard.n_params() } else { 0 });
        let zeta = take(if has_survival { spec.survival_covariates.len() } else { 0 });
        Layout { alpha, nu, beta, hazard, zeta, dim: next }
    }

    pub fn has_survival(&self) -> bool {
        self.nu.is_some()
    }

    /// Maps natural-scale parameters to optimizer coordinates.
    pub fn to_unconstrained(&self, theta: &ParamVector) -> Vec<f64> {
        let mut u = vec![0.0; self.dim];
        if let Some(i) = self.alpha {
            u[i] = theta.alpha;
        }
        if let Some(i) = self.nu {
            u[i] = theta.nu;
        }
        u[self.beta.clone()].copy_from_slice(&theta.beta);
        for (dst, p) in u[self.hazard.clone()].iter_mut().zip(&theta.hazard_params) {
            *dst = p.ln();
        }
        u[self.zeta.clone()].copy_from_slice(&theta.zeta[..self.zeta.len()]);
        u
    }

    /// Maps optimizer coordinates back; absent intercepts become −∞ (an empty group).
    pub fn to_params(&self, u: &[f64]) -> ParamVector {
        ParamVector {
            alpha: self.alpha.map_or(f64::NEG_INFINITY, |i| u[i]),
            nu: self.nu.map_or(f64::NEG_INFINITY, |i| u[i]),
            beta: u[self.beta.clone()].to_vec(),
            hazard_params: u[self.hazard.clone()].iter().map(|v| v.exp()).collect(),
            zeta: u[self.zeta.clone()].to_vec(),
        }
    }

    /// Coordinate labels, e.g. `alpha`, `nu`, `beta:x1`, `log_kappa_1`, `zeta:x2`.
    pub fn names(&self, spec: &ModelSpec, covariate_names: &[String]) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim);
        if self.alpha.is_some() {
            names.push("alpha".to_string());
        }
        if self.nu.is_some() {
            names.push("nu".to_string());
        }
        for &j in &spec.incidence_covariates {
            names.push(format!("beta:{}", covariate_names[j]));
        }
        if self.has_survival() {
            for n in spec.hazard.param_names() {
                names.push(format!("log_{n}"));
            }
            for &j in &spec.survival_covariates {
                names.push(format!("zeta:{}", covariate_names[j]));
            }
        }
        names
    }
}

/// Column-selected, row-major copy of a dataset for fast likelihood evaluation.
#[derive(Debug, Clone)]
pub struct Design {
    pub groups: Vec<GroupLabel>,
    pub x_incidence: Vec<f64>,
    pub x_survival: Vec<f64>,
    pub backward_times: Vec<f64>,
    pub p_beta: usize,
    pub p_zeta: usize,
    pub counts: GroupCounts,
}

impl Design {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Self {
        let n = data.len();
        let p_beta = spec.incidence_covariates.len();
        let p_zeta = spec.survival_covariates.len();
        let mut x_incidence = Vec::with_capacity(n * p_beta);
        let mut x_survival = Vec::with_capacity(n * p_zeta);
        let mut groups = Vec::with_capacity(n);
        let mut backward_times = Vec::with_capacity(n);
        for s in &data.subjects {
            groups.push(s.group);
            x_incidence.extend(spec.incidence_covariates.iter().map(|&j| s.covariates[j]));
            x_survival.extend(spec.survival_covariates.iter().map(|&j| s.covariates[j]));
            backward_times.push(s.backward_time.unwrap_or(0.0));
        }
        Design {
            groups,
            x_incidence,
            x_survival,
            backward_times,
            p_beta,
            p_zeta,
            counts: group_counts(data),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    fn x_inc(&self, i: usize) -> &[f64] {
        &self.x_incidence[i * self.p_beta..(i + 1) * self.p_beta]
    }

    fn x_surv(&self, i: usize) -> &[f64] {
        &self.x_survival[i * self.p_zeta..(i + 1) * self.p_zeta]
    }
}

/// The profile log-likelihood bound to one dataset and model.
#[derive(Debug, Clone)]
pub struct ProfileLikelihood {
    design: Design,
    layout: Layout,
    spec: ModelSpec,
}

enum Sink<'a> {
    Value,
    Total(&'a mut [f64]),
    PerSubject(&'a mut [f64]),
}

impl ProfileLikelihood {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self, LikelihoodError> {
        let design = Design::new(data, spec);
        let counts = design.counts;
        if counts.n0 == 0 || counts.n1 + counts.n2 == 0 {
            return Err(LikelihoodError::EmptyGroups);
        }
        if let Some(s) = data.subjects.iter().find(|s| s.covariates.len() != data.dim()) {
            return Err(LikelihoodError::Dimension(format!(
                "subject has {} covariates, dataset declares {}",
                s.covariates.len(),
                data.dim()
            )));
        }
        let layout = Layout::new(spec, counts);
        Ok(ProfileLikelihood { design, layout, spec: spec.clone() })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn counts(&self) -> GroupCounts {
        self.design.counts
    }

    pub fn n(&self) -> usize {
        self.design.len()
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    fn check_dim(&self, u: &[f64]) -> Result<(), LikelihoodError> {
        if u.len() != self.layout.dim {
            return Err(LikelihoodError::Dimension(format!(
                "expected {} coordinates, got {}",
                self.layout.dim,
                u.len()
            )));
        }
        Ok(())
    }

    /// ℓ at unconstrained coordinates `u`.
    pub fn value(&self, u: &[f64]) -> Result<f64, LikelihoodError> {
        self.check_dim(u)?;
        self.accumulate(u, Sink::Value)
    }

    /// ℓ and its gradient at `u`.
    pub fn value_and_score(&self, u: &[f64], grad: &mut [f64]) -> Result<f64, LikelihoodError> {
        self.check_dim(u)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.accumulate(u, Sink::Total(grad))
    }

    /// Per-subject score vectors, row-major `n × dim`.
    pub fn subject_scores(&self, u: &[f64]) -> Result<Vec<f64>, LikelihoodError> {
        self.check_dim(u)?;
        let mut out = vec![0.0; self.n() * self.layout.dim];
        self.accumulate(u, Sink::PerSubject(&mut out))?;
        Ok(out)
    }

    fn accumulate(&self, u: &[f64], mut sink: Sink<'_>) -> Result<f64, LikelihoodError> {
        let layout = &self.layout;
        let design = &self.design;
        let dim = layout.dim;
        let want_grad = !matches!(sink, Sink::Value);
        let alpha = layout.alpha.map(|i| u[i]);
        let nu = layout.nu.map(|i| u[i]);
        let beta = &u[layout.beta.clone()];
        let zeta = &u[layout.zeta.clone()];
        let hazard = if layout.has_survival() {
            let params: Vec<f64> = u[layout.hazard.clone()].iter().map(|v| v.exp()).collect();
            Some(Hazard::new(&self.spec.hazard, &params)?)
        } else {
            None
        };
        let kernel = hazard.as_ref().map(|h| h.mu_kernel(self.spec.xi, want_grad));
        let n_h = layout.hazard.len();
        let mut g_mu = vec![0.0; n_h];
        let mut g_s = vec![0.0; n_h];
        let mut row = vec![0.0; dim];
        let mut total = 0.0;

        for i in 0..design.len() {
            let group = design.groups[i];
            let x = design.x_inc(i);
            let xb: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let u1 = alpha.map_or(f64::NEG_INFINITY, |a| a + xb);
            let (u2, lp, d_mu_lp) = match (nu, kernel.as_ref()) {
                (Some(nu), Some(k)) => {
                    let xs = design.x_surv(i);
                    let lp: f64 = xs.iter().zip(zeta).map(|(a, b)| a * b).sum();
                    let (ln_mu, d) = if want_grad {
                        k.ln_mu_grad(lp, &mut g_mu)
                    } else {
                        (k.ln_mu(lp), 0.0)
                    };
                    (nu + xb + ln_mu, lp, d)
                }
                _ => (f64::NEG_INFINITY, 0.0, 0.0),
            };
            let m = u1.max(u2).max(0.0);
            let log_eta = m + ((-m).exp() + (u1 - m).exp() + (u2 - m).exp()).ln();
            let mut contrib = -log_eta;
            let mut d_s_lp = 0.0;
            match group {
                GroupLabel::Control => {}
                GroupLabel::IncidentCase => contrib += u1,
                GroupLabel::PrevalentCase => {
                    let h = hazard.as_ref().expect("prevalent case implies survival block");
                    let a = design.backward_times[i];
                    contrib += nu.unwrap_or(f64::NEG_INFINITY) + xb;
                    if want_grad {
                        d_s_lp = h.grad_log_survival(a, lp, &mut g_s);
                    }
                    contrib += h.log_survival(a, lp);
                }
            }
            if !contrib.is_finite() {
                return Err(LikelihoodError::NonFinite { subject: i });
            }
            total += contrib;

            if want_grad {
                let pi1 = (u1 - log_eta).exp();
                let pi2 = (u2 - log_eta).exp();
                let incident = (group == GroupLabel::IncidentCase) as u8 as f64;
                let prevalent = (group == GroupLabel::PrevalentCase) as u8 as f64;
                if let Some(ia) = layout.alpha {
                    row[ia] = incident - pi1;
                }
                if let Some(iv) = layout.nu {
                    row[iv] = prevalent - pi2;
                }
                let case_resid = incident + prevalent - pi1 - pi2;
                for (r, xj) in row[layout.beta.clone()].iter_mut().zip(x) {
                    *r = case_resid * xj;
                }
                if layout.has_survival() {
                    for (k, r) in row[layout.hazard.clone()].iter_mut().enumerate() {
                        *r = -pi2 * g_mu[k] + prevalent * g_s[k];
                    }
                    let d_lp = -pi2 * d_mu_lp + prevalent * d_s_lp;
                    let xs = design.x_surv(i);
                    for (r, xj) in row[layout.zeta.clone()].iter_mut().zip(xs) {
                        *r = d_lp * xj;
                    }
                }
                match &mut sink {
                    Sink::Total(g) => g.iter_mut().zip(&row).for_each(|(g, r)| *g += r),
                    Sink::PerSubject(out) => out[i * dim..(i + 1) * dim].copy_from_slice(&row),
                    Sink::Value => unreachable!(),
                }
            }
        }
        Ok(total)
    }

    /// Per-subject tilt weights at natural-scale θ, using the α*, ν* (unoffset) intercepts.
    pub fn tilt_weights(&self, theta: &ParamVector) -> Result<TiltWeights, LikelihoodError> {
        let counts = self.counts();
        let u = self.layout.to_unconstrained(theta);
        let alpha_star = self.layout.alpha.map(|i| u[i] - (counts.n1 as f64 / counts.n0 as f64).ln());
        let nu_star = self.layout.nu.map(|i| u[i] - (counts.n2 as f64 / counts.n0 as f64).ln());
        let hazard = if self.layout.has_survival() {
            Some(Hazard::new(&self.spec.hazard, &theta.hazard_params)?)
        } else {
            None
        };
        let kernel = hazard.as_ref().map(|h| h.mu_kernel(self.spec.xi, false));
        let n = self.n();
        let (mut w1, mut w2, mut eta) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let xb: f64 = self.design.x_inc(i).iter().zip(&theta.beta).map(|(a, b)| a * b).sum();
            w1[i] = alpha_star.map_or(0.0, |a| (a + xb).exp());
            w2[i] = match (nu_star, kernel.as_ref()) {
                (Some(nu), Some(k)) => {
                    let lp: f64 =
                        self.design.x_surv(i).iter().zip(&theta.zeta).map(|(a, b)| a * b).sum();
                    (nu + xb + k.ln_mu(lp)).exp()
                }
                _ => 0.0,
            };
            eta[i] = 1.0 + w1[i] + w2[i];
        }
        Ok(TiltWeights { w1, w2, eta })
    }
}

/// Per-subject tilts w₁ = exp(α* + xβ), w₂ = exp(ν* + xβ + log μ) and η = 1 + w₁ + w₂.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltWeights {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Point masses of the profiled baseline distribution and the Lagrange multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMasses {
    pub p: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Residuals of Σp = 1, Σp·w₁ = 1, Σp·w₂ = 1 (zero for an absent group).
    pub residuals: [f64; 3],
}

/// Constraint residual above which [`recover_masses`] reports non-convergence.
pub const MASS_RESIDUAL_TOLERANCE: f64 = 1e-4;

/// ℓ at natural-scale θ.
pub fn profile_loglik(
    theta: &ParamVector,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<f64, LikelihoodError> {
    let lik = ProfileLikelihood::new(data, spec)?;
    check_theta(&lik, theta)?;
    lik.value(&lik.layout.to_unconstrained(theta))
}

/// ∇ℓ at natural-scale θ, in the unconstrained coordinates of [`Layout`].
pub fn profile_score(
    theta: &ParamVector,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<Vec<f64>, LikelihoodError> {
    let lik = ProfileLikelihood::new(data, spec)?;
    check_theta(&lik, theta)?;
    let mut g = vec![0.0; lik.layout.dim];
    lik.value_and_score(&lik.layout.to_unconstrained(theta), &mut g)?;
    Ok(g)
}

fn check_theta(lik: &ProfileLikelihood, theta: &ParamVector) -> Result<(), LikelihoodError> {
    let l = &lik.layout;
    if theta.beta.len() != l.beta.len() {
        return Err(LikelihoodError::Dimension(format!(
            "beta has {} entries, model has {}",
            theta.beta.len(),
            l.beta.len()
        )));
    }
    if l.has_survival()
        && (theta.hazard_params.len() != l.hazard.len() || theta.zeta.len() != l.zeta.len())
    {
        return Err(LikelihoodError::Dimension("survival block does not match model".into()));
    }
    Ok(())
}

/// Empirical masses pᵢ = 1/(N[1 + λ₁(w₁ᵢ−1) + λ₂(w₂ᵢ−1)]) at λ₁ = n₁/N, λ₂ = n₂/N.
pub fn recover_masses(
    theta_hat: &ParamVector,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<EmpiricalMasses, LikelihoodError> {
    let lik = ProfileLikelihood::new(data, spec)?;
    check_theta(&lik, theta_hat)?;
    let masses = masses_from_weights(&lik.tilt_weights(theta_hat)?, lik.counts());
    let worst = masses.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if worst > MASS_RESIDUAL_TOLERANCE {
        return Err(LikelihoodError::NonConvergence { residual: worst });
    }
    Ok(masses)
}

pub(crate) fn masses_from_weights(w: &TiltWeights, counts: GroupCounts) -> EmpiricalMasses {
    let n = counts.total() as f64;
    let lambda1 = counts.n1 as f64 / n;
    let lambda2 = counts.n2 as f64 / n;
    let p: Vec<f64> = w
        .w1
        .iter()
        .zip(&w.w2)
        .map(|(w1, w2)| 1.0 / (n * (1.0 + lambda1 * (w1 - 1.0) + lambda2 * (w2 - 1.0))))
        .collect();
    let sum_p: f64 = p.iter().sum();
    let sum_w1: f64 = p.iter().zip(&w.w1).map(|(p, w)| p * w).sum();
    let sum_w2: f64 = p.iter().zip(&w.w2).map(|(p, w)| p * w).sum();
    let residuals = [
        sum_p - 1.0,
        if counts.n1 > 0 { sum_w1 - 1.0 } else { 0.0 },
        if counts.n2 > 0 { sum_w2 - 1.0 } else { 0.0 },
    ];
    EmpiricalMasses { p, lambda1, lambda2, residuals }
}
