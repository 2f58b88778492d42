//! Proportional-hazards backward-time models.
//!
//! The hazard is `h(t | x) = h₀(t) exp(xζ)`. Everything here is written in
//! terms of the linear predictor `lp = xζ`, and gradients are taken with
//! respect to the log of each baseline-hazard parameter (the coordinates the
//! optimizer works in) and `lp`.

use crate::special::{ln_gamma, ln_gamma_p_with};
use crate::types::{check_breakpoints, HazardSpec};
use thiserror::Error;

/// Step (in log-shape) of the central difference used for the Weibull shape derivative of ln μ.
pub const SHAPE_FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvivalError {
    #[error("parameter domain error: {0}")]
    ParameterDomain(String),
    #[error("closed-form backward-time sampling needs a unit-shape (exponential) hazard; use sample_backward_time_numeric")]
    UnsupportedFamily,
}

/// Baseline hazard with its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub enum Hazard {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    PiecewiseConstant { breakpoints: Vec<f64>, rates: Vec<f64> },
}

impl Hazard {
    /// Builds a hazard from a family and its natural-scale parameters.
    pub fn new(spec: &HazardSpec, params: &[f64]) -> Result<Self, SurvivalError> {
        if params.len() != spec.n_params() {
            return Err(SurvivalError::ParameterDomain(format!(
                "expected {} hazard parameters, got {}",
                spec.n_params(),
                params.len()
            )));
        }
        if let Some(bad) = params.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(SurvivalError::ParameterDomain(format!(
                "hazard parameters must be positive and finite, got {bad}"
            )));
        }
        Ok(match spec {
            HazardSpec::Exponential => Hazard::Exponential { rate: params[0] },
            HazardSpec::Weibull => Hazard::Weibull { shape: params[0], scale: params[1] },
            HazardSpec::PiecewiseConstant { breakpoints } => {
                if let Err(msg) = check_breakpoints(breakpoints, f64::INFINITY) {
                    return Err(SurvivalError::ParameterDomain(msg));
                }
                Hazard::PiecewiseConstant { breakpoints: breakpoints.clone(), rates: params.to_vec() }
            }
        })
    }

    pub fn spec(&self) -> HazardSpec {
        match self {
            Hazard::Exponential { .. } => HazardSpec::Exponential,
            Hazard::Weibull { .. } => HazardSpec::Weibull,
            Hazard::PiecewiseConstant { breakpoints, .. } => {
                HazardSpec::PiecewiseConstant { breakpoints: breakpoints.clone() }
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Hazard::Exponential { rate } => vec![*rate],
            Hazard::Weibull { shape, scale } => vec![*shape, *scale],
            Hazard::PiecewiseConstant { rates, .. } => rates.clone(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Hazard::Exponential { .. } => 1,
            Hazard::Weibull { .. } => 2,
            Hazard::PiecewiseConstant { rates, .. } => rates.len(),
        }
    }

    /// True when the inverse backward-time CDF has a closed form.
    pub fn is_unit_shape(&self) -> bool {
        match self {
            Hazard::Exponential { .. } => true,
            Hazard::Weibull { shape, .. } => *shape == 1.0,
            Hazard::PiecewiseConstant { .. } => false,
        }
    }

    /// Cumulative baseline hazard H₀(a).
    pub fn cumulative(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        match self {
            Hazard::Exponential { rate } => rate * a,
            Hazard::Weibull { shape, scale } => (shape * (a.ln() - scale.ln())).exp(),
            Hazard::PiecewiseConstant { breakpoints, rates } => {
                let mut total = 0.0;
                for (k, &start) in breakpoints.iter().enumerate() {
                    if a <= start {
                        break;
                    }
                    let end = breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY);
                    total += rates[k] * (a.min(end) - start);
                }
                total
            }
        }
    }

    /// Baseline hazard h₀(a).
    pub fn hazard(&self, a: f64) -> f64 {
        match self {
            Hazard::Exponential { rate } => *rate,
            Hazard::Weibull { shape, scale } => {
                if a <= 0.0 {
                    if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    }
                } else {
                    shape / scale * (a / scale).powf(shape - 1.0)
                }
            }
            Hazard::PiecewiseConstant { breakpoints, rates } => {
                let k = breakpoints.iter().rposition(|&b| b <= a.max(0.0)).unwrap_or(0);
                rates[k]
            }
        }
    }

    /// log S(a) = −H₀(a)·exp(lp).
    pub fn log_survival(&self, a: f64, lp: f64) -> f64 {
        -self.cumulative(a) * lp.exp()
    }

    /// Gradient of log S(a) with respect to (log hazard parameters, lp).
    pub fn grad_log_survival(&self, a: f64, lp: f64, out_params: &mut [f64]) -> f64 {
        let c = lp.exp();
        if a <= 0.0 {
            out_params.iter_mut().for_each(|g| *g = 0.0);
            return 0.0;
        }
        match self {
            Hazard::Exponential { rate } => {
                let v = -rate * a * c;
                out_params[0] = v;
                v
            }
            Hazard::Weibull { shape, scale } => {
                let log_ratio = a.ln() - scale.ln();
                let h = (shape * log_ratio).exp();
                out_params[0] = -c * h * shape * log_ratio;
                out_params[1] = c * h * shape;
                -c * h
            }
            Hazard::PiecewiseConstant { breakpoints, rates } => {
                let mut total = 0.0;
                for (k, &start) in breakpoints.iter().enumerate() {
                    let end = breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY);
                    let overlap = if a > start { a.min(end) - start } else { 0.0 };
                    let piece = rates[k] * overlap;
                    out_params[k] = -c * piece;
                    total += piece;
                }
                -c * total
            }
        }
    }

    /// ln ∫₀^upper S(t) dt.
    pub fn ln_mu(&self, lp: f64, upper: f64) -> f64 {
        self.mu_kernel(upper, false).ln_mu(lp)
    }

    /// ln μ together with its gradient with respect to (log hazard parameters, lp).
    pub fn ln_mu_grad(&self, lp: f64, upper: f64, out_params: &mut [f64]) -> (f64, f64) {
        self.mu_kernel(upper, true).ln_mu_grad(lp, out_params)
    }

    /// Evaluator for ln μ at a fixed upper limit, reusable across many linear predictors.
    pub fn mu_kernel(&self, upper: f64, with_gradient: bool) -> MuKernel<'_> {
        let weibull = match self {
            Hazard::Weibull { shape, .. } => Some([
                WeibullMu::new(*shape),
                if with_gradient { WeibullMu::new(shape * SHAPE_FD_STEP.exp()) } else { WeibullMu::new(*shape) },
                if with_gradient { WeibullMu::new(shape * (-SHAPE_FD_STEP).exp()) } else { WeibullMu::new(*shape) },
            ]),
            _ => None,
        };
        MuKernel { hazard: self, upper, weibull }
    }
}

/// ln μ(lp) = ln ∫₀^upper S(t | lp) dt for one hazard and upper limit.
#[derive(Debug, Clone)]
pub struct MuKernel<'a> {
    hazard: &'a Hazard,
    upper: f64,
    weibull: Option<[WeibullMu; 3]>,
}

impl MuKernel<'_> {
    pub fn ln_mu(&self, lp: f64) -> f64 {
        let upper = self.upper;
        if upper <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.hazard {
            Hazard::Exponential { rate } => ln_mu_exponential(rate.ln() + lp, upper),
            Hazard::Weibull { scale, .. } => {
                self.weibull.as_ref().expect("weibull kernel")[0].ln_mu(scale.ln(), lp, upper)
            }
            Hazard::PiecewiseConstant { breakpoints, rates } => {
                piecewise_mu(breakpoints, rates, lp, upper, None).0.ln()
            }
        }
    }

    /// Returns (ln μ, d ln μ / d lp) and writes d ln μ / d log(hazard parameter) to `out_params`.
    pub fn ln_mu_grad(&self, lp: f64, out_params: &mut [f64]) -> (f64, f64) {
        let upper = self.upper;
        match self.hazard {
            Hazard::Exponential { rate } => {
                let ln_psi = rate.ln() + lp;
                let z = ln_psi.exp() * upper;
                let d = -1.0 + z_over_expm1(z);
                out_params[0] = d;
                (ln_mu_exponential(ln_psi, upper), d)
            }
            Hazard::Weibull { shape, scale } => {
                let [w, w_up, w_down] = self.weibull.as_ref().expect("weibull kernel");
                let ln_scale = scale.ln();
                let (ln_mu, d_ln_psi) = w.ln_mu_and_slope(ln_scale, lp, upper);
                let up = w_up.ln_mu(ln_scale, lp, upper);
                let down = w_down.ln_mu(ln_scale, lp, upper);
                out_params[0] = (up - down) / (2.0 * SHAPE_FD_STEP);
                out_params[1] = -shape * d_ln_psi;
                (ln_mu, d_ln_psi)
            }
            Hazard::PiecewiseConstant { breakpoints, rates } => {
                let (mu, d_lp) = piecewise_mu(breakpoints, rates, lp, upper, Some(out_params));
                out_params.iter_mut().for_each(|g| *g /= mu);
                (mu.ln(), d_lp / mu)
            }
        }
    }
}

fn ln_mu_exponential(ln_psi: f64, upper: f64) -> f64 {
    let z = ln_psi.exp() * upper;
    (-(-z).exp_m1()).ln() - ln_psi
}

// z / (e^z − 1), → 1 as z → 0.
fn z_over_expm1(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - z / 2.0
    } else {
        z / z.exp_m1()
    }
}

/// Weibull μ for a fixed shape, with ln Γ(1/shape) computed once.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WeibullMu {
    shape: f64,
    inv_shape: f64,
    ln_gamma_s: f64,
}

impl WeibullMu {
    pub(crate) fn new(shape: f64) -> Self {
        let s = 1.0 / shape;
        WeibullMu { shape, inv_shape: s, ln_gamma_s: ln_gamma(s) }
    }

    // ψ = κ₂^(−κ₁)·exp(lp); μ = Γ(s)/(κ₁ψ^s)·P(s, ψ·ξ^κ₁), s = 1/κ₁.
    fn parts(&self, ln_scale: f64, lp: f64, upper: f64) -> (f64, f64, f64) {
        let ln_psi = -self.shape * ln_scale + lp;
        let ln_z = ln_psi + self.shape * upper.ln();
        let z = ln_z.exp();
        let ln_p = ln_gamma_p_with(self.inv_shape, z, self.ln_gamma_s);
        let ln_mu = self.ln_gamma_s - self.shape.ln() - self.inv_shape * ln_psi + ln_p;
        (ln_mu, ln_z, ln_p)
    }

    pub(crate) fn ln_mu(&self, ln_scale: f64, lp: f64, upper: f64) -> f64 {
        self.parts(ln_scale, lp, upper).0
    }

    /// ln μ and d ln μ / d ln ψ = −s + z^s e^(−z) / γ(s, z).
    pub(crate) fn ln_mu_and_slope(&self, ln_scale: f64, lp: f64, upper: f64) -> (f64, f64) {
        let (ln_mu, ln_z, ln_p) = self.parts(ln_scale, lp, upper);
        let z = ln_z.exp();
        let r = (self.inv_shape * ln_z - z - self.ln_gamma_s - ln_p).exp();
        (ln_mu, -self.inv_shape + r)
    }
}

// g(r, L) = (1 − e^(−rL))/r and dg/dr.
fn truncated_exp_integral(r: f64, len: f64) -> (f64, f64) {
    let y = r * len;
    if y < 1e-3 {
        let g = len * (1.0 - y / 2.0 + y * y / 6.0 - y * y * y / 24.0);
        let dg = -len * len * (0.5 - y / 3.0 + y * y / 8.0 - y * y * y / 30.0);
        (g, dg)
    } else {
        let e = (-y).exp();
        let g = -(-y).exp_m1() / r;
        (g, (len * e - g) / r)
    }
}

// μ = Σₖ S(τₖ)·g(cλₖ, Lₖ) over intervals clipped to [0, upper]. When `grad` is
// given it receives dμ/d log λⱼ; the second return value is dμ/d lp.
fn piecewise_mu(
    breakpoints: &[f64],
    rates: &[f64],
    lp: f64,
    upper: f64,
    mut grad: Option<&mut [f64]>,
) -> (f64, f64) {
    let c = lp.exp();
    let mut mu = 0.0;
    let mut d_c = 0.0;
    let mut cum = 0.0;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    // Running Σₖ>ⱼ E_k g_k is needed for dμ/dλⱼ; accumulate terms first.
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(rates.len());
    for (k, &start) in breakpoints.iter().enumerate() {
        if start >= upper {
            break;
        }
        let end = breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY).min(upper);
        let len = end - start;
        let e = (-c * cum).exp();
        let (g, dg) = truncated_exp_integral(c * rates[k], len);
        let term = e * g;
        mu += term;
        d_c += -cum * term + e * rates[k] * dg;
        terms.push((len, term));
        if let Some(grad) = grad.as_deref_mut() {
            grad[k] += c * e * dg * rates[k];
        }
        cum += rates[k] * len;
    }
    if let Some(grad) = grad {
        let mut tail = 0.0;
        for j in (0..terms.len()).rev() {
            let (len, term) = terms[j];
            grad[j] += -c * len * tail * rates[j];
            tail += term;
        }
    }
    (mu, c * d_c)
}

/// Survival sub-model: a baseline hazard plus log hazard ratios ζ.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalModel {
    pub hazard: Hazard,
    pub zeta: Vec<f64>,
}

impl SurvivalModel {
    pub fn new(hazard: Hazard, zeta: Vec<f64>) -> Self {
        SurvivalModel { hazard, zeta }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.zeta.len());
        x.iter().zip(&self.zeta).map(|(a, b)| a * b).sum()
    }

    /// log S(a | x).
    pub fn log_survival(&self, a: f64, x: &[f64]) -> f64 {
        self.hazard.log_survival(a, self.linear_predictor(x))
    }

    /// μ(x) = ∫₀^ξ S(a | x) da.
    pub fn mu(&self, x: &[f64], xi: f64) -> f64 {
        self.hazard.ln_mu(self.linear_predictor(x), xi).exp()
    }

    pub fn ln_mu(&self, x: &[f64], xi: f64) -> f64 {
        self.hazard.ln_mu(self.linear_predictor(x), xi)
    }

    /// ∇ ln μ with respect to (log hazard parameters, ζ).
    pub fn grad_log_mu(&self, x: &[f64], xi: f64) -> Vec<f64> {
        let k = self.hazard.n_params();
        let mut g = vec![0.0; k + self.zeta.len()];
        let (_, d_lp) = self.hazard.ln_mu_grad(self.linear_predictor(x), xi, &mut g[..k]);
        for (gj, xj) in g[k..].iter_mut().zip(x) {
            *gj = d_lp * xj;
        }
        g
    }

    /// ∇ log S(a | x) with respect to (log hazard parameters, ζ).
    pub fn grad_log_survival(&self, a: f64, x: &[f64]) -> Vec<f64> {
        let k = self.hazard.n_params();
        let mut g = vec![0.0; k + self.zeta.len()];
        let d_lp = self.hazard.grad_log_survival(a, self.linear_predictor(x), &mut g[..k]);
        for (gj, xj) in g[k..].iter_mut().zip(x) {
            *gj = d_lp * xj;
        }
        g
    }

    /// Density S(a|x)/μ(x) of the backward time on [0, ξ]; zero outside.
    pub fn backward_density(&self, a: f64, x: &[f64], xi: f64) -> f64 {
        if !(0.0..=xi).contains(&a) {
            return 0.0;
        }
        let lp = self.linear_predictor(x);
        (self.hazard.log_survival(a, lp) - self.hazard.ln_mu(lp, xi)).exp()
    }

    /// Backward-time CDF ∫₀^a S / μ.
    pub fn backward_cdf(&self, a: f64, x: &[f64], xi: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        if a >= xi {
            return 1.0;
        }
        let lp = self.linear_predictor(x);
        (self.hazard.ln_mu(lp, a) - self.hazard.ln_mu(lp, xi)).exp()
    }

    /// Closed-form inverse-CDF draw, A = −log(1 − uψμ)/ψ; unit-shape hazards only.
    pub fn sample_backward_time(&self, x: &[f64], xi: f64, u: f64) -> Result<f64, SurvivalError> {
        let rate = match self.hazard {
            Hazard::Exponential { rate } => rate,
            Hazard::Weibull { shape, scale } if shape == 1.0 => 1.0 / scale,
            _ => return Err(SurvivalError::UnsupportedFamily),
        };
        let psi = rate * self.linear_predictor(x).exp();
        // ψμ = 1 − e^(−ψξ)
        let psi_mu = -(-psi * xi).exp_m1();
        let a = -(-u * psi_mu).ln_1p() / psi;
        Ok(a.min(xi))
    }

    /// Inverse-CDF draw by bisection, to absolute tolerance 1e-9·ξ (the loop
    /// actually runs to 1e-12·ξ, which costs ten more halvings).
    pub fn sample_backward_time_numeric(&self, x: &[f64], xi: f64, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let lp = self.linear_predictor(x);
        let ln_total = self.hazard.ln_mu(lp, xi);
        let ln_u = u.ln();
        let (mut lo, mut hi) = (0.0, xi);
        let tol = 1e-12 * xi;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.hazard.ln_mu(lp, mid) - ln_total < ln_u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weibull(shape: f64, scale: f64, zeta: Vec<f64>) -> SurvivalModel {
        SurvivalModel::new(Hazard::Weibull { shape, scale }, zeta)
    }

    #[test]
    fn survival_at_zero_is_one() {
        let models = [
            weibull(3.0, 25.0, vec![1.0, -1.0]),
            SurvivalModel::new(Hazard::Exponential { rate: 0.3 }, vec![1.0, -1.0]),
            SurvivalModel::new(
                Hazard::PiecewiseConstant { breakpoints: vec![0.0, 10.0, 30.0], rates: vec![0.025, 0.1, 0.25] },
                vec![1.0, -1.0],
            ),
        ];
        for m in &models {
            assert_eq!(m.log_survival(0.0, &[0.4, -2.0]), 0.0);
        }
    }

    #[test]
    fn unit_rate_exponential() {
        let m = weibull(1.0, 1.0, vec![0.0]);
        assert!((m.log_survival(2.0, &[0.7]) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn mu_unit_rate() {
        let m = weibull(1.0, 1.0, vec![0.0]);
        let mu = m.mu(&[0.3], 25.0);
        assert!((mu - (1.0 - (-25f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn grad_log_mu_exponential_zeta_component() {
        let m = SurvivalModel::new(Hazard::Exponential { rate: 1.0 }, vec![0.0]);
        let g = m.grad_log_mu(&[1.0], 25.0);
        let z: f64 = 25.0;
        let expected = z * (-z).exp() / (1.0 - (-z).exp()) - 1.0;
        assert!((g[1] - expected).abs() < 1e-14);
        assert!((g[1] + 1.0 - 25.0 * (-25f64).exp()).abs() < 1e-14);

        let at_origin = m.grad_log_mu(&[0.0], 25.0);
        assert_eq!(at_origin[1], 0.0);
    }

    #[test]
    fn density_vanishes_outside_support() {
        let m = weibull(3.0, 25.0, vec![1.0, -1.0]);
        assert_eq!(m.backward_density(-0.1, &[0.5, 0.5], 45.0), 0.0);
        assert_eq!(m.backward_density(45.1, &[0.5, 0.5], 45.0), 0.0);
        assert!(m.backward_density(10.0, &[0.5, 0.5], 45.0) > 0.0);
    }

    #[test]
    fn truncated_exponential_density() {
        let m = weibull(1.0, 4.0, vec![0.0]);
        let xi = 10.0;
        let rate: f64 = 0.25;
        for &a in &[0.0, 1.0, 5.5, 9.9] {
            let direct = rate * (-rate * a).exp() / (1.0 - (-rate * xi).exp());
            assert!((m.backward_density(a, &[2.0], xi) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_sampler_endpoints() {
        let m = weibull(1.0, 1.0, vec![0.0]);
        assert_eq!(m.sample_backward_time(&[0.0], 25.0, 0.0).unwrap(), 0.0);
        let near_one = m.sample_backward_time(&[0.0], 25.0, 1.0 - 1e-15).unwrap();
        assert!(near_one > 20.0 && near_one <= 25.0);
        let mu = 1.0 - (-25f64).exp();
        let half = m.sample_backward_time(&[0.0], 25.0, 0.5).unwrap();
        assert!((half + (1.0 - 0.5 * mu).ln()).abs() < 1e-14);
    }

    #[test]
    fn closed_form_sampler_rejects_shaped_weibull() {
        let m = weibull(3.0, 25.0, vec![1.0]);
        assert_eq!(m.sample_backward_time(&[0.0], 45.0, 0.3), Err(SurvivalError::UnsupportedFamily));
    }

    #[test]
    fn numeric_sampler_matches_closed_form() {
        let m = weibull(1.0, 2.0, vec![0.5, -0.3]);
        for &u in &[0.0, 0.01, 0.3, 0.77, 0.999] {
            let exact = m.sample_backward_time(&[0.2, 1.0], 25.0, u).unwrap();
            let numeric = m.sample_backward_time_numeric(&[0.2, 1.0], 25.0, u);
            assert!((exact - numeric).abs() < 1e-8, "u={u}: {exact} vs {numeric}");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Hazard::new(&HazardSpec::Weibull, &[0.0, 1.0]).is_err());
        assert!(Hazard::new(&HazardSpec::Exponential, &[-1.0]).is_err());
        assert!(Hazard::new(&HazardSpec::Weibull, &[1.0]).is_err());
        let pw = HazardSpec::PiecewiseConstant { breakpoints: vec![0.0, 10.0] };
        assert!(Hazard::new(&pw, &[0.1, 0.2]).is_ok());
        assert!(Hazard::new(&pw, &[0.1, f64::NAN]).is_err());
    }

    #[test]
    fn piecewise_cumulative_hazard() {
        let h = Hazard::PiecewiseConstant { breakpoints: vec![0.0, 10.0, 30.0], rates: vec![0.025, 0.1, 0.25] };
        assert!((h.cumulative(5.0) - 0.125).abs() < 1e-15);
        assert!((h.cumulative(20.0) - (0.25 + 1.0)).abs() < 1e-14);
        assert!((h.cumulative(40.0) - (0.25 + 2.0 + 2.5)).abs() < 1e-14);
        assert_eq!(h.hazard(10.0), 0.1);
        assert_eq!(h.hazard(44.0), 0.25);
    }

    #[test]
    fn mu_monotone_in_upper_limit() {
        let m = weibull(3.0, 25.0, vec![1.0, -1.0]);
        let mut prev = 0.0;
        for k in 1..=90 {
            let xi = k as f64 * 0.5;
            let mu = m.mu(&[1.0, 0.0], xi);
            assert!(mu >= prev && mu <= xi);
            prev = mu;
        }
        assert!(m.mu(&[1.0, 0.0], 1e-9) < 1e-8);
    }
}
