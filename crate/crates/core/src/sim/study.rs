use super::{generate_dataset, true_intercepts, SimError, SimScenario};
use crate::estimation::{fit_ipcc, fit_profile, Coordinate, FitConfig, FitResult, Restriction};
use crate::inference::{lrt_against, natural_vector, sandwich_for_fit, LrtResult};
use crate::likelihood::Layout;
use crate::stats::{mean, sd};
use crate::types::{Dataset, GroupCounts};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

/// What one replication produced.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub replication: u64,
    pub converged: bool,
    pub diagnostic: String,
    /// Natural scale, layout order, α*/ν* for the intercepts.
    pub estimates: Vec<f64>,
    /// Natural-scale asymptotic covariance diagonal (delta method for hazard parameters).
    pub variances: Vec<f64>,
    /// Asymptotic covariance of β̂.
    pub beta_covariance: Option<DMatrix<f64>>,
    /// The offset intercept ν̂ (NaN without prevalent cases).
    pub nu_offset: f64,
    pub loglik: f64,
}

/// Aggregates over the converged replications of one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd_emp: Vec<f64>,
    /// sqrt of the mean asymptotic variance.
    pub sd_asy: Vec<f64>,
    /// Mean asymptotic covariance of β̂ (row-major).
    pub beta_covariance: Vec<f64>,
    pub mean_nu_offset: f64,
    pub replications: usize,
    pub converged: usize,
    /// K = 1: SD_emp is undefined.
    pub single_fit: bool,
    pub counts: GroupCounts,
    pub beta_dim: usize,
    pub beta_range: (usize, usize),
    #[serde(skip)]
    pub outcomes: Vec<ReplicationOutcome>,
}

impl SimSummary {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Asymptotic variances of β̂ (squared SD_asy).
    pub fn beta_var_asy(&self) -> Vec<f64> {
        (self.beta_range.0..self.beta_range.1).map(|i| self.sd_asy[i].powi(2)).collect()
    }

    pub fn beta_cov_asy(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.beta_dim, self.beta_dim, &self.beta_covariance)
    }

    /// |mean − truth|, NaN where the truth is unknown.
    pub fn bias(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.truth).map(|(m, t)| m - t).collect()
    }
}

/// Fits one replication and computes its sandwich covariance.
pub fn replicate(scn: &SimScenario, replication: u64) -> Result<ReplicationOutcome, SimError> {
    let data = generate_dataset(scn, replication)?;
    Ok(fit_replication(scn, &data, replication))
}

fn replication_config(scn: &SimScenario, replication: u64) -> FitConfig {
    FitConfig { seed: scn.seed ^ replication.wrapping_mul(0x9E37_79B9_7F4A_7C15), ..scn.fit.clone() }
}

fn fit_replication(scn: &SimScenario, data: &Dataset, replication: u64) -> ReplicationOutcome {
    let spec = scn.model_spec();
    let failed = |diagnostic: String| ReplicationOutcome {
        replication,
        converged: false,
        diagnostic,
        estimates: vec![],
        variances: vec![],
        beta_covariance: None,
        nu_offset: f64::NAN,
        loglik: f64::NAN,
    };
    let fit = match fit_ipcc(data, &spec, &replication_config(scn, replication)) {
        Ok(f) => f,
        Err(e) => return failed(e.to_string()),
    };
    if !fit.converged {
        return failed(fit.diagnostic);
    }
    let cov = match sandwich_for_fit(&fit, data, &spec) {
        Ok(c) => c,
        Err(e) => return failed(e.to_string()),
    };
    let natural_sd = cov.natural_sd(&fit.layout, &fit.unconstrained);
    let b = &fit.layout.beta;
    let beta_covariance = {
        let pos: Vec<usize> = b.clone().map(|i| cov.free.iter().position(|&f| f == i).expect("β is free")).collect();
        Some(DMatrix::from_fn(pos.len(), pos.len(), |r, c| cov.omega_over_n[(pos[r], pos[c])]))
    };
    ReplicationOutcome {
        replication,
        converged: true,
        diagnostic: fit.diagnostic.clone(),
        estimates: natural_vector(&fit),
        variances: natural_sd.iter().map(|s| s * s).collect(),
        beta_covariance,
        nu_offset: fit.layout.nu.map_or(f64::NAN, |i| fit.unconstrained[i]),
        loglik: fit.loglik,
    }
}

/// K replications in parallel; results land in pre-assigned slots, so the
/// summary does not depend on scheduling.
pub fn run_scenario(scn: &SimScenario) -> Result<SimSummary, SimError> {
    scn.validate()?;
    let outcomes: Vec<Result<ReplicationOutcome, SimError>> =
        (0..scn.replications as u64).into_par_iter().map(|r| replicate(scn, r)).collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let failed: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| !o.converged).collect();
    if failed.len() * 10 > scn.replications {
        return Err(SimError::TooManyFailures {
            failed: failed.len(),
            total: scn.replications,
            first: format!("replication {}: {}", failed[0].replication, failed[0].diagnostic),
        });
    }
    summarize(scn, outcomes)
}

/// Aggregates replication outcomes into Est / SD_emp / SD_asy.
pub fn summarize(scn: &SimScenario, outcomes: Vec<ReplicationOutcome>) -> Result<SimSummary, SimError> {
    let spec = scn.model_spec();
    let counts = GroupCounts { n0: scn.n0, n1: scn.n1, n2: scn.n2 };
    let layout = Layout::new(&spec, counts);
    let dim = layout.dim;
    let names = natural_names(&layout, &spec, &scn.covariate_names());

    let (alpha_star, nu_star) = true_intercepts(scn)?;
    let mut truth = vec![f64::NAN; dim];
    if let Some(i) = layout.alpha {
        truth[i] = alpha_star;
    }
    if let Some(i) = layout.nu {
        truth[i] = nu_star;
    }
    truth[layout.beta.clone()].copy_from_slice(&scn.beta);
    if layout.has_survival() {
        if scn.gen_family == scn.fit_family {
            truth[layout.hazard.clone()].copy_from_slice(&scn.gen_params);
        }
        truth[layout.zeta.clone()].copy_from_slice(&scn.zeta);
    }

    let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.converged).collect();
    let column = |f: &dyn Fn(&ReplicationOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<Vec<f64>>();
    let mut est_mean = vec![f64::NAN; dim];
    let mut sd_emp = vec![f64::NAN; dim];
    let mut sd_asy = vec![f64::NAN; dim];
    for j in 0..dim {
        let est = column(&|o| o.estimates[j]);
        let var = column(&|o| o.variances[j]);
        if !est.is_empty() {
            est_mean[j] = mean(&est);
            sd_emp[j] = sd(&est);
            sd_asy[j] = mean(&var).sqrt();
        }
    }
    let p = layout.beta.len();
    let mut beta_cov = DMatrix::<f64>::zeros(p, p);
    let mut n_cov = 0.0;
    for o in &ok {
        if let Some(c) = &o.beta_covariance {
            beta_cov += c;
            n_cov += 1.0;
        }
    }
    if n_cov > 0.0 {
        beta_cov /= n_cov;
    }
    let nu_offsets: Vec<f64> = ok.iter().map(|o| o.nu_offset).collect();
    Ok(SimSummary {
        names,
        truth,
        mean: est_mean,
        sd_emp,
        sd_asy,
        beta_covariance: beta_cov.transpose().as_slice().to_vec(),
        mean_nu_offset: if nu_offsets.is_empty() { f64::NAN } else { mean(&nu_offsets) },
        replications: outcomes.len(),
        converged: ok.len(),
        single_fit: outcomes.len() == 1,
        counts,
        beta_dim: p,
        beta_range: (layout.beta.start, layout.beta.end),
        outcomes,
    })
}

/// Natural-scale labels: `alpha*`, `nu*`, `beta:x1`, `kappa_1`, `zeta:x1`.
fn natural_names(layout: &Layout, spec: &crate::types::ModelSpec, covariates: &[String]) -> Vec<String> {
    layout
        .names(spec, covariates)
        .into_iter()
        .map(|n| match n.as_str() {
            "alpha" => "alpha*".to_string(),
            "nu" => "nu*".to_string(),
            _ => n.strip_prefix("log_").map(str::to_string).unwrap_or(n),
        })
        .collect()
}

/// One row of an efficiency table: var_asy(base) / var_asy(variant).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub variant: usize,
    pub n1: usize,
    pub n2: usize,
    /// n2 / (n1 + n2).
    pub proportion: f64,
    /// Coordinate name, or `generalized` for the ratio of determinants of the
    /// β covariances (raised to 1/p), or `mean` for the ratio of traces.
    pub coordinate: String,
    pub ratio: f64,
}

/// Variance ratios of β̂ between a base scenario and each variant.
pub fn efficiency_curve(base: &SimSummary, variants: &[SimSummary]) -> Vec<EfficiencyRow> {
    let base_var = base.beta_var_asy();
    let base_cov = base.beta_cov_asy();
    let p = base.beta_dim as f64;
    let mut rows = Vec::new();
    for (k, v) in variants.iter().enumerate() {
        let var = v.beta_var_asy();
        let row = |coordinate: String, ratio: f64| EfficiencyRow {
            variant: k,
            n1: v.counts.n1,
            n2: v.counts.n2,
            proportion: v.counts.n2 as f64 / (v.counts.n1 + v.counts.n2) as f64,
            coordinate,
            ratio,
        };
        for (j, (b, x)) in base_var.iter().zip(&var).enumerate() {
            rows.push(row(base.names[base.beta_range.0 + j].clone(), b / x));
        }
        rows.push(row("mean".into(), base_var.iter().sum::<f64>() / var.iter().sum::<f64>()));
        let det_ratio = base_cov.determinant() / v.beta_cov_asy().determinant();
        rows.push(row("generalized".into(), det_ratio.powf(1.0 / p)));
    }
    rows
}

/// One point of the added-incident versus added-prevalent equivalence curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub added_incident: usize,
    /// Smallest n2 whose variance ratio falls in the band, if any.
    pub n2: Option<usize>,
    /// The n2 whose ratio is closest to 1 and that ratio, reported when no n2 hits the band.
    pub nearest_n2: usize,
    pub nearest_ratio: f64,
}

/// Band on var(β̂ with prevalent cases) / var(β̂ with added incident cases).
pub const EQUIVALENCE_BAND: (f64, f64) = (0.9985, 1.0015);

/// For each added-incident variance, the smallest n2 on the grid whose
/// variance ratio lies in [`EQUIVALENCE_BAND`]. Inputs are (count, mean β̂ variance) pairs.
pub fn equivalence_search(incident: &[(usize, f64)], prevalent: &[(usize, f64)]) -> Vec<EquivalenceRow> {
    let mut grid = prevalent.to_vec();
    grid.sort_by_key(|p| p.0);
    incident
        .iter()
        .map(|&(m, var_cc)| {
            let ratios: Vec<(usize, f64)> = grid.iter().map(|&(n2, v)| (n2, v / var_cc)).collect();
            let hit = ratios.iter().find(|(_, r)| (EQUIVALENCE_BAND.0..=EQUIVALENCE_BAND.1).contains(r)).map(|p| p.0);
            let nearest = ratios
                .iter()
                .min_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
                .copied()
                .unwrap_or((0, f64::NAN));
            EquivalenceRow { added_incident: m, n2: hit, nearest_n2: nearest.0, nearest_ratio: nearest.1 }
        })
        .collect()
}

/// Bias of β̂ and ζ̂ when the generating and fitted hazard families differ.
#[derive(Debug, Clone, Serialize)]
pub struct MisspecificationSummary {
    pub summary: SimSummary,
    pub beta_bias: Vec<f64>,
    pub zeta_bias: Vec<f64>,
}

pub fn misspecification_study(scn: &SimScenario) -> Result<MisspecificationSummary, SimError> {
    let summary = run_scenario(scn)?;
    let bias = summary.bias();
    let layout = Layout::new(&scn.model_spec(), summary.counts);
    Ok(MisspecificationSummary {
        beta_bias: bias[layout.beta.clone()].to_vec(),
        zeta_bias: bias[layout.zeta.clone()].to_vec(),
        summary,
    })
}

/// LRT of every (β, γ) coordinate fixed at its generating value.
#[derive(Debug, Clone, Serialize)]
pub struct LrtCalibration {
    pub statistics: Vec<f64>,
    pub df: usize,
    pub rejection_rate: f64,
    pub mean_statistic: f64,
    pub failures: usize,
}

pub fn lrt_calibration(scn: &SimScenario, level: f64) -> Result<LrtCalibration, SimError> {
    scn.validate()?;
    if scn.gen_family != scn.fit_family || scn.omitted.is_some() || scn.n2 == 0 {
        return Err(SimError::InvalidScenario(
            "LRT calibration needs prevalent cases and a correctly specified survival model".into(),
        ));
    }
    let spec = scn.model_spec();
    let mut restrictions = Vec::new();
    for (k, &b) in scn.beta.iter().enumerate() {
        restrictions.push(Restriction { coordinate: Coordinate::Beta(k), value: b });
    }
    for (k, &h) in scn.gen_params.iter().enumerate() {
        restrictions.push(Restriction { coordinate: Coordinate::Hazard(k), value: h });
    }
    for (k, &z) in scn.zeta.iter().enumerate() {
        restrictions.push(Restriction { coordinate: Coordinate::Zeta(k), value: z });
    }
    let df = restrictions.len();
    let results: Vec<Result<Option<LrtResult>, SimError>> = (0..scn.replications as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate_dataset(scn, r)?;
            let config = replication_config(scn, r);
            let full: FitResult = match fit_profile(&data, &spec, &config, &[]) {
                Ok(f) => f,
                Err(_) => return Ok(None),
            };
            Ok(lrt_against(&full, &data, &spec, &config, &restrictions).ok())
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let statistics: Vec<f64> = results.iter().flatten().map(|r| r.statistic).collect();
    let failures = results.len() - statistics.len();
    let critical = chi2_quantile(1.0 - level, df);
    let rejections = statistics.iter().filter(|&&s| s > critical).count();
    Ok(LrtCalibration {
        rejection_rate: rejections as f64 / statistics.len().max(1) as f64,
        mean_statistic: mean(&statistics),
        statistics,
        df,
        failures,
    })
}

/// Upper-tail critical value by bisection on the survival function.
fn chi2_quantile(p: f64, df: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0 * df as f64 + 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if crate::special::chi2_sf(mid, df) > 1.0 - p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generate_dataset;
    use crate::types::group_counts;

    #[test]
    fn chi2_critical_values() {
        assert!((chi2_quantile(0.95, 1) - 3.841458820694124).abs() < 1e-9);
        assert!((chi2_quantile(0.95, 6) - 12.591587243743977).abs() < 1e-9);
    }

    #[test]
    fn equivalence_band_and_nearest() {
        let rows = equivalence_search(&[(20, 1.0), (40, 0.5)], &[(0, 1.2), (20, 1.001), (40, 0.9)]);
        assert_eq!(rows[0].n2, Some(20));
        assert_eq!(rows[1].n2, None);
        assert_eq!(rows[1].nearest_n2, 40);
        assert!((rows[1].nearest_ratio - 1.8).abs() < 1e-12);
    }

    #[test]
    fn single_replication_is_flagged() {
        let scn = SimScenario { n0: 100, n1: 100, n2: 100, replications: 1, ..SimScenario::default() };
        let s = run_scenario(&scn).unwrap();
        assert!(s.single_fit);
        assert!(s.sd_emp.iter().all(|v| v.is_nan()));
        assert!(s.sd_asy.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn counts_match_scenario() {
        let scn = SimScenario { n0: 30, n1: 20, n2: 10, ..SimScenario::default() };
        let data = generate_dataset(&scn, 0).unwrap();
        assert_eq!(group_counts(&data), GroupCounts { n0: 30, n1: 20, n2: 10 });
    }
}
