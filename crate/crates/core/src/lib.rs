//! Exposure–incidence log odds ratios from case-control data with controls,
//! incident cases and prevalent cases.
//!
//! Prevalent cases are survivors, so their covariate distribution is tilted by
//! both disease risk and post-diagnosis survival. The estimator profiles out
//! the covariate distribution (an empirical likelihood) and models the time
//! from diagnosis to sampling with a parametric proportional-hazards survival
//! model, which removes the survival bias from the log odds ratios β.
//!
//! ```no_run
//! use ipcc::{fit_ipcc, sandwich_for_fit, FitConfig, HazardSpec, ModelSpec};
//! # let data: ipcc::Dataset = unimplemented!();
//! let spec = ModelSpec::full(data.dim(), HazardSpec::Weibull, 40.0);
//! let fit = fit_ipcc(&data, &spec, &FitConfig::default()).unwrap();
//! let cov = sandwich_for_fit(&fit, &data, &spec).unwrap();
//! println!("{:?} ± {:?}", fit.theta_hat.beta, cov.sd());
//! ```

pub mod estimation;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod optimize;
pub mod rng;
pub mod sim;
pub mod special;
pub mod stats;
pub mod survival;
pub mod types;

pub use estimation::{
    default_initialization, fit_ipcc, fit_logistic, fit_profile, pooled_cases, Coordinate, EstimationError,
    FitConfig, FitResult, Restriction,
};
pub use inference::{
    jackknife_se, lrt, lrt_against, natural_vector, numeric_hessian, sandwich_covariance, sandwich_for_fit,
    CovarianceEstimate, InferenceError, JackknifeResult, LrtResult,
};
pub use likelihood::{
    profile_loglik, profile_score, recover_masses, EmpiricalMasses, Layout, LikelihoodError, ProfileLikelihood,
    TiltWeights,
};
pub use survival::{Hazard, SurvivalError, SurvivalModel};
pub use types::{
    group_counts, validate_dataset, Dataset, GroupCounts, GroupLabel, HazardSpec, ModelSpec, ParamVector, Subject,
    ValidationReport, Violation,
};
