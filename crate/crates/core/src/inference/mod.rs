//! Selection-adjusted inference: profile-likelihood interval for the pooled
//! effect, the sampling law of study p-values, and the Monte-Carlo test of a
//! constant weight function.

mod profile;
mod pvalue;
mod selection;

pub use profile::{profile_ci_theta, profile_loglik, ProfileCI, ProfileLikelihood};
pub use pvalue::{DensityForm, PvalDensityParams, SignRule};
pub use selection::{
    monte_carlo_pvalue, replicate_statistic, selection_test, CountRule, SelectionTestConfig,
    SelectionTestResult,
};
