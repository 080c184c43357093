use serde::{Deserialize, Serialize};

use crate::likelihood::LogLikContext;
use crate::model::MetaDataset;
use crate::optimizer::{fit_monotone_with_context, profile_fit, DEConfig, FitResult};
use crate::stats::chi2_quantile_1df;
use crate::{Error, Execution, Result};

/// Endpoint tolerance in θ.
const THETA_TOL: f64 = 1e-3;
const INITIAL_STEP: f64 = 0.05;
const MAX_DOUBLINGS: usize = 60;

/// Endpoint, open flag and the profile points evaluated on the way.
type Endpoint = (f64, bool, Vec<(f64, f64)>);

/// Profile-likelihood interval for the pooled effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCI {
    pub level: f64,
    pub theta_hat: f64,
    /// Maximum of the profile, used as the reference in the ratio.
    pub max_loglik: f64,
    pub lower: f64,
    pub upper: f64,
    /// The bracket could not be closed on that side; the endpoint is the
    /// last point tried.
    pub lower_open: bool,
    pub upper_open: bool,
    /// Every `(θ, profile log-likelihood)` evaluated, sorted by θ.
    pub profile_curve: Vec<(f64, f64)>,
}

/// `θ ↦ max over monotone w and σ² ≥ 0 of l(w, θ, σ²)` for one dataset.
#[derive(Debug, Clone)]
pub struct ProfileLikelihood {
    ctx: LogLikContext,
    config: DEConfig,
    fit: FitResult,
}

impl ProfileLikelihood {
    pub fn new(data: &MetaDataset, lambda1: f64, config: &DEConfig) -> Result<Self> {
        let ctx = LogLikContext::new(data, lambda1)?;
        let fit = fit_monotone_with_context(&ctx, config)?;
        Ok(Self::from_fit(ctx, fit, config))
    }

    pub fn from_fit(ctx: LogLikContext, fit: FitResult, config: &DEConfig) -> Self {
        Self {
            ctx,
            config: config.clone(),
            fit,
        }
    }

    pub fn fit(&self) -> &FitResult {
        &self.fit
    }

    pub fn fit_at(&self, theta: f64) -> Result<FitResult> {
        profile_fit(&self.ctx, theta, &self.config)
    }

    pub fn at(&self, theta: f64) -> Result<f64> {
        Ok(self.fit_at(theta)?.loglik)
    }

    /// Profile values on a grid of θ.
    pub fn curve(&self, thetas: &[f64]) -> Result<Vec<(f64, f64)>> {
        let inner = self.config.clone().with_execution(Execution::Sequential);
        self.config
            .execution
            .map(thetas, |&t| {
                profile_fit(&self.ctx, t, &inner).map(|f| (t, f.loglik))
            })
            .into_iter()
            .collect()
    }

    /// Interval `{θ : 2 (l_max - l_p(θ)) ≤ χ²_1(level)}`, each endpoint
    /// found by doubling a bracket outward from θ̂ and then bisecting it to
    /// a width of 1e-3.
    pub fn interval(&self, level: f64) -> Result<ProfileCI> {
        let cutoff = chi2_quantile_1df(level)?;
        let theta_hat = self.fit.theta;
        let max_loglik = self.fit.loglik.max(self.at(theta_hat)?);
        let inner = self.config.clone().with_execution(Execution::Sequential);
        let sides = self.config.execution.map(&[-1.0f64, 1.0], |&dir| {
            self.endpoint(theta_hat, dir, max_loglik, cutoff, &inner)
        });
        let mut sides = sides.into_iter();
        let (lower, lower_open, mut curve) = sides.next().unwrap()?;
        let (upper, upper_open, upper_curve) = sides.next().unwrap()?;
        curve.extend(upper_curve);
        curve.push((theta_hat, max_loglik));
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(ProfileCI {
            level,
            theta_hat,
            max_loglik,
            lower,
            upper,
            lower_open,
            upper_open,
            profile_curve: curve,
        })
    }

    fn endpoint(
        &self,
        theta_hat: f64,
        dir: f64,
        max_loglik: f64,
        cutoff: f64,
        config: &DEConfig,
    ) -> Result<Endpoint> {
        let mut curve = Vec::new();
        let excess = |theta: f64, curve: &mut Vec<(f64, f64)>| -> Result<f64> {
            let l = profile_fit(&self.ctx, theta, config)?.loglik;
            curve.push((theta, l));
            Ok(2.0 * (max_loglik - l) - cutoff)
        };
        let mut inside = theta_hat;
        let mut step = INITIAL_STEP;
        let mut outside = theta_hat + dir * step;
        let mut doublings = 0;
        while excess(outside, &mut curve)? < 0.0 {
            inside = outside;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Ok((outside, true, curve));
            }
            step *= 2.0;
            outside = theta_hat + dir * step;
        }
        while (outside - inside).abs() > THETA_TOL {
            let mid = 0.5 * (inside + outside);
            if excess(mid, &mut curve)? < 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok((0.5 * (inside + outside), false, curve))
    }
}

/// Profile log-likelihood of θ under the monotone model.
pub fn profile_loglik(
    theta: f64,
    data: &MetaDataset,
    lambda1: f64,
    config: &DEConfig,
) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::Domain("theta must be finite".into()));
    }
    let ctx = LogLikContext::new(data, lambda1)?;
    Ok(profile_fit(&ctx, theta, config)?.loglik)
}

/// Profile-likelihood confidence interval for θ at `level`.
pub fn profile_ci_theta(
    data: &MetaDataset,
    lambda1: f64,
    level: f64,
    config: &DEConfig,
) -> Result<ProfileCI> {
    chi2_quantile_1df(level)?;
    ProfileLikelihood::new(data, lambda1, config)?.interval(level)
}
