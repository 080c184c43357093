use serde::{Deserialize, Serialize};

use super::pvalue::{PvalDensityParams, SignRule};
use crate::likelihood::LogLikContext;
use crate::model::{MetaDataset, StepWeights, DEFAULT_LAMBDA1};
use crate::optimizer::{
    fit_monotone_with_context, fit_random_effects_with, DEConfig, FitResult, RandomEffectsEstimator,
};
use crate::stats::RngStream;
use crate::{Error, Execution, Result};

/// Which replicates count as at least as extreme as the observed statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountRule {
    /// `T_j ≤ T₀`: a small smallest weight is evidence of selection.
    #[default]
    AtMostObserved,
    /// `T₀ ≤ T_j`, the upper tail.
    AtLeastObserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTestConfig {
    /// Number of simulated datasets `M`.
    pub replicates: usize,
    pub seed: u64,
    /// Retain every replicate's fitted weights.
    pub keep_curves: bool,
    pub lambda1: f64,
    pub null_estimator: RandomEffectsEstimator,
    pub sign_rule: SignRule,
    pub count_rule: CountRule,
    /// Settings for the observed and the replicate monotone fits; its seed
    /// is used for the observed fit, replicates get derived seeds.
    pub de: DEConfig,
}

impl Default for SelectionTestConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 1,
            keep_curves: false,
            lambda1: DEFAULT_LAMBDA1,
            null_estimator: RandomEffectsEstimator::default(),
            sign_rule: SignRule::default(),
            count_rule: CountRule::default(),
            de: DEConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTestResult {
    /// Observed statistic, the smallest fitted monotone weight.
    pub t0: f64,
    /// Statistic of replicate `j` at index `j`.
    pub replicate_stats: Vec<f64>,
    pub m: usize,
    pub p_value: f64,
    pub null_theta: f64,
    pub null_sigma2: f64,
    pub observed_fit: FitResult,
    pub replicate_weight_curves: Option<Vec<Vec<f64>>>,
    /// Replicates whose first fit did not converge and were refit.
    pub retried: usize,
    /// Replicates still unconverged after the retry; their statistic is
    /// counted as is.
    pub nonconverged: usize,
}

/// `(1 + #{j : T_j ≤ t0}) / (1 + M)` for [`CountRule::AtMostObserved`],
/// `(1 + #{j : t0 ≤ T_j}) / (1 + M)` for [`CountRule::AtLeastObserved`].
pub fn monte_carlo_pvalue(t0: f64, stats: &[f64], rule: CountRule) -> f64 {
    let hits = stats
        .iter()
        .filter(|&&t| match rule {
            CountRule::AtMostObserved => t <= t0,
            CountRule::AtLeastObserved => t0 <= t,
        })
        .count();
    (1 + hits) as f64 / (1 + stats.len()) as f64
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Replicate {
    stat: f64,
    weights: StepWeights,
    retried: bool,
    converged: bool,
}

fn null_laws(data: &MetaDataset, theta: f64, sigma2: f64) -> Result<Vec<PvalDensityParams>> {
    data.std_errors()
        .iter()
        .map(|&u| PvalDensityParams::new(theta, u, sigma2))
        .collect()
}

fn run_replicate(
    data: &MetaDataset,
    laws: &[PvalDensityParams],
    cfg: &SelectionTestConfig,
    inner: &DEConfig,
    j: usize,
) -> Result<Replicate> {
    let mut rng = RngStream::new(cfg.seed, j as u64 + 1);
    let y: Vec<f64> = laws
        .iter()
        .map(|law| law.sample(&mut rng, cfg.sign_rule).1)
        .collect();
    let rep = data.with_effects(&y)?;
    let rctx = LogLikContext::new(&rep, cfg.lambda1)?;
    let mut retried = false;
    let mut fit =
        fit_monotone_with_context(&rctx, &inner.clone().with_seed(mix(cfg.seed, j as u64, 0)))?;
    if !fit.converged {
        retried = true;
        fit =
            fit_monotone_with_context(&rctx, &inner.clone().with_seed(mix(cfg.seed, j as u64, 1)))?;
    }
    Ok(Replicate {
        stat: fit.weights.min(),
        converged: fit.converged,
        weights: fit.weights,
        retried,
    })
}

/// Statistic of replicate `j` (zero-based) of [`selection_test`] under the
/// null parameters `(theta, sigma2)`, computed on its own.
pub fn replicate_statistic(
    data: &MetaDataset,
    cfg: &SelectionTestConfig,
    theta: f64,
    sigma2: f64,
    j: usize,
) -> Result<f64> {
    let laws = null_laws(data, theta, sigma2)?;
    let inner = cfg.de.clone().with_execution(Execution::Sequential);
    Ok(run_replicate(data, &laws, cfg, &inner, j)?.stat)
}

/// Monte-Carlo test of a constant weight function.
///
/// 1. Fit the no-selection random-effects model, giving `(θ̂₀, σ̂₀²)`.
/// 2. Fit the monotone model to the data; `T₀ = min ŵ`.
/// 3. For `j = 1..M` redraw every study's p-value from the law with
///    parameters `(θ̂₀, u_i, σ̂₀²)` together with a random sign, keeping the
///    observed `u_i`, and refit the monotone model; `T_j = min ŵ_j`.
/// 4. Report `(1 + #{T_j ≤ T₀}) / (1 + M)` (see [`CountRule`]).
///
/// Replicate `j` draws from stream `j + 1` of the configured seed, so the
/// result does not depend on how replicates are scheduled.
pub fn selection_test(
    data: &MetaDataset,
    cfg: &SelectionTestConfig,
) -> Result<SelectionTestResult> {
    if cfg.replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    let null = fit_random_effects_with(data, cfg.null_estimator)?;
    let ctx = LogLikContext::new(data, cfg.lambda1)?;
    let observed = fit_monotone_with_context(&ctx, &cfg.de)?;
    let t0 = observed.weights.min();

    let laws = null_laws(data, null.theta, null.sigma2)?;
    let inner = cfg.de.clone().with_execution(Execution::Sequential);
    let run = |j: usize| run_replicate(data, &laws, cfg, &inner, j);
    let reps = cfg
        .de
        .execution
        .map_range(cfg.replicates, run)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let replicate_stats: Vec<f64> = reps.iter().map(|r| r.stat).collect();
    let p_value = monte_carlo_pvalue(t0, &replicate_stats, cfg.count_rule);
    Ok(SelectionTestResult {
        t0,
        m: cfg.replicates,
        p_value,
        null_theta: null.theta,
        null_sigma2: null.sigma2,
        observed_fit: observed,
        replicate_weight_curves: cfg
            .keep_curves
            .then(|| reps.iter().map(|r| r.weights.values().to_vec()).collect()),
        retried: reps.iter().filter(|r| r.retried).count(),
        nonconverged: reps.iter().filter(|r| !r.converged).count(),
        replicate_stats,
    })
}
