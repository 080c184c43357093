use rand::Rng;
use serde::{Deserialize, Serialize};

use super::de::{de_maximize, DEConfig, DeProblem};
use crate::likelihood::{LogLikContext, WEIGHT_FLOOR};
use crate::model::{MetaDataset, Normalization, StepWeights};
use crate::stats::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    MonotoneDe,
    UnconstrainedCoordinate,
    RandomEffects,
}

/// Estimated weights and parameters with the attained log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: StepWeights,
    pub theta: f64,
    pub sigma2: f64,
    /// Log-likelihood re-evaluated at the returned point.
    pub loglik: f64,
    pub converged: bool,
    /// DE generations, Newton cycles or Newton iterations, by method.
    pub generations_used: usize,
    pub evaluations: usize,
    pub method: FitMethod,
    pub lambda1: f64,
}

/// Search box of the monotone problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub theta: (f64, f64),
    pub sigma2: (f64, f64),
}

/// `θ ∈ [min y - 3 max η̃, max y + 3 max η̃]` with `η̃` built from the
/// moment (DerSimonian–Laird) heterogeneity estimate, and
/// `σ² ∈ [0, 10 · var(y)]`.
pub fn monotone_bounds(data: &MetaDataset) -> SearchBounds {
    let y = data.effects();
    let u = data.std_errors();
    let tau2 = dersimonian_laird(&y, &u).1;
    let max_eta = u.iter().map(|u| (u * u + tau2).sqrt()).fold(0.0, f64::max);
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
    SearchBounds {
        theta: (ymin - 3.0 * max_eta, ymax + 3.0 * max_eta),
        sigma2: (0.0, 10.0 * var),
    }
}

fn is_monotone_prefix(w: &[f64]) -> bool {
    w.windows(2).all(|p| p[0] <= p[1])
}

fn monotone_weights(prefix: &[f64]) -> Vec<f64> {
    let mut w = prefix.to_vec();
    w.push(1.0);
    w
}

/// Monotone fit: maximizes the log-likelihood over
/// `{1 = w_{k-1} ≥ … ≥ w_0, θ, σ² ≥ 0}` by differential evolution on
/// `(w_0, …, w_{k-2}, θ, σ²)`.
pub fn fit_monotone(data: &MetaDataset, lambda1: f64, config: &DEConfig) -> Result<FitResult> {
    let ctx = LogLikContext::new(data, lambda1)?;
    fit_monotone_with_context(&ctx, config)
}

pub fn fit_monotone_with_context(ctx: &LogLikContext, config: &DEConfig) -> Result<FitResult> {
    monotone_de(ctx, None, config)
}

/// Maximum over the monotone weights and `σ²` with `θ` held fixed.
pub(crate) fn profile_fit(ctx: &LogLikContext, theta: f64, config: &DEConfig) -> Result<FitResult> {
    monotone_de(ctx, Some(theta), config)
}

fn monotone_de(
    ctx: &LogLikContext,
    fixed_theta: Option<f64>,
    config: &DEConfig,
) -> Result<FitResult> {
    let k = ctx.k();
    let nw = k - 1;
    let sb = monotone_bounds(ctx.data());
    let mut bounds = vec![(WEIGHT_FLOOR, 1.0); nw];
    if fixed_theta.is_none() {
        bounds.push(sb.theta);
    }
    bounds.push(sb.sigma2);

    let unpack = |x: &[f64]| -> (f64, f64) {
        match fixed_theta {
            Some(t) => (t, x[nw]),
            None => (x[nw], x[nw + 1]),
        }
    };
    let objective = |x: &[f64]| {
        let (t, s2) = unpack(x);
        ctx.log_likelihood(&monotone_weights(&x[..nw]), t, s2)
    };
    let feasible = |x: &[f64]| is_monotone_prefix(&x[..nw]);
    let init_bounds = bounds.clone();
    // Sorted uniforms are uniform on the monotone cone.
    let init = move |rng: &mut RngStream| -> Vec<f64> {
        let mut x: Vec<f64> = init_bounds
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
            .collect();
        x[..nw].sort_by(f64::total_cmp);
        x
    };
    let problem = DeProblem::new(bounds.clone())
        .with_constraint(&feasible)
        .with_init(&init);
    let out = de_maximize(objective, &problem, config)?;

    let weights = StepWeights::new(
        monotone_weights(&out.best[..nw]),
        Normalization::SmallestPGroupIsOne,
    )?;
    let (theta, sigma2) = unpack(&out.best);
    let loglik = ctx.log_likelihood_at(&weights, theta, sigma2);
    Ok(FitResult {
        converged: out.converged(),
        weights,
        theta,
        sigma2,
        loglik,
        generations_used: out.generations,
        evaluations: out.evaluations,
        method: FitMethod::MonotoneDe,
        lambda1: ctx.lambda1(),
    })
}

const MAX_CYCLES: usize = 10_000;

/// Unconstrained fit by cyclic single-coordinate Newton ascent, started at
/// constant weights and the DerSimonian–Laird estimate.
///
/// Weights are reported with the largest weight equal to one.
pub fn fit_unconstrained(data: &MetaDataset, lambda1: f64, tol: f64) -> Result<FitResult> {
    let ctx = LogLikContext::new(data, lambda1)?;
    let (theta, sigma2) = dersimonian_laird(&data.effects(), &data.std_errors());
    fit_unconstrained_from(&ctx, &vec![1.0; ctx.k()], theta, sigma2, tol)
}

/// Same as [`fit_unconstrained`] from an explicit starting point.
pub fn fit_unconstrained_from(
    ctx: &LogLikContext,
    w0: &[f64],
    theta0: f64,
    sigma2_0: f64,
    tol: f64,
) -> Result<FitResult> {
    let k = ctx.k();
    if w0.len() != k {
        return Err(Error::Domain(
            "starting weights have the wrong length".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let mut x: Vec<f64> = w0.to_vec();
    x.push(theta0);
    x.push(sigma2_0.max(0.0));
    let lo: Vec<f64> = (0..k + 2)
        .map(|c| {
            if c < k {
                WEIGHT_FLOOR
            } else if c == k {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        })
        .collect();
    let hi: Vec<f64> = (0..k + 2)
        .map(|c| if c < k { 1.0 } else { f64::INFINITY })
        .collect();
    let eval = |x: &[f64]| ctx.log_likelihood(&x[..k], x[k], x[k + 1]);
    let mut evaluations = 0usize;

    let mut current = eval(&x);
    if current <= crate::PENALTY {
        return Err(Error::Domain("starting point is not admissible".into()));
    }
    let mut converged = false;
    let mut cycles = 0;
    while cycles < MAX_CYCLES {
        cycles += 1;
        let before = current;
        for c in 0..k + 2 {
            let (v, e) = newton_coordinate(&eval, &mut x, c, lo[c], hi[c], current);
            current = v;
            evaluations += e;
        }
        if (current - before).abs() < tol {
            converged = true;
            break;
        }
    }

    let max_w = x[..k].iter().cloned().fold(0.0, f64::max);
    let w: Vec<f64> = x[..k]
        .iter()
        .map(|v| (v / max_w).max(WEIGHT_FLOOR))
        .collect();
    let weights = StepWeights::new(w, Normalization::LargestWeightIsOne)?;
    let loglik = ctx.log_likelihood_at(&weights, x[k], x[k + 1]);
    Ok(FitResult {
        weights,
        theta: x[k],
        sigma2: x[k + 1],
        loglik,
        converged,
        generations_used: cycles,
        evaluations,
        method: FitMethod::UnconstrainedCoordinate,
        lambda1: ctx.lambda1(),
    })
}

// One damped Newton step in coordinate `c`; derivatives by finite
// differences with step 1e-5 (1 + |x|), one-sided next to a bound.
fn newton_coordinate<F: Fn(&[f64]) -> f64>(
    eval: &F,
    x: &mut [f64],
    c: usize,
    lo: f64,
    hi: f64,
    f0: f64,
) -> (f64, usize) {
    let x0 = x[c];
    let h = 1e-5 * (1.0 + x0.abs());
    let at = |v: f64, x: &mut [f64]| {
        x[c] = v;
        let r = eval(x);
        x[c] = x0;
        r
    };
    let (d1, d2) = if x0 - h >= lo && x0 + h <= hi {
        let fp = at(x0 + h, x);
        let fm = at(x0 - h, x);
        ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
    } else if x0 - h < lo {
        let f1 = at(x0 + h, x);
        let f2 = at(x0 + 2.0 * h, x);
        ((f1 - f0) / h, (f2 - 2.0 * f1 + f0) / (h * h))
    } else {
        let f1 = at(x0 - h, x);
        let f2 = at(x0 - 2.0 * h, x);
        ((f0 - f1) / h, (f2 - 2.0 * f1 + f0) / (h * h))
    };
    let mut evals = 2;
    if !d1.is_finite() || d1 == 0.0 {
        return (f0, evals);
    }
    let mut step = if d2 < 0.0 && d2.is_finite() {
        -d1 / d2
    } else {
        d1.signum() * 0.1 * (1.0 + x0.abs())
    };
    for _ in 0..60 {
        let cand = (x0 + step).clamp(lo, hi);
        if cand == x0 {
            break;
        }
        let f = at(cand, x);
        evals += 1;
        if f > f0 {
            x[c] = cand;
            return (f, evals);
        }
        step *= 0.5;
    }
    (f0, evals)
}

/// Estimator of the no-selection random-effects model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomEffectsEstimator {
    /// Method-of-moments heterogeneity with inverse-variance pooling.
    #[default]
    DerSimonianLaird,
    /// Joint maximum likelihood of `(θ, σ²)` under `w ≡ 1`.
    MaximumLikelihood,
}

/// Random-effects fit with the default (DerSimonian–Laird) estimator.
pub fn fit_random_effects(data: &MetaDataset) -> Result<FitResult> {
    fit_random_effects_with(data, RandomEffectsEstimator::default())
}

pub fn fit_random_effects_with(
    data: &MetaDataset,
    estimator: RandomEffectsEstimator,
) -> Result<FitResult> {
    let y = data.effects();
    let u = data.std_errors();
    let (theta, sigma2, iterations, converged) = match estimator {
        RandomEffectsEstimator::DerSimonianLaird => {
            let (t, s) = dersimonian_laird(&y, &u);
            (t, s, 1, true)
        }
        RandomEffectsEstimator::MaximumLikelihood => re_newton(&y, &u),
    };
    let ctx = LogLikContext::with_default_lambda(data)?;
    let weights = StepWeights::constant(ctx.k());
    let loglik = ctx.log_likelihood_at(&weights, theta, sigma2);
    Ok(FitResult {
        weights,
        theta,
        sigma2,
        loglik,
        converged,
        generations_used: iterations,
        evaluations: iterations,
        method: FitMethod::RandomEffects,
        lambda1: ctx.lambda1(),
    })
}

pub(crate) fn dersimonian_laird(y: &[f64], u: &[f64]) -> (f64, f64) {
    let w: Vec<f64> = u.iter().map(|u| 1.0 / (u * u)).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|w| w * w).sum();
    let fixed = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let q: f64 = w.iter().zip(y).map(|(w, y)| w * (y - fixed).powi(2)).sum();
    let df = (y.len() - 1) as f64;
    let tau2 = ((q - df) / (sw - sw2 / sw)).max(0.0);
    (pooled_mean(y, u, tau2), tau2)
}

fn pooled_mean(y: &[f64], u: &[f64], sigma2: f64) -> f64 {
    let (num, den) = y.iter().zip(u).fold((0.0, 0.0), |(a, b), (y, u)| {
        let w = 1.0 / (u * u + sigma2);
        (a + w * y, b + w)
    });
    num / den
}

fn re_loglik(y: &[f64], u: &[f64], theta: f64, s: f64) -> f64 {
    y.iter()
        .zip(u)
        .map(|(y, u)| {
            let v = u * u + s;
            -0.5 * v.ln() - 0.5 * (y - theta).powi(2) / v
        })
        .sum()
}

// 2-D Newton on (θ, σ²) with analytic derivatives, step halving and the
// boundary σ² = 0 handled by projecting and re-solving θ there.
fn re_newton(y: &[f64], u: &[f64]) -> (f64, f64, usize, bool) {
    let (mut t, mut s) = dersimonian_laird(y, u);
    let mut f = re_loglik(y, u, t, s);
    for it in 1..=200 {
        let (mut gt, mut gs, mut htt, mut hts, mut hss) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (y, u) in y.iter().zip(u) {
            let v = u * u + s;
            let r = y - t;
            gt += r / v;
            gs += -0.5 / v + 0.5 * r * r / (v * v);
            htt -= 1.0 / v;
            hts -= r / (v * v);
            hss += 0.5 / (v * v) - r * r / (v * v * v);
        }
        let det = htt * hss - hts * hts;
        let (mut dt, mut ds) = if htt < 0.0 && det > 0.0 {
            ((-hss * gt + hts * gs) / det, (hts * gt - htt * gs) / det)
        } else {
            (gt / -htt, gs.signum() * 0.1 * (s + 0.01))
        };
        if s == 0.0 && gs <= 0.0 {
            // boundary optimum in σ²: only θ moves
            ds = 0.0;
            dt = gt / -htt;
        }
        let mut accepted = false;
        for _ in 0..50 {
            let nt = t + dt;
            let ns = (s + ds).max(0.0);
            let nf = re_loglik(y, u, nt, ns);
            if nf >= f {
                let done = (nf - f).abs() < 1e-14 && dt.abs() < 1e-10 && (ns - s).abs() < 1e-10;
                t = nt;
                s = ns;
                f = nf;
                accepted = true;
                if done {
                    return (t, s, it, true);
                }
                break;
            }
            dt *= 0.5;
            ds *= 0.5;
        }
        if !accepted {
            return (t, s, it, true);
        }
    }
    (t, s, 200, false)
}
