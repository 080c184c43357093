//! Independent oracles and property checks shared by the integration tests
//! and the acceptance harness. Each check returns a short description of
//! what it measured, or the reason it failed.

#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use pubbias::datasets::education;
use pubbias::inference::{PvalDensityParams, SignRule};
use pubbias::model::weight_at_p;
use pubbias::optimizer::{fit_monotone, fit_unconstrained};
use pubbias::stats::{norm_cdf, norm_pdf, RngStream};
use pubbias::{DEConfig, Execution, LogLikContext, MetaDataset, Normalization, StepWeights};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

pub type Check = Result<String, String>;

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Education data plus simulated datasets of varied size and heterogeneity.
pub fn test_datasets() -> Vec<MetaDataset> {
    let mut out = vec![education()];
    for (seed, n, theta, tau2) in [
        (3u64, 8usize, 0.3, 0.05),
        (4, 15, -0.2, 0.2),
        (5, 25, 0.5, 0.0),
    ] {
        out.push(simulate_null(seed, n, theta, tau2));
    }
    out
}

/// Unselected random-effects data: `u ~ U(0.1, 0.5)`, `y ~ N(θ, u² + τ²)`.
pub fn simulate_null(seed: u64, n: usize, theta: f64, tau2: f64) -> MetaDataset {
    let mut rng = RngStream::new(seed, 0);
    let mut y = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        let ui = rng.gen_range(0.1..0.5);
        let eta = (ui * ui + tau2).sqrt();
        y.push(Normal::new(theta, eta).unwrap().sample(&mut rng));
        u.push(ui);
    }
    MetaDataset::from_effects(&y, &u).unwrap()
}

fn random_params(rng: &mut RngStream) -> (f64, f64) {
    (rng.gen_range(-1.5..1.5), rng.gen_range(0.0..1.5))
}

fn random_weights(rng: &mut RngStream, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(0.01..1.0)).collect()
}

/// `A_i` by direct integration of `(1/η) φ((y-θ)/η) w(p(y))` over the
/// effect scale, with `w` looked up on the p-value scale.
pub fn oracle_normalizing_constant(
    ctx: &LogLikContext,
    w: &StepWeights,
    i: usize,
    theta: f64,
    sigma2: f64,
) -> f64 {
    let study = &ctx.data().studies()[i];
    let eta = (study.u * study.u + sigma2).sqrt();
    let (lo, hi) = (theta - 40.0 * eta, theta + 40.0 * eta);
    let mut cuts = vec![lo, hi];
    for &z in ctx.groups().z_breaks() {
        if z.is_finite() {
            for c in [z * study.u, -z * study.u] {
                if c > lo && c < hi {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let density = |y: f64| norm_pdf((y - theta) / eta) / eta;
    cuts.windows(2)
        .map(|s| {
            let mid = 0.5 * (s[0] + s[1]);
            let p = 2.0 * norm_cdf(-mid.abs() / study.u);
            weight_at_p(w, ctx.groups(), p) * simpson(&density, s[0], s[1], 1e-14)
        })
        .sum()
}

pub fn check_quadrature_oracle() -> Check {
    let mut rng = RngStream::new(101, 0);
    let mut worst: f64 = 0.0;
    for data in test_datasets() {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        for _ in 0..10 {
            let (theta, sigma2) = random_params(&mut rng);
            let mut v = random_weights(&mut rng, ctx.k());
            v.sort_by(f64::total_cmp);
            *v.last_mut().unwrap() = 1.0;
            let w = StepWeights::new(v, Normalization::SmallestPGroupIsOne).unwrap();
            let h = ctx.h_matrix(theta, sigma2).unwrap();
            let a = pubbias::likelihood::normalizing_constants(&h, w.values()).unwrap();
            for i in 0..ctx.n() {
                let oracle = oracle_normalizing_constant(&ctx, &w, i, theta, sigma2);
                worst = worst.max((a[i] - oracle).abs());
            }
        }
    }
    ensure(worst <= 1e-8, || {
        format!("max |A - quadrature| = {worst:.3e}")
    })?;
    Ok(format!("max |A - quadrature| = {worst:.1e}"))
}

pub fn check_scaling_identity() -> Check {
    let mut rng = RngStream::new(102, 0);
    let ctx = LogLikContext::with_default_lambda(&education()).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (theta, sigma2) = random_params(&mut rng);
        let w = random_weights(&mut rng, ctx.k());
        let c: f64 = rng.gen_range(0.1..10.0);
        let cw: Vec<f64> = w.iter().map(|x| c * x).collect();
        let lhs = ctx.log_likelihood(&cw, theta, sigma2) - ctx.log_likelihood(&w, theta, sigma2);
        worst = worst.max((lhs - c.ln()).abs());
    }
    ensure(worst <= 1e-10, || {
        format!("max scaling residual {worst:.3e}")
    })?;
    Ok(format!("max scaling residual {worst:.1e} over 100 points"))
}

pub fn check_row_sums() -> Check {
    let mut rng = RngStream::new(103, 0);
    let mut worst: f64 = 0.0;
    for data in test_datasets() {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        for _ in 0..100 {
            let (theta, sigma2) = random_params(&mut rng);
            let h = ctx.h_matrix(theta, sigma2).unwrap();
            for i in 0..h.n() {
                worst = worst.max((h.row(i).iter().sum::<f64>() - 1.0).abs());
                if h.row(i).iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return Err(format!("entry outside [0, 1] in row {i}"));
                }
            }
        }
    }
    ensure(worst <= 1e-10, || {
        format!("max |row sum - 1| = {worst:.3e}")
    })?;
    Ok(format!("max |row sum - 1| = {worst:.1e}"))
}

pub fn check_constant_weight_reduction() -> Check {
    let mut rng = RngStream::new(104, 0);
    let mut worst: f64 = 0.0;
    for data in test_datasets() {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        let ones = vec![1.0; ctx.k()];
        for _ in 0..20 {
            let (theta, sigma2) = random_params(&mut rng);
            let direct: f64 = data
                .studies()
                .iter()
                .map(|s| {
                    let eta = (s.u * s.u + sigma2).sqrt();
                    (norm_pdf((s.y - theta) / eta) / eta).ln()
                })
                .sum();
            worst = worst.max((ctx.log_likelihood(&ones, theta, sigma2) - direct).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

/// Analytic `(∂l/∂θ, ∂l/∂σ²)` written out from the model definition.
pub fn analytic_gradient(
    data: &MetaDataset,
    ctx: &LogLikContext,
    w: &[f64],
    theta: f64,
    sigma2: f64,
) -> (f64, f64) {
    let breaks = ctx.groups().z_breaks();
    let (mut gt, mut gs) = (0.0, 0.0);
    for s in data.studies() {
        let eta2 = s.u * s.u + sigma2;
        let eta = eta2.sqrt();
        let r = s.y - theta;
        gt += r / eta2;
        gs += -0.5 / eta2 + 0.5 * r * r / (eta2 * eta2);

        // Φ((c - θ)/η): d/dθ = -φ/η, d/dσ² = -φ (c - θ) / (2 η³)
        let d = |c: f64| -> (f64, f64, f64) {
            if c.is_infinite() {
                return (if c > 0.0 { 1.0 } else { 0.0 }, 0.0, 0.0);
            }
            let x = (c - theta) / eta;
            (
                norm_cdf(x),
                -norm_pdf(x) / eta,
                -norm_pdf(x) * (c - theta) / (2.0 * eta2 * eta),
            )
        };
        let (mut a, mut at, mut as_) = (0.0, 0.0, 0.0);
        for (j, &wj) in w.iter().enumerate() {
            let (lo, hi) = (s.u * breaks[j], s.u * breaks[j + 1]);
            let terms = [(d(hi), 1.0), (d(lo), -1.0), (d(-lo), 1.0), (d(-hi), -1.0)];
            for ((v, vt, vs), sign) in terms {
                a += wj * sign * v;
                at += wj * sign * vt;
                as_ += wj * sign * vs;
            }
        }
        gt -= at / a;
        gs -= as_ / a;
    }
    (gt, gs)
}

pub fn check_gradient() -> Check {
    let mut rng = RngStream::new(105, 0);
    let mut worst: f64 = 0.0;
    for data in test_datasets() {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        for _ in 0..20 {
            let theta = rng.gen_range(-1.0..1.0);
            let sigma2 = rng.gen_range(0.05..1.0);
            let w = random_weights(&mut rng, ctx.k());
            let (gt, gs) = analytic_gradient(&data, &ctx, &w, theta, sigma2);
            let l = |t: f64, s: f64| ctx.log_likelihood(&w, t, s);
            let h = 1e-5;
            let ft = (l(theta + h, sigma2) - l(theta - h, sigma2)) / (2.0 * h);
            let fs = (l(theta, sigma2 + h) - l(theta, sigma2 - h)) / (2.0 * h);
            for (fd, an) in [(ft, gt), (fs, gs)] {
                worst = worst.max((fd - an).abs() / an.abs().max(1.0));
            }
        }
    }
    ensure(worst <= 1e-5, || {
        format!("max relative gradient error {worst:.3e}")
    })?;
    Ok(format!("max relative gradient error {worst:.1e}"))
}

pub fn check_density_integrates_to_one() -> Check {
    let mut worst: f64 = 0.0;
    for &(theta, u, sigma2) in &[
        (0.0, 0.3, 0.0),
        (0.26, 0.45, 0.3),
        (-0.8, 0.15, 0.1),
        (1.5, 0.2, 0.5),
        (0.1, 1.0, 2.0),
    ] {
        let law = PvalDensityParams::new(theta, u, sigma2).unwrap();
        // p = 2Φ(-z) removes the integrable singularity at p = 0
        let f = |z: f64| {
            let p = (2.0 * norm_cdf(-z)).min(1.0 - 1e-16);
            if p <= 0.0 {
                0.0
            } else {
                law.density(p).unwrap() * 2.0 * norm_pdf(z)
            }
        };
        let total = simpson(&f, 0.0, 38.0, 1e-12);
        worst = worst.max((total - 1.0).abs());
    }
    ensure(worst <= 1e-6, || {
        format!("max |integral - 1| = {worst:.3e}")
    })?;
    Ok(format!("max |integral - 1| = {worst:.1e}"))
}

/// Kolmogorov distance between a sample and a continuous CDF.
pub fn ks_one_sample(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic Kolmogorov critical value at α = 0.01.
pub const KS_C_001: f64 = 1.6276;

pub fn check_sampler_ks() -> Check {
    let (theta, u, sigma2) = (0.26, 0.45, 0.3);
    let law = PvalDensityParams::new(theta, u, sigma2).unwrap();
    let eta = (u * u + sigma2).sqrt();
    let n = 10_000;

    let mut rng = RngStream::new(106, 0);
    let mut sampled: Vec<f64> = (0..n)
        .map(|_| law.sample(&mut rng, SignRule::Reflect).0)
        .collect();
    // P(p ≤ x) = P(|Y| ≥ b), b = -u Φ⁻¹(x/2), from the effect scale
    let oracle_cdf = |x: f64| {
        let b = -u * pubbias::stats::norm_quantile_clamped(x / 2.0);
        norm_cdf((-b - theta) / eta) + 1.0 - norm_cdf((b - theta) / eta)
    };
    let d1 = ks_one_sample(&mut sampled, oracle_cdf);
    let crit1 = KS_C_001 / (n as f64).sqrt();

    let normal = Normal::new(theta, eta).unwrap();
    let mut other = rand_chacha::ChaCha20Rng::seed_from_u64(107);
    let mut oracle: Vec<f64> = (0..n)
        .map(|_| 2.0 * norm_cdf(-normal.sample(&mut other).abs() / u))
        .collect();
    let d2 = ks_two_sample(&mut sampled, &mut oracle);
    let crit2 = KS_C_001 * (2.0 / n as f64).sqrt();

    ensure(d1 < crit1, || {
        format!("one-sample D = {d1:.4} >= {crit1:.4}")
    })?;
    ensure(d2 < crit2, || {
        format!("two-sample D = {d2:.4} >= {crit2:.4}")
    })?;
    Ok(format!(
        "D = {d1:.4} (crit {crit1:.4}), two-sample D = {d2:.4} (crit {crit2:.4})"
    ))
}

pub fn check_de_determinism() -> Check {
    let data = education();
    let cfg = DEConfig::default().with_seed(42);
    let a = fit_monotone(&data, 2.0, &cfg).map_err(|e| e.to_string())?;
    let b = fit_monotone(&data, 2.0, &cfg).map_err(|e| e.to_string())?;
    let c = fit_monotone(
        &data,
        2.0,
        &cfg.clone().with_execution(Execution::Sequential),
    )
    .map_err(|e| e.to_string())?;
    ensure(a == b, || "repeated fit differs".into())?;
    ensure(a == c, || "sequential fit differs from parallel".into())?;
    Ok("repeated, sequential and parallel fits are identical".into())
}

pub fn check_seed_spread() -> Check {
    let data = education();
    let fits: Vec<_> = (1..=10)
        .map(|s| fit_monotone(&data, 2.0, &DEConfig::default().with_seed(s)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let spread = |f: &dyn Fn(&pubbias::FitResult) -> f64| {
        let v: Vec<f64> = fits.iter().map(f).collect();
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    let ll = spread(&|f| f.loglik);
    let th = spread(&|f| f.theta);
    ensure(ll <= 1e-4 && th <= 0.01, || {
        format!("loglik spread {ll:.2e}, theta spread {th:.2e}")
    })?;
    Ok(format!("loglik spread {ll:.1e}, theta spread {th:.1e}"))
}

/// Monotone fit log-likelihood against the unconstrained one, both reported
/// with the largest weight equal to one.
pub fn check_monotone_dominated() -> Check {
    let mut worst = f64::MIN;
    for data in test_datasets() {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        let mono = fit_monotone(&data, 2.0, &DEConfig::default()).map_err(|e| e.to_string())?;
        let free = fit_unconstrained(&data, 2.0, 1e-10).map_err(|e| e.to_string())?;
        let (aligned, _) = mono.weights.renormalized(Normalization::LargestWeightIsOne);
        let mono_ll = ctx.log_likelihood(&aligned, mono.theta, mono.sigma2);
        worst = worst.max(mono_ll - free.loglik);
    }
    ensure(worst <= 1e-6, || {
        format!("monotone exceeds unconstrained by {worst:.3e}")
    })?;
    Ok(format!("max(monotone - unconstrained) = {worst:.2e}"))
}
