//! Weighted normal log-likelihood of the grouped selection model.
//!
//! For study `i` with `η_i = sqrt(u_i² + σ²)` the normalizing constant is
//! `A_i = Σ_j w_j H_ij`, where `H_ij` is the normal probability mass of the
//! two symmetric effect-scale intervals `b_{i,j} ≤ |y| < b_{i,j+1}` that carry
//! weight `w_j`. The log-likelihood is
//!
//! ```text
//! l = -(n/2) log 2π + Σ_j λ_j log w_j - Σ_i log η_i
//!     - ½ Σ_i ((y_i - θ) / η_i)² - Σ_i log A_i
//! ```

use serde::{Deserialize, Serialize};

use crate::model::{build_groups, GroupedPvalues, MetaDataset, StepWeights, DEFAULT_LAMBDA1};
use crate::stats::norm_cdf;
use crate::{Error, Result};

/// Finite stand-in for `-∞`, returned for inadmissible parameters.
pub const PENALTY: f64 = -1e15;

/// Smallest weight the likelihood accepts.
pub const WEIGHT_FLOOR: f64 = 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Row-major `n × k` matrix of interval probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct HMatrix {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl HMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n == 0 || k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Domain(
                "H matrix rows must be non-empty and equal length".into(),
            ));
        }
        Ok(Self {
            n,
            k,
            values: rows.into_iter().flatten().collect(),
        })
    }
}

/// Immutable evaluation context for one dataset and grouping.
#[derive(Debug, Clone)]
pub struct LogLikContext {
    data: MetaDataset,
    groups: GroupedPvalues,
    y: Vec<f64>,
    u: Vec<f64>,
    lambda: Vec<f64>,
    lambda_excess: f64,
}

impl LogLikContext {
    pub fn new(data: &MetaDataset, lambda1: f64) -> Result<Self> {
        let groups = build_groups(data, lambda1)?;
        let lambda = groups.lambda().to_vec();
        let lambda_excess = lambda.iter().sum::<f64>() - data.n() as f64;
        Ok(Self {
            data: data.clone(),
            y: data.effects(),
            u: data.std_errors(),
            groups,
            lambda,
            lambda_excess,
        })
    }

    pub fn with_default_lambda(data: &MetaDataset) -> Result<Self> {
        Self::new(data, DEFAULT_LAMBDA1)
    }

    pub fn data(&self) -> &MetaDataset {
        &self.data
    }

    pub fn groups(&self) -> &GroupedPvalues {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda[0]
    }

    /// Change of the log-likelihood when every weight is multiplied by `c`:
    /// `log(c) (Σ λ_j - n)`, which is `log(c) (λ_1 - 1)` for the standard
    /// multiplicities.
    pub fn scaling_shift(&self, c: f64) -> f64 {
        c.ln() * self.lambda_excess
    }

    /// Fills `row` with `H_i0 .. H_i(k-1)` for study `i`.
    fn h_row(&self, i: usize, theta: f64, eta: f64, row: &mut [f64]) {
        let u = self.u[i];
        let breaks = self.groups.z_breaks();
        let k = row.len();
        // Φ((b - θ)/η) and Φ((-b - θ)/η) at the lower cut of group 0
        let mut upper_prev = norm_cdf(-theta / eta);
        let mut lower_prev = upper_prev;
        for j in 0..k {
            let (upper, lower) = if j + 1 == k {
                (1.0, 0.0)
            } else {
                let b = u * breaks[j + 1];
                (norm_cdf((b - theta) / eta), norm_cdf((-b - theta) / eta))
            };
            row[j] = (upper - upper_prev).max(0.0) + (lower_prev - lower).max(0.0);
            upper_prev = upper;
            lower_prev = lower;
        }
    }

    /// Interval probabilities for every study at `(θ, σ²)`.
    pub fn h_matrix(&self, theta: f64, sigma2: f64) -> Result<HMatrix> {
        check_params(theta, sigma2)?;
        let (n, k) = (self.n(), self.k());
        let mut values = vec![0.0; n * k];
        for (i, row) in values.chunks_mut(k).enumerate() {
            let eta = (self.u[i] * self.u[i] + sigma2).sqrt();
            self.h_row(i, theta, eta, row);
        }
        Ok(HMatrix { n, k, values })
    }

    /// Log-likelihood at `(w, θ, σ²)`.
    ///
    /// Returns [`PENALTY`] when a weight is below [`WEIGHT_FLOOR`] or not
    /// finite, when `σ² < 0`, or when a normalizing constant underflows.
    pub fn log_likelihood(&self, w: &[f64], theta: f64, sigma2: f64) -> f64 {
        let k = self.k();
        if w.len() != k
            || !theta.is_finite()
            || !(sigma2 >= 0.0 && sigma2.is_finite())
            || w.iter().any(|&x| !(x >= WEIGHT_FLOOR && x.is_finite()))
        {
            return PENALTY;
        }
        let mut ll = -(self.n() as f64) * HALF_LN_2PI;
        ll += self
            .lambda
            .iter()
            .zip(w)
            .map(|(l, w)| l * w.ln())
            .sum::<f64>();

        let mut row = vec![0.0; k];
        for i in 0..self.n() {
            let eta = (self.u[i] * self.u[i] + sigma2).sqrt();
            let r = (self.y[i] - theta) / eta;
            self.h_row(i, theta, eta, &mut row);
            let a: f64 = row.iter().zip(w).map(|(h, w)| h * w).sum();
            if !(a > 0.0) || !a.is_finite() {
                return PENALTY;
            }
            ll -= eta.ln() + 0.5 * r * r + a.ln();
        }
        if ll.is_finite() {
            ll
        } else {
            PENALTY
        }
    }

    /// [`Self::log_likelihood`] for validated step weights.
    pub fn log_likelihood_at(&self, w: &StepWeights, theta: f64, sigma2: f64) -> f64 {
        self.log_likelihood(w.values(), theta, sigma2)
    }

    /// Evaluates the log-likelihood along a ray leaving `(w, θ, σ²)`.
    pub fn coercivity_probe(
        &self,
        w: &[f64],
        theta: f64,
        sigma2: f64,
        ray: ProbeRay,
        steps: usize,
    ) -> Result<CoercivityReport> {
        check_params(theta, sigma2)?;
        if w.len() != self.k() {
            return Err(Error::Domain("weight vector has the wrong length".into()));
        }
        if let ProbeRay::WeightToZero { group } = ray {
            if group + 1 >= self.k() {
                return Err(Error::Domain(format!(
                    "probe group {group} must precede the pinned last group"
                )));
            }
        }
        let mut points = Vec::with_capacity(steps + 1);
        for s in 0..=steps {
            let scale = 2f64.powi(s as i32);
            let mut wv = w.to_vec();
            let (mut t, mut s2) = (theta, sigma2);
            let coord = match ray {
                ProbeRay::Theta { direction } => {
                    t = theta + direction.signum() * (scale - 1.0);
                    t
                }
                ProbeRay::Sigma2 => {
                    s2 = sigma2 + scale - 1.0;
                    s2
                }
                ProbeRay::WeightToZero { group } => {
                    wv[group] = w[group] / scale;
                    wv[group]
                }
                ProbeRay::Sigma2ToZero => {
                    s2 = sigma2 / scale;
                    s2
                }
            };
            points.push((coord, self.log_likelihood(&wv, t, s2)));
        }
        let tail = &points[points.len() / 2..];
        let eventually_decreasing = tail.windows(2).all(|p| p[1].1 < p[0].1);
        let all_finite = points.iter().all(|p| p.1.is_finite() && p.1 > PENALTY);
        let first = points[0].1;
        let last = points[points.len() - 1].1;
        Ok(CoercivityReport {
            ray,
            eventually_decreasing,
            drop: first - last,
            all_finite,
            points,
        })
    }
}

fn check_params(theta: f64, sigma2: f64) -> Result<()> {
    if !theta.is_finite() || !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!(
            "need finite theta and sigma2 >= 0, got ({theta}, {sigma2})"
        )));
    }
    Ok(())
}

/// `A_i = Σ_j w_j H_ij` for every study.
pub fn normalizing_constants(h: &HMatrix, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != h.k() {
        return Err(Error::Domain("weight vector has the wrong length".into()));
    }
    if let Some(x) = w.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!("weights must be positive, got {x}")));
    }
    Ok((0..h.n())
        .map(|i| h.row(i).iter().zip(w).map(|(h, w)| h * w).sum())
        .collect())
}

/// Direction of a coercivity probe; the `s`-th point moves the coordinate by
/// a factor or offset of `2^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProbeRay {
    /// `θ + sign · (2^s - 1)`.
    Theta { direction: f64 },
    /// `σ² + 2^s - 1`.
    Sigma2,
    /// `w_group / 2^s`; the group must not be the pinned last one.
    WeightToZero { group: usize },
    /// `σ² / 2^s`.
    Sigma2ToZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub ray: ProbeRay,
    /// `(moved coordinate, log-likelihood)` per step.
    pub points: Vec<(f64, f64)>,
    /// Strict decrease over the second half of the ray.
    pub eventually_decreasing: bool,
    /// First value minus last value.
    pub drop: f64,
    /// No point hit the penalty.
    pub all_finite: bool,
}
