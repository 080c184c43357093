//! Studies, datasets and the pairing of ordered p-values into weight groups.
//!
//! Indices are zero-based throughout: sorted position `r = 0` holds the
//! largest p-value and group `0` is the group of the largest p-values.
//! Sorted position `r` belongs to group `(r + 1) / 2`, so the first group
//! holds a single observed p-value, the middle groups hold pairs and the last
//! group holds one (even `n`) or two (odd `n`) p-values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::stats::norm_cdf;
use crate::{Error, Result};

/// Smallest admissible number of studies.
pub const MIN_STUDIES: usize = 3;

/// Default multiplicity attached to the first (largest p-value) group.
pub const DEFAULT_LAMBDA1: f64 = 2.0;

/// One study: observed effect `y` with known sampling standard error `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub label: String,
    pub y: f64,
    pub u: f64,
}

impl Study {
    pub fn new(label: impl Into<String>, y: f64, u: f64) -> Result<Self> {
        let label = label.into();
        if !y.is_finite() {
            return Err(Error::Domain(format!(
                "study {label}: effect must be finite"
            )));
        }
        if !(u.is_finite() && u > 0.0) {
            return Err(Error::Domain(format!(
                "study {label}: standard error must be positive and finite, got {u}"
            )));
        }
        Ok(Self { label, y, u })
    }

    /// Standardized statistic `|y| / u`.
    pub fn z(&self) -> f64 {
        self.y.abs() / self.u
    }

    pub fn pvalue(&self) -> f64 {
        (2.0 * norm_cdf(-self.z())).min(1.0)
    }
}

/// Two-sided p-value `2 Φ(-|y| / u)`.
pub fn two_sided_pvalue(y: f64, u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!(
            "standard error must be positive, got {u}"
        )));
    }
    if !y.is_finite() {
        return Err(Error::Domain("effect must be finite".into()));
    }
    Ok((2.0 * norm_cdf(-y.abs() / u)).min(1.0))
}

/// Ordered collection of studies; input order is preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    studies: Vec<Study>,
}

impl MetaDataset {
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        if studies.len() < MIN_STUDIES {
            return Err(Error::TooSmall {
                n: studies.len(),
                min: MIN_STUDIES,
            });
        }
        for (i, s) in studies.iter().enumerate() {
            if !s.y.is_finite() || !(s.u.is_finite() && s.u > 0.0) {
                return Err(Error::InvalidStudy {
                    index: i,
                    reason: format!("need finite y and u > 0, got y = {}, u = {}", s.y, s.u),
                });
            }
        }
        Ok(Self { studies })
    }

    /// Builds a dataset from parallel slices of effects and standard errors.
    pub fn from_effects(y: &[f64], u: &[f64]) -> Result<Self> {
        if y.len() != u.len() {
            return Err(Error::Domain(
                "effects and standard errors differ in length".into(),
            ));
        }
        let studies = y
            .iter()
            .zip(u)
            .enumerate()
            .map(|(i, (&y, &u))| {
                Study::new((i + 1).to_string(), y, u).map_err(|e| Error::InvalidStudy {
                    index: i,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(studies)
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn n(&self) -> usize {
        self.studies.len()
    }

    pub fn effects(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.y).collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.u).collect()
    }

    pub fn pvalues(&self) -> Vec<f64> {
        self.studies.iter().map(Study::pvalue).collect()
    }

    /// Same standard errors, new effects (used for simulated replicates).
    pub fn with_effects(&self, y: &[f64]) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Domain(
                "replacement effects have the wrong length".into(),
            ));
        }
        let studies = self
            .studies
            .iter()
            .zip(y)
            .map(|(s, &y)| Study::new(s.label.clone(), y, s.u))
            .collect::<Result<Vec<_>>>()?;
        Self::new(studies)
    }
}

/// Number of weight groups for `n` studies.
pub fn group_count(n: usize) -> usize {
    n / 2 + 1
}

/// Group multiplicities `λ`: `lambda1` for the first group, two for the
/// middle groups and `1 + [n odd]` for the last.
pub fn lambdas(n: usize, lambda1: f64) -> Vec<f64> {
    let k = group_count(n);
    let mut lam = vec![2.0; k];
    lam[0] = lambda1;
    lam[k - 1] = if n % 2 == 1 { 2.0 } else { 1.0 };
    lam
}

/// Deterministic ordering of studies by decreasing p-value.
///
/// Returns `order` with `order[r]` the input index of the study at sorted
/// position `r`. The sort key is `|y| / u` ascending (the p-value is a
/// strictly decreasing function of it); ties go to the larger `u` first and
/// then to input order.
pub fn ties_and_ordering(data: &MetaDataset) -> Vec<usize> {
    let s = data.studies();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        s[a].z()
            .total_cmp(&s[b].z())
            .then_with(|| s[b].u.total_cmp(&s[a].u))
            .then(Ordering::Equal)
    });
    // sort_by is stable, so equal keys keep input order.
    order
}

/// P-values ordered decreasingly and paired into weight groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPvalues {
    order: Vec<usize>,
    p_sorted: Vec<f64>,
    group_of_study: Vec<usize>,
    lambda: Vec<f64>,
    z_breaks: Vec<f64>,
    u: Vec<f64>,
}

impl GroupedPvalues {
    /// Groups `data` with the default first-group multiplicity of two.
    pub fn build(data: &MetaDataset) -> Result<Self> {
        build_groups(data, DEFAULT_LAMBDA1)
    }

    pub fn n(&self) -> usize {
        self.p_sorted.len()
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// P-values sorted decreasingly (`p_1, ..., p_n` in one-based notation).
    pub fn p_sorted(&self) -> &[f64] {
        &self.p_sorted
    }

    /// One-based access with sentinels `p_0 = 1` and `p_{n+1} = 0`.
    pub fn p(&self, index: usize) -> f64 {
        match index {
            0 => 1.0,
            i if i <= self.n() => self.p_sorted[i - 1],
            _ => 0.0,
        }
    }

    /// Zero-based group of the study with input index `study`.
    pub fn group_of_study(&self, study: usize) -> usize {
        self.group_of_study[study]
    }

    /// Group cut points on the standardized scale `|y| / u`:
    /// `[0, z_(2), z_(4), ..., z_(2k-2), ∞]`, length `k + 1`.
    pub fn z_breaks(&self) -> &[f64] {
        &self.z_breaks
    }

    /// Cut points on the effect scale for study `i`: `u_i` times the
    /// standardized cut points, starting at 0 and ending at `+∞`.
    pub fn boundaries(&self, i: usize) -> Vec<f64> {
        self.z_breaks.iter().map(|&z| self.u[i] * z).collect()
    }

    /// Group intervals on the p-value scale, `(lower, upper]` per group.
    pub fn p_intervals(&self) -> Vec<(f64, f64)> {
        let k = self.k();
        (0..k)
            .map(|j| {
                let upper = self.p(2 * j);
                let lower = if j + 1 == k { 0.0 } else { self.p(2 * j + 2) };
                (lower, upper)
            })
            .collect()
    }

    /// Zero-based group whose p-interval contains `p`.
    pub fn group_at_p(&self, p: f64) -> usize {
        let k = self.k();
        for j in 0..k - 1 {
            if p > self.p(2 * j + 2) {
                return j;
            }
        }
        k - 1
    }

    /// Number of observed studies in each group.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &g in &self.group_of_study {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Sorts the p-values and pairs them into `⌊n/2⌋ + 1` weight groups.
pub fn build_groups(data: &MetaDataset, lambda1: f64) -> Result<GroupedPvalues> {
    let n = data.n();
    if n < MIN_STUDIES {
        return Err(Error::TooSmall {
            n,
            min: MIN_STUDIES,
        });
    }
    if !(lambda1.is_finite() && lambda1 > 0.0) {
        return Err(Error::Config(format!(
            "lambda1 must be positive, got {lambda1}"
        )));
    }
    let studies = data.studies();
    let order = ties_and_ordering(data);
    let k = group_count(n);
    let z_sorted: Vec<f64> = order.iter().map(|&i| studies[i].z()).collect();
    let p_sorted: Vec<f64> = order.iter().map(|&i| studies[i].pvalue()).collect();

    let mut group_of_study = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        group_of_study[i] = r.div_ceil(2);
    }

    // one-based z_(2j) sits at zero-based sorted position 2j - 1
    let mut z_breaks = Vec::with_capacity(k + 1);
    z_breaks.push(0.0);
    for j in 1..k {
        z_breaks.push(z_sorted[2 * j - 1]);
    }
    z_breaks.push(f64::INFINITY);

    Ok(GroupedPvalues {
        order,
        p_sorted,
        group_of_study,
        lambda: lambdas(n, lambda1),
        z_breaks,
        u: data.std_errors(),
    })
}

/// Which weight is pinned to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Monotone fit: the group of the smallest p-values has weight one.
    SmallestPGroupIsOne,
    /// Unconstrained fit: the largest weight is one.
    LargestWeightIsOne,
}

/// Step weights `w_0, ..., w_{k-1}`, one per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepWeights {
    values: Vec<f64>,
    normalization: Normalization,
}

impl StepWeights {
    /// Validates that every entry lies in (0, 1], that the pinned entry is
    /// one, and, for the monotone convention, that the weights are
    /// non-decreasing from the largest-p group to the smallest-p group.
    pub fn new(values: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("weights must be non-empty".into()));
        }
        if let Some(w) = values.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(Error::Domain(format!("weight {w} outside (0, 1]")));
        }
        match normalization {
            Normalization::SmallestPGroupIsOne => {
                if *values.last().unwrap() != 1.0 {
                    return Err(Error::Domain("last weight must equal one".into()));
                }
                if values.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::Domain(
                        "weights must be non-increasing in the p-value".into(),
                    ));
                }
            }
            Normalization::LargestWeightIsOne => {
                if values.iter().cloned().fold(0.0, f64::max) != 1.0 {
                    return Err(Error::Domain("largest weight must equal one".into()));
                }
            }
        }
        Ok(Self {
            values,
            normalization,
        })
    }

    /// Constant weight one in every group.
    pub fn constant(k: usize) -> Self {
        Self {
            values: vec![1.0; k],
            normalization: Normalization::SmallestPGroupIsOne,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    /// Rescales to another convention. Returns the weights together with the
    /// factor `c` they were multiplied by; the log-likelihood changes by
    /// `log(c) (λ_1 - 1)` (see [`crate::likelihood::scaling_shift`]).
    pub fn renormalized(&self, to: Normalization) -> (Vec<f64>, f64) {
        let pivot = match to {
            Normalization::SmallestPGroupIsOne => *self.values.last().unwrap(),
            Normalization::LargestWeightIsOne => self.values.iter().cloned().fold(0.0, f64::max),
        };
        let c = 1.0 / pivot;
        (self.values.iter().map(|w| w * c).collect(), c)
    }
}

/// Evaluates the left-continuous step function at `p`.
pub fn weight_at_p(w: &StepWeights, groups: &GroupedPvalues, p: f64) -> f64 {
    w.values()[groups.group_at_p(p)]
}

/// Pooled effect and between-study variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: f64,
    pub sigma2: f64,
}

impl ModelParams {
    pub fn new(theta: f64, sigma2: f64) -> Result<Self> {
        if !theta.is_finite() || !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!(
                "need finite theta and sigma2 >= 0, got ({theta}, {sigma2})"
            )));
        }
        Ok(Self { theta, sigma2 })
    }

    /// Marginal standard deviation `sqrt(u^2 + σ^2)` of a study with error `u`.
    pub fn eta(&self, u: f64) -> f64 {
        (u * u + self.sigma2).sqrt()
    }
}
