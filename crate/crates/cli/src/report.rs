//! The structured document written to standard output by every command.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use pubbias::inference::{ProfileCI, SelectionTestResult};
use pubbias::optimizer::{FitMethod, FitResult};
use pubbias::{DEConfig, GroupedPvalues, Normalization};

pub const SCHEMA_VERSION: u32 = 1;

/// Real number written with 12 significant digits; `null` when not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Real {
    pub fn round(x: f64) -> f64 {
        if x.is_finite() {
            format!("{x:.11e}").parse().unwrap_or(x)
        } else {
            x
        }
    }
}

impl From<f64> for Real {
    fn from(x: f64) -> Self {
        Real(x)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(Real::round(self.0))
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Real(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

fn reals(xs: &[f64]) -> Vec<Real> {
    xs.iter().copied().map(Real).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub n: usize,
    pub k: usize,
    pub lambda: Vec<Real>,
    /// P-values in decreasing order.
    pub p_sorted: Vec<Real>,
}

impl InputSummary {
    pub fn new(groups: &GroupedPvalues) -> Self {
        Self {
            n: groups.n(),
            k: groups.k(),
            lambda: reals(groups.lambda()),
            p_sorted: reals(groups.p_sorted()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    pub method: FitMethod,
    pub theta: Real,
    pub sigma2: Real,
    pub loglik: Real,
    pub converged: bool,
    pub generations_used: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightGroup {
    pub group: usize,
    /// Interval `(p_lower, p_upper]` on the p-value scale.
    pub p_lower: Real,
    pub p_upper: Real,
    pub weight: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSection {
    pub normalization: Normalization,
    pub groups: Vec<WeightGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiSection {
    pub level: Real,
    pub theta_hat: Real,
    pub max_loglik: Real,
    pub lower: Real,
    pub upper: Real,
    pub lower_open: bool,
    pub upper_open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSection {
    pub t0: Real,
    pub m: usize,
    pub p_value: Real,
    pub null_theta: Real,
    pub null_sigma2: Real,
    pub retried: usize,
    pub nonconverged: usize,
    pub replicate_stats: Vec<Real>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicate_weight_curves: Option<Vec<Vec<Real>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeSection {
    pub population_size: Option<usize>,
    pub differential_weight: Real,
    pub crossover_rate: Real,
    pub max_generations: usize,
    pub value_tolerance: Real,
    pub stagnation_generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub lambda1: Real,
    pub de: DeSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub level: Option<Real>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicates: Option<usize>,
}

impl ConfigEcho {
    pub fn new(lambda1: f64, de: &DEConfig) -> Self {
        Self {
            seed: de.seed,
            lambda1: Real(lambda1),
            de: DeSection {
                population_size: de.population_size,
                differential_weight: Real(de.differential_weight),
                crossover_rate: Real(de.crossover_rate),
                max_generations: de.max_generations,
                value_tolerance: Real(de.value_tolerance),
                stagnation_generations: de.stagnation_generations,
            },
            level: None,
            replicates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub command: String,
    pub method: String,
    pub input: InputSummary,
    pub fit: FitSection,
    pub weights: WeightSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub profile_ci: Option<CiSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection_test: Option<SelectionSection>,
    pub config: ConfigEcho,
}

impl ReportDocument {
    pub fn new(
        command: &str,
        method: &str,
        groups: &GroupedPvalues,
        fit: &FitResult,
        config: ConfigEcho,
    ) -> Self {
        let groups_out = groups
            .p_intervals()
            .into_iter()
            .zip(fit.weights.values())
            .enumerate()
            .map(|(j, ((lo, hi), &w))| WeightGroup {
                group: j,
                p_lower: Real(lo),
                p_upper: Real(hi),
                weight: Real(w),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            method: method.to_string(),
            input: InputSummary::new(groups),
            fit: FitSection {
                method: fit.method,
                theta: Real(fit.theta),
                sigma2: Real(fit.sigma2),
                loglik: Real(fit.loglik),
                converged: fit.converged,
                generations_used: fit.generations_used,
                evaluations: fit.evaluations,
            },
            weights: WeightSection {
                normalization: fit.weights.normalization(),
                groups: groups_out,
            },
            profile_ci: None,
            selection_test: None,
            config,
        }
    }

    pub fn with_ci(mut self, ci: &ProfileCI) -> Self {
        self.profile_ci = Some(CiSection {
            level: Real(ci.level),
            theta_hat: Real(ci.theta_hat),
            max_loglik: Real(ci.max_loglik),
            lower: Real(ci.lower),
            upper: Real(ci.upper),
            lower_open: ci.lower_open,
            upper_open: ci.upper_open,
        });
        self
    }

    pub fn with_selection(mut self, r: &SelectionTestResult) -> Self {
        self.selection_test = Some(SelectionSection {
            t0: Real(r.t0),
            m: r.m,
            p_value: Real(r.p_value),
            null_theta: Real(r.null_theta),
            null_sigma2: Real(r.null_sigma2),
            retried: r.retried,
            nonconverged: r.nonconverged,
            replicate_stats: reals(&r.replicate_stats),
            replicate_weight_curves: r
                .replicate_weight_curves
                .as_ref()
                .map(|c| c.iter().map(|w| reals(w)).collect()),
        });
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(Real::round(0.1234567890123456), 0.123456789012);
        assert_eq!(Real::round(-7.195496697845922), -7.19549669785);
        assert_eq!(serde_json::to_string(&Real(f64::NAN)).unwrap(), "null");
    }

    proptest! {
        #[test]
        fn real_round_trips(x in -1e12f64..1e12) {
            let s = serde_json::to_string(&Real(x)).unwrap();
            let back: Real = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back.0, Real::round(x));
            prop_assert_eq!(serde_json::to_string(&back).unwrap(), s);
        }
    }
}
