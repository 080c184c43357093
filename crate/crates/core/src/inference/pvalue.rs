use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::stats::{norm_cdf, norm_pdf, norm_quantile, RngStream};
use crate::{Error, Result};

/// Which scale enters the p-value density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityForm {
    /// Prefactor `u / (2η)` and `±u Φ⁻¹(p/2)` in the arguments: the exact
    /// density of `p = 2Φ(-|Y|/u)` for `Y ~ N(θ, η²)`.
    #[default]
    SamplingScale,
    /// Same expression with the heterogeneity `σ` in place of `u`. Kept for
    /// comparison only; it is not a density unless `σ = u`.
    Literal,
}

/// How the sign of a simulated effect is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignRule {
    /// `y = y*` or `2θ - y*` with probability one half each, where
    /// `y* = -u Φ⁻¹(p/2)`.
    #[default]
    Reflect,
    /// Keep the effect drawn from `N(θ, η²)`.
    Direct,
}

/// Law of the two-sided p-value of one study with true mean `θ`, sampling
/// error `u` and heterogeneity `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvalDensityParams {
    pub theta: f64,
    pub u: f64,
    pub sigma2: f64,
    pub form: DensityForm,
}

impl PvalDensityParams {
    pub fn new(theta: f64, u: f64, sigma2: f64) -> Result<Self> {
        if !theta.is_finite()
            || !(u > 0.0 && u.is_finite())
            || !(sigma2 >= 0.0 && sigma2.is_finite())
        {
            return Err(Error::Domain(format!(
                "need finite theta, u > 0 and sigma2 >= 0, got ({theta}, {u}, {sigma2})"
            )));
        }
        Ok(Self {
            theta,
            u,
            sigma2,
            form: DensityForm::SamplingScale,
        })
    }

    pub fn with_form(mut self, form: DensityForm) -> Self {
        self.form = form;
        self
    }

    pub fn eta(&self) -> f64 {
        (self.u * self.u + self.sigma2).sqrt()
    }

    fn check(p: f64) -> Result<()> {
        if p > 0.0 && p < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("p must lie in (0, 1), got {p}")))
        }
    }

    pub fn density(&self, p: f64) -> Result<f64> {
        Self::check(p)?;
        let q = norm_quantile(p / 2.0)?;
        let eta = self.eta();
        let scale = match self.form {
            DensityForm::SamplingScale => self.u,
            DensityForm::Literal => self.sigma2.sqrt(),
        };
        let num =
            norm_pdf((-scale * q - self.theta) / eta) + norm_pdf((scale * q - self.theta) / eta);
        Ok(scale / (2.0 * eta) * num / norm_pdf(q))
    }

    // P(p-value ≤ x) written on the effect scale, b = |y| cut point.
    fn cdf_at_cut(&self, b: f64) -> f64 {
        let eta = self.eta();
        norm_cdf((self.theta - b) / eta) + norm_cdf((-b - self.theta) / eta)
    }

    /// `P(P ≤ p) = P(|Y| ≥ b)` with `b = -u Φ⁻¹(p/2)`.
    pub fn cdf(&self, p: f64) -> Result<f64> {
        Self::check(p)?;
        let b = -self.u * norm_quantile(p / 2.0)?;
        Ok(self.cdf_at_cut(b).min(1.0))
    }

    /// Inverse of [`Self::cdf`] by bisection on the effect-scale cut point.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        Self::check(q)?;
        // cdf_at_cut decreases from 1 at b = 0 to 0 as b grows
        let mut lo = 0.0;
        let mut hi = self.u.max(self.eta()) + self.theta.abs();
        while self.cdf_at_cut(hi) > q {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_at_cut(mid) > q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let b = 0.5 * (lo + hi);
        Ok(2.0 * norm_cdf(-b / self.u))
    }

    /// Draws `(p, y)`: the p-value via an effect `Y ~ N(θ, η²)` and
    /// `p = 2Φ(-|Y|/u)`, and the returned effect by `rule`.
    pub fn sample(&self, rng: &mut RngStream, rule: SignRule) -> (f64, f64) {
        let z: f64 = rng.sample(StandardNormal);
        let y = self.theta + self.eta() * z;
        let p = (2.0 * norm_cdf(-y.abs() / self.u)).min(1.0);
        let flip = rng.gen::<bool>();
        let out = match rule {
            SignRule::Direct => y,
            SignRule::Reflect => {
                // y* = -u Φ⁻¹(p/2) = |y|, taken directly to keep tail precision
                let y_star = y.abs();
                if flip {
                    2.0 * self.theta - y_star
                } else {
                    y_star
                }
            }
        };
        (p, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn null_is_uniform() {
        let d = PvalDensityParams::new(0.0, 0.4, 0.0).unwrap();
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert_abs_diff_eq!(d.density(p).unwrap(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(d.cdf(p).unwrap(), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn cdf_limits_and_domain() {
        let d = PvalDensityParams::new(0.26, 0.45, 0.3).unwrap();
        assert!(d.cdf(1.0 - 1e-15).unwrap() > 1.0 - 1e-9);
        // η > u fattens the left tail: P(P ≤ 1e-300) is about 5e-119
        let tiny = d.cdf(1e-300).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-100);
        assert!(d.cdf(1e-200).unwrap() > tiny);
        assert!(d.cdf(0.0).is_err());
        assert!(d.density(1.0).is_err());
        assert!(d.quantile(-0.1).is_err());
        assert!(PvalDensityParams::new(0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn quantile_round_trip() {
        let d = PvalDensityParams::new(0.26, 0.45, 0.3).unwrap();
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let back = d.quantile(d.cdf(p).unwrap()).unwrap();
            assert_abs_diff_eq!(back, p, epsilon = 1e-8);
        }
    }

    #[test]
    fn derivative_of_cdf_is_density() {
        for (t, u, s2) in [(0.26, 0.45, 0.3), (-1.0, 0.2, 0.05), (0.5, 1.0, 0.0)] {
            let d = PvalDensityParams::new(t, u, s2).unwrap();
            for i in 1..50 {
                let p = 0.02 * i as f64;
                let h = 1e-6;
                let fd = (d.cdf(p + h).unwrap() - d.cdf(p - h).unwrap()) / (2.0 * h);
                let f = d.density(p).unwrap();
                assert!((fd - f).abs() <= 1e-5 * (1.0 + f), "p = {p}: {fd} vs {f}");
            }
        }
    }

    #[test]
    fn literal_form_only_agrees_when_sigma_equals_u() {
        let d = PvalDensityParams::new(0.3, 0.5, 0.25).unwrap();
        let lit = d.with_form(DensityForm::Literal);
        assert_abs_diff_eq!(
            d.density(0.3).unwrap(),
            lit.density(0.3).unwrap(),
            epsilon = 1e-14
        );
        let lit0 = PvalDensityParams::new(0.0, 1.0, 0.0)
            .unwrap()
            .with_form(DensityForm::Literal);
        assert_eq!(lit0.density(0.3).unwrap(), 0.0);
    }

    #[test]
    fn zero_theta_sign_symmetry() {
        let d = PvalDensityParams::new(0.0, 0.3, 0.1).unwrap();
        let mut rng = RngStream::new(11, 0);
        let mut pos = 0;
        for _ in 0..4000 {
            let (p, y) = d.sample(&mut rng, SignRule::Reflect);
            let y_star = -0.3 * norm_quantile(p / 2.0).unwrap();
            assert!((y.abs() - y_star).abs() < 1e-9 * (1.0 + y_star));
            pos += (y > 0.0) as usize;
        }
        // binomial(4000, 1/2): 4 standard deviations is about 126
        assert!((pos as i64 - 2000).abs() < 126, "{pos}");
    }
}
