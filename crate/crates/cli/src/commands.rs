//! Subcommand implementations. Each returns a [`ReportDocument`] (or a plot
//! table) plus a short human-readable summary; printing is left to `main`.

use std::fmt::Write as _;

use pubbias::inference::{profile_ci_theta, selection_test, SelectionTestConfig};
use pubbias::model::build_groups;
use pubbias::optimizer::{fit_monotone, fit_random_effects, fit_unconstrained};
use pubbias::{DEConfig, Execution, FitResult, GroupedPvalues, MetaDataset};
use serde::{Deserialize, Serialize};

use crate::report::{ConfigEcho, ReportDocument};
use crate::CliError;

/// Convergence tolerance for the unconstrained coordinate fit.
pub const UNCONSTRAINED_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Monotone,
    Dearbegg,
    RandomEffects,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Monotone => "monotone",
            Method::Dearbegg => "dearbegg",
            Method::RandomEffects => "random-effects",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Pscale,
    Groupscale,
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonOptions {
    pub lambda1: f64,
    pub seed: u64,
    pub population_size: Option<usize>,
    pub max_generations: Option<usize>,
    pub differential_weight: Option<f64>,
    pub crossover_rate: Option<f64>,
    pub sequential: bool,
}

impl Default for CommonOptions {
    fn default() -> Self {
        Self {
            lambda1: pubbias::model::DEFAULT_LAMBDA1,
            seed: 1,
            population_size: None,
            max_generations: None,
            differential_weight: None,
            crossover_rate: None,
            sequential: false,
        }
    }
}

impl CommonOptions {
    pub fn de_config(&self) -> Result<DEConfig, CliError> {
        let mut cfg = DEConfig::default()
            .with_seed(self.seed)
            .with_execution(if self.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            });
        cfg.population_size = self.population_size;
        if let Some(g) = self.max_generations {
            cfg.max_generations = g;
        }
        if let Some(f) = self.differential_weight {
            cfg.differential_weight = f;
        }
        if let Some(cr) = self.crossover_rate {
            cfg.crossover_rate = cr;
        }
        cfg.validate()?;
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return Err(CliError::Input(format!(
                "--lambda1 must be positive, got {}",
                self.lambda1
            )));
        }
        Ok(cfg)
    }
}

/// A finished command: the document, a summary for standard error, and
/// whether every optimizer involved converged.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub document: ReportDocument,
    pub summary: String,
    pub converged: bool,
}

fn fit_with(
    data: &MetaDataset,
    method: Method,
    opts: &CommonOptions,
    de: &DEConfig,
) -> Result<FitResult, CliError> {
    Ok(match method {
        Method::Monotone => fit_monotone(data, opts.lambda1, de)?,
        Method::Dearbegg => fit_unconstrained(data, opts.lambda1, UNCONSTRAINED_TOL)?,
        Method::RandomEffects => fit_random_effects(data)?,
    })
}

fn fit_summary(method: Method, fit: &FitResult) -> String {
    let mut s = format!(
        "{}: theta = {:.4}, sigma2 = {:.4}, loglik = {:.4}",
        method.name(),
        fit.theta,
        fit.sigma2,
        fit.loglik
    );
    if method != Method::RandomEffects {
        let w: Vec<String> = fit
            .weights
            .values()
            .iter()
            .map(|w| format!("{w:.3}"))
            .collect();
        let _ = write!(s, "\nweights (largest p first): {}", w.join(" "));
    }
    if !fit.converged {
        s.push_str("\nwarning: optimizer did not converge");
    }
    s
}

pub fn cmd_fit(
    data: &MetaDataset,
    method: Method,
    opts: &CommonOptions,
) -> Result<Outcome, CliError> {
    let de = opts.de_config()?;
    let groups = build_groups(data, opts.lambda1)?;
    let fit = fit_with(data, method, opts, &de)?;
    let document = ReportDocument::new(
        "fit",
        method.name(),
        &groups,
        &fit,
        ConfigEcho::new(opts.lambda1, &de),
    );
    Ok(Outcome {
        summary: fit_summary(method, &fit),
        converged: fit.converged,
        document,
    })
}

pub fn cmd_ci(data: &MetaDataset, level: f64, opts: &CommonOptions) -> Result<Outcome, CliError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Input(format!(
            "--level must lie in (0, 1), got {level}"
        )));
    }
    let de = opts.de_config()?;
    let groups = build_groups(data, opts.lambda1)?;
    let ci = profile_ci_theta(data, opts.lambda1, level, &de)?;
    let fit = fit_monotone(data, opts.lambda1, &de)?;
    let mut echo = ConfigEcho::new(opts.lambda1, &de);
    echo.level = Some(level.into());
    let document =
        ReportDocument::new("ci", Method::Monotone.name(), &groups, &fit, echo).with_ci(&ci);
    let mut summary = fit_summary(Method::Monotone, &fit);
    let _ = write!(
        summary,
        "\n{:.0}% profile CI for theta: [{:.4}, {:.4}]",
        100.0 * level,
        ci.lower,
        ci.upper
    );
    if ci.lower_open || ci.upper_open {
        summary.push_str(" (open on at least one side)");
    }
    Ok(Outcome {
        summary,
        converged: fit.converged,
        document,
    })
}

pub fn cmd_selection_test(
    data: &MetaDataset,
    replicates: usize,
    keep_curves: bool,
    opts: &CommonOptions,
) -> Result<Outcome, CliError> {
    if replicates == 0 {
        return Err(CliError::Input("--m must be at least 1".into()));
    }
    let de = opts.de_config()?;
    let groups = build_groups(data, opts.lambda1)?;
    let cfg = SelectionTestConfig {
        replicates,
        seed: opts.seed,
        keep_curves,
        lambda1: opts.lambda1,
        de: de.clone(),
        ..SelectionTestConfig::default()
    };
    let result = selection_test(data, &cfg)?;
    let mut echo = ConfigEcho::new(opts.lambda1, &de);
    echo.replicates = Some(replicates);
    let document = ReportDocument::new(
        "selection-test",
        Method::Monotone.name(),
        &groups,
        &result.observed_fit,
        echo,
    )
    .with_selection(&result);
    let mut summary = fit_summary(Method::Monotone, &result.observed_fit);
    let _ = write!(
        summary,
        "\nselection test: T0 = {:.4}, M = {}, p = {:.4}",
        result.t0, result.m, result.p_value
    );
    if result.nonconverged > 0 {
        let _ = write!(
            summary,
            "\nwarning: {} replicate fits did not converge",
            result.nonconverged
        );
    }
    Ok(Outcome {
        summary,
        converged: result.observed_fit.converged && result.nonconverged == 0,
        document,
    })
}

/// One step of the plotted weight function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub x_left: f64,
    pub x_right: f64,
    pub w: f64,
}

/// Step-function coordinates ordered by increasing x, so the smallest-p
/// group comes first.
pub fn plot_rows(groups: &GroupedPvalues, fit: &FitResult, axis: Axis) -> Vec<PlotRow> {
    let k = groups.k();
    let w = fit.weights.values();
    let intervals = groups.p_intervals();
    (0..k)
        .rev()
        .map(|j| {
            let (x_left, x_right) = match axis {
                Axis::Pscale => intervals[j],
                Axis::Groupscale => ((k - 1 - j) as f64 / k as f64, (k - j) as f64 / k as f64),
            };
            PlotRow {
                x_left,
                x_right,
                w: w[j],
            }
        })
        .collect()
}

pub fn plot_csv(rows: &[PlotRow]) -> String {
    let mut out = String::from("x_left,x_right,w\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.x_left, r.x_right, r.w);
    }
    out
}

/// Plot table for `method`, with the fit summary and convergence flag.
pub fn cmd_plotdata(
    data: &MetaDataset,
    method: Method,
    axis: Axis,
    opts: &CommonOptions,
) -> Result<(String, String, bool), CliError> {
    let de = opts.de_config()?;
    let groups = build_groups(data, opts.lambda1)?;
    let fit = fit_with(data, method, opts, &de)?;
    let rows = plot_rows(&groups, &fit, axis);
    Ok((plot_csv(&rows), fit_summary(method, &fit), fit.converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pubbias::datasets::education;
    use pubbias::model::weight_at_p;

    #[test]
    fn plot_rows_cover_unit_interval_in_order() {
        let data = education();
        let groups = build_groups(&data, 2.0).unwrap();
        let fit = fit_unconstrained(&data, 2.0, UNCONSTRAINED_TOL).unwrap();
        for axis in [Axis::Pscale, Axis::Groupscale] {
            let rows = plot_rows(&groups, &fit, axis);
            assert_eq!(rows.len(), 6);
            assert_eq!(rows[0].x_left, 0.0);
            assert_eq!(rows[5].x_right, 1.0);
            for pair in rows.windows(2) {
                assert_eq!(pair[0].x_right, pair[1].x_left);
            }
        }
        let rows = plot_rows(&groups, &fit, Axis::Pscale);
        for r in &rows {
            let mid = 0.5 * (r.x_left + r.x_right);
            assert_eq!(r.w, weight_at_p(&fit.weights, &groups, mid));
        }
    }

    #[test]
    fn level_is_validated() {
        let data = education();
        for level in [0.0, 1.0, 1.5, f64::NAN] {
            assert!(matches!(
                cmd_ci(&data, level, &CommonOptions::default()),
                Err(CliError::Input(_))
            ));
        }
    }

    #[test]
    fn bad_de_flags_are_input_errors() {
        let opts = CommonOptions {
            crossover_rate: Some(1.5),
            ..CommonOptions::default()
        };
        assert!(cmd_fit(&education(), Method::Monotone, &opts).is_err());
    }
}
