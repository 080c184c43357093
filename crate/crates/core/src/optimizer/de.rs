use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::likelihood::PENALTY;
use crate::stats::RngStream;
use crate::{Error, Execution, Result};

/// Differential-evolution settings (classic rand/1/bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    /// Population size; `None` means ten times the search dimension.
    pub population_size: Option<usize>,
    /// Mutation scale `F`.
    pub differential_weight: f64,
    /// Binomial crossover probability `CR`.
    pub crossover_rate: f64,
    pub max_generations: usize,
    /// Minimum improvement of the best value that resets the stagnation count.
    pub value_tolerance: f64,
    /// Stop after this many generations without such an improvement.
    pub stagnation_generations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            differential_weight: 0.8,
            crossover_rate: 0.9,
            max_generations: 2000,
            value_tolerance: 1e-8,
            stagnation_generations: 200,
            seed: 1,
            execution: Execution::default(),
        }
    }
}

impl DEConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn population_for(&self, dim: usize) -> usize {
        self.population_size.unwrap_or(10 * dim).max(4)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(np) = self.population_size {
            if np < 4 {
                return Err(Error::Config(format!("population size {np} < 4")));
            }
        }
        if !(self.differential_weight > 0.0 && self.differential_weight <= 2.0) {
            return Err(Error::Config(format!(
                "differential weight {} outside (0, 2]",
                self.differential_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config(format!(
                "crossover rate {} outside [0, 1]",
                self.crossover_rate
            )));
        }
        if self.max_generations == 0 {
            return Err(Error::Config("max_generations must be positive".into()));
        }
        if !(self.value_tolerance > 0.0) {
            return Err(Error::Config("value tolerance must be positive".into()));
        }
        Ok(())
    }
}

type Feasible<'a> = &'a (dyn Fn(&[f64]) -> bool + Sync);
type Init<'a> = &'a (dyn Fn(&mut RngStream) -> Vec<f64> + Sync);

/// Search box plus optional feasibility predicate and initializer.
pub struct DeProblem<'a> {
    pub bounds: Vec<(f64, f64)>,
    /// Candidates failing the predicate score [`PENALTY`] without being
    /// evaluated.
    pub feasible: Option<Feasible<'a>>,
    /// Draws one initial member; defaults to uniform in the box.
    pub init: Option<Init<'a>>,
}

impl<'a> DeProblem<'a> {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            bounds,
            feasible: None,
            init: None,
        }
    }

    pub fn with_constraint(mut self, feasible: Feasible<'a>) -> Self {
        self.feasible = Some(feasible);
        self
    }

    pub fn with_init(mut self, init: Init<'a>) -> Self {
        self.init = Some(init);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stagnation,
    MaxGenerations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub best: Vec<f64>,
    pub value: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

impl DeOutcome {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Stagnation && self.value > PENALTY
    }
}

/// Maximizes `objective` over the box with rand/1/bin differential evolution.
///
/// Trial vectors for a whole generation are drawn sequentially from one
/// seeded stream, evaluated (possibly in parallel), and then selected in
/// index order, so the outcome depends only on the seed. Mutant coordinates
/// that leave the box are redrawn uniformly between the violated bound and
/// the base vector's coordinate.
pub fn de_maximize<F>(objective: F, problem: &DeProblem<'_>, config: &DEConfig) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let bounds = &problem.bounds;
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::Config("empty search space".into()));
    }
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!(
                "bad bounds [{lo}, {hi}] in coordinate {d}"
            )));
        }
    }
    let np = config.population_for(dim);
    let mut rng = RngStream::new(config.seed, 0);

    let score = |x: &Vec<f64>| -> f64 {
        if let Some(ok) = problem.feasible {
            if !ok(x) {
                return PENALTY;
            }
        }
        let v = objective(x);
        if v.is_finite() {
            v.max(PENALTY)
        } else {
            PENALTY
        }
    };

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| match problem.init {
            Some(init) => {
                let mut x = init(&mut rng);
                clamp_into(&mut x, bounds);
                x
            }
            None => bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect(),
        })
        .collect();
    let mut values = config.execution.map(&pop, score);
    let mut evaluations = np;

    let mut best_idx = argmax(&values);
    let mut best_value = values[best_idx];
    let mut stagnant = 0usize;
    let mut generations = 0usize;
    let mut stop = StopReason::MaxGenerations;

    while generations < config.max_generations {
        generations += 1;
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let (r1, r2, r3) = distinct_three(&mut rng, np, i);
                let jrand = rng.gen_range(0..dim);
                (0..dim)
                    .map(|d| {
                        if d == jrand || rng.gen::<f64>() < config.crossover_rate {
                            let base = pop[r1][d];
                            let v = base + config.differential_weight * (pop[r2][d] - pop[r3][d]);
                            let (lo, hi) = bounds[d];
                            if v < lo {
                                lo + rng.gen::<f64>() * (base - lo)
                            } else if v > hi {
                                hi - rng.gen::<f64>() * (hi - base)
                            } else {
                                v
                            }
                        } else {
                            pop[i][d]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_values = config.execution.map(&trials, score);
        evaluations += np;

        for (i, (t, v)) in trials.into_iter().zip(trial_values).enumerate() {
            if v >= values[i] {
                pop[i] = t;
                values[i] = v;
            }
        }

        let idx = argmax(&values);
        if values[idx] > best_value + config.value_tolerance {
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        if values[idx] >= best_value {
            best_value = values[idx];
            best_idx = idx;
        }
        if stagnant >= config.stagnation_generations {
            stop = StopReason::Stagnation;
            break;
        }
    }

    Ok(DeOutcome {
        best: pop[best_idx].clone(),
        value: best_value,
        generations,
        evaluations,
        stop,
    })
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn distinct_three(rng: &mut RngStream, np: usize, exclude: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let r = rng.gen_range(0..np);
        if r != exclude && !taken.contains(&r) {
            return r;
        }
    };
    let a = pick(&[]);
    let b = pick(&[a]);
    let c = pick(&[a, b]);
    (a, b, c)
}
