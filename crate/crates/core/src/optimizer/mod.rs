//! Maximization of the selection-model log-likelihood.
//!
//! * [`fit_monotone`]: differential evolution over the monotone cone
//!   `w_0 ≤ … ≤ w_{k-1} = 1`, infeasible candidates penalized.
//! * [`fit_unconstrained`]: cyclic one-coordinate-at-a-time Newton ascent
//!   over `(w, θ, σ²)` with every weight in `(0, 1]`.
//! * [`fit_random_effects`]: the no-selection model `w ≡ 1`.

mod de;
mod fit;

pub use de::{de_maximize, DEConfig, DeOutcome, DeProblem, StopReason};
pub(crate) use fit::profile_fit;
pub use fit::{
    fit_monotone, fit_monotone_with_context, fit_random_effects, fit_random_effects_with,
    fit_unconstrained, fit_unconstrained_from, monotone_bounds, FitMethod, FitResult,
    RandomEffectsEstimator, SearchBounds,
};
