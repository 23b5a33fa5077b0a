//! Bayesian fitting and forecasting of monthly occupancy counts.

pub mod closed;
pub mod mcmc;
pub mod posterior;
pub mod predict;
pub mod series;
pub mod spline;
pub mod synth;

pub use closed::{closed_forms, ClosedForms};
pub use mcmc::{fit, fit_arrival_counts, fit_detailed, ArrivalPosterior, McmcConfig, PosteriorDraws};
pub use posterior::{log_posterior, Params, PriorSpec};
pub use predict::{predict, predict_from, predict_short_term, rmse, Mode, PredictionSeries, Scenario};
pub use series::{CountSeries, Provenance, YearMonth};
pub use synth::synthesize_monthly;
