//! Five-phase Bayesian hidden Markov model for weekly ILI series.
//!
//! A season moves through pre-epidemic, growth, plateau, decline and
//! post-epidemic phases, in that order, one step at most per week. Each
//! phase emits Gaussian observations; the plateau has the largest mean.
//! [`fit`] runs several Gibbs chains and reports, for every week, the
//! posterior probability of each phase.

mod draw;
mod exact;
mod ffbs;
mod gibbs;
mod model;
mod psrf;
mod report;

pub use exact::forward_backward_exact;
pub use ffbs::ffbs_sample;
pub use gibbs::{fit, FitResult, Priors, SamplerConfig};
pub use model::{is_ordered, Phase, PhaseModel, N_PHASES};
pub use psrf::{gelman_rubin, split_gelman_rubin};
pub use report::FitReport;
