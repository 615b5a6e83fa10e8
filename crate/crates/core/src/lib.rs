//! Influenza surveillance from keyword-filtered tweet streams.
//!
//! The pipeline counts lexicon terms per day ([`ingest`]), ranks terms by
//! correlation with a historical ILI series ([`featsel`]), fits a linear
//! model from term counts to ILI ([`regress`]), aggregates daily estimates
//! into weeks ([`series`]) and fits a five-phase epidemic HMM to the weekly
//! series ([`fluhmm`]). [`synth`] produces seasons and corpora with known
//! ground truth; [`plot`] renders the results as SVG.

pub mod error;
pub mod featsel;
pub mod fluhmm;
pub mod ingest;
pub mod pipeline;
pub mod plot;
pub mod regress;
pub mod series;
pub mod synth;
pub mod textnorm;

pub use error::{Error, Result};
pub use series::{aggregate_weekly, DailyCounters, DayStamp, IliSeries, TermId, WeekIndex};
