//! Synthetic seasons and tweet corpora with known ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluhmm::is_ordered;
use crate::ingest::TweetRecord;
use crate::series::{round_half_up, DailyCounters, DayStamp, IliSeries, TermId};
use crate::textnorm::TermLexicon;

/// A season whose phase changes at `boundaries` (the first week of phases
/// 2 to 5).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonSpec {
    pub n_weeks: usize,
    pub boundaries: [usize; 4],
    pub phase_means: [f64; 5],
    pub noise_sd: f64,
    pub seed: u64,
}

impl SeasonSpec {
    pub fn validate(&self) -> Result<()> {
        let b = self.boundaries;
        if !(0 < b[0] && b[0] < b[1] && b[1] < b[2] && b[2] < b[3] && b[3] < self.n_weeks) {
            return Err(Error::invalid(format!(
                "boundaries {b:?} must be strictly increasing inside 1..{}",
                self.n_weeks
            )));
        }
        if !is_ordered(&self.phase_means) {
            return Err(Error::invalid(format!(
                "phase means {:?} must rise to the plateau and fall after it",
                self.phase_means
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be a nonnegative number"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SeasonSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            msg: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn phase_of_week(&self, week: usize) -> u8 {
        self.boundaries.iter().filter(|&&b| b <= week).count() as u8
    }
}

/// Weekly series `max(0, round(mean + noise))` and its true phase path.
pub fn generate_season(spec: &SeasonSpec) -> Result<(IliSeries, Vec<u8>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let path: Vec<u8> = (0..spec.n_weeks).map(|w| spec.phase_of_week(w)).collect();
    let values = path
        .iter()
        .map(|&k| round_half_up(spec.phase_means[k as usize] + noise.sample(&mut rng)).max(0.0))
        .collect();
    Ok((IliSeries::new(values)?, path))
}

/// Mean daily count of a term: `base + slope · weekly_ili / 7`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermRate {
    pub base: f64,
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Timestamp-ordered single-keyword tweets.
    pub records: Vec<TweetRecord>,
    /// The Poisson counts the records were materialized from.
    pub planted: DailyCounters,
}

/// One tweet per planted occurrence, for every day of every week of `season`.
/// `rates[i]` drives lexicon term `i`.
pub fn generate_corpus(
    season: &IliSeries,
    season_start: DayStamp,
    lexicon: &TermLexicon,
    rates: &[TermRate],
    seed: u64,
) -> Result<SynthCorpus> {
    if rates.len() != lexicon.len() {
        return Err(Error::LengthMismatch {
            expected: lexicon.len(),
            actual: rates.len(),
        });
    }
    if rates.iter().any(|r| !(r.base >= 0.0 && r.slope >= 0.0)) {
        return Err(Error::invalid("term rates must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = DailyCounters::new(lexicon.base_terms());
    let mut records = Vec::new();
    for (week, &ili) in season.values().iter().enumerate() {
        for dow in 0..7 {
            let day = season_start.plus_days(7 * week as i64 + dow);
            let mut todays: Vec<TermId> = Vec::new();
            for (term, rate) in rates.iter().enumerate() {
                let lambda = rate.base + rate.slope * ili / 7.0;
                let n = if lambda > 0.0 {
                    Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng) as u64
                } else {
                    0
                };
                planted.add(day, term as TermId, n);
                todays.extend(std::iter::repeat_n(term as TermId, n as usize));
            }
            // interleave terms through the day
            for i in (1..todays.len()).rev() {
                todays.swap(i, rng.random_range(0..=i));
            }
            let total = todays.len() as i64;
            for (seq, term) in todays.into_iter().enumerate() {
                let entry = &lexicon.entries()[term as usize];
                let form = &entry.variants[rng.random_range(0..entry.variants.len())];
                let secs = seq as i64 * 86_400 / total.max(1);
                let ts = day.date().and_hms_opt(0, 0, 0).unwrap().and_utc() + chrono::Duration::seconds(secs);
                records.push(TweetRecord {
                    id: format!("s{seed:x}-{day}-{seq}"),
                    timestamp: ts,
                    user: format!("user{}", rng.random_range(0..5000)),
                    text: carrier_text(&mut rng, form),
                    location: None,
                });
            }
        }
    }
    Ok(SynthCorpus { records, planted })
}

/// Wraps a keyword in punctuation and random capitalization; none of the
/// extra characters are letters, so exactly one token comes out.
fn carrier_text<R: Rng + ?Sized>(rng: &mut R, form: &str) -> String {
    let word = match rng.random_range(0..3) {
        0 => form.to_string(),
        1 => form.to_uppercase(),
        _ => {
            let mut c = form.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect())
                .unwrap_or_default()
        }
    };
    let tail = ["", "!", "...", " :(", " 38.5"][rng.random_range(0..5)];
    format!("{word}{tail}")
}
