//! Calendar-indexed series shared by every pipeline stage.
//!
//! Days are plain UTC calendar dates. Weeks are fixed 7-day blocks counted
//! from the first day of the surveillance season, not ISO weeks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DayStamp(NaiveDate);

impl DayStamp {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(DayStamp)
    }

    pub fn date(self) -> NaiveDate {
        self.0
    }

    /// Signed number of days from `other` to `self`.
    pub fn days_since(self, other: DayStamp) -> i64 {
        (self.0 - other.0).num_days()
    }

    pub fn plus_days(self, days: i64) -> Self {
        DayStamp(self.0 + Duration::days(days))
    }

    /// Every day from `self` to `end`, both inclusive.
    pub fn through(self, end: DayStamp) -> impl Iterator<Item = DayStamp> {
        let n = end.days_since(self).max(-1) + 1;
        (0..n).map(move |d| self.plus_days(d))
    }
}

impl From<NaiveDate> for DayStamp {
    fn from(d: NaiveDate) -> Self {
        DayStamp(d)
    }
}

impl fmt::Display for DayStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

impl FromStr for DayStamp {
    type Err = Error;

    /// Accepts `YYYY-MM-DD`, or a full RFC 3339 / ISO-8601 timestamp whose
    /// UTC date is taken.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(DayStamp(d));
        }
        if let Ok(ts) = chrono::DateTime::parse_from_rfc3339(s) {
            return Ok(DayStamp(ts.with_timezone(&chrono::Utc).date_naive()));
        }
        if let Ok(ts) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
            return Ok(DayStamp(ts.date()));
        }
        Err(Error::invalid(format!("unparseable date or timestamp {s:?}")))
    }
}

/// Position of a day inside a season, in whole weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekIndex {
    pub season_start: DayStamp,
    pub index: usize,
}

impl WeekIndex {
    pub fn of(day: DayStamp, season_start: DayStamp) -> Result<Self> {
        let offset = day.days_since(season_start);
        if offset < 0 {
            return Err(Error::BeforeSeason {
                date: day,
                season_start,
            });
        }
        Ok(WeekIndex {
            season_start,
            index: (offset / 7) as usize,
        })
    }

    pub fn first_day(self) -> DayStamp {
        self.season_start.plus_days(7 * self.index as i64)
    }
}

/// Weekly ILI scores; entry `i` belongs to week `i` of the season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IliSeries {
    pub season_start: Option<DayStamp>,
    values: Vec<f64>,
}

impl IliSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((week, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::invalid(format!(
                "week {week} has score {v}; scores must be finite and nonnegative"
            )));
        }
        Ok(IliSeries {
            season_start: None,
            values,
        })
    }

    pub fn with_season_start(mut self, start: DayStamp) -> Self {
        self.season_start = Some(start);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Round-half-up of every value, the integer vector the phase model is fitted on.
    pub fn rounded(&self) -> IliSeries {
        IliSeries {
            season_start: self.season_start,
            values: self.values.iter().map(|&v| round_half_up(v)).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["week", "score"])?;
        for (week, v) in self.values.iter().enumerate() {
            out.write_record([week.to_string(), fmt_score(*v)])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        check_header(&mut rdr, &["week", "score"])?;
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let week: usize = parse_field(&rec, 0, i)?;
            let score: f64 = parse_field(&rec, 1, i)?;
            if week != values.len() {
                return Err(Error::invalid(format!(
                    "row {}: expected week {}, found {week}",
                    i + 1,
                    values.len()
                )));
            }
            values.push(score);
        }
        IliSeries::new(values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        IliSeries::read_csv(std::io::BufReader::new(f))
    }
}

pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

fn fmt_score(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Sums daily scores into 7-day blocks from `season_start` and rounds each
/// weekly total half-up. Weeks without any day present score 0.
pub fn aggregate_weekly(
    daily_scores: &BTreeMap<DayStamp, f64>,
    season_start: DayStamp,
) -> Result<IliSeries> {
    let mut weeks: Vec<Vec<f64>> = Vec::new();
    for (&day, &score) in daily_scores {
        let week = WeekIndex::of(day, season_start)?.index;
        if !(score.is_finite() && score >= 0.0) {
            return Err(Error::invalid(format!("score {score} on {day} is not a nonnegative number")));
        }
        if weeks.len() <= week {
            weeks.resize(week + 1, Vec::new());
        }
        weeks[week].push(score);
    }
    // summing in sorted order makes the total independent of which day holds which score
    let values = weeks
        .into_iter()
        .map(|mut w| {
            w.sort_by(f64::total_cmp);
            round_half_up(w.iter().sum())
        })
        .collect();
    Ok(IliSeries::new(values)?.with_season_start(season_start))
}

pub type TermId = u32;

/// Per-day, per-term occurrence counts. Absent keys count as zero.
///
/// `terms` maps a term id to its base term, so counters can be written
/// without the lexicon at hand.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DailyCounters {
    terms: Vec<String>,
    counts: BTreeMap<(DayStamp, TermId), u64>,
}

impl DailyCounters {
    pub fn new(terms: Vec<String>) -> Self {
        DailyCounters {
            terms,
            counts: BTreeMap::new(),
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_id(&self, name: &str) -> Option<TermId> {
        self.terms.iter().position(|t| t == name).map(|i| i as TermId)
    }

    pub fn get(&self, day: DayStamp, term: TermId) -> u64 {
        self.counts.get(&(day, term)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, day: DayStamp, term: TermId, n: u64) {
        assert!((term as usize) < self.terms.len(), "term id {term} out of range");
        if n > 0 {
            *self.counts.entry((day, term)).or_insert(0) += n;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (DayStamp, TermId, u64)> + '_ {
        self.counts.iter().map(|(&(d, t), &c)| (d, t, c))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// First and last day with a nonzero counter.
    pub fn day_span(&self) -> Option<(DayStamp, DayStamp)> {
        let first = self.counts.keys().next()?.0;
        let last = self.counts.keys().next_back()?.0;
        Some((first, last))
    }

    /// Weekly totals per term (rows = weeks, columns = `terms` order).
    pub fn weekly_matrix(
        &self,
        terms: &[TermId],
        season_start: DayStamp,
        n_weeks: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let mut m = vec![vec![0.0; terms.len()]; n_weeks];
        let col: HashMap<TermId, usize> = terms.iter().enumerate().map(|(j, &t)| (t, j)).collect();
        for (day, term, c) in self.iter() {
            let Some(&j) = col.get(&term) else { continue };
            let week = WeekIndex::of(day, season_start)?.index;
            if week < n_weeks {
                m[week][j] += c as f64;
            }
        }
        Ok(m)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["date", "term", "count"])?;
        for (day, term, c) in self.iter() {
            out.write_record([day.to_string(), self.terms[term as usize].clone(), c.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a counter file. Terms get ids in order of first appearance
    /// unless `known_terms` is given, in which case every term must be in it
    /// and ids follow its order.
    pub fn read_csv<R: Read>(r: R, known_terms: Option<&[String]>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        check_header(&mut rdr, &["date", "term", "count"])?;
        let mut out = DailyCounters::new(known_terms.map(<[String]>::to_vec).unwrap_or_default());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let day: DayStamp = rec
                .get(0)
                .ok_or_else(|| Error::invalid(format!("row {}: missing date", i + 1)))?
                .parse()?;
            let name = rec.get(1).unwrap_or("").to_string();
            let count: u64 = parse_field(&rec, 2, i)?;
            let id = match out.term_id(&name) {
                Some(id) => id,
                None if known_terms.is_none() => {
                    out.terms.push(name);
                    (out.terms.len() - 1) as TermId
                }
                None => {
                    return Err(Error::invalid(format!("row {}: unknown term {name:?}", i + 1)));
                }
            };
            out.add(day, id, count);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path, known_terms: Option<&[String]>) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        DailyCounters::read_csv(std::io::BufReader::new(f), known_terms)
    }
}

/// Daily scores as written by the estimate stage: `date,score`.
pub fn write_daily_scores<W: Write>(scores: &BTreeMap<DayStamp, f64>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "score"])?;
    for (d, s) in scores {
        out.write_record([d.to_string(), format!("{s}")])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_daily_scores<R: Read>(r: R) -> Result<BTreeMap<DayStamp, f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["date", "score"])?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let day: DayStamp = rec.get(0).unwrap_or("").parse()?;
        let score: f64 = parse_field(&rec, 1, i)?;
        if out.insert(day, score).is_some() {
            return Err(Error::invalid(format!("row {}: duplicate date {day}", i + 1)));
        }
    }
    Ok(out)
}

pub(crate) fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::invalid(format!(
            "expected CSV header {:?}, found {:?}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

pub(crate) fn parse_field<T: FromStr>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::invalid(format!("row {}: missing column {}", row + 1, idx + 1)))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("row {}: cannot parse {raw:?}", row + 1)))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn integer_scores_sum_exactly(scores in proptest::collection::vec(0u32..50, 1..60)) {
            let start = DayStamp::from_ymd(2015, 1, 5).unwrap();
            let daily: BTreeMap<_, _> = scores.iter().enumerate()
                .map(|(i, &s)| (start.plus_days(i as i64), s as f64)).collect();
            let weekly = aggregate_weekly(&daily, start).unwrap();
            let total: f64 = weekly.values().iter().sum();
            prop_assert_eq!(total as u64, scores.iter().map(|&s| s as u64).sum::<u64>());
            prop_assert_eq!(weekly.len(), (scores.len() - 1) / 7 + 1);
        }

        #[test]
        fn day_order_within_week_is_irrelevant(mut scores in proptest::collection::vec(0.0f64..10.0, 7), seed in any::<u64>()) {
            let start = DayStamp::from_ymd(2015, 1, 5).unwrap();
            let build = |s: &[f64]| -> BTreeMap<DayStamp, f64> {
                s.iter().enumerate().map(|(i, &v)| (start.plus_days(i as i64), v)).collect()
            };
            let a = aggregate_weekly(&build(&scores), start).unwrap();
            // deterministic shuffle
            let k = (seed % 7) as usize;
            scores.rotate_left(k);
            scores.swap(0, (seed as usize / 7) % 7);
            let b = aggregate_weekly(&build(&scores), start).unwrap();
            prop_assert_eq!(a.values(), b.values());
        }
    }
}
