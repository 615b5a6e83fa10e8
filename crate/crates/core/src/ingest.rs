//! Keyword-filtered stream ingestion into daily per-term counters.
//!
//! A [`StreamSource`] yields tweets in timestamp order. [`ReplaySource`]
//! reads them back from a newline-delimited JSON file; a live adapter would
//! implement the same trait. An [`IngestSession`] owns the counters and the
//! set of ids already seen, so replaying a record twice within one session
//! never double-counts it.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{DailyCounters, DayStamp, TermId};
use crate::textnorm::{match_terms, TermLexicon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    pub user: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

impl TweetRecord {
    pub fn day(&self) -> DayStamp {
        self.timestamp.date_naive().into()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let rec: TweetRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if rec.id.is_empty() {
            return Err("empty id".into());
        }
        Ok(rec)
    }
}

mod timestamp {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {raw:?}")))
    }

    pub(super) fn parse(raw: &str) -> Option<DateTime<Utc>> {
        if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
            return Some(ts.with_timezone(&Utc));
        }
        if let Ok(ts) = chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S") {
            return Some(ts.and_utc());
        }
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .ok()
            .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamItem {
    Record(TweetRecord),
    Malformed { line: usize, reason: String },
}

pub trait StreamSource {
    /// Next item, `Ok(None)` once exhausted.
    fn next_item(&mut self) -> Result<Option<StreamItem>>;
}

/// Replays a newline-delimited JSON record file, enforcing non-decreasing
/// timestamps.
pub struct ReplaySource<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    last: Option<DateTime<Utc>>,
}

impl ReplaySource<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(ReplaySource::new(BufReader::with_capacity(1 << 16, f)))
    }
}

impl<R: BufRead> ReplaySource<R> {
    pub fn new(reader: R) -> Self {
        ReplaySource {
            lines: reader.lines(),
            line_no: 0,
            last: None,
        }
    }
}

impl<R: BufRead> StreamSource for ReplaySource<R> {
    fn next_item(&mut self) -> Result<Option<StreamItem>> {
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line.map_err(|e| Error::io("<stream>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            return match TweetRecord::parse_line(&line) {
                Ok(rec) => {
                    if self.last.is_some_and(|last| rec.timestamp < last) {
                        return Err(Error::OutOfOrder { id: rec.id });
                    }
                    self.last = Some(rec.timestamp);
                    Ok(Some(StreamItem::Record(rec)))
                }
                Err(reason) => Ok(Some(StreamItem::Malformed {
                    line: self.line_no,
                    reason,
                })),
            };
        }
    }
}

/// In-memory source, mostly for tests and adapters that already hold records.
pub struct VecSource {
    items: std::vec::IntoIter<StreamItem>,
}

impl VecSource {
    pub fn new(records: Vec<TweetRecord>) -> Self {
        VecSource {
            items: records
                .into_iter()
                .map(StreamItem::Record)
                .collect::<Vec<_>>()
                .into_iter(),
        }
    }
}

impl StreamSource for VecSource {
    fn next_item(&mut self) -> Result<Option<StreamItem>> {
        Ok(self.items.next())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub tweets_seen: u64,
    pub tweets_matched: u64,
    pub counts_added: u64,
    pub duplicates: u64,
    pub malformed: u64,
}

impl std::ops::AddAssign for IngestSummary {
    fn add_assign(&mut self, o: Self) {
        self.tweets_seen += o.tweets_seen;
        self.tweets_matched += o.tweets_matched;
        self.counts_added += o.counts_added;
        self.duplicates += o.duplicates;
        self.malformed += o.malformed;
    }
}

const BATCH: usize = 4096;

pub struct IngestSession<'a> {
    lexicon: &'a TermLexicon,
    counters: DailyCounters,
    seen: HashSet<String>,
    batch_size: usize,
}

impl<'a> IngestSession<'a> {
    pub fn new(lexicon: &'a TermLexicon) -> Self {
        IngestSession::with_counters(lexicon, DailyCounters::new(lexicon.base_terms()))
    }

    /// Continue counting into an existing store, e.g. one loaded from disk.
    pub fn with_counters(lexicon: &'a TermLexicon, counters: DailyCounters) -> Self {
        IngestSession {
            lexicon,
            counters,
            seen: HashSet::new(),
            batch_size: BATCH,
        }
    }

    /// Records matched per parallel batch; 1 processes strictly one at a time.
    pub fn batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn counters(&self) -> &DailyCounters {
        &self.counters
    }

    pub fn into_counters(self) -> DailyCounters {
        self.counters
    }

    /// Drains `source`. Matching runs in parallel per batch; counter updates
    /// are applied afterwards in stream order.
    pub fn ingest<S: StreamSource + ?Sized>(&mut self, source: &mut S) -> Result<IngestSummary> {
        let mut summary = IngestSummary::default();
        let mut batch: Vec<TweetRecord> = Vec::with_capacity(self.batch_size);
        loop {
            let item = source.next_item();
            let done = match item {
                Ok(Some(StreamItem::Record(r))) => {
                    batch.push(r);
                    false
                }
                Ok(Some(StreamItem::Malformed { line, reason })) => {
                    log::debug!("skipping malformed record on line {line}: {reason}");
                    summary.malformed += 1;
                    false
                }
                Ok(None) => true,
                Err(e) => {
                    // keep everything that was read before the failure
                    summary += self.apply(std::mem::take(&mut batch));
                    return Err(e);
                }
            };
            if done || batch.len() >= self.batch_size {
                summary += self.apply(std::mem::take(&mut batch));
            }
            if done {
                return Ok(summary);
            }
        }
    }

    fn apply(&mut self, batch: Vec<TweetRecord>) -> IngestSummary {
        let lexicon = self.lexicon;
        let hits: Vec<BTreeMap<TermId, u32>> = if batch.len() > 64 {
            batch.par_iter().map(|r| match_terms(&r.text, lexicon)).collect()
        } else {
            batch.iter().map(|r| match_terms(&r.text, lexicon)).collect()
        };
        let mut s = IngestSummary::default();
        for (rec, hits) in batch.into_iter().zip(hits) {
            if !self.seen.insert(rec.id.clone()) {
                s.duplicates += 1;
                continue;
            }
            s.tweets_seen += 1;
            if hits.is_empty() {
                continue;
            }
            s.tweets_matched += 1;
            let day = rec.day();
            for (term, n) in hits {
                self.counters.add(day, term, n as u64);
                s.counts_added += n as u64;
            }
        }
        s
    }
}

/// One-shot ingest into `sink`.
pub fn run_ingest<S: StreamSource + ?Sized>(
    source: &mut S,
    lexicon: &TermLexicon,
    sink: &mut DailyCounters,
) -> Result<IngestSummary> {
    let mut session = IngestSession::with_counters(lexicon, std::mem::take(sink));
    let out = session.ingest(source);
    *sink = session.into_counters();
    out
}

/// Dense day-by-term count matrix over an inclusive day range.
pub fn counters_to_features(
    counters: &DailyCounters,
    terms: &[TermId],
    from: DayStamp,
    to: DayStamp,
) -> Result<Vec<Vec<u64>>> {
    if terms.is_empty() {
        return Err(Error::invalid("no terms requested"));
    }
    if to < from {
        return Err(Error::BadRange { from, to });
    }
    Ok(from
        .through(to)
        .map(|day| terms.iter().map(|&t| counters.get(day, t)).collect())
        .collect())
}

pub fn write_stream<W: Write>(records: &[TweetRecord], mut w: W) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line()).map_err(|e| Error::io("<stream>", e))?;
    }
    w.flush().map_err(|e| Error::io("<stream>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> TermLexicon {
        TermLexicon::new(
            vec![("γριπη", vec!["γριπησ"]), ("βηχας", vec![]), ("πυρετος", vec![])],
            "test",
        )
        .unwrap()
    }

    fn rec(id: &str, ts: &str, text: &str) -> TweetRecord {
        TweetRecord {
            id: id.into(),
            timestamp: timestamp::parse(ts).unwrap(),
            user: "u".into(),
            text: text.into(),
            location: None,
        }
    }

    fn d(s: &str) -> DayStamp {
        s.parse().unwrap()
    }

    #[test]
    fn three_tweets_one_day() {
        let lex = lexicon();
        let mut src = VecSource::new(vec![
            rec("1", "2019-08-23T08:00:00Z", "έχω γρίπη"),
            rec("2", "2019-08-23T09:00:00Z", "Γρίπη παντού"),
            rec("3", "2019-08-23T23:59:59Z", "ΓΡΙΠΗ;"),
        ]);
        let mut sink = DailyCounters::new(lex.base_terms());
        let s = run_ingest(&mut src, &lex, &mut sink).unwrap();
        assert_eq!(sink.get(d("2019-08-23"), 0), 3);
        assert_eq!(s.tweets_seen, 3);
        assert_eq!(s.tweets_matched, 3);
        assert_eq!(s.counts_added, 3);
    }

    #[test]
    fn unmatched_stream_leaves_counters_empty() {
        let lex = lexicon();
        let mut src = VecSource::new(vec![rec("1", "2019-08-23", "καλημέρα")]);
        let mut sink = DailyCounters::new(lex.base_terms());
        let s = run_ingest(&mut src, &lex, &mut sink).unwrap();
        assert_eq!(sink.total(), 0);
        assert_eq!(s.tweets_matched, 0);
    }

    #[test]
    fn replay_file_rejects_out_of_order() {
        let text = [
            rec("a", "2019-08-23T10:00:00Z", "γριπη").to_json_line(),
            rec("b", "2019-08-22T10:00:00Z", "γριπη").to_json_line(),
        ]
        .join("\n");
        let lex = lexicon();
        let mut session = IngestSession::new(&lex);
        match session.ingest(&mut ReplaySource::new(text.as_bytes())) {
            Err(Error::OutOfOrder { id }) => assert_eq!(id, "b"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(session.counters().total(), 1);
    }

    #[test]
    fn malformed_lines_are_skipped() {
        let text = format!(
            "{}\nnot json\n{{\"id\":\"\",\"timestamp\":\"2019-08-23\",\"user\":\"u\",\"text\":\"γριπη\"}}\n{{\"id\":\"x\",\"timestamp\":\"yesterday\",\"user\":\"u\",\"text\":\"γριπη\"}}\n\n{}",
            rec("a", "2019-08-23T10:00:00Z", "γριπη γριπης").to_json_line(),
            rec("b", "2019-08-24T10:00:00+03:00", "βήχας").to_json_line(),
        );
        let lex = lexicon();
        let mut session = IngestSession::new(&lex);
        let s = session.ingest(&mut ReplaySource::new(text.as_bytes())).unwrap();
        assert_eq!(s.malformed, 3);
        assert_eq!(s.tweets_seen, 2);
        assert_eq!(s.counts_added, 3);
        assert_eq!(session.counters().get(d("2019-08-23"), 0), 2);
        assert_eq!(session.counters().get(d("2019-08-24"), 1), 1);
    }

    #[test]
    fn replaying_twice_does_not_double_count() {
        let records: Vec<_> = (0..10)
            .map(|i| rec(&format!("id{i}"), &format!("2019-08-{:02}T12:00:00Z", 23 + i / 4), "γριπη και βηχας"))
            .collect();
        let mut file = Vec::new();
        write_stream(&records, &mut file).unwrap();

        let lex = lexicon();
        let mut once = IngestSession::new(&lex);
        once.ingest(&mut ReplaySource::new(&file[..])).unwrap();

        let mut twice = IngestSession::new(&lex);
        twice.ingest(&mut ReplaySource::new(&file[..])).unwrap();
        let second = twice.ingest(&mut ReplaySource::new(&file[..])).unwrap();
        assert_eq!(second.duplicates, 10);
        assert_eq!(second.counts_added, 0);
        assert_eq!(once.counters(), twice.counters());

        // oracle: counts from the distinct ids alone
        let distinct: HashSet<_> = records.iter().map(|r| &r.id).collect();
        assert_eq!(once.counters().total(), 2 * distinct.len() as u64);
    }

    #[test]
    fn features_are_dense_and_ordered() {
        let mut c = DailyCounters::new(vec!["t1".into(), "t2".into()]);
        c.add(d("2019-08-23"), 0, 5);
        let m = counters_to_features(&c, &[0, 1], d("2019-08-23"), d("2019-08-24")).unwrap();
        assert_eq!(m, vec![vec![5, 0], vec![0, 0]]);
        let m = counters_to_features(&c, &[1, 0], d("2019-08-23"), d("2019-08-23")).unwrap();
        assert_eq!(m, vec![vec![0, 5]]);
        assert!(counters_to_features(&c, &[], d("2019-08-23"), d("2019-08-24")).is_err());
        assert!(counters_to_features(&c, &[0], d("2019-08-24"), d("2019-08-23")).is_err());
    }
}
