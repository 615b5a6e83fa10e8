//! Term ranking by Pearson correlation against a weekly ILI series.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::series::{IliSeries, TermId};

/// Sample Pearson correlation, computed from centered sums in index order.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("first series"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("second series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermScore {
    pub term: TermId,
    pub pearson_r: f64,
    pub n_weeks: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ranking {
    /// Sorted by `pearson_r` descending, ties by ascending term id.
    pub scores: Vec<TermScore>,
    /// Terms whose weekly counts never vary.
    pub skipped: Vec<TermId>,
}

/// Correlates each column of `weekly_counts` (rows = weeks) with `ili`.
/// `terms[j]` labels column `j`.
pub fn rank_terms(weekly_counts: &[Vec<f64>], terms: &[TermId], ili: &IliSeries) -> Result<Ranking> {
    if weekly_counts.len() != ili.len() {
        return Err(Error::LengthMismatch {
            expected: ili.len(),
            actual: weekly_counts.len(),
        });
    }
    if ili.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: ili.len() });
    }
    if let Some(row) = weekly_counts.iter().find(|r| r.len() != terms.len()) {
        return Err(Error::LengthMismatch {
            expected: terms.len(),
            actual: row.len(),
        });
    }
    let y = ili.values();
    let results: Vec<(TermId, Result<f64>)> = terms
        .par_iter()
        .enumerate()
        .map(|(j, &term)| {
            let col: Vec<f64> = weekly_counts.iter().map(|r| r[j]).collect();
            (term, pearson_r(&col, y))
        })
        .collect();

    let mut ranking = Ranking::default();
    for (term, r) in results {
        match r {
            Ok(r) => ranking.scores.push(TermScore {
                term,
                pearson_r: r,
                n_weeks: y.len(),
            }),
            Err(Error::ZeroVariance("first series")) => ranking.skipped.push(term),
            Err(e) => return Err(e),
        }
    }
    ranking
        .scores
        .sort_by(|a, b| b.pearson_r.total_cmp(&a.pearson_r).then(a.term.cmp(&b.term)));
    ranking.skipped.sort_unstable();
    Ok(ranking)
}

pub fn select_terms(ranked: &[TermScore], k: usize) -> Vec<TermId> {
    ranked.iter().take(k).map(|s| s.term).collect()
}

/// Writes the ranking table followed by a blank line and a `skipped` section.
pub fn write_ranking<W: Write>(ranking: &Ranking, names: &[String], mut w: W) -> Result<()> {
    let io = |e| Error::io("<ranking>", e);
    writeln!(w, "term,pearson_r,n_weeks").map_err(io)?;
    for s in &ranking.scores {
        writeln!(w, "{},{:.10},{}", names[s.term as usize], s.pearson_r, s.n_weeks).map_err(io)?;
    }
    writeln!(w, "\nskipped").map_err(io)?;
    for &t in &ranking.skipped {
        writeln!(w, "{}", names[t as usize]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Term names of the ranking table in rank order, ignoring the skipped section.
pub fn read_ranked_names(text: &str) -> Result<Vec<String>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("term,pearson_r,n_weeks") {
        return Err(Error::invalid("missing ranking header"));
    }
    Ok(lines
        .take_while(|l| !l.trim().is_empty())
        .filter_map(|l| l.split(',').next())
        .map(str::to_owned)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn hand_computed_case() {
        // sxy = 3, sxx = 2, syy = 14/3  =>  r = 3 / sqrt(28/3) = 9 / sqrt(84)
        let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 9.0 / 84f64.sqrt()).abs() < 1e-12);
        assert!((r - 0.981_980_506_061_965_7).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson_r(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance(_))));
        assert!(matches!(pearson_r(&[1.0, 3.0], &[2.0, 2.0]), Err(Error::ZeroVariance(_))));
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ranking_orders_and_skips() {
        let ili = IliSeries::new(vec![1.0, 5.0, 9.0, 4.0]).unwrap();
        let rows = vec![
            vec![0.0, 1.0, 9.0, 3.0],
            vec![0.0, 5.0, 1.0, 3.0],
            vec![0.0, 9.0, 4.0, 1.0],
            vec![0.0, 4.0, 0.0, 3.0],
        ];
        let r = rank_terms(&rows, &[10, 11, 12, 13], &ili).unwrap();
        assert_eq!(r.skipped, vec![10]);
        assert_eq!(r.scores[0].term, 11);
        assert_eq!(r.scores[0].pearson_r, 1.0);
        assert_eq!(r.scores.len(), 3);
        assert!(r.scores.windows(2).all(|w| w[0].pearson_r >= w[1].pearson_r));
        assert_eq!(select_terms(&r.scores, 1), vec![11]);
        assert_eq!(select_terms(&r.scores, 10).len(), 3);
    }

    #[test]
    fn ties_break_by_term_id() {
        let ili = IliSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        let rows = vec![vec![2.0, 2.0], vec![4.0, 4.0], vec![6.0, 6.0]];
        let r = rank_terms(&rows, &[7, 3], &ili).unwrap();
        assert_eq!(select_terms(&r.scores, 2), vec![3, 7]);
    }

    #[test]
    fn week_count_mismatch() {
        let ili = IliSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(rank_terms(&[vec![1.0], vec![2.0]], &[0], &ili).is_err());
    }

    #[test]
    fn ranking_file() {
        let r = Ranking {
            scores: vec![TermScore {
                term: 1,
                pearson_r: 0.5,
                n_weeks: 26,
            }],
            skipped: vec![0],
        };
        let mut buf = Vec::new();
        write_ranking(&r, &["a".into(), "b".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "term,pearson_r,n_weeks\nb,0.5000000000,26\n\nskipped\na\n");
        assert_eq!(read_ranked_names(&text).unwrap(), ["b"]);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn series(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, n)
    }

    proptest! {
        #[test]
        fn symmetric((x, y) in (3usize..30).prop_flat_map(|n| (series(n), series(n)))) {
            let a = pearson_r(&x, &y).unwrap();
            let b = pearson_r(&y, &x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn ranking_ignores_positive_rescaling_of_ili(
            cols in proptest::collection::vec(proptest::collection::vec(0u8..20, 8), 1..6),
            ili in proptest::collection::vec(0.0f64..50.0, 8),
            scale in 0.1f64..10.0,
            shift in 0.0f64..10.0,
        ) {
            prop_assume!(ili.iter().any(|&v| (v - ili[0]).abs() > 1e-3));
            let rows: Vec<Vec<f64>> = (0..8).map(|w| cols.iter().map(|c| c[w] as f64).collect()).collect();
            let terms: Vec<TermId> = (0..cols.len() as TermId).collect();
            let a = rank_terms(&rows, &terms, &IliSeries::new(ili.clone()).unwrap()).unwrap();
            let scaled: Vec<f64> = ili.iter().map(|v| v * scale + shift).collect();
            let b = rank_terms(&rows, &terms, &IliSeries::new(scaled).unwrap()).unwrap();
            prop_assert_eq!(&a.skipped, &b.skipped);
            for (sa, sb) in a.scores.iter().zip(&b.scores) {
                prop_assert!((sa.pearson_r - sb.pearson_r).abs() < 1e-9);
            }
            // order may only differ among near-ties
            let order_a: Vec<_> = a.scores.iter().map(|s| s.term).collect();
            let order_b: Vec<_> = b.scores.iter().map(|s| s.term).collect();
            if order_a != order_b {
                let min_gap = a.scores.windows(2).map(|w| w[0].pearson_r - w[1].pearson_r).fold(f64::MAX, f64::min);
                prop_assert!(min_gap < 1e-9);
            }
        }
    }
}
