//! SVG rendering of phase fits and daily keyword counts.
//!
//! The phase plot puts a bar in the colour of each week's most probable
//! phase across the top, under it a column of the five phase percentages,
//! and the weekly score curve below.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fluhmm::{Phase, N_PHASES};
use crate::series::{DailyCounters, IliSeries};

pub const PHASE_COLORS: [&str; N_PHASES] = ["#1f77b4", "#ff7f0e", "#d62728", "#9467bd", "#2ca02c"];

/// Integer percentages that sum to exactly 100, by largest remainder.
/// Ties in the remainder go to the earlier phase.
pub fn percent_stack(probs: &[f64; N_PHASES]) -> [u32; N_PHASES] {
    let total: f64 = probs.iter().sum();
    let scaled: Vec<f64> = probs.iter().map(|p| 100.0 * p / total).collect();
    let mut out = [0u32; N_PHASES];
    for (o, s) in out.iter_mut().zip(&scaled) {
        *o = s.floor() as u32;
    }
    let missing = 100 - out.iter().sum::<u32>().min(100);
    let mut order: Vec<usize> = (0..N_PHASES).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(missing as usize) {
        out[k] += 1;
    }
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn most_probable(row: &[f64; N_PHASES]) -> usize {
    (0..N_PHASES).fold(0, |best, k| if row[k] > row[best] { k } else { best })
}

const COL_W: f64 = 34.0;
const LEFT: f64 = 70.0;
const BAR_TOP: f64 = 40.0;
const BAR_H: f64 = 14.0;
const LINE_H: f64 = 13.0;

/// Phase plot for a fitted season. `phase_probs` must have one row per week of `series`.
pub fn plot_fit(phase_probs: &[[f64; N_PHASES]], series: &IliSeries, title: &str) -> Result<String> {
    if phase_probs.len() != series.len() {
        return Err(Error::LengthMismatch {
            expected: series.len(),
            actual: phase_probs.len(),
        });
    }
    let weeks = series.len();
    let stack_top = BAR_TOP + BAR_H + 14.0;
    let chart_top = stack_top + N_PHASES as f64 * LINE_H + 16.0;
    let chart_h = 220.0;
    let chart_bottom = chart_top + chart_h;
    let width = LEFT + COL_W * weeks.max(1) as f64 + 170.0;
    let height = chart_bottom + 50.0;
    let ymax = series.values().iter().copied().fold(0.0, f64::max).max(1.0) * 1.1;
    let x_of = |w: usize| LEFT + COL_W * (w as f64 + 0.5);
    let y_of = |v: f64| chart_bottom - chart_h * v / ymax;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="22" font-size="15">{}</text>"#, esc(title));

    let _ = writeln!(s, r#"<g class="phase-bars">"#);
    for (w, row) in phase_probs.iter().enumerate() {
        let k = most_probable(row);
        let _ = writeln!(
            s,
            r#"<rect class="phase-bar" data-week="{}" data-phase="{}" x="{:.1}" y="{BAR_TOP}" width="{:.1}" height="{BAR_H}" fill="{}"/>"#,
            w + 1,
            k + 1,
            LEFT + COL_W * w as f64 + 1.0,
            COL_W - 2.0,
            PHASE_COLORS[k]
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="stacks" font-size="10" text-anchor="middle">"#);
    for (w, row) in phase_probs.iter().enumerate() {
        let pct = percent_stack(row);
        let _ = writeln!(s, r#"<g class="stack" data-week="{}">"#, w + 1);
        for (k, p) in pct.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text class="pct" data-phase="{}" x="{:.1}" y="{:.1}" fill="{}">{p}</text>"#,
                k + 1,
                x_of(w),
                stack_top + LINE_H * (k as f64 + 0.8),
                PHASE_COLORS[k]
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</g>");

    // axes and gridlines
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{chart_bottom}" x2="{:.1}" y2="{chart_bottom}"/><line x1="{LEFT}" y1="{chart_top}" x2="{LEFT}" y2="{chart_bottom}"/></g>"#,
        LEFT + COL_W * weeks as f64
    );
    let _ = writeln!(s, r#"<g class="y-ticks" font-size="10" text-anchor="end">"#);
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}">{:.0}</text><line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            LEFT - 6.0,
            y_of(v) + 3.0,
            v,
            y_of(v),
            LEFT + COL_W * weeks as f64,
            y_of(v)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="x-ticks" font-size="10" text-anchor="middle">"#);
    for w in 0..weeks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x_of(w), chart_bottom + 14.0, w + 1);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">week</text>"#,
        LEFT + COL_W * weeks as f64 / 2.0,
        chart_bottom + 32.0
    );

    let points: Vec<String> = series
        .values()
        .iter()
        .enumerate()
        .map(|(w, &v)| format!("{:.1},{:.1}", x_of(w), y_of(v)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline class="score" fill="none" stroke="black" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    );
    for (w, &v) in series.values().iter().enumerate() {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="black"/>"#, x_of(w), y_of(v));
    }

    let lx = LEFT + COL_W * weeks as f64 + 20.0;
    let _ = writeln!(s, r#"<g class="legend" font-size="11">"#);
    for p in Phase::ALL {
        let y = chart_top + 18.0 * p.index() as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            PHASE_COLORS[p.index()],
            lx + 18.0,
            y + 10.0,
            p.name()
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

const SERIES_COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Daily count lines, one per term, over the counters' day span. Terms
/// found in `labels` are shown under that label (e.g. a Latin
/// transliteration).
pub fn plot_counts(counters: &DailyCounters, labels: &HashMap<String, String>, title: &str) -> Result<String> {
    let (first, last) = counters
        .day_span()
        .ok_or_else(|| Error::invalid("no counts to plot"))?;
    let days: Vec<_> = first.through(last).collect();
    let terms: Vec<usize> = (0..counters.terms().len())
        .filter(|&t| counters.iter().any(|(_, id, _)| id as usize == t))
        .collect();
    let day_w = 24.0;
    let chart_top = 40.0;
    let chart_h = 260.0;
    let chart_bottom = chart_top + chart_h;
    let width = LEFT + day_w * days.len() as f64 + 190.0;
    let height = chart_bottom + 80.0;
    let ymax = days
        .iter()
        .flat_map(|&d| terms.iter().map(move |&t| (d, t)))
        .map(|(d, t)| counters.get(d, t as u32))
        .max()
        .unwrap_or(1)
        .max(1) as f64
        * 1.1;
    let x_of = |i: usize| LEFT + day_w * (i as f64 + 0.5);
    let y_of = |v: f64| chart_bottom - chart_h * v / ymax;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="22" font-size="15">{}</text>"#, esc(title));
    let _ = writeln!(
        s,
        r#"<g stroke="black"><line x1="{LEFT}" y1="{chart_bottom}" x2="{:.1}" y2="{chart_bottom}"/><line x1="{LEFT}" y1="{chart_top}" x2="{LEFT}" y2="{chart_bottom}"/></g>"#,
        LEFT + day_w * days.len() as f64
    );
    let _ = writeln!(s, r#"<g font-size="9" text-anchor="end">"#);
    for (i, d) in days.iter().enumerate() {
        let (x, y) = (x_of(i), chart_bottom + 10.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" transform="rotate(-60 {x:.1} {y:.1})">{}</text>"#,
            d.date().format("%m-%d")
        );
    }
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{v:.0}</text>"#, LEFT - 6.0, y_of(v) + 3.0);
    }
    let _ = writeln!(s, "</g>");

    let lx = LEFT + day_w * days.len() as f64 + 20.0;
    for (n, &t) in terms.iter().enumerate() {
        let color = SERIES_COLORS[n % SERIES_COLORS.len()];
        let name = &counters.terms()[t];
        let label = labels.get(name).unwrap_or(name);
        let pts: Vec<String> = days
            .iter()
            .enumerate()
            .map(|(i, &d)| format!("{:.1},{:.1}", x_of(i), y_of(counters.get(d, t as u32) as f64)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="term" data-term="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            esc(label),
            pts.join(" ")
        );
        let y = chart_top + 16.0 * n as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="12" height="3" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            lx + 18.0,
            y + 5.0,
            esc(label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Term label map: `term<TAB>label` per line, `#` comments allowed.
pub fn parse_labels(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(t, l)| (crate::textnorm::normalize(t.trim()), l.trim().to_owned()))
        .collect()
}

pub fn load_labels(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_labels(&text))
}
