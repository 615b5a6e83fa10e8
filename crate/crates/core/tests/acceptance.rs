//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flutrack::featsel::pearson_r;
use flutrack::fluhmm::{
    ffbs_sample, fit, forward_backward_exact, gelman_rubin, PhaseModel, SamplerConfig, N_PHASES,
};
use flutrack::ingest::{counters_to_features, run_ingest, write_stream, ReplaySource};
use flutrack::pipeline::{run_pipeline, PipelineConfig};
use flutrack::regress::fit_ols;
use flutrack::synth::{generate_corpus, generate_season, SeasonSpec, TermRate};
use flutrack::textnorm::TermLexicon;
use flutrack::{DailyCounters, DayStamp, IliSeries, TermId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("exact forward-backward vs enumeration", c1_exact_inference),
        ("FFBS marginals vs exact", c2_ffbs),
        ("growth onset on synthetic seasons", c3_phase_timing),
        ("OLS recovery and residual orthogonality", c4_regression),
        ("Pearson formula and affine equivariance", c5_pearson),
        ("PSRF on twin and disjoint chains", c6_psrf),
        ("corpus -> ingest -> features round trip", c7_round_trip),
        ("golden pipeline run", c8_golden_run),
        ("ingest throughput", c9_throughput),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail}; {secs:.2} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({detail}; {secs:.2} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("{what} took {:.2} s, limit {} s", t.as_secs_f64(), limit.as_secs()))
    } else {
        Ok(())
    }
}

fn random_model(rng: &mut ChaCha8Rng) -> PhaseModel {
    let mut mu = [0.0; N_PHASES];
    mu[2] = rng.random_range(10.0..40.0);
    mu[1] = mu[2] - rng.random_range(0.0..15.0);
    mu[0] = mu[1] - rng.random_range(0.0..10.0);
    mu[3] = mu[2] - rng.random_range(0.0..15.0);
    mu[4] = mu[3] - rng.random_range(0.0..10.0);
    let sigma = std::array::from_fn(|_| rng.random_range(0.5..8.0));
    let advance = std::array::from_fn(|_| rng.random_range(0.02..0.98));
    PhaseModel::new(mu, sigma, advance).expect("valid random model")
}

fn monotone_paths(t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize];
    fn grow(cur: &mut Vec<usize>, t: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == t {
            out.push(cur.clone());
            return;
        }
        let last = *cur.last().unwrap();
        for next in [last, last + 1] {
            if next < N_PHASES {
                cur.push(next);
                grow(cur, t, out);
                cur.pop();
            }
        }
    }
    grow(&mut cur, t, &mut out);
    out
}

/// Marginals by summing the joint density of every admissible path.
fn enumerate_marginals(y: &[f64], m: &PhaseModel) -> Vec<[f64; N_PHASES]> {
    let log_joint = |path: &[usize]| {
        let mut lp = 0.0;
        for (t, &k) in path.iter().enumerate() {
            let z = (y[t] - m.mu[k]) / m.sigma[k];
            lp += -0.5 * z * z - m.sigma[k].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            if t > 0 {
                lp += m.transition(path[t - 1], k).ln();
            }
        }
        lp
    };
    let paths = monotone_paths(y.len());
    let lps: Vec<f64> = paths.iter().map(|p| log_joint(p)).collect();
    let top = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lps.iter().map(|lp| (lp - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut marg = vec![[0.0; N_PHASES]; y.len()];
    for (p, wi) in paths.iter().zip(&w) {
        for (t, &k) in p.iter().enumerate() {
            marg[t][k] += wi / total;
        }
    }
    marg
}

fn c1_exact_inference() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for t in 3..=8 {
        for _ in 0..50 {
            let m = random_model(&mut rng);
            let y: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..45.0)).collect();
            let exact = forward_backward_exact(&y, &m);
            let brute = enumerate_marginals(&y, &m);
            for (a, b) in exact.iter().zip(&brute) {
                for k in 0..N_PHASES {
                    worst = worst.max((a[k] - b[k]).abs());
                }
            }
            cases += 1;
        }
    }
    within(start, Duration::from_secs(5), "enumeration check")?;
    if worst < 1e-10 {
        Ok(format!("{cases} cases, max error {worst:.1e}"))
    } else {
        Err(format!("max error {worst:.3e}"))
    }
}

fn c2_ffbs() -> Outcome {
    let start = Instant::now();
    let m = PhaseModel::new([2.0, 12.0, 30.0, 14.0, 3.0], [2.0, 4.0, 5.0, 4.0, 2.0], [0.3, 0.45, 0.4, 0.35]).unwrap();
    let y = [1.0, 3.0, 7.0, 14.0, 22.0, 31.0, 27.0, 15.0, 8.0, 3.0];
    let exact = forward_backward_exact(&y, &m);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let draws = 100_000;
    let mut counts = vec![[0u32; N_PHASES]; y.len()];
    for _ in 0..draws {
        for (t, &k) in ffbs_sample(&y, &m, &mut rng).iter().enumerate() {
            counts[t][k as usize] += 1;
        }
    }
    let mut worst = 0.0f64;
    for (c, e) in counts.iter().zip(&exact) {
        for k in 0..N_PHASES {
            worst = worst.max((c[k] as f64 / draws as f64 - e[k]).abs());
        }
    }
    within(start, Duration::from_secs(30), "100k FFBS draws")?;
    if worst < 0.01 {
        Ok(format!("max cell deviation {worst:.4}"))
    } else {
        Err(format!("max cell deviation {worst:.4}"))
    }
}

fn c3_phase_timing() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut converged = 0;
    let mut misses = Vec::new();
    for s in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + s);
        let b0 = rng.random_range(5..=9);
        let b1 = b0 + rng.random_range(3..=5);
        let b2 = b1 + rng.random_range(3..=5);
        let b3 = b2 + rng.random_range(3..=5);
        let spec = SeasonSpec {
            n_weeks: 26,
            boundaries: [b0, b1, b2, b3],
            phase_means: [2.0, 15.0, 40.0, 15.0, 2.0],
            noise_sd: 2.0,
            seed: 7000 + s,
        };
        let (series, _) = generate_season(&spec).map_err(|e| e.to_string())?;
        let cfg = SamplerConfig {
            seed: 42 + s,
            ..SamplerConfig::default()
        };
        let result = fit(&series, &cfg).map_err(|e| e.to_string())?;
        if result.converged && result.total_iterations <= 50_000 {
            converged += 1;
        }
        match result.map_onset(1) {
            Some(w) if w.abs_diff(b0) <= 1 => hits += 1,
            other => misses.push(format!("season {s}: truth {b0}, fitted {other:?}")),
        }
    }
    within(start, Duration::from_secs(300), "20 fits")?;
    let detail = format!("{hits}/20 onsets within 1 week, {converged}/20 converged");
    if hits >= 18 && converged == 20 {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", misses.join(", ")))
    }
}

fn c4_regression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (n, p) = (120, 10);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
    let intercept = 3.25;
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(0.0..100.0)).collect()).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|row| intercept + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let names: Vec<String> = (0..p).map(|j| format!("t{j}")).collect();
    let m = fit_ols(names.clone(), &x, &y).map_err(|e| e.to_string())?;
    let mut worst = ((m.intercept - intercept) / intercept).abs();
    for (b, t) in m.coefficients.iter().zip(&beta) {
        worst = worst.max(((b - t) / t).abs());
    }
    if worst >= 1e-8 {
        return Err(format!("relative coefficient error {worst:.3e}"));
    }

    // orthogonality is only informative when the residual is not ~0
    let y_noisy: Vec<f64> = y.iter().map(|v| v + 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let m = fit_ols(names, &x, &y_noisy).map_err(|e| e.to_string())?;
    let resid: Vec<f64> = x.iter().zip(&y_noisy).map(|(row, v)| v - m.response(row).unwrap()).collect();
    let rnorm = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
    let mut ortho = (resid.iter().sum::<f64>() / ((n as f64).sqrt() * rnorm)).abs();
    for j in 0..p {
        let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let cn = col.iter().map(|c| c * c).sum::<f64>().sqrt();
        let dot: f64 = col.iter().zip(&resid).map(|(c, r)| c * r).sum();
        ortho = ortho.max((dot / (cn * rnorm)).abs());
    }
    if ortho < 1e-8 {
        Ok(format!("coefficient error {worst:.1e}, residual cosine {ortho:.1e}"))
    } else {
        Err(format!("residual cosine {ortho:.3e}"))
    }
}

fn c5_pearson() -> Outcome {
    let x = [1.0, 2.0, 3.0];
    let checks = [
        (pearson_r(&x, &[1.0, 2.0, 3.0]).unwrap(), 1.0),
        (pearson_r(&x, &[3.0, 2.0, 1.0]).unwrap(), -1.0),
        (pearson_r(&x, &[1.0, 2.0, 4.0]).unwrap(), 9.0 / 84f64.sqrt()),
    ];
    for (got, want) in checks {
        if (got - want).abs() >= 1e-12 {
            return Err(format!("r = {got}, expected {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(3..60);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let (s1, s2) = (rng.random_range(0.01..100.0), rng.random_range(0.01..100.0));
        let (sign1, sign2) = (if rng.random_bool(0.5) { -1.0 } else { 1.0 }, if rng.random_bool(0.5) { -1.0 } else { 1.0 });
        let (o1, o2) = (rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
        let r = pearson_r(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|v| sign1 * s1 * v + o1).collect();
        let b2: Vec<f64> = b.iter().map(|v| sign2 * s2 * v + o2).collect();
        let r2 = pearson_r(&a2, &b2).unwrap();
        worst = worst.max((r2 - sign1 * sign2 * r).abs());
    }
    if worst < 1e-10 {
        Ok(format!("formula checks to 1e-12, 1000 affine cases max deviation {worst:.1e}"))
    } else {
        Err(format!("affine deviation {worst:.3e}"))
    }
}

fn c6_psrf() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let a: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
    let twins = gelman_rubin(&[&a, &b]).map_err(|e| e.to_string())?;
    let c: Vec<f64> = (0..5000).map(|_| rng.random_range(0.0..1.0)).collect();
    let d: Vec<f64> = (0..5000).map(|_| rng.random_range(10.0..11.0)).collect();
    let disjoint = gelman_rubin(&[&c, &d]).map_err(|e| e.to_string())?;
    let detail = format!("twins {twins:.4}, disjoint {disjoint:.2}");
    if twins < 1.05 && disjoint > 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn greek_lexicon() -> TermLexicon {
    TermLexicon::parse(
        "γρίπη\nγρίπης\nκρύωμα\tκρυώματα\nίωση\nιώσεις\nβήχας\nβήχα\nπυρετός\tπυρετό\nπονόλαιμος\nκαφές\n",
        "acceptance",
    )
    .unwrap()
}

fn c7_round_trip() -> Outcome {
    let lex = greek_lexicon();
    if lex.len() != 10 {
        return Err(format!("lexicon has {} terms", lex.len()));
    }
    let start_day = DayStamp::from_ymd(2024, 10, 7).unwrap();
    let season = IliSeries::new(vec![3.0, 9.0, 25.0, 40.0, 18.0]).unwrap();
    let rates: Vec<TermRate> = (0..10)
        .map(|i| TermRate {
            base: 0.5 + i as f64,
            slope: if i < 7 { 1.5 } else { 0.0 },
        })
        .collect();
    let corpus = generate_corpus(&season, start_day, &lex, &rates, 77).map_err(|e| e.to_string())?;
    let last = start_day.plus_days(29);
    let kept: Vec<_> = corpus.records.iter().filter(|r| r.day() <= last).cloned().collect();

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("stream.jsonl");
    write_stream(&kept, std::io::BufWriter::new(std::fs::File::create(&path).unwrap())).map_err(|e| e.to_string())?;
    let mut counters = DailyCounters::new(lex.base_terms());
    let summary = run_ingest(&mut ReplaySource::open(&path).unwrap(), &lex, &mut counters).map_err(|e| e.to_string())?;

    let terms: Vec<TermId> = (0..10).collect();
    let got = counters_to_features(&counters, &terms, start_day, last).map_err(|e| e.to_string())?;
    let want = counters_to_features(&corpus.planted, &terms, start_day, last).map_err(|e| e.to_string())?;
    let total: u64 = want.iter().flatten().sum();
    if got == want && summary.counts_added == total {
        Ok(format!("30 days x 10 terms, {total} occurrences identical"))
    } else {
        Err(format!("ingested {} occurrences, planted {total}", summary.counts_added))
    }
}

fn bundled_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic/pipeline.toml")
}

fn c8_golden_run() -> Outcome {
    let cfg_path = bundled_config();
    let mut outputs = Vec::new();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut cfg = PipelineConfig::load(&cfg_path).map_err(|e| e.to_string())?;
        cfg.out_dir = d.path().to_path_buf();
        let outcome = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        outputs.push(outcome.artifacts);
    }
    let required = ["counters.csv", "model.json", "daily_scores.csv", "weekly.csv", "fit.json", "plot.svg"];
    for name in required {
        if !outputs[0].iter().any(|p| p.file_name().is_some_and(|f| f == name)) {
            return Err(format!("missing artifact {name}"));
        }
    }
    for (a, b) in outputs[0].iter().zip(&outputs[1]) {
        if std::fs::read(a).unwrap() != std::fs::read(b).unwrap() {
            return Err(format!("{} differs between runs", a.display()));
        }
    }
    let svg = std::fs::read_to_string(dirs[0].path().join("plot.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).map_err(|e| format!("plot.svg is not XML: {e}"))?;
    let weekly = IliSeries::load(&dirs[0].path().join("weekly.csv")).map_err(|e| e.to_string())?;
    let class_is = |n: &roxmltree::Node, c: &str| n.attribute("class") == Some(c);
    let bars = doc.descendants().filter(|n| class_is(n, "phase-bar")).count();
    let mut stacks = 0;
    for g in doc.descendants().filter(|n| class_is(n, "stack")) {
        let sum: u32 = g
            .children()
            .filter(|n| class_is(n, "pct"))
            .map(|n| n.text().unwrap_or("x").parse::<u32>().unwrap_or(1000))
            .sum();
        if sum != 100 {
            return Err(format!("stack for week {:?} sums to {sum}", g.attribute("data-week")));
        }
        stacks += 1;
    }
    if bars != weekly.len() || stacks != weekly.len() {
        return Err(format!("{bars} bars and {stacks} stacks for {} weeks", weekly.len()));
    }
    Ok(format!("{} artifacts identical across runs, {stacks} stacks sum to 100", outputs[0].len()))
}

fn c9_throughput() -> Outcome {
    let lex = greek_lexicon();
    let start_day = DayStamp::from_ymd(2018, 8, 23).unwrap();
    let season = IliSeries::new(vec![10.0, 20.0, 30.0]).unwrap();
    let rates: Vec<TermRate> = (0..lex.len()).map(|_| TermRate { base: 1000.0, slope: 50.0 }).collect();
    let corpus = generate_corpus(&season, start_day, &lex, &rates, 9).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("stream.jsonl");
    write_stream(&corpus.records, std::io::BufWriter::new(std::fs::File::create(&path).unwrap()))
        .map_err(|e| e.to_string())?;

    let start = Instant::now();
    let mut counters = DailyCounters::new(lex.base_terms());
    let summary = run_ingest(&mut ReplaySource::open(&path).unwrap(), &lex, &mut counters).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let rate = summary.tweets_seen as f64 / secs;
    let (first, last) = counters.day_span().unwrap();
    let detail = format!(
        "{} records over {} days ({first} to {last}) at {rate:.0} records/s",
        summary.tweets_seen,
        last.days_since(first) + 1
    );
    if rate >= 10_000.0 && summary.tweets_matched == summary.tweets_seen {
        Ok(detail)
    } else {
        Err(detail)
    }
}
