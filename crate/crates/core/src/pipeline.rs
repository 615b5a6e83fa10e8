//! End-to-end run driven by a TOML config file.
//!
//! Stages run in a fixed order, each writing one artifact into `out_dir`:
//!
//! | stage     | artifact                                         |
//! |-----------|--------------------------------------------------|
//! | ingest    | `history_counters.csv`, `counters.csv`           |
//! | select    | `ranking.csv`                                    |
//! | train     | `features.csv`, `model.json`                     |
//! | estimate  | `daily_scores.csv`                               |
//! | aggregate | `weekly.csv`                                     |
//! | fit       | `fit.json`                                       |
//! | plot      | `plot.svg`, `counts.svg`                         |
//!
//! Relative paths in the config resolve against the config file's directory.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::featsel::{rank_terms, select_terms, write_ranking};
use crate::fluhmm::{fit, FitReport, Priors, SamplerConfig};
use crate::ingest::{IngestSession, IngestSummary, ReplaySource};
use crate::plot::{load_labels, plot_counts, plot_fit};
use crate::regress::{fit_ols, write_feature_table, LinearModel};
use crate::series::{aggregate_weekly, write_daily_scores, DailyCounters, DayStamp, IliSeries, TermId};
use crate::textnorm::TermLexicon;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub lexicon: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub history: HistoryConfig,
    pub live: LiveConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryConfig {
    pub stream: PathBuf,
    pub ili: PathBuf,
    pub season_start: DayStamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveConfig {
    pub stream: PathBuf,
    pub season_start: DayStamp,
    /// Last day to estimate; defaults to the last day with any count.
    #[serde(default)]
    pub end: Option<DayStamp>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub k: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig { k: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub chains: usize,
    pub seed: u64,
    pub initial_iterations: usize,
    pub increment: usize,
    pub max_iterations: usize,
    pub psrf_threshold: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let d = SamplerConfig::default();
        FitConfig {
            chains: d.chains,
            seed: d.seed,
            initial_iterations: d.initial_iterations,
            increment: d.increment,
            max_iterations: d.max_iterations,
            psrf_threshold: d.psrf_threshold,
        }
    }
}

impl FitConfig {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            initial_iterations: self.initial_iterations,
            increment: self.increment,
            max_iterations: self.max_iterations,
            psrf_threshold: self.psrf_threshold,
            seed: self.seed,
            priors: Priors::default(),
            ..SamplerConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Select,
    Train,
    Estimate,
    Aggregate,
    Fit,
    Plot,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Estimate => "estimate",
            Stage::Aggregate => "aggregate",
            Stage::Fit => "fit",
            Stage::Plot => "plot",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> AtStage<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    /// One human-readable line per stage.
    pub log: Vec<(Stage, String)>,
    pub artifacts: Vec<PathBuf>,
    pub converged: bool,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e)).at(Stage::Config)?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::Parse {
                path: path.into(),
                line: 0,
                msg: e.to_string(),
            })
            .at(Stage::Config)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.lexicon);
        if let Some(l) = self.labels.as_mut() {
            fix(l);
        }
        fix(&mut self.history.stream);
        fix(&mut self.history.ili);
        fix(&mut self.live.stream);
    }
}

fn ingest_file(path: &Path, lexicon: &TermLexicon) -> crate::error::Result<(DailyCounters, IngestSummary)> {
    let mut session = IngestSession::new(lexicon);
    let summary = session.ingest(&mut ReplaySource::open(path)?)?;
    Ok((session.into_counters(), summary))
}

fn summary_line(name: &str, s: &IngestSummary) -> String {
    format!(
        "{name}: {} tweets, {} matched, {} term occurrences, {} duplicates, {} malformed",
        s.tweets_seen, s.tweets_matched, s.counts_added, s.duplicates, s.malformed
    )
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)).at(Stage::Config)?;
    let mut log = Vec::new();
    let mut artifacts = Vec::new();
    let mut save = |name: &str| {
        let p = out.join(name);
        artifacts.push(p.clone());
        p
    };

    // ingest
    let lexicon = TermLexicon::load(&cfg.lexicon).at(Stage::Ingest)?;
    let (history, hs) = ingest_file(&cfg.history.stream, &lexicon).at(Stage::Ingest)?;
    let (live, ls) = ingest_file(&cfg.live.stream, &lexicon).at(Stage::Ingest)?;
    history.save(&save("history_counters.csv")).at(Stage::Ingest)?;
    live.save(&save("counters.csv")).at(Stage::Ingest)?;
    log.push((Stage::Ingest, format!("{}; {}", summary_line("history", &hs), summary_line("live", &ls))));

    // select
    let ili = IliSeries::load(&cfg.history.ili).at(Stage::Select)?;
    let all_terms: Vec<TermId> = (0..lexicon.len() as TermId).collect();
    let weekly = history
        .weekly_matrix(&all_terms, cfg.history.season_start, ili.len())
        .at(Stage::Select)?;
    let ranking = rank_terms(&weekly, &all_terms, &ili).at(Stage::Select)?;
    let selected = select_terms(&ranking.scores, cfg.select.k);
    if selected.is_empty() {
        return Err(PipelineError {
            stage: Stage::Select,
            source: Error::invalid("no term has varying weekly counts"),
        });
    }
    let names = lexicon.base_terms();
    let f = std::fs::File::create(save("ranking.csv")).map_err(|e| Error::io(out, e)).at(Stage::Select)?;
    write_ranking(&ranking, &names, std::io::BufWriter::new(f)).at(Stage::Select)?;
    log.push((
        Stage::Select,
        format!(
            "kept {} of {} terms (r from {:.3} to {:.3}), {} skipped",
            selected.len(),
            lexicon.len(),
            ranking.scores[selected.len() - 1].pearson_r,
            ranking.scores[0].pearson_r,
            ranking.skipped.len()
        ),
    ));

    // train
    let selected_names: Vec<String> = selected.iter().map(|&t| names[t as usize].clone()).collect();
    let features = history
        .weekly_matrix(&selected, cfg.history.season_start, ili.len())
        .at(Stage::Train)?;
    let f = std::fs::File::create(save("features.csv")).map_err(|e| Error::io(out, e)).at(Stage::Train)?;
    write_feature_table(&selected_names, &features, std::io::BufWriter::new(f)).at(Stage::Train)?;
    let model = fit_ols(selected_names, &features, ili.values()).at(Stage::Train)?;
    model.save(&save("model.json")).at(Stage::Train)?;
    log.push((
        Stage::Train,
        format!("{} weeks, intercept {:.3}, rss {:.3}", model.training.n_samples, model.intercept, model.training.rss),
    ));

    // estimate
    let daily = estimate_daily(&model, &live, cfg.live.season_start, cfg.live.end).at(Stage::Estimate)?;
    let f = std::fs::File::create(save("daily_scores.csv")).map_err(|e| Error::io(out, e)).at(Stage::Estimate)?;
    write_daily_scores(&daily, std::io::BufWriter::new(f)).at(Stage::Estimate)?;
    log.push((Stage::Estimate, format!("{} days estimated", daily.len())));

    // aggregate
    let weekly_scores = aggregate_weekly(&daily, cfg.live.season_start).at(Stage::Aggregate)?;
    weekly_scores.save(&save("weekly.csv")).at(Stage::Aggregate)?;
    log.push((Stage::Aggregate, format!("{} weeks", weekly_scores.len())));

    // fit
    let sampler = cfg.fit.sampler();
    let result = fit(&weekly_scores, &sampler).at(Stage::Fit)?;
    let report = FitReport::from(&result);
    report.save(&save("fit.json")).at(Stage::Fit)?;
    log.push((
        Stage::Fit,
        format!(
            "{} after {} iterations per chain, psrf {:?}",
            if result.converged { "converged" } else { "NOT converged" },
            result.total_iterations,
            result.psrf.map(|r| (r * 1000.0).round() / 1000.0)
        ),
    ));

    // plot
    let labels: HashMap<String, String> = match &cfg.labels {
        Some(p) => load_labels(p).at(Stage::Plot)?,
        None => HashMap::new(),
    };
    let svg = plot_fit(&report.phase_probs, &weekly_scores, "Epidemic phase posterior, estimated weekly ILI score")
        .at(Stage::Plot)?;
    let p = save("plot.svg");
    std::fs::write(&p, svg).map_err(|e| Error::io(&p, e)).at(Stage::Plot)?;
    let svg = plot_counts(&live, &labels, "Daily keyword counts").at(Stage::Plot)?;
    let p = save("counts.svg");
    std::fs::write(&p, svg).map_err(|e| Error::io(&p, e)).at(Stage::Plot)?;
    log.push((Stage::Plot, "plot.svg, counts.svg".into()));

    Ok(PipelineOutcome {
        out_dir: out.clone(),
        log,
        artifacts,
        converged: result.converged,
    })
}

/// Daily estimated scores from `from` through `to` (or the last counted day).
pub fn estimate_daily(
    model: &LinearModel,
    counters: &DailyCounters,
    from: DayStamp,
    to: Option<DayStamp>,
) -> crate::error::Result<BTreeMap<DayStamp, f64>> {
    let ids = model
        .terms
        .iter()
        .map(|t| {
            counters
                .term_id(t)
                .ok_or_else(|| Error::invalid(format!("model term {t:?} is not in the counters")))
        })
        .collect::<crate::error::Result<Vec<TermId>>>()?;
    let to = match to {
        Some(d) => d,
        None => counters
            .day_span()
            .map(|(_, last)| last)
            .ok_or_else(|| Error::invalid("no counts to estimate from"))?,
    };
    if to < from {
        return Err(Error::BadRange { from, to });
    }
    from.through(to)
        .map(|day| {
            let x: Vec<f64> = ids.iter().map(|&t| counters.get(day, t) as f64).collect();
            Ok((day, model.predict_daily(&x)?))
        })
        .collect()
}
