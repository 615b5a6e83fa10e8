mod demo;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flutrack::featsel::{rank_terms, select_terms, write_ranking};
use flutrack::fluhmm::{fit, FitReport, SamplerConfig};
use flutrack::ingest::{run_ingest, write_stream, ReplaySource};
use flutrack::pipeline::{estimate_daily, run_pipeline, PipelineConfig};
use flutrack::plot::{load_labels, plot_counts, plot_fit};
use flutrack::regress::{fit_ols, read_feature_table, write_feature_table, LinearModel};
use flutrack::series::{read_daily_scores, write_daily_scores};
use flutrack::synth::{generate_corpus, generate_season, SeasonSpec, TermRate};
use flutrack::textnorm::TermLexicon;
use flutrack::{aggregate_weekly, DailyCounters, DayStamp, IliSeries, TermId};

#[derive(Parser)]
#[command(name = "flutrack", version, about = "Influenza surveillance from keyword-filtered tweet streams")]
struct Cli {
    /// Seed for every random choice (sampler chains, synthetic corpora).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Print per-stage summaries.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count lexicon terms per day in a replayed stream.
    Ingest {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank terms by correlation of their weekly counts with an ILI series.
    Select {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        ili: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// First day of week 0 (default: the earliest counted day).
        #[arg(long)]
        season_start: Option<DayStamp>,
        /// Lexicon fixing the term list, so terms never seen are reported as skipped.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Ranking table (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the weekly counts of the selected terms, ready for `train`.
        #[arg(long)]
        features_out: Option<PathBuf>,
    },
    /// Fit the linear model from weekly term counts to ILI.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        ili: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Daily ILI estimates from daily counts.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        from: Option<DayStamp>,
        #[arg(long)]
        to: Option<DayStamp>,
    },
    /// Sum daily estimates into integer weekly scores.
    Aggregate {
        #[arg(long)]
        daily: PathBuf,
        /// First day of week 0 (default: the first estimated day).
        #[arg(long)]
        season_start: Option<DayStamp>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the epidemic-phase model to a weekly series.
    Fit(FitArgs),
    /// Render a phase plot (--fit with --ili) or a keyword count plot (--counts).
    Plot {
        #[arg(long, requires = "ili", conflicts_with = "counts")]
        fit: Option<PathBuf>,
        #[arg(long)]
        ili: Option<PathBuf>,
        #[arg(long, required_unless_present = "fit")]
        counts: Option<PathBuf>,
        /// term<TAB>label legend names for the count plot.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic seasons and corpora.
    Simulate(SimulateArgs),
    /// Run every stage from a TOML config.
    Pipeline {
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    ili: PathBuf,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 5000)]
    initial_iterations: usize,
    #[arg(long, default_value_t = 5000)]
    increment: usize,
    #[arg(long, default_value_t = 50000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1.1)]
    psrf_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Write the complete synthetic dataset with its pipeline config into this directory.
    #[arg(long, conflicts_with_all = ["spec", "out"])]
    demo: Option<PathBuf>,
    /// Season description (TOML: n_weeks, boundaries, phase_means, noise_sd, seed).
    #[arg(long, requires = "out")]
    spec: Option<PathBuf>,
    /// Weekly series output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also generate a tweet corpus for the season over this lexicon.
    #[arg(long, requires_all = ["stream", "season_start"])]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    stream: Option<PathBuf>,
    #[arg(long)]
    season_start: Option<DayStamp>,
    /// Daily base rate of every term.
    #[arg(long, default_value_t = 0.5)]
    base: f64,
    /// Extra daily occurrences per unit of weekly ILI / 7.
    #[arg(long, default_value_t = 0.2)]
    slope: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_target(false)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn run(cli: Cli) -> Result<()> {
    let (seed, verbose) = (cli.seed, cli.verbose);
    match cli.command {
        Command::Ingest { stream, lexicon, out } => {
            (|| -> Result<()> {
                let lexicon = TermLexicon::load(&lexicon)?;
                let mut counters = DailyCounters::new(lexicon.base_terms());
                let s = run_ingest(&mut ReplaySource::open(&stream)?, &lexicon, &mut counters)?;
                counters.save(&out)?;
                log::info!(
                    "{} tweets, {} matched, {} term occurrences, {} duplicates, {} malformed",
                    s.tweets_seen,
                    s.tweets_matched,
                    s.counts_added,
                    s.duplicates,
                    s.malformed
                );
                Ok(())
            })()
            .context("ingest stage failed")
        }
        Command::Select {
            counts,
            ili,
            k,
            season_start,
            lexicon,
            out,
            features_out,
        } => select(counts, ili, k, season_start, lexicon, out, features_out).context("select stage failed"),
        Command::Train { features, ili, out } => (|| -> Result<()> {
            let (terms, rows) = read_feature_table(BufReader::new(
                File::open(&features).with_context(|| format!("cannot open {}", features.display()))?,
            ))?;
            let ili = IliSeries::load(&ili)?;
            let model = fit_ols(terms, &rows, ili.values())?;
            model.save(&out)?;
            log::info!("{} weeks, rss {:.4}", model.training.n_samples, model.training.rss);
            Ok(())
        })()
        .context("train stage failed"),
        Command::Estimate { model, counts, out, from, to } => (|| -> Result<()> {
            let model = LinearModel::load(&model)?;
            let counters = DailyCounters::load(&counts, None)?;
            let from = match from {
                Some(d) => d,
                None => counters.day_span().context("counter file is empty")?.0,
            };
            let daily = estimate_daily(&model, &counters, from, to)?;
            write_daily_scores(&daily, create(&out)?)?;
            log::info!("{} days estimated", daily.len());
            Ok(())
        })()
        .context("estimate stage failed"),
        Command::Aggregate { daily, season_start, out } => (|| -> Result<()> {
            let f = File::open(&daily).with_context(|| format!("cannot open {}", daily.display()))?;
            let scores = read_daily_scores(BufReader::new(f))?;
            let start = match season_start {
                Some(d) => d,
                None => *scores.keys().next().context("no daily scores")?,
            };
            let weekly = aggregate_weekly(&scores, start)?;
            weekly.save(&out)?;
            log::info!("{} weeks from {start}", weekly.len());
            Ok(())
        })()
        .context("aggregate stage failed"),
        Command::Fit(args) => fit_cmd(args, seed).context("fit stage failed"),
        Command::Plot {
            fit,
            ili,
            counts,
            labels,
            title,
            out,
        } => (|| -> Result<()> {
            let svg = if let Some(fit) = fit {
                let report = FitReport::load(&fit)?;
                let series = IliSeries::load(ili.as_deref().context("--ili is required with --fit")?)?;
                plot_fit(&report.phase_probs, &series, title.as_deref().unwrap_or("Epidemic phase posterior"))?
            } else {
                let counters = DailyCounters::load(counts.as_deref().context("--counts or --fit required")?, None)?;
                let labels = match labels {
                    Some(p) => load_labels(&p)?,
                    None => HashMap::new(),
                };
                plot_counts(&counters, &labels, title.as_deref().unwrap_or("Daily keyword counts"))?
            };
            std::fs::write(&out, svg).with_context(|| format!("cannot write {}", out.display()))
        })()
        .context("plot stage failed"),
        Command::Simulate(args) => simulate(args, seed).context("simulate stage failed"),
        Command::Pipeline { config, out_dir } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            let outcome = run_pipeline(&cfg)?;
            if verbose {
                for (stage, line) in &outcome.log {
                    println!("[{stage}] {line}");
                }
            }
            if !outcome.converged {
                log::warn!("sampler did not reach the PSRF threshold; fit.json has converged = false");
            }
            println!("artifacts written to {}", outcome.out_dir.display());
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn select(
    counts: PathBuf,
    ili: PathBuf,
    k: usize,
    season_start: Option<DayStamp>,
    lexicon: Option<PathBuf>,
    out: Option<PathBuf>,
    features_out: Option<PathBuf>,
) -> Result<()> {
    let known = lexicon.map(|p| TermLexicon::load(&p)).transpose()?.map(|l| l.base_terms());
    let counters = DailyCounters::load(&counts, known.as_deref())?;
    let ili = IliSeries::load(&ili)?;
    let start = match season_start.or(ili.season_start) {
        Some(d) => d,
        None => counters.day_span().context("counter file is empty")?.0,
    };
    let all: Vec<TermId> = (0..counters.terms().len() as TermId).collect();
    let weekly = counters.weekly_matrix(&all, start, ili.len())?;
    let ranking = rank_terms(&weekly, &all, &ili)?;
    match out {
        Some(p) => write_ranking(&ranking, counters.terms(), create(&p)?)?,
        None => write_ranking(&ranking, counters.terms(), std::io::stdout().lock())?,
    }
    let chosen = select_terms(&ranking.scores, k);
    log::info!("kept {} of {} terms, {} skipped", chosen.len(), all.len(), ranking.skipped.len());
    if let Some(p) = features_out {
        let names: Vec<String> = chosen.iter().map(|&t| counters.terms()[t as usize].clone()).collect();
        let rows = counters.weekly_matrix(&chosen, start, ili.len())?;
        write_feature_table(&names, &rows, create(&p)?)?;
    }
    Ok(())
}

fn fit_cmd(a: FitArgs, seed: u64) -> Result<()> {
    let series = IliSeries::load(&a.ili)?;
    let cfg = SamplerConfig {
        chains: a.chains,
        initial_iterations: a.initial_iterations,
        increment: a.increment,
        max_iterations: a.max_iterations,
        psrf_threshold: a.psrf_threshold,
        seed,
        ..SamplerConfig::default()
    };
    let result = fit(&series, &cfg)?;
    FitReport::from(&result).save(&a.out)?;
    log::info!(
        "{} after {} iterations per chain, PSRF {:?}",
        if result.converged { "converged" } else { "not converged" },
        result.total_iterations,
        result.psrf
    );
    if !result.converged {
        log::warn!("PSRF threshold not reached within {} iterations", a.max_iterations);
    }
    Ok(())
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    if let Some(dir) = a.demo {
        for p in demo::write_bundle(&dir, seed)? {
            log::info!("wrote {}", p.display());
        }
        return Ok(());
    }
    let (Some(spec), Some(out)) = (a.spec, a.out) else {
        bail!("give either --demo DIR or --spec FILE --out FILE");
    };
    let spec = SeasonSpec::load(&spec)?;
    let (ili, path) = generate_season(&spec)?;
    let ili = match a.season_start {
        Some(d) => ili.with_season_start(d),
        None => ili,
    };
    ili.save(&out)?;
    log::info!("phases: {path:?}");
    if let (Some(lexicon), Some(stream), Some(start)) = (a.lexicon, a.stream, a.season_start) {
        let lexicon = TermLexicon::load(&lexicon)?;
        let rates = vec![TermRate { base: a.base, slope: a.slope }; lexicon.len()];
        let corpus = generate_corpus(&ili, start, &lexicon, &rates, seed)?;
        let mut w = create(&stream)?;
        write_stream(&corpus.records, &mut w)?;
        w.flush()?;
        log::info!("{} tweets", corpus.records.len());
    }
    Ok(())
}
