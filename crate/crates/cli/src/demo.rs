//! The bundled synthetic dataset: a history season with a known ILI series,
//! a live season to monitor, the lexicon, legend labels and a pipeline config.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flutrack::ingest::write_stream;
use flutrack::synth::{generate_corpus, generate_season, SeasonSpec, TermRate};
use flutrack::textnorm::TermLexicon;
use flutrack::DayStamp;

const LEXICON: &str = "\
# base<TAB>variants
γρίπη
γρίπης
κρυολογήματα\tκρυολόγημα
κρύωμα\tκρυώματα
ίωση
ιώσεις
βήχας
βήχα
βήχω
βήχεις
πυρετός\tπυρετό
καφές
καιρός
ποδόσφαιρο
";

const LABELS: &str = "\
γρίπη\tgripi
γρίπης\tgripis
κρυολογήματα\tkryologimata
κρύωμα\tkryoma
ίωση\tiosi
ιώσεις\tioseis
βήχας\tvichas
βήχα\tvicha
βήχω\tvicho
βήχεις\tvicheis
πυρετός\tpyretos
καφές\tkafes
καιρός\tkairos
ποδόσφαιρο\tpodosfairo
";

// (base, slope) per lexicon line; the last three carry no signal
const RATES: [(f64, f64); 14] = [
    (0.6, 0.30),
    (0.3, 0.15),
    (0.2, 0.10),
    (0.3, 0.18),
    (0.4, 0.16),
    (0.3, 0.20),
    (0.5, 0.12),
    (0.4, 0.17),
    (0.2, 0.10),
    (0.2, 0.08),
    (0.5, 0.10),
    (1.0, 0.0),
    (0.8, 0.0),
    (0.8, 0.0),
];

const PIPELINE: &str = r#"# End-to-end run over the synthetic dataset in this directory.
out_dir = "out"
lexicon = "lexicon.tsv"
labels = "labels.tsv"

[history]
stream = "history.jsonl"
ili = "history_ili.csv"
season_start = "2023-10-02"

[live]
stream = "live.jsonl"
season_start = "2024-09-30"

[select]
k = 10

[fit]
chains = 4
seed = 42
initial_iterations = 5000
increment = 5000
max_iterations = 50000
psrf_threshold = 1.1
"#;

fn season(n_weeks: usize, boundaries: [usize; 4], seed: u64) -> SeasonSpec {
    SeasonSpec {
        n_weeks,
        boundaries,
        phase_means: [3.0, 15.0, 38.0, 14.0, 4.0],
        noise_sd: 2.0,
        seed,
    }
}

/// Writes the dataset into `dir` and returns the files written.
pub fn write_bundle(dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let lexicon = TermLexicon::parse(LEXICON, "lexicon.tsv")?;
    let rates: Vec<TermRate> = RATES.iter().map(|&(base, slope)| TermRate { base, slope }).collect();
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
        Ok(())
    };
    put("lexicon.tsv", LEXICON.as_bytes())?;
    put("labels.tsv", LABELS.as_bytes())?;
    put("pipeline.toml", PIPELINE.as_bytes())?;

    let seasons = [
        ("history", season(30, [9, 13, 17, 22], seed), DayStamp::from_ymd(2023, 10, 2)),
        ("live", season(26, [7, 11, 14, 18], seed.wrapping_add(1)), DayStamp::from_ymd(2024, 9, 30)),
    ];
    for (i, (name, spec, start)) in seasons.into_iter().enumerate() {
        let start = start.expect("valid date");
        let (ili, _) = generate_season(&spec)?;
        let mut buf = Vec::new();
        ili.write_csv(&mut buf)?;
        put(&format!("{name}_ili.csv"), &buf)?;
        let corpus = generate_corpus(&ili, start, &lexicon, &rates, seed.wrapping_add(100 + i as u64))?;
        let mut buf = Vec::new();
        write_stream(&corpus.records, &mut buf)?;
        put(&format!("{name}.jsonl"), &buf)?;
    }
    Ok(written)
}
