//! Greek-aware normalization, tokenization and keyword matching.
//!
//! Case and accent variants of a keyword collapse under [`normalize`];
//! declensions and conjugations have to be listed in the lexicon file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::series::TermId;

/// Lowercase, canonically decompose, drop combining marks and map final
/// sigma to medial sigma.
///
/// ```
/// assert_eq!(flutrack::textnorm::normalize("ΓΡΊΠΗ"), "γριπη");
/// assert_eq!(flutrack::textnorm::normalize("ιώσεις"), "ιωσεισ");
/// ```
pub fn normalize(raw: &str) -> String {
    raw.to_lowercase()
        .nfd()
        .filter(|&c| !is_combining_mark(c))
        .map(|c| if c == 'ς' { 'σ' } else { c })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn tokenize(text: &str) -> TokenizedText {
    let normalized = normalize(text);
    let tokens = normalized
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    TokenizedText { tokens }
}

pub fn remove_stopwords(tokens: TokenizedText, stopwords: &HashSet<String>) -> TokenizedText {
    TokenizedText {
        tokens: tokens
            .tokens
            .into_iter()
            .filter(|t| !stopwords.contains(t))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub id: TermId,
    pub base: String,
    /// Always contains `base`.
    pub variants: Vec<String>,
}

/// Monitored keywords with their morphological variants, all stored in
/// normalized form. Ids are dense from 0 in file order.
#[derive(Debug, Clone)]
pub struct TermLexicon {
    entries: Vec<LexiconEntry>,
    index: HashMap<String, TermId>,
    pub source_tag: String,
}

impl TermLexicon {
    /// Builds a lexicon from `(base, variants)` pairs. Every form is
    /// normalized; a form claimed by two different entries is an error.
    pub fn new<I, S>(entries: I, source_tag: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: AsRef<str>,
    {
        let mut lex = TermLexicon {
            entries: Vec::new(),
            index: HashMap::new(),
            source_tag: source_tag.into(),
        };
        for (base, variants) in entries {
            let base = normalize(base.as_ref());
            if base.is_empty() {
                return Err(Error::invalid("empty base term"));
            }
            let id = lex.entries.len() as TermId;
            let mut forms = vec![base.clone()];
            for v in variants {
                let v = normalize(v.as_ref());
                if !v.is_empty() && !forms.contains(&v) {
                    forms.push(v);
                }
            }
            for f in &forms {
                if let Some(&other) = lex.index.get(f) {
                    return Err(Error::invalid(format!(
                        "form {f:?} of {base:?} already belongs to {:?}",
                        lex.entries[other as usize].base
                    )));
                }
                lex.index.insert(f.clone(), id);
            }
            lex.entries.push(LexiconEntry {
                id,
                base,
                variants: forms,
            });
        }
        Ok(lex)
    }

    /// Parses `base<TAB>variant1,variant2,...` lines; `#` starts a comment line.
    pub fn parse(text: &str, source_tag: impl Into<String>) -> Result<Self> {
        let source_tag = source_tag.into();
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (base, rest) = line.split_once('\t').unwrap_or((line, ""));
            if base.trim().is_empty() {
                return Err(Error::Parse {
                    path: source_tag.clone().into(),
                    line: n + 1,
                    msg: "missing base term".into(),
                });
            }
            let variants: Vec<String> = rest
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(str::to_owned)
                .collect();
            rows.push((base.trim().to_owned(), variants));
        }
        TermLexicon::new(rows, source_tag)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TermLexicon::parse(&text, path.display().to_string())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("# {}\n", self.source_tag);
        for e in &self.entries {
            out.push_str(&e.base);
            out.push('\t');
            out.push_str(&e.variants[1..].join(","));
            out.push('\n');
        }
        out
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn base_terms(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.base.clone()).collect()
    }

    pub fn id_of(&self, base: &str) -> Option<TermId> {
        let n = normalize(base);
        self.entries.iter().find(|e| e.base == n).map(|e| e.id)
    }

    /// Term id owning an already-normalized token.
    pub fn lookup(&self, token: &str) -> Option<TermId> {
        self.index.get(token).copied()
    }
}

/// Occurrences of lexicon terms in `text`, one per matching token.
pub fn match_terms(text: &str, lexicon: &TermLexicon) -> BTreeMap<TermId, u32> {
    let mut hits = BTreeMap::new();
    for tok in tokenize(text).tokens {
        if let Some(id) = lexicon.lookup(&tok) {
            *hits.entry(id).or_insert(0) += 1;
        }
    }
    hits
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(normalize)
        .map(|w| w.trim().to_owned())
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}
