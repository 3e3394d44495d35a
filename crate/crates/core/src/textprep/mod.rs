//! Tweet normalization pipeline: demojisation, URL/USER/hashtag patterns,
//! acronym and contraction expansion, elongation collapsing, punctuation and
//! stopword removal, optional spell correction and stemming — composed as a
//! configurable ordered list of steps.

mod porter;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::spellcheck::{self, FrequencyLexicon};
use crate::{Error, Result};

pub use porter::stem as porter_stem;

pub const DEFAULT_EMOJI: &str = include_str!("../../resources/emoji.tsv");
pub const DEFAULT_CONTRACTIONS: &str = include_str!("../../resources/contractions.tsv");
pub const DEFAULT_ACRONYMS: &str = include_str!("../../resources/acronyms.tsv");
pub const DEFAULT_STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
pub const DEFAULT_WORDFREQ: &str = include_str!("../../resources/wordfreq.tsv");

/// Key → replacement table loaded from a `key<TAB>replacement` TSV.
///
/// Lookup is case-insensitive for contraction/acronym tables (keys are
/// stored lowercased) and exact for emoji.
#[derive(Debug, Clone)]
pub struct ResourceTable {
    pub name: String,
    entries: HashMap<String, String>,
    case_insensitive: bool,
}

impl ResourceTable {
    pub fn parse(name: &str, text: &str, case_insensitive: bool) -> Result<ResourceTable> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let key = cols.next().unwrap_or_default();
            let value = cols.next().ok_or_else(|| Error::Parse {
                path: name.into(),
                line: i + 1,
                message: "expected `key<TAB>replacement`".into(),
            })?;
            let key = if case_insensitive {
                key.to_lowercase()
            } else {
                key.to_string()
            };
            entries.insert(key, value.to_string());
        }
        Ok(ResourceTable {
            name: name.to_string(),
            entries,
            case_insensitive,
        })
    }

    pub fn load(path: &Path, case_insensitive: bool) -> Result<ResourceTable> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading resource {}", path.display()), e))?;
        Self::parse(&path.display().to_string(), &text, case_insensitive)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        if self.case_insensitive {
            self.entries.get(&key.to_lowercase()).map(|s| s.as_str())
        } else {
            self.entries.get(key).map(|s| s.as_str())
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct StopList {
    words: HashSet<String>,
}

impl StopList {
    pub fn parse(text: &str) -> StopList {
        StopList {
            words: text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<StopList> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading stoplist {}", path.display()), e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Demojize,
    Patterns,
    Abbreviations,
    Elongation,
    Punctuation,
    Lowercase,
    Spellcheck,
    Stopwords,
    Stem,
}

impl Step {
    pub const DEFAULT_ORDER: [Step; 6] = [
        Step::Demojize,
        Step::Patterns,
        Step::Abbreviations,
        Step::Elongation,
        Step::Punctuation,
        Step::Lowercase,
    ];
}

impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Step> {
        Ok(match s {
            "demojize" => Step::Demojize,
            "patterns" => Step::Patterns,
            "abbreviations" => Step::Abbreviations,
            "elongation" => Step::Elongation,
            "punctuation" => Step::Punctuation,
            "lowercase" => Step::Lowercase,
            "spellcheck" => Step::Spellcheck,
            "stopwords" => Step::Stopwords,
            "stem" => Step::Stem,
            other => return Err(Error::Config(format!("unknown pipeline step `{other}`"))),
        })
    }
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Step::Demojize => "demojize",
            Step::Patterns => "patterns",
            Step::Abbreviations => "abbreviations",
            Step::Elongation => "elongation",
            Step::Punctuation => "punctuation",
            Step::Lowercase => "lowercase",
            Step::Spellcheck => "spellcheck",
            Step::Stopwords => "stopwords",
            Step::Stem => "stem",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stemmer {
    None,
    English,
}

impl FromStr for Stemmer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stemmer> {
        Ok(match s {
            "none" => Stemmer::None,
            "english" => Stemmer::English,
            other => return Err(Error::Config(format!("unknown stemmer `{other}`"))),
        })
    }
}

pub struct PipelineConfig {
    pub steps: Vec<Step>,
    pub emoji: ResourceTable,
    pub contractions: ResourceTable,
    pub acronyms: ResourceTable,
    pub stopwords: StopList,
    pub lexicon: Option<FrequencyLexicon>,
    pub alphabet: Vec<char>,
    pub max_repeat: usize,
    pub stemmer: Stemmer,
    pub keep_unknown_emoji: bool,
}

impl PipelineConfig {
    /// Shipped resources, default step order, no spell correction,
    /// stopword removal, or stemming.
    pub fn default_pipeline() -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            steps: Step::DEFAULT_ORDER.to_vec(),
            emoji: ResourceTable::parse("emoji", DEFAULT_EMOJI, false)?,
            contractions: ResourceTable::parse("contractions", DEFAULT_CONTRACTIONS, true)?,
            acronyms: ResourceTable::parse("acronyms", DEFAULT_ACRONYMS, true)?,
            stopwords: StopList::parse(DEFAULT_STOPWORDS),
            lexicon: None,
            alphabet: spellcheck::DEFAULT_ALPHABET.chars().collect(),
            max_repeat: 2,
            stemmer: Stemmer::English,
            keep_unknown_emoji: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_repeat < 1 {
            return Err(Error::Config("max_repeat must be >= 1".into()));
        }
        if self.steps.contains(&Step::Spellcheck) && self.lexicon.is_none() {
            return Err(Error::Config(
                "spellcheck step requires a frequency lexicon".into(),
            ));
        }
        if self.steps.contains(&Step::Stem) && self.stemmer == Stemmer::None {
            return Err(Error::Config("stem step requires a stemmer".into()));
        }
        Ok(())
    }
}

/// Replace every table-keyed emoji sequence with its text name,
/// space-delimited; unknown emoji are dropped unless `keep_unknown`.
pub fn demojize(text: &str, emoji: &ResourceTable, keep_unknown: bool) -> String {
    // longest-first so multi-codepoint sequences win over their prefixes
    let mut keys: Vec<&String> = emoji.keys().collect();
    keys.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'outer: while !rest.is_empty() {
        for key in &keys {
            if rest.starts_with(key.as_str()) {
                out.push(' ');
                out.push_str(emoji.get(key).unwrap());
                out.push(' ');
                rest = &rest[key.len()..];
                continue 'outer;
            }
        }
        let c = rest.chars().next().unwrap();
        if !is_emoji_char(c) || keep_unknown {
            out.push(c);
        }
        rest = &rest[c.len_utf8()..];
    }
    collapse_whitespace(&out)
}

fn is_emoji_char(c: char) -> bool {
    matches!(u32::from(c),
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0xFE00..=0xFE0F
        | 0x200D
        | 0x20E3
    )
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// URL-ish tokens → `URL`, @mentions → `USER`, leading `#` stripped.
pub fn replace_patterns(text: &str) -> String {
    text.split_whitespace()
        .filter_map(|token| {
            if token.contains("http") || token.starts_with("www.") {
                Some("URL".to_string())
            } else if token.starts_with('@') && token.len() > 1 {
                Some("USER".to_string())
            } else if let Some(stripped) = token.strip_prefix('#') {
                let stripped = stripped.trim_start_matches('#');
                if stripped.is_empty() {
                    None
                } else {
                    Some(stripped.to_string())
                }
            } else {
                Some(token.to_string())
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whole-token, case-insensitive replacement: contractions first, then
/// acronyms. Unmatched tokens pass through.
pub fn expand_abbreviations(
    text: &str,
    contractions: &ResourceTable,
    acronyms: &ResourceTable,
) -> String {
    text.split_whitespace()
        .map(|token| {
            contractions
                .get(token)
                .or_else(|| acronyms.get(token))
                .map(str::to_string)
                .unwrap_or_else(|| token.to_string())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Shorten any run of one code point longer than `max_repeat` to exactly
/// `max_repeat`.
pub fn collapse_elongation(text: &str, max_repeat: usize) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last: Option<char> = None;
    let mut run = 0usize;
    for c in text.chars() {
        if Some(c) == last {
            run += 1;
        } else {
            last = Some(c);
            run = 1;
        }
        if run <= max_repeat {
            out.push(c);
        }
    }
    out
}

/// Strip punctuation, keeping the URL/USER sentinels intact; collapse
/// whitespace and trim.
pub fn remove_punctuation(text: &str) -> String {
    let cleaned: Vec<String> = text
        .split_whitespace()
        .filter_map(|token| {
            if token == "URL" || token == "USER" {
                return Some(token.to_string());
            }
            let kept: String = token.chars().filter(|&c| !is_punctuation(c)).collect();
            if kept.is_empty() {
                None
            } else {
                Some(kept)
            }
        })
        .collect();
    cleaned.join(" ")
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(u32::from(c),
            0x2000..=0x206F   // general punctuation
            | 0x00A1 | 0x00BF // ¡ ¿
            | 0x00AB | 0x00BB // « »
            | 0x2E00..=0x2E7F
            | 0x3001 | 0x3002
        )
}

/// Order-preserving stopword filter over lowercased tokens.
pub fn remove_stopwords(tokens: Vec<String>, stops: &StopList) -> Vec<String> {
    tokens.into_iter().filter(|t| !stops.contains(t)).collect()
}

enum Stage {
    Text(String),
    Tokens(Vec<String>),
}

impl Stage {
    fn text(self) -> String {
        match self {
            Stage::Text(t) => t,
            Stage::Tokens(toks) => toks.join(" "),
        }
    }

    fn tokens(self) -> Vec<String> {
        match self {
            Stage::Text(t) => t.split_whitespace().map(str::to_string).collect(),
            Stage::Tokens(toks) => toks,
        }
    }
}

/// Apply the configured steps in order and return the final token list.
/// String-level steps run on text; the first token-level step tokenizes on
/// whitespace. An empty step list yields whitespace tokens of the raw text.
pub fn run_pipeline(text: &str, config: &PipelineConfig) -> Result<Vec<String>> {
    config.validate()?;
    let mut stage = Stage::Text(text.to_string());
    for step in &config.steps {
        stage = match step {
            Step::Demojize => Stage::Text(demojize(
                &stage.text(),
                &config.emoji,
                config.keep_unknown_emoji,
            )),
            Step::Patterns => Stage::Text(replace_patterns(&stage.text())),
            Step::Abbreviations => Stage::Text(expand_abbreviations(
                &stage.text(),
                &config.contractions,
                &config.acronyms,
            )),
            Step::Elongation => Stage::Text(collapse_elongation(&stage.text(), config.max_repeat)),
            Step::Punctuation => Stage::Text(remove_punctuation(&stage.text())),
            Step::Lowercase => Stage::Text(lowercase_keeping_sentinels(&stage.text())),
            Step::Spellcheck => {
                let lexicon = config.lexicon.as_ref().unwrap();
                Stage::Tokens(
                    stage
                        .tokens()
                        .into_iter()
                        .map(|t| {
                            if spellcheck::should_correct(&t) {
                                spellcheck::correct(&t, lexicon, &config.alphabet)
                            } else {
                                t
                            }
                        })
                        .collect(),
                )
            }
            Step::Stopwords => Stage::Tokens(remove_stopwords(stage.tokens(), &config.stopwords)),
            Step::Stem => Stage::Tokens(
                stage
                    .tokens()
                    .into_iter()
                    .map(|t| match config.stemmer {
                        Stemmer::English => porter::stem(&t),
                        Stemmer::None => t,
                    })
                    .collect(),
            ),
        };
    }
    Ok(stage.tokens())
}

fn lowercase_keeping_sentinels(text: &str) -> String {
    text.split_whitespace()
        .map(|t| {
            if t == "URL" || t == "USER" {
                t.to_string()
            } else {
                t.to_lowercase()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
