//! Edit-distance-2 spelling correction: generate single- and double-edit
//! candidates (deletes, transposes, replaces, inserts) and rank known
//! candidates by corpus frequency, closer edits first.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const DEFAULT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz";

/// Word → occurrence count, loaded from a `word<TAB>count` file.
#[derive(Debug, Clone, Default)]
pub struct FrequencyLexicon {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FrequencyLexicon {
    pub fn from_counts(pairs: impl IntoIterator<Item = (String, u64)>) -> Result<FrequencyLexicon> {
        let mut counts = HashMap::new();
        let mut total = 0u64;
        for (word, count) in pairs {
            if count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "zero count for word `{word}`"
                )));
            }
            total += count;
            counts.insert(word, count);
        }
        Ok(FrequencyLexicon { counts, total })
    }

    pub fn load(path: &Path) -> Result<FrequencyLexicon> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading lexicon {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<FrequencyLexicon> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let word = cols.next().unwrap_or_default();
            let count = cols
                .next()
                .and_then(|c| c.trim().parse::<u64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("expected `word<TAB>count`, got `{line}`"),
                })?;
            pairs.push((word.to_string(), count));
        }
        Self::from_counts(pairs)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// All distinct single-edit variants of `word`: deletes, adjacent
/// transposes, per-alphabet replaces and inserts. The original word is not
/// excluded (it arises from replace-with-same only when absent from the
/// alphabet path, and callers treat known words before edits anyway).
pub fn edits1(word: &str, alphabet: &[char]) -> HashSet<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let mut out = HashSet::new();
    for i in 0..n {
        // delete
        let mut d: String = chars[..i].iter().collect();
        d.extend(&chars[i + 1..]);
        out.insert(d);
        // transpose with next
        if i + 1 < n {
            let mut t = chars.clone();
            t.swap(i, i + 1);
            out.insert(t.into_iter().collect());
        }
        // replace
        for &c in alphabet {
            if c != chars[i] {
                let mut r = chars.clone();
                r[i] = c;
                out.insert(r.into_iter().collect());
            }
        }
    }
    // insert (n+1 positions)
    for i in 0..=n {
        for &c in alphabet {
            let mut s: String = chars[..i].iter().collect();
            s.push(c);
            s.extend(&chars[i..]);
            out.insert(s);
        }
    }
    out.remove(word);
    out
}

/// Priority: the word itself if known, then the most frequent known word at
/// edit distance 1, then at distance 2, else the word unchanged. Frequency
/// ties break lexicographically.
pub fn correct(word: &str, lexicon: &FrequencyLexicon, alphabet: &[char]) -> String {
    if word.is_empty() || lexicon.contains(word) {
        return word.to_string();
    }
    let e1 = edits1(word, alphabet);
    if let Some(best) = best_known(e1.iter(), lexicon) {
        return best;
    }
    let mut e2: HashSet<String> = HashSet::new();
    for e in &e1 {
        e2.extend(edits1(e, alphabet));
    }
    if let Some(best) = best_known(e2.iter(), lexicon) {
        return best;
    }
    word.to_string()
}

fn best_known<'a>(
    candidates: impl Iterator<Item = &'a String>,
    lexicon: &FrequencyLexicon,
) -> Option<String> {
    candidates
        .filter(|w| lexicon.contains(w))
        .max_by(|a, b| {
            lexicon
                .count(a)
                .cmp(&lexicon.count(b))
                // lexicographically smaller wins a frequency tie
                .then_with(|| b.cmp(a))
        })
        .cloned()
}

/// Correction applies only to alphabetic tokens of length >= 3 and never to
/// the URL/USER sentinels.
pub fn should_correct(token: &str) -> bool {
    token != "URL"
        && token != "USER"
        && token.chars().count() >= 3
        && token.chars().all(|c| c.is_alphabetic())
}
