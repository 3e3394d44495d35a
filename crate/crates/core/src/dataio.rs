//! Dataset loading, vocabulary construction, sequence encoding, train/val
//! splitting, and pretrained-embedding loading.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

/// The literal label-column value marking an unlabeled row.
pub const UNLABELED: &str = "_";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
    /// Distinct labels in first-seen order; position defines the class index.
    pub label_set: Vec<String>,
}

impl LabeledDataset {
    pub fn from_examples(examples: Vec<Example>) -> Result<LabeledDataset> {
        let mut seen_ids = HashMap::new();
        let mut label_set: Vec<String> = Vec::new();
        for ex in &examples {
            if ex.id.is_empty() {
                return Err(Error::InvalidArgument("example id must be non-empty".into()));
            }
            if seen_ids.insert(ex.id.clone(), ()).is_some() {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            if let Some(label) = &ex.label {
                if !label_set.iter().any(|l| l == label) {
                    label_set.push(label.clone());
                }
            }
        }
        Ok(LabeledDataset { examples, label_set })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }
}

/// Load a `id<TAB>label<TAB>text` TSV. A label of `_` means unlabeled.
pub fn load_tsv(path: &Path, has_header: bool) -> Result<LabeledDataset> {
    let file =
        File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    let mut seen_ids: HashMap<String, ()> = HashMap::new();
    let mut label_set: Vec<String> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if has_header && i == 0 {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let (id, label, text) = (cols[0], cols[1], cols[2]);
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: "empty id".into(),
            });
        }
        if seen_ids.insert(id.to_string(), ()).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
        let label = if label == UNLABELED {
            None
        } else {
            if !label_set.iter().any(|l| l == label) {
                label_set.push(label.to_string());
            }
            Some(label.to_string())
        };
        examples.push(Example {
            id: id.to_string(),
            text: text.to_string(),
            label,
        });
    }
    Ok(LabeledDataset { examples, label_set })
}

/// Write a dataset back out as `id<TAB>label<TAB>text` (no header).
pub fn write_tsv(path: &Path, dataset: &LabeledDataset) -> Result<()> {
    use std::io::Write;
    let mut file =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    for ex in &dataset.examples {
        let label = ex.label.as_deref().unwrap_or(UNLABELED);
        writeln!(file, "{}\t{}\t{}", ex.id, label, ex.text)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
    counts: HashMap<String, u64>,
}

impl Vocabulary {
    /// Build directly from the final token order (indices 0/1 must be the
    /// PAD/OOV markers). Used when deserializing models.
    pub fn from_tokens(index_to_token: Vec<String>) -> Result<Vocabulary> {
        if index_to_token.len() < 2
            || index_to_token[PAD_INDEX] != PAD_TOKEN
            || index_to_token[OOV_INDEX] != OOV_TOKEN
        {
            return Err(Error::InvalidArgument(
                "vocabulary token list must start with the PAD and OOV markers".into(),
            ));
        }
        let mut token_to_index = HashMap::new();
        for (i, tok) in index_to_token.iter().enumerate() {
            if token_to_index.insert(tok.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate token `{tok}` in vocabulary"
                )));
            }
        }
        Ok(Vocabulary {
            token_to_index,
            index_to_token,
            counts: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // PAD and OOV are always present
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token_at(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn count_of(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }
}

/// Count tokens across the dataset and assign indices 2.. in descending-count
/// order, ties broken lexicographically. Tokens under `min_count` are dropped.
pub fn build_vocabulary(
    dataset: &LabeledDataset,
    tokens_of: &dyn Fn(&str) -> Vec<String>,
    min_count: u64,
) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for ex in &dataset.examples {
        for tok in tokens_of(&ex.text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&String, u64)> = counts
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(t, &c)| (t, c))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut index_to_token = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
    index_to_token.extend(kept.into_iter().map(|(t, _)| t.clone()));
    let token_to_index = index_to_token
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(Vocabulary {
        token_to_index,
        index_to_token,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub indices: Vec<usize>,
    pub label_index: Option<usize>,
}

/// Map tokens to indices (unknown → OOV), truncate on the right at
/// `max_len`, and right-pad with PAD.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Result<EncodedExample> {
    if max_len < 1 {
        return Err(Error::InvalidArgument("max_len must be >= 1".into()));
    }
    let mut indices: Vec<usize> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.index_of(t).unwrap_or(OOV_INDEX))
        .collect();
    indices.resize(max_len, PAD_INDEX);
    Ok(EncodedExample {
        indices,
        label_index: None,
    })
}

/// Inverse of [`encode`] up to truncation and OOV: padding is dropped,
/// unknown tokens come back as the OOV marker.
pub fn decode(encoded: &EncodedExample, vocab: &Vocabulary) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for &idx in &encoded.indices {
        if idx == PAD_INDEX {
            break;
        }
        let tok = vocab
            .token_at(idx)
            .ok_or(Error::IndexOutOfBounds {
                index: idx,
                size: vocab.len(),
            })?;
        out.push(tok.to_string());
    }
    Ok(out)
}

/// Deterministic seeded shuffle; the training side receives
/// `floor(train_fraction · N)` examples and the partition is exact.
pub fn split(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    let take = |ids: &[usize]| LabeledDataset {
        examples: ids.iter().map(|&i| dataset.examples[i].clone()).collect(),
        label_set: dataset.label_set.clone(),
    };
    Ok((take(&order[..n_train]), take(&order[n_train..])))
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// One row per vocabulary index.
    pub vectors: Vec<Vec<f64>>,
}

/// Load a space-separated `word v1 .. vd` text embedding file (optional
/// `count dim` first line). Vocabulary words missing from the file are drawn
/// uniformly from [−0.25, 0.25] with `seed`; the PAD row is zeroed.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dim must be >= 1".into()));
    }
    let file =
        File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let reader = BufReader::new(file);

    let mut found: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap().to_string();
        let values: Vec<&str> = parts.collect();
        // optional `count dim` header
        if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
            continue;
        }
        if vocab.index_of(&word).is_none() {
            continue;
        }
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!(
                    "vector for word `{word}` has length {}, expected {dim}",
                    values.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(dim);
        for v in values {
            row.push(v.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("non-numeric component `{v}` for word `{word}`"),
            })?);
        }
        found.insert(word, row);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(vocab.len());
    for idx in 0..vocab.len() {
        let token = vocab.token_at(idx).unwrap();
        let row = if idx == PAD_INDEX {
            vec![0.0; dim]
        } else if let Some(row) = found.get(token) {
            row.clone()
        } else {
            (0..dim).map(|_| rng.gen_range(-0.25..=0.25)).collect()
        };
        vectors.push(row);
    }
    Ok(EmbeddingTable { dim, vectors })
}
