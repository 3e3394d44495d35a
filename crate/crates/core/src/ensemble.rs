//! Stacking: train T base classifiers, build the meta dataset of their
//! probability outputs, fit a logistic meta-classifier over it, and predict
//! through the stack.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::dataio::{EncodedExample, Vocabulary};
use crate::models::{
    argmax, train_model, Model, ModelConfig, Reader, TrainConfig, TrainReport,
};
use crate::nn::{cross_entropy, Adam, AdamConfig};
use crate::{Error, Result};

pub const ENSEMBLE_MAGIC: &[u8; 4] = b"MXE1";
pub const ENSEMBLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaMode {
    Insample,
    Kfold(usize),
}

impl std::str::FromStr for MetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<MetaMode> {
        if s == "insample" {
            return Ok(MetaMode::Insample);
        }
        if let Some(k) = s.strip_prefix("kfold:") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("bad kfold count in `{s}`")))?;
            if k < 2 {
                return Err(Error::Config("kfold needs k >= 2".into()));
            }
            return Ok(MetaMode::Kfold(k));
        }
        Err(Error::Config(format!(
            "unknown ensemble mode `{s}` (expected `insample` or `kfold:<k>`)"
        )))
    }
}

/// Feature rows of length T·C paired with gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub num_base: usize,
}

impl MetaDataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_base: usize,
        num_classes: usize,
    ) -> Result<MetaDataset> {
        if features.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "feature rows {} != labels {}",
                features.len(),
                labels.len()
            )));
        }
        let width = num_base * num_classes;
        for (i, row) in features.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidArgument(format!(
                    "feature row {i} has length {}, expected T·C = {width}",
                    row.len()
                )));
            }
            for t in 0..num_base {
                let block: f64 = row[t * num_classes..(t + 1) * num_classes].iter().sum();
                if (block - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "feature row {i} block {t} sums to {block}, expected 1"
                    )));
                }
            }
        }
        Ok(MetaDataset {
            features,
            labels,
            num_classes,
            num_base,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Multinomial logistic regression over the concatenated base probabilities.
pub struct MetaClassifier {
    pub w: Tensor, // (T·C, C)
    pub b: Tensor, // (C)
}

impl MetaClassifier {
    pub fn predict_proba(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = features.len();
        let d = self.w.shape()[0];
        let c = self.w.shape()[1];
        let flat: Vec<f64> = features.iter().flatten().copied().collect();
        if flat.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "feature rows must have length {d}"
            )));
        }
        let x = Tensor::from_vec(vec![n, d], flat)?;
        let probs = x.matmul(&self.w)?.add(&self.b)?.softmax_last()?;
        let data = probs.to_vec();
        Ok((0..n).map(|i| data[i * c..(i + 1) * c].to_vec()).collect())
    }
}

fn base_train_config(template: &TrainConfig, seed: u64, t: usize) -> TrainConfig {
    let mut tc = template.clone();
    tc.seed = seed + t as u64;
    tc
}

/// Train each base classifier independently on the same data; base t uses
/// seed `seed + t` for both initialization and training. At most `jobs`
/// models train at once; results are identical for any jobs value because
/// every worker is self-contained.
pub fn fit_base(
    train: &[EncodedExample],
    val: &[EncodedExample],
    vocab: &Vocabulary,
    labels: &[String],
    configs: &[(ModelConfig, TrainConfig)],
    seed: u64,
    jobs: usize,
) -> Result<Vec<(Model, TrainReport)>> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("no base model configs given".into()));
    }
    let jobs = jobs.max(1);
    // Models hold non-Send graph nodes, so workers return serialized bytes.
    let mut results: Vec<Result<(Vec<u8>, TrainReport)>> = Vec::with_capacity(configs.len());
    for chunk_start in (0..configs.len()).step_by(jobs) {
        let chunk = &configs[chunk_start..(chunk_start + jobs).min(configs.len())];
        let chunk_results: Vec<Result<(Vec<u8>, TrainReport)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .enumerate()
                .map(|(offset, (mc, tc))| {
                    let t = chunk_start + offset;
                    let (mc, tc) = (mc.clone(), base_train_config(tc, seed, t));
                    let vocab = vocab.clone();
                    let labels = labels.to_vec();
                    scope.spawn(move || -> Result<(Vec<u8>, TrainReport)> {
                        let model = Model::new(mc, vocab, labels, tc.seed, None)?;
                        let report = train_model(&model, train, val, &tc)?;
                        Ok((model.to_bytes()?, report))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        results.extend(chunk_results);
    }
    let mut out = Vec::with_capacity(results.len());
    for (t, res) in results.into_iter().enumerate() {
        let (bytes, report) = res.map_err(|e| {
            Error::InvalidArgument(format!("training base model {t} failed: {e}"))
        })?;
        out.push((Model::from_bytes(&bytes)?, report));
    }
    Ok(out)
}

/// Meta features over `data` from already-trained base models (the literal
/// Algorithm-1 construction, which reuses the base training data).
pub fn construct_meta_dataset_insample(
    base: &[Model],
    data: &[EncodedExample],
) -> Result<MetaDataset> {
    if base.is_empty() {
        return Err(Error::InvalidArgument("no base models".into()));
    }
    let c = base[0].config.num_classes;
    let labels: Vec<usize> = data
        .iter()
        .map(|ex| {
            ex.label_index
                .ok_or_else(|| Error::InvalidArgument("meta dataset needs labels".into()))
        })
        .collect::<Result<_>>()?;
    let mut features = vec![Vec::with_capacity(base.len() * c); data.len()];
    for model in base {
        if model.config.num_classes != c {
            return Err(Error::InvalidArgument(
                "base models disagree on num_classes".into(),
            ));
        }
        for (row, probs) in features.iter_mut().zip(model.predict_proba(data)?) {
            row.extend(probs);
        }
    }
    MetaDataset::new(features, labels, base.len(), c)
}

/// Fold of example `i` under k-fold partitioning by index.
pub fn fold_of(i: usize, k: usize) -> usize {
    i % k
}

/// Meta features where each row is predicted by base models trained with
/// that row's fold held out. Retrains T models per fold.
pub fn construct_meta_dataset_kfold(
    data: &[EncodedExample],
    val: &[EncodedExample],
    vocab: &Vocabulary,
    labels: &[String],
    configs: &[(ModelConfig, TrainConfig)],
    seed: u64,
    k: usize,
    jobs: usize,
) -> Result<MetaDataset> {
    if k < 2 || data.len() < k {
        return Err(Error::InvalidArgument(format!(
            "kfold needs 2 <= k <= N, got k={k} with N={}",
            data.len()
        )));
    }
    let c = configs[0].0.num_classes;
    let gold: Vec<usize> = data
        .iter()
        .map(|ex| {
            ex.label_index
                .ok_or_else(|| Error::InvalidArgument("meta dataset needs labels".into()))
        })
        .collect::<Result<_>>()?;
    let mut features = vec![Vec::new(); data.len()];
    for fold in 0..k {
        let held_out: Vec<usize> = (0..data.len()).filter(|&i| fold_of(i, k) == fold).collect();
        let fold_train: Vec<EncodedExample> = (0..data.len())
            .filter(|&i| fold_of(i, k) != fold)
            .map(|i| data[i].clone())
            .collect();
        let held_examples: Vec<EncodedExample> =
            held_out.iter().map(|&i| data[i].clone()).collect();
        let fold_models = fit_base(&fold_train, val, vocab, labels, configs, seed, jobs)?;
        for (model, _) in &fold_models {
            let probs = model.predict_proba(&held_examples)?;
            for (&i, row) in held_out.iter().zip(probs) {
                features[i].extend(row);
            }
        }
    }
    MetaDataset::new(features, gold, configs.len(), c)
}

/// Fit the logistic meta-classifier by full-batch Adam on cross-entropy:
/// at most 2000 steps, stopping early when the gradient norm drops below
/// 1e-6. Parameters start at zero (the problem is convex), so the result is
/// deterministic for any seed.
pub fn fit_meta(meta_data: &MetaDataset, _seed: u64) -> Result<MetaClassifier> {
    if meta_data.is_empty() {
        return Err(Error::InvalidArgument("meta dataset is empty".into()));
    }
    let d = meta_data.num_base * meta_data.num_classes;
    let c = meta_data.num_classes;
    let n = meta_data.len();
    let x = Tensor::from_vec(
        vec![n, d],
        meta_data.features.iter().flatten().copied().collect(),
    )?;
    let w = Tensor::param(vec![d, c], vec![0.0; d * c])?;
    let b = Tensor::param(vec![c], vec![0.0; c])?;
    let params = [w.clone(), b.clone()];
    let mut adam = Adam::new(AdamConfig::default(), &params);
    for _ in 0..2000 {
        let probs = x.matmul(&w)?.add(&b)?.softmax_last()?;
        let loss = cross_entropy(&probs, &meta_data.labels)?;
        for p in &params {
            p.zero_grad();
        }
        loss.backward()?;
        let grad_norm: f64 = params
            .iter()
            .flat_map(|p| p.grad())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if grad_norm < 1e-6 {
            break;
        }
        adam.step(&params)?;
    }
    Ok(MetaClassifier { w, b })
}

pub struct StackingEnsemble {
    pub base: Vec<Model>,
    pub meta: MetaClassifier,
    pub num_classes: usize,
    pub mode: MetaMode,
}

impl std::fmt::Debug for StackingEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StackingEnsemble")
            .field("num_base", &self.base.len())
            .field("num_classes", &self.num_classes)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl StackingEnsemble {
    /// End-to-end Algorithm 1: fit the base models on the training data,
    /// construct the meta dataset per `mode`, then fit the meta-classifier.
    pub fn fit(
        train: &[EncodedExample],
        val: &[EncodedExample],
        vocab: &Vocabulary,
        labels: &[String],
        configs: &[(ModelConfig, TrainConfig)],
        seed: u64,
        mode: MetaMode,
        jobs: usize,
    ) -> Result<(StackingEnsemble, Vec<TrainReport>)> {
        let trained = fit_base(train, val, vocab, labels, configs, seed, jobs)?;
        let (base, reports): (Vec<Model>, Vec<TrainReport>) = trained.into_iter().unzip();
        let meta_data = match mode {
            MetaMode::Insample => construct_meta_dataset_insample(&base, train)?,
            MetaMode::Kfold(k) => {
                construct_meta_dataset_kfold(train, val, vocab, labels, configs, seed, k, jobs)?
            }
        };
        let meta = fit_meta(&meta_data, seed)?;
        let num_classes = configs[0].0.num_classes;
        Ok((
            StackingEnsemble {
                base,
                meta,
                num_classes,
                mode,
            },
            reports,
        ))
    }

    pub fn features_of(&self, batch: &[EncodedExample]) -> Result<Vec<Vec<f64>>> {
        let mut features = vec![Vec::with_capacity(self.base.len() * self.num_classes); batch.len()];
        for model in &self.base {
            for (row, probs) in features.iter_mut().zip(model.predict_proba(batch)?) {
                row.extend(probs);
            }
        }
        Ok(features)
    }

    /// Argmax labels (ties to the lowest class index) and meta probabilities.
    pub fn predict(&self, batch: &[EncodedExample]) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
        let probs = self.meta.predict_proba(&self.features_of(batch)?)?;
        let labels = probs.iter().map(|row| argmax(row)).collect();
        Ok((labels, probs))
    }

    pub fn labels(&self) -> &[String] {
        &self.base[0].labels
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)
            .map_err(|e| Error::io(format!("writing ensemble {}", path.display()), e))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta_json = serde_json::to_vec(&EnsembleMeta {
            num_classes: self.num_classes,
            mode: self.mode,
            num_base: self.base.len(),
        })
        .map_err(|e| Error::ModelFormat(format!("encoding ensemble metadata: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(ENSEMBLE_MAGIC);
        out.extend_from_slice(&ENSEMBLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta_json);
        for model in &self.base {
            let bytes = model.to_bytes()?;
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        for t in [&self.meta.w, &self.meta.b] {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.to_vec() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<StackingEnsemble> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::io(format!("reading ensemble {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<StackingEnsemble> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4)?;
        if magic != ENSEMBLE_MAGIC {
            return Err(Error::ModelFormat(format!(
                "bad magic {magic:?}, expected {ENSEMBLE_MAGIC:?}"
            )));
        }
        let version = r.u32()?;
        if version != ENSEMBLE_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported ensemble version {version}, expected {ENSEMBLE_VERSION}"
            )));
        }
        let meta_len = r.u32()? as usize;
        let meta: EnsembleMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::ModelFormat(format!("decoding ensemble metadata: {e}")))?;
        let mut base = Vec::with_capacity(meta.num_base);
        for _ in 0..meta.num_base {
            let len = r.u32()? as usize;
            base.push(Model::from_bytes(r.take(len)?)?);
        }
        let mut read_tensor = |param: bool| -> Result<Tensor> {
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            if param {
                Tensor::param(shape, data)
            } else {
                Tensor::from_vec(shape, data)
            }
        };
        let w = read_tensor(true)?;
        let b = read_tensor(true)?;
        if !r.is_empty() {
            return Err(Error::ModelFormat("trailing bytes after meta weights".into()));
        }
        Ok(StackingEnsemble {
            base,
            meta: MetaClassifier { w, b },
            num_classes: meta.num_classes,
            mode: meta.mode,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleMeta {
    num_classes: usize,
    mode: MetaMode,
    num_base: usize,
}

/// Peek at a saved file's magic to tell models from ensembles.
pub fn is_ensemble_file(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    use std::io::Read;
    let mut f =
        std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    f.read_exact(&mut magic)
        .map_err(|e| Error::io(format!("reading magic of {}", path.display()), e))?;
    Ok(&magic == ENSEMBLE_MAGIC)
}
