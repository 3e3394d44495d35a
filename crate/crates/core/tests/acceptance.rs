//! Acceptance gate: one test per shipped guarantee, each printing a single
//! `criterion N (<name>): PASS|FAIL` line. Run with `--nocapture` to see the
//! lines for passing tests too.

use std::path::Path;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use stackmix::autograd::{grad_check, Tensor};
use stackmix::dataio::{encode, EncodedExample, Vocabulary, OOV_TOKEN, PAD_TOKEN};
use stackmix::ensemble::{MetaMode, StackingEnsemble};
use stackmix::metrics;
use stackmix::models::{
    train_model, Model, ModelConfig, ModelKind, TrainConfig,
};
use stackmix::nn::{
    focal_loss, maxpool1d, AdditiveAttention, BatchNorm, Conv1d, Dense, Embedding,
    FocalLossConfig, Gru, Lstm, Mode,
};
use stackmix::spellcheck::{correct, FrequencyLexicon, DEFAULT_ALPHABET};
use stackmix::textprep::{run_pipeline, PipelineConfig, DEFAULT_WORDFREQ};

type Check = std::result::Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn criterion(n: usize, name: &str, body: impl FnOnce() -> Check) {
    match body() {
        Ok(()) => println!("criterion {n} ({name}): PASS"),
        Err(e) => {
            println!("criterion {n} ({name}): FAIL - {e}");
            panic!("criterion {n} ({name}) failed: {e}");
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::param(shape, data).unwrap()
}

fn alphabet() -> Vec<char> {
    DEFAULT_ALPHABET.chars().collect()
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn c01_gradient_suite() {
    criterion(1, "gradient suite", || {
        let start = Instant::now();
        let tol = 1e-5;
        let eps = 1e-5;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);

            // dense layer: loss = sum(tanh(xW + b))
            let x = rand_tensor(&mut rng, vec![3, 4], 1.0);
            let w = rand_tensor(&mut rng, vec![4, 5], 1.0);
            let b = rand_tensor(&mut rng, vec![5], 0.5);
            for point in [&w, &b, &x] {
                let dense = Dense::new(w.clone(), b.clone());
                let xc = x.clone();
                let err = grad_err(&|_| Ok(dense.forward(&xc)?.tanh().sum_all()), point, eps)?;
                ensure!(err < tol, "dense grad error {err} at seed {seed}");
            }

            // conv + maxpool: (2,5,3) ⊛ (2,3,4), pooled, tanh, sum
            let cx = rand_tensor(&mut rng, vec![2, 5, 3], 1.0);
            let cf = rand_tensor(&mut rng, vec![2, 3, 4], 1.0);
            let cb = rand_tensor(&mut rng, vec![4], 0.5);
            for point in [&cf, &cb, &cx] {
                let conv = Conv1d {
                    filters: cf.clone(),
                    bias: cb.clone(),
                };
                let xc = cx.clone();
                let err = grad_err(
                    &|_| Ok(maxpool1d(&conv.forward(&xc)?.tanh())?.sum_all()),
                    point,
                    eps,
                )?;
                ensure!(err < tol, "conv/maxpool grad error {err} at seed {seed}");
            }

            // batch norm (train mode) wrt gamma, beta, and the input
            let bn = BatchNorm::new(4).map_err(|e| e.to_string())?;
            let bx = rand_tensor(&mut rng, vec![6, 4], 1.0);
            for point in [&bn.gamma, &bn.beta, &bx] {
                let xc = bx.clone();
                let br = &bn;
                let err = grad_err(
                    &|_| Ok(br.forward(&xc, Mode::Train)?.tanh().sum_all()),
                    point,
                    eps,
                )?;
                ensure!(err < tol, "batchnorm grad error {err} at seed {seed}");
            }

            // embedding gather wrt the table
            let table = rand_tensor(&mut rng, vec![7, 4], 1.0);
            let emb = Embedding::new(table.clone(), false);
            let idx = [1usize, 3, 5, 2, 6, 4];
            let err = grad_err(&|_| Ok(emb.forward(&idx, 2, 3)?.tanh().sum_all()), &table, eps)?;
            ensure!(err < tol, "embedding grad error {err} at seed {seed}");

            // recurrent cells at H=4 over 3 steps
            let rx = rand_tensor(&mut rng, vec![2, 3, 3], 1.0);
            let lstm = Lstm {
                wx: rand_tensor(&mut rng, vec![3, 16], 0.7),
                wh: rand_tensor(&mut rng, vec![4, 16], 0.7),
                b: rand_tensor(&mut rng, vec![16], 0.3),
                units: 4,
            };
            for point in [&lstm.wx, &lstm.wh, &lstm.b, &rx] {
                let xc = rx.clone();
                let cell = &lstm;
                let err = grad_err(&|_| Ok(cell.forward(&xc)?.sum_all()), point, eps)?;
                ensure!(err < tol, "lstm grad error {err} at seed {seed}");
            }
            let gru = Gru {
                wx: rand_tensor(&mut rng, vec![3, 12], 0.7),
                wh: rand_tensor(&mut rng, vec![4, 12], 0.7),
                b: rand_tensor(&mut rng, vec![12], 0.3),
                units: 4,
            };
            for point in [&gru.wx, &gru.wh, &gru.b, &rx] {
                let xc = rx.clone();
                let cell = &gru;
                let err = grad_err(&|_| Ok(cell.forward(&xc)?.sum_all()), point, eps)?;
                ensure!(err < tol, "gru grad error {err} at seed {seed}");
            }

            // additive attention over (2, 3, 4)
            let h = rand_tensor(&mut rng, vec![2, 3, 4], 1.0);
            let att = AdditiveAttention {
                w: rand_tensor(&mut rng, vec![4, 4], 0.7),
                b: rand_tensor(&mut rng, vec![4], 0.3),
                v: rand_tensor(&mut rng, vec![4], 0.7),
            };
            for point in [&att.w, &att.b, &att.v, &h] {
                let hc = h.clone();
                let ar = &att;
                let err = grad_err(&|_| Ok(ar.forward(&hc)?.0.sum_all()), point, eps)?;
                ensure!(err < tol, "attention grad error {err} at seed {seed}");
            }

            // focal loss through softmax logits
            let logits = rand_tensor(&mut rng, vec![3, 3], 1.5);
            let targets = [0usize, 2, 1];
            let focal = FocalLossConfig::new(2.0, vec![0.2, 0.3, 0.5]).unwrap();
            let err = grad_err(
                &|_| focal_loss(&logits.softmax_last()?, &targets, &focal),
                &logits,
                eps,
            )?;
            ensure!(err < tol, "focal loss grad error {err} at seed {seed}");

            // full architectures at toy width (H=4, L=5)
            for kind in [ModelKind::Cnn, ModelKind::Lstm, ModelKind::Attention] {
                let model = toy_model(kind, 4, seed).map_err(|e| e.to_string())?;
                let indices: Vec<usize> = (0..2 * 5).map(|i| 2 + (i % 6)).collect();
                let targets = [0usize, 1];
                let loss = FocalLossConfig::uniform(2, 2.0);
                for (name, param) in model.params_named() {
                    let m = &model;
                    let idx = indices.clone();
                    let err = grad_err(
                        &|_| {
                            let mut dr = ChaCha8Rng::seed_from_u64(0);
                            let probs = m.forward(&idx, 2, Mode::Eval, &mut dr)?;
                            focal_loss(&probs, &targets, &loss)
                        },
                        &param,
                        eps,
                    )?;
                    ensure!(
                        err < tol,
                        "{kind:?} param {name} grad error {err} at seed {seed}"
                    );
                }
            }
        }
        let elapsed = start.elapsed();
        ensure!(
            elapsed.as_secs_f64() < 120.0,
            "gradient suite took {elapsed:?}, budget is 2 minutes"
        );
        Ok(())
    });
}

/// grad_check with the error type flattened to String.
fn grad_err(
    f: &dyn Fn(&Tensor) -> stackmix::Result<Tensor>,
    point: &Tensor,
    eps: f64,
) -> std::result::Result<f64, String> {
    grad_check(f, point, eps).map_err(|e| e.to_string())
}

fn toy_vocab(size: usize) -> Vocabulary {
    let mut tokens = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
    for i in 2..size {
        tokens.push(format!("w{i}"));
    }
    Vocabulary::from_tokens(tokens).unwrap()
}

/// H=4, L=5 toy instance of one architecture over a 2-class problem.
fn toy_model(kind: ModelKind, units: usize, seed: u64) -> stackmix::Result<Model> {
    let mut cfg = ModelConfig::of_kind(kind, 8, 2);
    cfg.max_len = 5;
    cfg.embed_dim = 3;
    cfg.units = units;
    cfg.dense = vec![4];
    cfg.dropout = 0.0;
    cfg.filter_widths = vec![2];
    cfg.filters_per_width = 3;
    Model::new(
        cfg,
        toy_vocab(8),
        vec!["a".into(), "b".into()],
        seed,
        None,
    )
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn c02_focal_loss_reduction() {
    criterion(2, "focal-loss reduction", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..1000 {
            let batch = rng.gen_range(1..=8);
            let classes = rng.gen_range(2..=5);
            let mut data = Vec::with_capacity(batch * classes);
            let mut targets = Vec::with_capacity(batch);
            for _ in 0..batch {
                let row: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
                let sum: f64 = row.iter().sum();
                data.extend(row.iter().map(|v| v / sum));
                targets.push(rng.gen_range(0..classes));
            }
            let probs = Tensor::from_vec(vec![batch, classes], data.clone()).unwrap();
            let focal = focal_loss(&probs, &targets, &FocalLossConfig::uniform(classes, 0.0))
                .map_err(|e| e.to_string())?
                .item()
                .map_err(|e| e.to_string())?;
            let ce: f64 = targets
                .iter()
                .enumerate()
                .map(|(i, &y)| -data[i * classes + y].ln())
                .sum::<f64>()
                / batch as f64;
            ensure!(
                (focal - ce).abs() < 1e-12,
                "trial {trial}: focal {focal} vs cross-entropy {ce}"
            );
        }

        // scalar oracle 1: gamma=2, uniform weights, p_y=0.9
        let probs = Tensor::from_vec(vec![1, 2], vec![0.9, 0.1]).unwrap();
        let got = focal_loss(&probs, &[0], &FocalLossConfig::uniform(2, 2.0))
            .unwrap()
            .item()
            .unwrap();
        let want = 0.1f64.powi(2) * -(0.9f64.ln());
        ensure!((got - want).abs() < 1e-9, "oracle 1: {got} vs {want}");

        // scalar oracle 2: gamma=2, alpha=[0.25,0.75], batch of two
        let probs = Tensor::from_vec(vec![2, 2], vec![0.9, 0.1, 0.4, 0.6]).unwrap();
        let cfg = FocalLossConfig::new(2.0, vec![0.25, 0.75]).unwrap();
        let got = focal_loss(&probs, &[0, 1], &cfg).unwrap().item().unwrap();
        let want = (0.25 * 0.1f64.powi(2) * -(0.9f64.ln())
            + 0.75 * 0.4f64.powi(2) * -(0.6f64.ln()))
            / 2.0;
        ensure!((got - want).abs() < 1e-9, "oracle 2: {got} vs {want}");
        Ok(())
    });
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn c03_preprocessing_goldens() {
    criterion(3, "preprocessing goldens", || {
        let pipeline = PipelineConfig::default_pipeline().map_err(|e| e.to_string())?;
        let goldens: &[(&str, &[&str])] = &[
            ("helloooooo", &["helloo"]),
            ("orrrrrale", &["orrale"]),
            ("4ever", &["forever"]),
            ("abt", &["about"]),
            ("cb", &["comeback"]),
            ("can't", &["cannot"]),
            ("aren't", &["are", "not"]),
            ("i've", &["i", "have"]),
            ("http://example.com/x", &["URL"]),
            ("www.example.com", &["URL"]),
            ("@someone", &["USER"]),
            ("#Hashtag", &["hashtag"]),
        ];
        for (input, want) in goldens {
            let got = run_pipeline(input, &pipeline).map_err(|e| e.to_string())?;
            ensure!(
                got == *want,
                "pipeline({input:?}) = {got:?}, expected {want:?}"
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------- criterion 4

/// Edit distance by dynamic programming, counting insertion, deletion,
/// substitution, and transposition each as one edit — the same operation
/// set the corrector's candidate generator uses. This is the unrestricted
/// Damerau–Levenshtein distance (Lowrance–Wagner), under which any
/// composition of two single edits is within distance 2.
fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (la, lb) = (a.len(), b.len());
    let max = la + lb;
    let mut da: std::collections::HashMap<char, usize> = std::collections::HashMap::new();
    let mut d = vec![vec![0usize; lb + 2]; la + 2];
    d[0][0] = max;
    for i in 0..=la {
        d[i + 1][0] = max;
        d[i + 1][1] = i;
    }
    for j in 0..=lb {
        d[0][j + 1] = max;
        d[1][j + 1] = j;
    }
    for i in 1..=la {
        let mut db = 0;
        for j in 1..=lb {
            let k = *da.get(&b[j - 1]).unwrap_or(&0);
            let l = db;
            let cost = if a[i - 1] == b[j - 1] {
                db = j;
                0
            } else {
                1
            };
            d[i + 1][j + 1] = (d[i][j] + cost)
                .min(d[i + 1][j] + 1)
                .min(d[i][j + 1] + 1)
                .min(d[k][l] + (i - k - 1) + 1 + (j - l - 1));
        }
        da.insert(a[i - 1], i);
    }
    d[la + 1][lb + 1]
}

/// Independent candidate generator: all single-edit variants of `word`.
fn oracle_edits1(word: &str) -> std::collections::BTreeSet<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = std::collections::BTreeSet::new();
    for i in 0..=chars.len() {
        // deletion
        if i < chars.len() {
            let mut v = chars.clone();
            v.remove(i);
            out.insert(v.iter().collect());
        }
        // transposition
        if i + 1 < chars.len() {
            let mut v = chars.clone();
            v.swap(i, i + 1);
            out.insert(v.iter().collect());
        }
        for c in alphabet() {
            // replacement
            if i < chars.len() {
                let mut v = chars.clone();
                v[i] = c;
                out.insert(v.iter().collect());
            }
            // insertion
            let mut v = chars.clone();
            v.insert(i, c);
            out.insert(v.iter().collect());
        }
    }
    out.remove(word);
    out
}

/// Reference corrector: known word, else best known single edit, else best
/// known double edit, else the word itself. Best = highest frequency, ties
/// broken by lexicographic order.
fn oracle_correct(word: &str, lexicon: &FrequencyLexicon) -> String {
    if lexicon.contains(word) {
        return word.to_string();
    }
    let pick = |set: &std::collections::BTreeSet<String>| -> Option<String> {
        set.iter()
            .filter(|w| lexicon.contains(w))
            .max_by(|a, b| {
                lexicon
                    .count(a)
                    .cmp(&lexicon.count(b))
                    .then_with(|| b.cmp(a))
            })
            .cloned()
    };
    let e1 = oracle_edits1(word);
    if let Some(best) = pick(&e1) {
        return best;
    }
    let mut e2 = std::collections::BTreeSet::new();
    for e in &e1 {
        e2.extend(oracle_edits1(e));
    }
    e2.remove(word);
    pick(&e2).unwrap_or_else(|| word.to_string())
}

fn mangle(word: &str, edits: usize, rng: &mut ChaCha8Rng) -> String {
    let ab = alphabet();
    let mut chars: Vec<char> = word.chars().collect();
    for _ in 0..edits {
        match rng.gen_range(0..3) {
            0 if !chars.is_empty() => {
                let i = rng.gen_range(0..chars.len());
                chars[i] = ab[rng.gen_range(0..ab.len())];
            }
            1 if chars.len() > 2 => {
                let i = rng.gen_range(0..chars.len());
                chars.remove(i);
            }
            _ => {
                let i = rng.gen_range(0..=chars.len());
                chars.insert(i, ab[rng.gen_range(0..ab.len())]);
            }
        }
    }
    chars.into_iter().collect()
}

#[test]
fn c04_spell_corrector() {
    criterion(4, "spell corrector", || {
        let ab = alphabet();
        let tiny =
            FrequencyLexicon::from_counts([("forget".to_string(), 10)]).map_err(|e| e.to_string())?;
        let got = correct("frgt", &tiny, &ab);
        ensure!(got == "forget", "frgt corrected to {got:?}");

        let lexicon = FrequencyLexicon::parse(DEFAULT_WORDFREQ, Path::new("builtin"))
            .map_err(|e| e.to_string())?;
        let words: Vec<String> = DEFAULT_WORDFREQ
            .lines()
            .filter_map(|l| l.split('\t').next())
            .map(str::to_string)
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..1000 {
            let base = &words[rng.gen_range(0..words.len())];
            let word = mangle(base, rng.gen_range(1..=2), &mut rng);
            let corrected = correct(&word, &lexicon, &ab);
            if corrected != word {
                let d = edit_distance(&word, &corrected);
                ensure!(
                    d <= 2,
                    "trial {trial}: {word:?} -> {corrected:?} has distance {d}"
                );
            }
        }
        for trial in 0..200 {
            let base = &words[rng.gen_range(0..words.len())];
            let word = mangle(base, rng.gen_range(1..=2), &mut rng);
            let got = correct(&word, &lexicon, &ab);
            let want = oracle_correct(&word, &lexicon);
            ensure!(
                got == want,
                "trial {trial}: correct({word:?}) = {got:?}, oracle says {want:?}"
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------- criterion 5

/// 32 separable examples over the toy vocabulary: class 0 uses tokens 2..5,
/// class 1 uses tokens 5..8.
fn separable_set(vocab: &Vocabulary, max_len: usize, n: usize) -> Vec<EncodedExample> {
    (0..n)
        .map(|i| {
            let class = i % 2;
            let base = if class == 0 { 2 } else { 5 };
            let tokens: Vec<String> = (0..max_len)
                .map(|j| vocab.token_at(base + (i + j) % 3).unwrap().to_string())
                .collect();
            let mut e = encode(&tokens, vocab, max_len).unwrap();
            e.label_index = Some(class);
            e
        })
        .collect()
}

#[test]
fn c05_overfit_smoke() {
    criterion(5, "overfit smoke", || {
        let start = Instant::now();
        let vocab = toy_vocab(8);
        let set = separable_set(&vocab, 5, 32);
        for kind in [ModelKind::Cnn, ModelKind::Lstm, ModelKind::Attention] {
            let model = toy_model_wide(kind).map_err(|e| e.to_string())?;
            let mut cfg = TrainConfig::new(FocalLossConfig::uniform(2, 0.0), 5);
            cfg.epochs = 300;
            cfg.patience = 20;
            cfg.batch_size = 8;
            cfg.adam.lr = 0.02;
            let report = train_model(&model, &set, &set, &cfg).map_err(|e| e.to_string())?;
            let best = report
                .epochs
                .iter()
                .map(|e| e.train_accuracy)
                .fold(0.0, f64::max);
            ensure!(
                best == 1.0,
                "{kind:?} peaked at train accuracy {best} within {} epochs",
                report.epochs.len()
            );
        }
        let elapsed = start.elapsed();
        ensure!(
            elapsed.as_secs_f64() < 300.0,
            "overfit smoke took {elapsed:?}, budget is 5 minutes"
        );
        Ok(())
    });
}

fn toy_model_wide(kind: ModelKind) -> stackmix::Result<Model> {
    let mut cfg = ModelConfig::of_kind(kind, 8, 2);
    cfg.max_len = 5;
    cfg.embed_dim = 8;
    cfg.units = 8;
    cfg.dense = vec![8];
    cfg.dropout = 0.0;
    cfg.filter_widths = vec![2, 3];
    cfg.filters_per_width = 4;
    Model::new(cfg, toy_vocab(8), vec!["a".into(), "b".into()], 5, None)
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn c06_stacking() {
    criterion(6, "stacking", || {
        let vocab = toy_vocab(8);
        let train = separable_set(&vocab, 5, 24);
        let val = separable_set(&vocab, 5, 12);
        let labels = vec!["a".to_string(), "b".to_string()];
        let base_cfg = {
            let mut cfg = ModelConfig::cnn(vocab.len(), 2);
            cfg.max_len = 5;
            cfg.embed_dim = 6;
            cfg.dense = vec![8];
            cfg.dropout = 0.0;
            cfg.filter_widths = vec![2];
            cfg.filters_per_width = 4;
            cfg
        };
        let mut train_cfg = TrainConfig::new(FocalLossConfig::uniform(2, 0.0), 0);
        train_cfg.epochs = 15;
        train_cfg.patience = 15;
        train_cfg.batch_size = 8;
        train_cfg.adam.lr = 0.02;

        // one learnable base on a separable set acts as an oracle; the
        // stacked prediction must match it
        for seed in 0..5u64 {
            let configs = vec![(base_cfg.clone(), train_cfg.clone())];
            let (ens, _) = StackingEnsemble::fit(
                &train,
                &val,
                &vocab,
                &labels,
                &configs,
                seed,
                MetaMode::Insample,
                1,
            )
            .map_err(|e| e.to_string())?;
            let (pred, _) = ens.predict(&val).map_err(|e| e.to_string())?;
            let correct = pred
                .iter()
                .zip(&val)
                .filter(|(p, e)| **p == e.label_index.unwrap())
                .count();
            let acc = correct as f64 / val.len() as f64;
            ensure!(acc >= 0.98, "seed {seed}: ensemble accuracy {acc}");
        }

        // meta feature length is T*C for several configurations
        for t in 1..=3usize {
            let configs = vec![(base_cfg.clone(), train_cfg.clone()); t];
            let (ens, _) = StackingEnsemble::fit(
                &train,
                &val,
                &vocab,
                &labels,
                &configs,
                0,
                MetaMode::Insample,
                2,
            )
            .map_err(|e| e.to_string())?;
            let features = ens.features_of(&val).map_err(|e| e.to_string())?;
            ensure!(
                features.iter().all(|f| f.len() == t * 2),
                "T={t}: feature length != T*C"
            );
        }

        // both meta modes run; they agree on this easy set
        let configs = vec![(base_cfg, train_cfg)];
        let (kfold, _) = StackingEnsemble::fit(
            &train,
            &val,
            &vocab,
            &labels,
            &configs,
            0,
            MetaMode::Kfold(3),
            1,
        )
        .map_err(|e| e.to_string())?;
        let (pred, _) = kfold.predict(&val).map_err(|e| e.to_string())?;
        let acc = pred
            .iter()
            .zip(&val)
            .filter(|(p, e)| **p == e.label_index.unwrap())
            .count() as f64
            / val.len() as f64;
        ensure!(acc >= 0.98, "kfold ensemble accuracy {acc}");
        Ok(())
    });
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn c07_metrics_oracle() {
    criterion(7, "metrics oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000 {
            let c = rng.gen_range(2..=5);
            let n = rng.gen_range(1..=50);
            let classes: Vec<String> = (0..c).map(|k| format!("c{k}")).collect();
            let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let cm = metrics::confusion(&gold, &pred, &classes).map_err(|e| e.to_string())?;
            let got = metrics::macro_scores(&cm).map_err(|e| e.to_string())?;

            // brute-force scan oracle
            let (mut sp, mut sr, mut sf) = (0.0f64, 0.0f64, 0.0f64);
            for k in 0..c {
                let tp = gold
                    .iter()
                    .zip(&pred)
                    .filter(|(g, p)| **g == k && **p == k)
                    .count() as f64;
                let pred_k = pred.iter().filter(|p| **p == k).count() as f64;
                let gold_k = gold.iter().filter(|g| **g == k).count() as f64;
                let p = if pred_k == 0.0 { 0.0 } else { tp / pred_k };
                let r = if gold_k == 0.0 { 0.0 } else { tp / gold_k };
                let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                let cs = &got.per_class[&classes[k]];
                ensure!(
                    cs.precision == p && cs.recall == r && cs.f1 == f,
                    "trial {trial} class {k}: ({},{},{}) vs oracle ({p},{r},{f})",
                    cs.precision,
                    cs.recall,
                    cs.f1
                );
                sp += p;
                sr += r;
                sf += f;
            }
            let acc = gold
                .iter()
                .zip(&pred)
                .filter(|(g, p)| g == p)
                .count() as f64
                / n as f64;
            ensure!(
                got.macro_precision == sp / c as f64
                    && got.macro_recall == sr / c as f64
                    && got.macro_f1 == sf / c as f64
                    && got.accuracy == acc,
                "trial {trial}: macro scores differ from oracle"
            );
        }

        // hand-computed 2-class example: TP=FP=FN=TN=1
        let cm = metrics::confusion(
            &[0, 0, 1, 1],
            &[0, 1, 0, 1],
            &["n".to_string(), "p".to_string()],
        )
        .map_err(|e| e.to_string())?;
        let s = metrics::macro_scores(&cm).map_err(|e| e.to_string())?;
        ensure!(
            s.macro_precision == 0.5
                && s.macro_recall == 0.5
                && s.macro_f1 == 0.5
                && s.accuracy == 0.5,
            "hand example: got ({}, {}, {}, {})",
            s.macro_precision,
            s.macro_recall,
            s.macro_f1,
            s.accuracy
        );
        Ok(())
    });
}

// ---------------------------------------------------------------- criterion 8

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run_cli(args: &[&str]) -> std::result::Result<(), String> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_stackmix"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

#[test]
fn c08_determinism() {
    criterion(8, "determinism", || {
        let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
        let data = repo_file("data/regression.tsv");
        let ens_conf = repo_file("data/regression.conf");
        let train_conf = dir.path().join("single.conf");
        std::fs::write(
            &train_conf,
            "seed=11\ndata.max_len=6\ndata.train_fraction=0.8\ntrain.epochs=10\n\
             train.batch_size=4\ntrain.patience=10\ntrain.lr=0.05\ntrain.gamma=0.0\n\
             model.kind=cnn\nmodel.embed_dim=8\nmodel.dense=16\nmodel.filter_widths=2\n\
             model.filters_per_width=4\nmodel.dropout=0.0\n",
        )
        .map_err(|e| e.to_string())?;

        let mut artifacts: Vec<Vec<Vec<u8>>> = Vec::new();
        for round in 0..2 {
            let model = dir.path().join(format!("m{round}.bin"));
            let ens = dir.path().join(format!("e{round}.bin"));
            run_cli(&[
                "train",
                data.to_str().unwrap(),
                "--config",
                train_conf.to_str().unwrap(),
                "--out",
                model.to_str().unwrap(),
            ])?;
            run_cli(&[
                "ensemble",
                data.to_str().unwrap(),
                "--config",
                ens_conf.to_str().unwrap(),
                "--out",
                ens.to_str().unwrap(),
            ])?;
            let mut blobs = Vec::new();
            for p in [&model, &ens] {
                blobs.push(std::fs::read(p).map_err(|e| e.to_string())?);
                for suffix in [".report.txt", ".report.json"] {
                    let mut rp = p.as_os_str().to_os_string();
                    rp.push(suffix);
                    blobs.push(std::fs::read(&rp).map_err(|e| e.to_string())?);
                }
            }
            artifacts.push(blobs);
        }
        let names = [
            "model file",
            "train report (text)",
            "train report (json)",
            "ensemble file",
            "ensemble report (text)",
            "ensemble report (json)",
        ];
        for (i, name) in names.iter().enumerate() {
            ensure!(
                artifacts[0][i] == artifacts[1][i],
                "{name} differs between identical runs"
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn c09_serialization_round_trip() {
    criterion(9, "serialization round trip", || {
        let vocab = toy_vocab(8);
        let batch = separable_set(&vocab, 5, 8);
        for kind in [ModelKind::Cnn, ModelKind::Lstm, ModelKind::Attention] {
            let model = toy_model(kind, 4, 9).map_err(|e| e.to_string())?;
            let bytes = model.to_bytes().map_err(|e| e.to_string())?;
            let reloaded = Model::from_bytes(&bytes).map_err(|e| e.to_string())?;
            let a = model.predict_proba(&batch).map_err(|e| e.to_string())?;
            let b = reloaded.predict_proba(&batch).map_err(|e| e.to_string())?;
            ensure!(a == b, "{kind:?} probabilities changed across save/load");
        }

        let labels = vec!["a".to_string(), "b".to_string()];
        let mut train_cfg = TrainConfig::new(FocalLossConfig::uniform(2, 0.0), 9);
        train_cfg.epochs = 3;
        train_cfg.batch_size = 8;
        let mut cfg = ModelConfig::cnn(vocab.len(), 2);
        cfg.max_len = 5;
        cfg.embed_dim = 6;
        cfg.dense = vec![8];
        cfg.dropout = 0.0;
        cfg.filter_widths = vec![2];
        cfg.filters_per_width = 4;
        let configs = vec![(cfg, train_cfg)];
        let (ens, _) = StackingEnsemble::fit(
            &batch,
            &batch,
            &vocab,
            &labels,
            &configs,
            9,
            MetaMode::Insample,
            1,
        )
        .map_err(|e| e.to_string())?;
        let bytes = ens.to_bytes().map_err(|e| e.to_string())?;
        let reloaded = StackingEnsemble::from_bytes(&bytes).map_err(|e| e.to_string())?;
        let (_, a) = ens.predict(&batch).map_err(|e| e.to_string())?;
        let (_, b) = reloaded.predict(&batch).map_err(|e| e.to_string())?;
        ensure!(a == b, "ensemble probabilities changed across save/load");
        Ok(())
    });
}

// --------------------------------------------------------------- criterion 10

#[test]
fn c10_end_to_end_regression_corpus() {
    criterion(10, "end-to-end regression corpus", || {
        let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
        let ens = dir.path().join("ens.bin");
        run_cli(&[
            "ensemble",
            repo_file("data/regression.tsv").to_str().unwrap(),
            "--config",
            repo_file("data/regression.conf").to_str().unwrap(),
            "--out",
            ens.to_str().unwrap(),
            "--jobs",
            "2",
        ])?;
        let report = std::fs::read_to_string(dir.path().join("ens.bin.report.txt"))
            .map_err(|e| e.to_string())?;
        let mut base_f1 = Vec::new();
        let mut ensemble_f1 = None;
        for line in report.lines().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            let f1: f64 = cols[1].parse().map_err(|e| format!("{e}"))?;
            if cols[0] == "ensemble" {
                ensemble_f1 = Some(f1);
            } else {
                base_f1.push((cols[0].to_string(), f1));
            }
        }
        let ensemble_f1 = ensemble_f1.ok_or("no ensemble row in report")?;
        ensure!(!base_f1.is_empty(), "no base rows in report");
        for (name, f1) in &base_f1 {
            ensure!(
                ensemble_f1 >= *f1,
                "ensemble macro-F1 {ensemble_f1} < {name} macro-F1 {f1}"
            );
        }
        Ok(())
    });
}
