use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;

use crate::autograd::{Inner, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Token-index → row gather over a (V × d) table.
pub struct Embedding {
    pub table: Tensor,
    pub freeze_pad: bool,
}

impl Embedding {
    pub fn new(table: Tensor, freeze_pad: bool) -> Embedding {
        Embedding { table, freeze_pad }
    }

    /// `indices` is a B×L batch flattened row-major; output is (B, L, d).
    pub fn forward(&self, indices: &[usize], batch: usize, len: usize) -> Result<Tensor> {
        let shape = self.table.shape().to_vec();
        let (vocab, dim) = (shape[0], shape[1]);
        if indices.len() != batch * len {
            return Err(Error::InvalidArgument(format!(
                "expected {} indices, got {}",
                batch * len,
                indices.len()
            )));
        }
        for &ix in indices {
            if ix >= vocab {
                return Err(Error::IndexOutOfBounds {
                    index: ix,
                    size: vocab,
                });
            }
        }
        let td = self.table.data();
        let mut out = Vec::with_capacity(indices.len() * dim);
        for &ix in indices {
            out.extend_from_slice(&td[ix * dim..(ix + 1) * dim]);
        }
        drop(td);
        let table = self.table.clone();
        let idx: Vec<usize> = indices.to_vec();
        let freeze_pad = self.freeze_pad;
        Ok(Tensor::from_op(
            vec![batch, len, dim],
            out,
            vec![self.table.clone()],
            Box::new(move |o: &Inner| {
                let og = o.grad.borrow();
                let mut tg = table.inner.grad.borrow_mut();
                for (row, &ix) in idx.iter().enumerate() {
                    if freeze_pad && ix == 0 {
                        continue;
                    }
                    for j in 0..dim {
                        tg[ix * dim + j] += og[row * dim + j];
                    }
                }
            }),
        ))
    }
}

/// Affine transform (B,in) → (B,out).
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn new(w: Tensor, b: Tensor) -> Dense {
        Dense { w, b }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.w)?.add(&self.b)
    }
}

/// Batch normalization over the batch axis of a (B, n) activation.
///
/// Training uses batch statistics (ε = 1e-5) and folds them into running
/// estimates with momentum 0.9; eval uses the running estimates only.
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: RefCell<Vec<f64>>,
    pub running_var: RefCell<Vec<f64>>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(features: usize) -> Result<BatchNorm> {
        Ok(BatchNorm {
            gamma: Tensor::param(vec![features], vec![1.0; features])?,
            beta: Tensor::param(vec![features], vec![0.0; features])?,
            running_mean: RefCell::new(vec![0.0; features]),
            running_var: RefCell::new(vec![1.0; features]),
            momentum: 0.9,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let shape = x.shape();
        if shape.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "batch norm expects (B, n), got {:?}",
                shape
            )));
        }
        let batch = shape[0];
        match mode {
            Mode::Train => {
                if batch < 2 {
                    return Err(Error::InvalidArgument(
                        "batch norm in train mode needs batch size >= 2".into(),
                    ));
                }
                let mean = x.mean_axis(0)?;
                let centered = x.sub(&mean)?;
                let var = centered.mul(&centered)?.mean_axis(0)?;
                {
                    let mut rm = self.running_mean.borrow_mut();
                    let mut rv = self.running_var.borrow_mut();
                    let md = mean.data();
                    let vd = var.data();
                    for i in 0..rm.len() {
                        rm[i] = self.momentum * rm[i] + (1.0 - self.momentum) * md[i];
                        rv[i] = self.momentum * rv[i] + (1.0 - self.momentum) * vd[i];
                    }
                }
                let denom = var.add_scalar(self.eps).sqrt();
                centered.div(&denom)?.mul(&self.gamma)?.add(&self.beta)
            }
            Mode::Eval => {
                let rm = Tensor::from_vec(
                    vec![self.running_mean.borrow().len()],
                    self.running_mean.borrow().clone(),
                )?;
                let rv_data: Vec<f64> = self
                    .running_var
                    .borrow()
                    .iter()
                    .map(|v| (v + self.eps).sqrt())
                    .collect();
                let denom = Tensor::from_vec(vec![rv_data.len()], rv_data)?;
                x.sub(&rm)?.div(&denom)?.mul(&self.gamma)?.add(&self.beta)
            }
        }
    }
}

/// Dense → BatchNorm → ReLU → Dropout.
pub struct DenseBlock {
    pub dense: Dense,
    pub norm: BatchNorm,
    pub dropout: f64,
}

impl DenseBlock {
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let h = self.dense.forward(x)?;
        let h = self.norm.forward(&h, mode)?;
        let h = h.relu();
        dropout(&h, self.dropout, mode, rng)
    }
}

/// Inverted dropout: train-mode masks scale surviving units by 1/(1-rate).
pub fn dropout(x: &Tensor, rate: f64, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..x.numel())
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    x.mul(&Tensor::from_vec(x.shape().to_vec(), mask)?)
}

/// Valid temporal convolution with bias: (B,L,d) ⊛ (w,d,F) → (B, L-w+1, F).
/// The activation is applied by the caller.
pub struct Conv1d {
    pub filters: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let xs = x.shape().to_vec();
        let ws = self.filters.shape().to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[2] != ws[1] {
            return Err(Error::ShapeMismatch { lhs: xs, rhs: ws });
        }
        let (batch, len, dim) = (xs[0], xs[1], xs[2]);
        let (width, nf) = (ws[0], ws[2]);
        if len < width {
            return Err(Error::InvalidArgument(format!(
                "sequence length {len} shorter than filter width {width}"
            )));
        }
        let out_len = len - width + 1;
        let xd = x.data();
        let wd = self.filters.data();
        let bd = self.bias.data();
        let mut out = vec![0.0; batch * out_len * nf];
        for b in 0..batch {
            for t in 0..out_len {
                for f in 0..nf {
                    let mut acc = bd[f];
                    for i in 0..width {
                        let xrow = &xd[(b * len + t + i) * dim..(b * len + t + i + 1) * dim];
                        for c in 0..dim {
                            acc += xrow[c] * wd[(i * dim + c) * nf + f];
                        }
                    }
                    out[(b * out_len + t) * nf + f] = acc;
                }
            }
        }
        drop(xd);
        drop(wd);
        drop(bd);
        let (xc, wc, bc) = (x.clone(), self.filters.clone(), self.bias.clone());
        Ok(Tensor::from_op(
            vec![batch, out_len, nf],
            out,
            vec![x.clone(), self.filters.clone(), self.bias.clone()],
            Box::new(move |o: &Inner| {
                let og = o.grad.borrow();
                let xd = xc.inner.data.borrow();
                let wd = wc.inner.data.borrow();
                if xc.inner.requires_grad {
                    let mut xg = xc.inner.grad.borrow_mut();
                    for b in 0..batch {
                        for t in 0..out_len {
                            for f in 0..nf {
                                let g = og[(b * out_len + t) * nf + f];
                                if g == 0.0 {
                                    continue;
                                }
                                for i in 0..width {
                                    for c in 0..dim {
                                        xg[(b * len + t + i) * dim + c] +=
                                            g * wd[(i * dim + c) * nf + f];
                                    }
                                }
                            }
                        }
                    }
                }
                if wc.inner.requires_grad {
                    let mut wg = wc.inner.grad.borrow_mut();
                    for b in 0..batch {
                        for t in 0..out_len {
                            for f in 0..nf {
                                let g = og[(b * out_len + t) * nf + f];
                                if g == 0.0 {
                                    continue;
                                }
                                for i in 0..width {
                                    for c in 0..dim {
                                        wg[(i * dim + c) * nf + f] +=
                                            g * xd[(b * len + t + i) * dim + c];
                                    }
                                }
                            }
                        }
                    }
                }
                if bc.inner.requires_grad {
                    let mut bg = bc.inner.grad.borrow_mut();
                    for b in 0..batch {
                        for t in 0..out_len {
                            for f in 0..nf {
                                bg[f] += og[(b * out_len + t) * nf + f];
                            }
                        }
                    }
                }
            }),
        ))
    }
}

/// Windowed max over time, size 2 / stride 2: (B,L,F) → (B,⌊L/2⌋,F).
/// A trailing odd element is dropped; ties route gradient to the first.
pub fn maxpool1d(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 || s[1] < 2 {
        return Err(Error::InvalidArgument(format!(
            "maxpool1d expects (B, L>=2, F), got {:?}",
            s
        )));
    }
    let (b, l, f) = (s[0], s[1], s[2]);
    let half = l / 2;
    let even = x.narrow(1, 0, half * 2)?;
    even.reshape(vec![b, half, 2, f])?.max_axis(2)
}

/// Per-feature max over the time axis: (B,L,H) → (B,H).
pub fn global_maxpool(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 || s[1] < 1 {
        return Err(Error::InvalidArgument(format!(
            "global_maxpool expects (B, L>=1, H), got {:?}",
            s
        )));
    }
    x.max_axis(1)
}

/// Additive (Bahdanau-style) attention over a hidden sequence.
///
/// Scores e_i = vᵀ·tanh(W·h_i + b), weights = softmax(e), context = Σ w_i·h_i.
pub struct AdditiveAttention {
    pub w: Tensor,
    pub b: Tensor,
    pub v: Tensor,
}

impl AdditiveAttention {
    /// Input (B,L,H); returns (context (B,H), weights (B,L)).
    pub fn forward(&self, h: &Tensor) -> Result<(Tensor, Tensor)> {
        let s = h.shape().to_vec();
        if s.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "attention expects (B,L,H), got {:?}",
                s
            )));
        }
        let (batch, len, hidden) = (s[0], s[1], s[2]);
        let attn_dim = self.w.shape()[1];
        let flat = h.reshape(vec![batch * len, hidden])?;
        let scores = flat
            .matmul(&self.w)?
            .add(&self.b)?
            .tanh()
            .matmul(&self.v.reshape(vec![attn_dim, 1])?)?
            .reshape(vec![batch, len])?;
        let weights = scores.softmax_last()?;
        let context = weighted_sum_over_time(h, &weights)?;
        Ok((context, weights))
    }
}

/// context[b,k] = Σ_l weights[b,l] · h[b,l,k].
pub fn weighted_sum_over_time(h: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let hs = h.shape().to_vec();
    let ws = weights.shape().to_vec();
    if hs.len() != 3 || ws.len() != 2 || hs[0] != ws[0] || hs[1] != ws[1] {
        return Err(Error::ShapeMismatch { lhs: hs, rhs: ws });
    }
    let (batch, len, hidden) = (hs[0], hs[1], hs[2]);
    let hd = h.data();
    let wd = weights.data();
    let mut out = vec![0.0; batch * hidden];
    for b in 0..batch {
        for l in 0..len {
            let wv = wd[b * len + l];
            for k in 0..hidden {
                out[b * hidden + k] += wv * hd[(b * len + l) * hidden + k];
            }
        }
    }
    drop(hd);
    drop(wd);
    let (hc, wc) = (h.clone(), weights.clone());
    Ok(Tensor::from_op(
        vec![batch, hidden],
        out,
        vec![h.clone(), weights.clone()],
        Box::new(move |o: &Inner| {
            let og = o.grad.borrow();
            let hd = hc.inner.data.borrow();
            let wd = wc.inner.data.borrow();
            if hc.inner.requires_grad {
                let mut hg = hc.inner.grad.borrow_mut();
                for b in 0..batch {
                    for l in 0..len {
                        let wv = wd[b * len + l];
                        for k in 0..hidden {
                            hg[(b * len + l) * hidden + k] += wv * og[b * hidden + k];
                        }
                    }
                }
            }
            if wc.inner.requires_grad {
                let mut wg = wc.inner.grad.borrow_mut();
                for b in 0..batch {
                    for l in 0..len {
                        let mut acc = 0.0;
                        for k in 0..hidden {
                            acc += og[b * hidden + k] * hd[(b * len + l) * hidden + k];
                        }
                        wg[b * len + l] += acc;
                    }
                }
            }
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad_check;
    use rand::prelude::*;

    #[test]
    fn embedding_gathers_rows() {
        let table = Tensor::param(vec![3, 2], vec![0.0, 0.0, 9.0, 9.0, 1.0, 2.0]).unwrap();
        let emb = Embedding::new(table, true);
        let out = emb.forward(&[2], 1, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert_eq!(out.to_vec(), vec![1.0, 2.0]);
        assert!(emb.forward(&[5], 1, 1).is_err());
    }

    #[test]
    fn embedding_pad_row_frozen() {
        let table = Tensor::param(vec![2, 2], vec![0.0; 4]).unwrap();
        let emb = Embedding::new(table.clone(), true);
        let out = emb.forward(&[0, 1], 1, 2).unwrap();
        out.sum_all().backward().unwrap();
        assert_eq!(table.grad(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn embedding_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let table = Tensor::param(vec![4, 2], data).unwrap();
        let f = |p: &Tensor| {
            let emb = Embedding::new(p.clone(), false);
            Ok(emb.forward(&[1, 3, 1], 1, 3)?.powf(2.0).sum_all())
        };
        let err = grad_check(&f, &table, 1e-5).unwrap();
        assert!(err < 1e-6, "embedding grad error {err}");
    }

    #[test]
    fn conv_all_ones_analytic() {
        // w=3, d=2, one all-ones filter, zero bias: every output = 6
        let x = Tensor::from_vec(vec![1, 5, 2], vec![1.0; 10]).unwrap();
        let conv = Conv1d {
            filters: Tensor::from_vec(vec![3, 2, 1], vec![1.0; 6]).unwrap(),
            bias: Tensor::from_vec(vec![1], vec![0.0]).unwrap(),
        };
        let out = conv.forward(&x).unwrap();
        assert_eq!(out.shape(), &[1, 3, 1]);
        assert!(out.to_vec().iter().all(|&v| v == 6.0));
    }

    #[test]
    fn conv_output_length() {
        let x = Tensor::from_vec(vec![1, 25, 2], vec![0.5; 50]).unwrap();
        let conv = Conv1d {
            filters: Tensor::from_vec(vec![3, 2, 4], vec![0.1; 24]).unwrap(),
            bias: Tensor::from_vec(vec![4], vec![0.0; 4]).unwrap(),
        };
        assert_eq!(conv.forward(&x).unwrap().shape(), &[1, 23, 4]);
        let short = Tensor::from_vec(vec![1, 2, 2], vec![0.0; 4]).unwrap();
        assert!(conv.forward(&short).is_err());
    }

    #[test]
    fn conv_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Tensor::param(vec![2, 2, 3], data).unwrap();
        let x = Tensor::from_vec(
            vec![1, 4, 2],
            (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let f = move |p: &Tensor| {
            let conv = Conv1d {
                filters: p.clone(),
                bias: Tensor::from_vec(vec![3], vec![0.1, -0.2, 0.3]).unwrap(),
            };
            Ok(conv.forward(&x)?.tanh().sum_all())
        };
        let err = grad_check(&f, &w, 1e-5).unwrap();
        assert!(err < 1e-6, "conv grad error {err}");
    }

    #[test]
    fn maxpool_windows_and_truncation() {
        let x = Tensor::from_vec(vec![1, 4, 1], vec![1.0, 3.0, 2.0, 0.0]).unwrap();
        assert_eq!(maxpool1d(&x).unwrap().to_vec(), vec![3.0, 2.0]);
        let odd = Tensor::from_vec(vec![1, 23, 1], (0..23).map(|i| i as f64).collect()).unwrap();
        assert_eq!(maxpool1d(&odd).unwrap().shape(), &[1, 11, 1]);
    }

    #[test]
    fn maxpool_tie_routes_to_first() {
        let x = Tensor::param(vec![1, 2, 1], vec![2.0, 2.0]).unwrap();
        maxpool1d(&x).unwrap().sum_all().backward().unwrap();
        assert_eq!(x.grad(), vec![1.0, 0.0]);
    }

    #[test]
    fn global_maxpool_cases() {
        let single = Tensor::from_vec(vec![1, 1, 3], vec![4.0, 5.0, 6.0]).unwrap();
        assert_eq!(global_maxpool(&single).unwrap().to_vec(), vec![4.0, 5.0, 6.0]);
        let x = Tensor::from_vec(vec![1, 3, 1], vec![-1.0, 5.0, 3.0]).unwrap();
        assert_eq!(global_maxpool(&x).unwrap().to_vec(), vec![5.0]);
    }

    #[test]
    fn batchnorm_identity_on_standardized_input() {
        // zero-mean unit-variance columns, gamma=1 beta=0
        let x = Tensor::from_vec(vec![2, 2], vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let bn = BatchNorm::new(2).unwrap();
        let out = bn.forward(&x, Mode::Train).unwrap();
        for (o, i) in out.to_vec().iter().zip(x.to_vec()) {
            assert!((o - i).abs() < 1e-2, "bn output {o} vs input {i}");
        }
    }

    #[test]
    fn batchnorm_rejects_batch_of_one_in_train() {
        let x = Tensor::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let bn = BatchNorm::new(2).unwrap();
        assert!(bn.forward(&x, Mode::Train).is_err());
        assert!(bn.forward(&x, Mode::Eval).is_ok());
    }

    #[test]
    fn eval_output_independent_of_batch_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bn = BatchNorm::new(3).unwrap();
        // push some statistics through
        for _ in 0..5 {
            let data: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Tensor::from_vec(vec![4, 3], data).unwrap();
            bn.forward(&x, Mode::Train).unwrap();
        }
        let row: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut batch_data = row.clone();
        batch_data.extend((0..3).map(|_| rng.gen_range(-1.0..1.0)));
        let solo = bn
            .forward(&Tensor::from_vec(vec![1, 3], row).unwrap(), Mode::Eval)
            .unwrap();
        let batched = bn
            .forward(&Tensor::from_vec(vec![2, 3], batch_data).unwrap(), Mode::Eval)
            .unwrap();
        for (a, b) in solo.to_vec().iter().zip(batched.to_vec().iter().take(3)) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn batchnorm_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::param(vec![4, 2], data).unwrap();
        let f = |p: &Tensor| {
            let bn = BatchNorm::new(2).unwrap();
            Ok(bn.forward(p, Mode::Train)?.powf(2.0).sum_all())
        };
        let err = grad_check(&f, &x, 1e-5).unwrap();
        assert!(err < 1e-6, "batchnorm grad error {err}");
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::from_vec(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = dropout(&x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(out.to_vec(), x.to_vec());
        let out = dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(out.to_vec(), x.to_vec());
    }

    #[test]
    fn attention_uniform_on_identical_steps() {
        let h = Tensor::from_vec(vec![1, 4, 2], vec![0.3, -0.7].repeat(4)).unwrap();
        let attn = AdditiveAttention {
            w: Tensor::from_vec(vec![2, 2], vec![0.5, -0.1, 0.2, 0.9]).unwrap(),
            b: Tensor::from_vec(vec![2], vec![0.1, -0.3]).unwrap(),
            v: Tensor::from_vec(vec![2], vec![1.0, 0.7]).unwrap(),
        };
        let (context, weights) = attn.forward(&h).unwrap();
        for w in weights.to_vec() {
            assert!((w - 0.25).abs() < 1e-12);
        }
        let c = context.to_vec();
        assert!((c[0] - 0.3).abs() < 1e-12 && (c[1] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = Tensor::from_vec(
            vec![2, 5, 3],
            (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let attn = AdditiveAttention {
            w: Tensor::from_vec(vec![3, 3], (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap(),
            b: Tensor::from_vec(vec![3], vec![0.0; 3]).unwrap(),
            v: Tensor::from_vec(vec![3], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap(),
        };
        let (_, weights) = attn.forward(&h).unwrap();
        let wd = weights.to_vec();
        for b in 0..2 {
            let sum: f64 = wd[b * 5..(b + 1) * 5].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (len, hidden) = (5, 4);
        let h_data: Vec<f64> = (0..len * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = Tensor::param(vec![1, len, hidden], h_data).unwrap();
        let w = Tensor::from_vec(
            vec![hidden, hidden],
            (0..hidden * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let v = Tensor::from_vec(
            vec![hidden],
            (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let f = move |p: &Tensor| {
            let attn = AdditiveAttention {
                w: w.clone(),
                b: Tensor::from_vec(vec![hidden], vec![0.1; hidden]).unwrap(),
                v: v.clone(),
            };
            let (context, _) = attn.forward(p)?;
            Ok(context.powf(2.0).sum_all())
        };
        let err = grad_check(&f, &h, 1e-5).unwrap();
        assert!(err < 1e-6, "attention grad error {err}");
    }
}
