use super::tensor::{numel_of, Inner, Tensor};
use crate::{Error, Result};

/// Right operand may be a suffix of the left shape (broadcast over the
/// leading dimensions). Returns the rhs length.
fn suffix_broadcast(lhs: &[usize], rhs: &[usize]) -> Result<usize> {
    if rhs.len() > lhs.len() || &lhs[lhs.len() - rhs.len()..] != rhs {
        return Err(Error::ShapeMismatch {
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        });
    }
    Ok(numel_of(rhs))
}

fn elementwise_binary(
    lhs: &Tensor,
    rhs: &Tensor,
    fwd: fn(f64, f64) -> f64,
    dlhs: fn(f64, f64, f64) -> f64,
    drhs: fn(f64, f64, f64) -> f64,
) -> Result<Tensor> {
    let m = suffix_broadcast(lhs.shape(), rhs.shape())?;
    let ld = lhs.data();
    let rd = rhs.data();
    let out: Vec<f64> = ld
        .iter()
        .enumerate()
        .map(|(i, &x)| fwd(x, rd[i % m]))
        .collect();
    drop(ld);
    drop(rd);
    let (l, r) = (lhs.clone(), rhs.clone());
    Ok(Tensor::from_op(
        lhs.shape().to_vec(),
        out,
        vec![lhs.clone(), rhs.clone()],
        Box::new(move |o: &Inner| {
            let og = o.grad.borrow();
            let ld = l.inner.data.borrow();
            let rd = r.inner.data.borrow();
            if l.inner.requires_grad {
                let mut lg = l.inner.grad.borrow_mut();
                for i in 0..ld.len() {
                    lg[i] += dlhs(ld[i], rd[i % m], og[i]);
                }
            }
            if r.inner.requires_grad {
                let mut rg = r.inner.grad.borrow_mut();
                for i in 0..ld.len() {
                    rg[i % m] += drhs(ld[i], rd[i % m], og[i]);
                }
            }
        }),
    ))
}

fn unary_with(x: &Tensor, out: Vec<f64>, dgrad: impl Fn(f64, f64, f64) -> f64 + 'static) -> Tensor {
    let xc = x.clone();
    Tensor::from_op(
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        Box::new(move |o: &Inner| {
            let og = o.grad.borrow();
            let od = o.data.borrow();
            let xd = xc.inner.data.borrow();
            let mut xg = xc.inner.grad.borrow_mut();
            for i in 0..xd.len() {
                xg[i] += dgrad(xd[i], od[i], og[i]);
            }
        }),
    )
}

fn unary(x: &Tensor, fwd: fn(f64) -> f64, dgrad: fn(f64, f64, f64) -> f64) -> Tensor {
    let out = x.data().iter().map(|&v| fwd(v)).collect();
    unary_with(x, out, dgrad)
}

/// `a` is (m,k) row-major, `b` is (k,n); returns (m,n).
fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// `a` is (m,k), `b` is (n,k); returns a · bᵀ, shape (m,n).
fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[j * k + p];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `a` is (k,m), `b` is (k,n); returns aᵀ · b, shape (m,n).
fn gemm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// Split a shape around `axis` into (outer, mid, inner) extents.
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::InvalidArgument(format!(
            "axis {} out of range for shape {:?}",
            axis, shape
        )));
    }
    let outer = shape[..axis].iter().product();
    let mid = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, mid, inner))
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise_binary(self, rhs, |x, y| x + y, |_, _, g| g, |_, _, g| g)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise_binary(self, rhs, |x, y| x - y, |_, _, g| g, |_, _, g| -g)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise_binary(self, rhs, |x, y| x * y, |_, y, g| y * g, |x, _, g| x * g)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise_binary(
            self,
            rhs,
            |x, y| x / y,
            |_, y, g| g / y,
            |x, y, g| -g * x / (y * y),
        )
    }

    pub fn neg(&self) -> Tensor {
        unary(self, |x| -x, |_, _, g| -g)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|&v| v * c).collect();
        unary_with(self, out, move |_, _, g| c * g)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|&v| v + c).collect();
        unary_with(self, out, |_, _, g| g)
    }

    /// Elementwise x^p; callers keep x positive when p is fractional.
    pub fn powf(&self, p: f64) -> Tensor {
        let out = self.data().iter().map(|&v| v.powf(p)).collect();
        unary_with(self, out, move |x, _, g| p * x.powf(p - 1.0) * g)
    }

    pub fn tanh(&self) -> Tensor {
        unary(self, f64::tanh, |_, y, g| (1.0 - y * y) * g)
    }

    pub fn sigmoid(&self) -> Tensor {
        unary(
            self,
            |x| 1.0 / (1.0 + (-x).exp()),
            |_, y, g| y * (1.0 - y) * g,
        )
    }

    /// Subgradient at 0 is 0.
    pub fn relu(&self) -> Tensor {
        unary(
            self,
            |x| if x > 0.0 { x } else { 0.0 },
            |x, _, g| if x > 0.0 { g } else { 0.0 },
        )
    }

    pub fn exp(&self) -> Tensor {
        unary(self, f64::exp, |_, y, g| y * g)
    }

    pub fn log(&self) -> Tensor {
        unary(self, f64::ln, |x, _, g| g / x)
    }

    pub fn sqrt(&self) -> Tensor {
        unary(self, f64::sqrt, |_, y, g| g / (2.0 * y))
    }

    /// 2-D matrix product (m,k)·(k,n).
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (ls, rs) = (self.shape(), rhs.shape());
        if ls.len() != 2 || rs.len() != 2 || ls[1] != rs[0] {
            return Err(Error::ShapeMismatch {
                lhs: ls.to_vec(),
                rhs: rs.to_vec(),
            });
        }
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let out = gemm(&self.data(), &rhs.data(), m, k, n);
        let (l, r) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |o: &Inner| {
                let og = o.grad.borrow();
                if l.inner.requires_grad {
                    let da = gemm_nt(&og, &r.inner.data.borrow(), m, n, k);
                    let mut lg = l.inner.grad.borrow_mut();
                    for (gi, di) in lg.iter_mut().zip(da) {
                        *gi += di;
                    }
                }
                if r.inner.requires_grad {
                    let db = gemm_tn(&l.inner.data.borrow(), &og, k, m, n);
                    let mut rg = r.inner.grad.borrow_mut();
                    for (gi, di) in rg.iter_mut().zip(db) {
                        *gi += di;
                    }
                }
            }),
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let x = self.clone();
        Tensor::from_op(
            vec![],
            vec![s],
            vec![self.clone()],
            Box::new(move |o: &Inner| {
                let g = o.grad.borrow()[0];
                let mut xg = x.inner.grad.borrow_mut();
                xg.iter_mut().for_each(|v| *v += g);
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        self.sum_all().scale(1.0 / self.numel() as f64)
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let (outer, mid, inner) = axis_split(self.shape(), axis)?;
        let xd = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                for i in 0..inner {
                    out[o * inner + i] += xd[(o * mid + m) * inner + i];
                }
            }
        }
        drop(xd);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        let x = self.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |o2: &Inner| {
                let og = o2.grad.borrow();
                let mut xg = x.inner.grad.borrow_mut();
                for o in 0..outer {
                    for m in 0..mid {
                        for i in 0..inner {
                            xg[(o * mid + m) * inner + i] += og[o * inner + i];
                        }
                    }
                }
            }),
        ))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let mid = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::InvalidArgument(format!("axis {} out of range", axis)))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / mid as f64))
    }

    /// Max along an axis; the gradient routes to the first maximal element.
    pub fn max_axis(&self, axis: usize) -> Result<Tensor> {
        let (outer, mid, inner) = axis_split(self.shape(), axis)?;
        let xd = self.data();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                for i in 0..inner {
                    let v = xd[(o * mid + m) * inner + i];
                    if v > out[o * inner + i] {
                        out[o * inner + i] = v;
                        arg[o * inner + i] = m;
                    }
                }
            }
        }
        drop(xd);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        let x = self.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |o2: &Inner| {
                let og = o2.grad.borrow();
                let mut xg = x.inner.grad.borrow_mut();
                for o in 0..outer {
                    for i in 0..inner {
                        let m = arg[o * inner + i];
                        xg[(o * mid + m) * inner + i] += og[o * inner + i];
                    }
                }
            }),
        ))
    }

    /// Numerically stable softmax along the last axis.
    pub fn softmax_last(&self) -> Result<Tensor> {
        let shape = self.shape();
        if shape.is_empty() {
            return Err(Error::InvalidArgument(
                "softmax needs at least one axis".into(),
            ));
        }
        let n = shape[shape.len() - 1];
        let rows = self.numel() / n;
        let xd = self.data();
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * n..(r + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[r * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                out[r * n + j] /= sum;
            }
        }
        drop(xd);
        let x = self.clone();
        Ok(Tensor::from_op(
            shape.to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |o: &Inner| {
                let og = o.grad.borrow();
                let od = o.data.borrow();
                let mut xg = x.inner.grad.borrow_mut();
                for r in 0..rows {
                    let s = &od[r * n..(r + 1) * n];
                    let g = &og[r * n..(r + 1) * n];
                    let dot: f64 = s.iter().zip(g).map(|(si, gi)| si * gi).sum();
                    for j in 0..n {
                        xg[r * n + j] += s[j] * (g[j] - dot);
                    }
                }
            }),
        ))
    }

    /// Contiguous slice of `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let (outer, mid, inner) = axis_split(self.shape(), axis)?;
        if start + len > mid {
            return Err(Error::IndexOutOfBounds {
                index: start + len,
                size: mid,
            });
        }
        let xd = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for m in start..start + len {
                let base = (o * mid + m) * inner;
                out.extend_from_slice(&xd[base..base + inner]);
            }
        }
        drop(xd);
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let x = self.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |o2: &Inner| {
                let og = o2.grad.borrow();
                let mut xg = x.inner.grad.borrow_mut();
                let mut idx = 0;
                for o in 0..outer {
                    for m in start..start + len {
                        let base = (o * mid + m) * inner;
                        for i in 0..inner {
                            xg[base + i] += og[idx];
                            idx += 1;
                        }
                    }
                }
            }),
        ))
    }

    /// Select index `i` along `axis`, dropping that axis.
    pub fn index_axis(&self, axis: usize, i: usize) -> Result<Tensor> {
        let t = self.narrow(axis, i, 1)?;
        let mut shape = t.shape().to_vec();
        shape.remove(axis);
        t.reshape(shape)
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if numel_of(&shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                lhs: self.shape().to_vec(),
                rhs: shape,
            });
        }
        let out = self.to_vec();
        let x = self.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |o: &Inner| {
                let og = o.grad.borrow();
                let mut xg = x.inner.grad.borrow_mut();
                for (gi, oi) in xg.iter_mut().zip(og.iter()) {
                    *gi += oi;
                }
            }),
        ))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let first = parts[0].shape().to_vec();
        let (outer, _, inner) = axis_split(&first, axis)?;
        let mut mids = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::ShapeMismatch {
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            mids.push(s[axis]);
        }
        let total_mid: usize = mids.iter().sum();
        let mut out = Vec::with_capacity(outer * total_mid * inner);
        for o in 0..outer {
            for (p, &mid) in parts.iter().zip(&mids) {
                let pd = p.data();
                let base = o * mid * inner;
                out.extend_from_slice(&pd[base..base + mid * inner]);
            }
        }
        let mut shape = first.clone();
        shape[axis] = total_mid;
        let parts_c: Vec<Tensor> = parts.to_vec();
        let mids_c = mids.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            parts.to_vec(),
            Box::new(move |o2: &Inner| {
                let og = o2.grad.borrow();
                let mut idx = 0;
                let mut grads: Vec<_> = parts_c
                    .iter()
                    .map(|p| p.inner.grad.borrow_mut())
                    .collect();
                for o in 0..outer {
                    for (pi, &mid) in mids_c.iter().enumerate() {
                        let base = o * mid * inner;
                        for j in 0..mid * inner {
                            grads[pi][base + j] += og[idx];
                            idx += 1;
                        }
                    }
                }
            }),
        ))
    }
}
