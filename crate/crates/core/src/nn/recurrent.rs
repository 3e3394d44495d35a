use crate::autograd::Tensor;
use crate::Result;

/// Single-layer LSTM returning the full hidden sequence.
///
/// Gate layout in the fused kernels is [input | forget | candidate | output].
/// Initial hidden and cell states are zero.
pub struct Lstm {
    pub wx: Tensor, // (d, 4H)
    pub wh: Tensor, // (H, 4H)
    pub b: Tensor,  // (4H)
    pub units: usize,
}

impl Lstm {
    /// (B,L,d) → (B,L,H).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape().to_vec();
        let (batch, len) = (s[0], s[1]);
        let hidden = self.units;
        let mut h = Tensor::zeros(vec![batch, hidden]);
        let mut c = Tensor::zeros(vec![batch, hidden]);
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let xt = x.index_axis(1, t)?;
            let gates = xt
                .matmul(&self.wx)?
                .add(&h.matmul(&self.wh)?)?
                .add(&self.b)?;
            let i = gates.narrow(1, 0, hidden)?.sigmoid();
            let f = gates.narrow(1, hidden, hidden)?.sigmoid();
            let g = gates.narrow(1, 2 * hidden, hidden)?.tanh();
            let o = gates.narrow(1, 3 * hidden, hidden)?.sigmoid();
            c = f.mul(&c)?.add(&i.mul(&g)?)?;
            h = o.mul(&c.tanh())?;
            steps.push(h.reshape(vec![batch, 1, hidden])?);
        }
        Tensor::concat(&steps, 1)
    }
}

/// Single-layer GRU returning the full hidden sequence.
///
/// Gate layout is [update | reset | candidate]; the reset gate scales the
/// recurrent contribution to the candidate. h_t = z·h_{t-1} + (1-z)·n_t.
pub struct Gru {
    pub wx: Tensor, // (d, 3H)
    pub wh: Tensor, // (H, 3H)
    pub b: Tensor,  // (3H)
    pub units: usize,
}

impl Gru {
    /// (B,L,d) → (B,L,H).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape().to_vec();
        let (batch, len) = (s[0], s[1]);
        let hidden = self.units;
        let mut h = Tensor::zeros(vec![batch, hidden]);
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let xt = x.index_axis(1, t)?;
            let gx = xt.matmul(&self.wx)?.add(&self.b)?;
            let gh = h.matmul(&self.wh)?;
            let z = gx
                .narrow(1, 0, hidden)?
                .add(&gh.narrow(1, 0, hidden)?)?
                .sigmoid();
            let r = gx
                .narrow(1, hidden, hidden)?
                .add(&gh.narrow(1, hidden, hidden)?)?
                .sigmoid();
            let n = gx
                .narrow(1, 2 * hidden, hidden)?
                .add(&r.mul(&gh.narrow(1, 2 * hidden, hidden)?)?)?
                .tanh();
            // h = z*h + (1-z)*n, written as n + z*(h - n)
            h = n.add(&z.mul(&h.sub(&n)?)?)?;
            steps.push(h.reshape(vec![batch, 1, hidden])?);
        }
        Tensor::concat(&steps, 1)
    }
}
