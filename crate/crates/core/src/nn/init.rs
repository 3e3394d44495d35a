use rand::Rng;

/// Uniform in ±sqrt(6/(fan_in+fan_out)).
pub fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Row-major (rows × cols) matrix whose columns are orthonormal per
/// `rows × rows` block, built by Gram-Schmidt on Gaussian samples.
/// `cols` must be a multiple of `rows` (recurrent kernels are H × kH).
pub fn orthogonal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<f64> {
    assert!(cols % rows == 0, "orthogonal init needs cols % rows == 0");
    let mut out = vec![0.0; rows * cols];
    for block in 0..cols / rows {
        let q = orthonormal_square(rng, rows);
        for r in 0..rows {
            for c in 0..rows {
                out[r * cols + block * rows + c] = q[r * rows + c];
            }
        }
    }
    out
}

fn orthonormal_square<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // columns of q fill in one at a time; Gaussian draws via Box-Muller
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= dot * ci;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // degenerate draw, resample
        }
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    let mut q = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            q[i * n + j] = c[i];
        }
    }
    q
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
