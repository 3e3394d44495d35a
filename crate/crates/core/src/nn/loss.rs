use crate::autograd::{Inner, Tensor};
use crate::{Error, Result};

const PROB_CLAMP: f64 = 1e-12;

/// Class-weighted focal loss settings: γ focusing exponent and per-class α.
#[derive(Debug, Clone)]
pub struct FocalLossConfig {
    pub gamma: f64,
    pub class_weights: Vec<f64>,
}

impl FocalLossConfig {
    pub fn new(gamma: f64, class_weights: Vec<f64>) -> Result<FocalLossConfig> {
        if gamma < 0.0 {
            return Err(Error::InvalidArgument(format!("gamma {gamma} must be >= 0")));
        }
        if class_weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument(
                "class weights must be positive".into(),
            ));
        }
        Ok(FocalLossConfig {
            gamma,
            class_weights,
        })
    }

    pub fn uniform(num_classes: usize, gamma: f64) -> FocalLossConfig {
        FocalLossConfig {
            gamma,
            class_weights: vec![1.0; num_classes],
        }
    }

    /// Inverse-frequency weights N/(C·n_c) from per-class counts.
    pub fn inverse_frequency(counts: &[usize], gamma: f64) -> Result<FocalLossConfig> {
        let total: usize = counts.iter().sum();
        let c = counts.len();
        let weights: Vec<f64> = counts
            .iter()
            .map(|&n| {
                if n == 0 {
                    1.0
                } else {
                    total as f64 / (c as f64 * n as f64)
                }
            })
            .collect();
        FocalLossConfig::new(gamma, weights)
    }
}

/// Mean over the batch of −α_y·(1−p_y)^γ·log(p_y).
///
/// `probs` is (B,C) softmax output, or (B,1) sigmoid output for the binary
/// case (row value is the probability of class 1). p_y is clamped to
/// [1e-12, 1−1e-12] before the log.
pub fn focal_loss(probs: &Tensor, targets: &[usize], config: &FocalLossConfig) -> Result<Tensor> {
    let shape = probs.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "focal loss expects (B,C) probabilities, got {:?}",
            shape
        )));
    }
    let (batch, classes) = (shape[0], shape[1]);
    if targets.len() != batch {
        return Err(Error::InvalidArgument(format!(
            "{} targets for batch of {}",
            targets.len(),
            batch
        )));
    }
    let effective_classes = if classes == 1 { 2 } else { classes };
    for &t in targets {
        if t >= effective_classes {
            return Err(Error::IndexOutOfBounds {
                index: t,
                size: effective_classes,
            });
        }
    }
    if config.class_weights.len() != effective_classes {
        return Err(Error::InvalidArgument(format!(
            "{} class weights for {} classes",
            config.class_weights.len(),
            effective_classes
        )));
    }
    let pd = probs.data();
    if classes > 1 {
        for b in 0..batch {
            let sum: f64 = pd[b * classes..(b + 1) * classes].iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "probability row {b} sums to {sum}, expected 1"
                )));
            }
        }
    }
    let gamma = config.gamma;
    let alphas = config.class_weights.clone();
    let tv: Vec<usize> = targets.to_vec();

    // p_y per example, with a flag for the binary-complement case
    let p_true = move |pd: &[f64], b: usize, t: usize| -> (f64, bool) {
        if classes == 1 {
            let p = pd[b];
            if t == 1 {
                (p, false)
            } else {
                (1.0 - p, true)
            }
        } else {
            (pd[b * classes + t], false)
        }
    };

    let mut total = 0.0;
    for b in 0..batch {
        let (p, _) = p_true(&pd, b, tv[b]);
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total += -alphas[tv[b]] * (1.0 - p).powf(gamma) * p.ln();
    }
    let loss = total / batch as f64;
    drop(pd);

    let pc = probs.clone();
    Ok(Tensor::from_op(
        vec![],
        vec![loss],
        vec![probs.clone()],
        Box::new(move |o: &Inner| {
            let g = o.grad.borrow()[0];
            let pd = pc.inner.data.borrow();
            let mut pg = pc.inner.grad.borrow_mut();
            for b in 0..batch {
                let (p_raw, complement) = p_true(&pd, b, tv[b]);
                if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p_raw) {
                    continue; // clamped region: zero gradient
                }
                let p = p_raw;
                let a = alphas[tv[b]];
                let focus = (1.0 - p).powf(gamma);
                let dfocus = if gamma == 0.0 {
                    0.0
                } else {
                    gamma * (1.0 - p).powf(gamma - 1.0)
                };
                // d/dp of -a*(1-p)^γ*ln p
                let dp = a * dfocus * p.ln() - a * focus / p;
                let dp = dp / batch as f64 * g;
                if classes == 1 {
                    pg[b] += if complement { -dp } else { dp };
                } else {
                    pg[b * classes + tv[b]] += dp;
                }
            }
        }),
    ))
}

/// Mean cross-entropy: focal loss with γ=0 and uniform α.
pub fn cross_entropy(probs: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let classes = probs.shape()[1].max(2);
    focal_loss(probs, targets, &FocalLossConfig::uniform(classes, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad_check;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn probs_of(rows: &[Vec<f64>]) -> Tensor {
        let b = rows.len();
        let c = rows[0].len();
        Tensor::from_vec(vec![b, c], rows.concat()).unwrap()
    }

    #[test]
    fn gamma_zero_is_cross_entropy_at_half() {
        let p = probs_of(&[vec![0.5, 0.5]]);
        let loss = focal_loss(&p, &[0], &FocalLossConfig::uniform(2, 0.0)).unwrap();
        assert!((loss.item().unwrap() - 0.5f64.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn focal_scalar_oracle_single() {
        // γ=2, α=1, p_y=0.9 → 0.01·(−ln 0.9)
        let p = probs_of(&[vec![0.9, 0.1]]);
        let loss = focal_loss(&p, &[0], &FocalLossConfig::uniform(2, 2.0)).unwrap();
        let expect = 0.01 * -(0.9f64.ln());
        assert!((loss.item().unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn focal_scalar_oracle_weighted_batch() {
        // γ=2, α=[0.25,0.75], (class0, p=0.9) and (class1, p=0.6)
        let p = probs_of(&[vec![0.9, 0.1], vec![0.4, 0.6]]);
        let cfg = FocalLossConfig::new(2.0, vec![0.25, 0.75]).unwrap();
        let loss = focal_loss(&p, &[0, 1], &cfg).unwrap();
        let expect = (0.25 * 0.01 * -(0.9f64.ln()) + 0.75 * 0.16 * -(0.6f64.ln())) / 2.0;
        assert!((loss.item().unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn target_out_of_range_is_an_error() {
        let p = probs_of(&[vec![0.5, 0.5]]);
        assert!(focal_loss(&p, &[2], &FocalLossConfig::uniform(2, 2.0)).is_err());
    }

    #[test]
    fn matches_cross_entropy_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let b = rng.gen_range(1..6);
            let c = rng.gen_range(2..5);
            let logits: Vec<f64> = (0..b * c).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let probs = Tensor::from_vec(vec![b, c], logits)
                .unwrap()
                .softmax_last()
                .unwrap();
            let targets: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
            let fl = focal_loss(&probs, &targets, &FocalLossConfig::uniform(c, 0.0))
                .unwrap()
                .item()
                .unwrap();
            let pd = probs.to_vec();
            let ce: f64 = targets
                .iter()
                .enumerate()
                .map(|(i, &t)| -pd[i * c + t].ln())
                .sum::<f64>()
                / b as f64;
            assert!((fl - ce).abs() < 1e-12, "focal {fl} vs ce {ce}");
        }
    }

    #[test]
    fn monotone_decreasing_in_p() {
        let cfg = FocalLossConfig::new(2.0, vec![0.7, 1.3]).unwrap();
        let mut last = f64::INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let t = probs_of(&[vec![p, 1.0 - p]]);
            let l = focal_loss(&t, &[0], &cfg).unwrap().item().unwrap();
            assert!(l < last, "loss not decreasing at p={p}");
            last = l;
        }
    }

    #[test]
    fn binary_sigmoid_column_supported() {
        let p = Tensor::from_vec(vec![2, 1], vec![0.9, 0.2]).unwrap();
        let cfg = FocalLossConfig::uniform(2, 0.0);
        let loss = focal_loss(&p, &[1, 0], &cfg).unwrap().item().unwrap();
        let expect = (-(0.9f64.ln()) + -(0.8f64.ln())) / 2.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn focal_grad_check_through_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = Tensor::param(vec![2, 3], logits).unwrap();
            let cfg = FocalLossConfig::new(2.0, vec![0.5, 1.0, 1.5]).unwrap();
            let f = move |p: &Tensor| focal_loss(&p.softmax_last()?, &[0, 2], &cfg);
            let err = grad_check(&f, &x, 1e-5).unwrap();
            assert!(err < 1e-6, "seed {seed}: focal grad error {err}");
        }
    }
}
