use super::Tensor;
use crate::Result;

/// Compare reverse-mode gradients against central finite differences.
///
/// `f` must be deterministic. The relative error at each coordinate uses a
/// `max(1, |analytic|, |numeric|)` denominator; the maximum over coordinates
/// is returned.
pub fn grad_check(
    f: &dyn Fn(&Tensor) -> Result<Tensor>,
    point: &Tensor,
    epsilon: f64,
) -> Result<f64> {
    grad_check_filtered(f, point, epsilon, &|_, _| false)
}

/// Like [`grad_check`] but skips coordinates where `skip(index, value)` is
/// true — used to exclude kinks such as relu inputs at exactly 0.
pub fn grad_check_filtered(
    f: &dyn Fn(&Tensor) -> Result<Tensor>,
    point: &Tensor,
    epsilon: f64,
    skip: &dyn Fn(usize, f64) -> bool,
) -> Result<f64> {
    point.zero_grad();
    let loss = f(point)?;
    loss.backward()?;
    let analytic = point.grad();

    let base = point.to_vec();
    let mut max_rel = 0.0f64;
    for i in 0..base.len() {
        if skip(i, base[i]) {
            continue;
        }
        let mut probe = base.clone();
        probe[i] = base[i] + epsilon;
        point.set_data(&probe);
        let up = f(point)?.item()?;
        probe[i] = base[i] - epsilon;
        point.set_data(&probe);
        let down = f(point)?.item()?;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = 1.0f64.max(analytic[i].abs()).max(numeric.abs());
        max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
    }
    point.set_data(&base);
    Ok(max_rel)
}
