//! Central finite differences for checking reverse-mode gradients.

use crate::float::Float;
use crate::tensor::Tensor;

/// Numerical gradient of scalar `f` at `x` by central differences with step `eps`.
pub fn central_difference<T: Float>(
    mut f: impl FnMut(&Tensor<T>) -> T,
    x: &Tensor<T>,
    eps: T,
) -> Tensor<T> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (eps + eps);
    }
    grad
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
///
/// `floor` keeps entries that are zero up to rounding from dominating.
pub fn max_relative_error<T: Float>(a: &Tensor<T>, b: &Tensor<T>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "gradient shapes differ");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let (x, y) = (x.as_f64(), y.as_f64());
            (x - y).abs() / x.abs().max(y.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}
