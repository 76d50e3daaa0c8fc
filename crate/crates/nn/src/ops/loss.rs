use crate::error::Result;
use crate::float::Float;
use crate::ops::elementwise::sigmoid;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Smooth-L1 (Huber with unit transition) of a single error value:
/// `e²/2` for `|e| < 1`, `|e| - 1/2` otherwise.
#[inline]
pub fn smooth_l1<T: Float>(e: T) -> T {
    let a = e.abs();
    if a < T::one() {
        T::half() * e * e
    } else {
        a - T::half()
    }
}

#[inline]
fn smooth_l1_grad<T: Float>(e: T) -> T {
    if e.abs() < T::one() {
        e
    } else {
        e.signum()
    }
}

impl<'t, T: Float> Var<'t, T> {
    /// Elementwise smooth-L1 of the values themselves (treated as errors).
    pub fn smooth_l1(self) -> Var<'t, T> {
        self.unary(smooth_l1, |e, _| smooth_l1_grad(e))
    }

    /// Mean squared difference against a constant tensor.
    pub fn mse_against(self, target: &Tensor<T>) -> Result<Var<'t, T>> {
        let t = self.tape().constant(target.clone());
        Ok(self.sub(t)?.sqr().mean_all())
    }

    /// Mean squared difference against a constant fill value.
    pub fn mse_to_value(self, value: T) -> Var<'t, T> {
        self.add_scalar(-value).sqr().mean_all()
    }

    /// Mean binary cross-entropy of `sigmoid(self)` against `target`, computed
    /// from logits in the overflow-free form
    /// `max(x, 0) - x·t + ln(1 + e^{-|x|})`.
    pub fn bce_with_logits(self, target: &Tensor<T>) -> Result<Var<'t, T>> {
        let x = self.value();
        x.expect_same_shape("bce_with_logits", target)?;
        let n = T::from_f64(x.numel() as f64);
        let total: T = x
            .data()
            .iter()
            .zip(target.data())
            .map(|(&l, &t)| l.max(T::zero()) - l * t + (-l.abs()).exp().ln_1p())
            .sum();
        let target = target.clone();
        Ok(self
            .tape()
            .record(Tensor::scalar(total / n), &[self], move |g, _| {
                let scale = g.item() / n;
                let dx = x
                    .zip_map(&target, |l, t| (sigmoid(l) - t) * scale)
                    .expect("shape checked on forward");
                vec![Some(dx)]
            }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn smooth_l1_values_and_continuity() {
        assert_eq!(smooth_l1(0.5f64), 0.125);
        assert_eq!(smooth_l1(1.0f64), 0.5);
        assert_eq!(smooth_l1(2.0f64), 1.5);
        assert_eq!(smooth_l1(-2.0f64), 1.5);
        let below = smooth_l1(1.0f64 - 1e-12);
        assert!((below - 0.5).abs() < 1e-11);
        assert_eq!(smooth_l1_grad(1.0f64), 1.0);
        assert!((smooth_l1_grad(1.0f64 - 1e-12) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn bce_of_uniform_half_is_ln2() {
        let tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 1, 3, 3]));
        let target = Tensor::from_fn(&[1, 1, 3, 3], |i| (i % 2) as f64);
        let loss = logits.bce_with_logits(&target).unwrap();
        assert!((loss.value().item() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
