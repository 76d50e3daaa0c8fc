use crate::error::{NnError, Result};
use crate::float::Float;
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam with bias correction. The learning rate is supplied per step so a
/// schedule can live outside the optimizer.
#[derive(Clone)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Float> Adam<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        Self::with_betas(store, T::from_f64(0.9), T::from_f64(0.999), T::from_f64(1e-8))
    }

    pub fn with_betas(store: &ParamStore<T>, beta1: T, beta2: T, eps: T) -> Self {
        let zeros: Vec<_> = store
            .ids()
            .map(|id| Tensor::zeros(store.get(id).shape()))
            .collect();
        Adam {
            beta1,
            beta2,
            eps,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. `grads` is in store order; `None` entries are
    /// left untouched.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &[Option<Tensor<T>>],
        lr: T,
    ) -> Result<()> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(NnError::InvalidArgument(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let param = store.get_mut(id);
            param.expect_same_shape("Adam::step", g)?;
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((p, &gv), mv), vv) in param.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = self.beta1 * *mv + (T::one() - self.beta1) * gv;
                *vv = self.beta2 * *vv + (T::one() - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::new(&[2], vec![1.0, -1.0]).unwrap()).unwrap();
        let mut adam = Adam::new(&store);
        let g = Tensor::new(&[2], vec![4.0, -0.5]).unwrap();
        adam.step(&mut store, &[Some(g)], 0.1).unwrap();
        let w = store.get(id).data();
        assert!((w[0] - 0.9).abs() < 1e-8);
        assert!((w[1] + 0.9).abs() < 1e-8);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::new(&[1], vec![5.0]).unwrap()).unwrap();
        let mut adam = Adam::new(&store);
        for _ in 0..2000 {
            let w = store.get(id).data()[0];
            let g = Tensor::new(&[1], vec![2.0 * (w - 2.0)]).unwrap();
            adam.step(&mut store, &[Some(g)], 0.05).unwrap();
        }
        assert!((store.get(id).data()[0] - 2.0).abs() < 1e-3);
    }
}
