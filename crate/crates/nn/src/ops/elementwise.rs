use std::rc::Rc;

use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Output shape and per-operand strides (0 on broadcast axes) of a binary op.
struct Broadcast {
    shape: Vec<usize>,
    lhs_strides: Vec<usize>,
    rhs_strides: Vec<usize>,
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (s, &d) in strides.iter_mut().zip(shape).rev() {
        *s = acc;
        acc *= d;
    }
    strides
}

fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    contiguous_strides(shape)
        .into_iter()
        .zip(shape.iter().zip(out))
        .map(|(s, (&d, &o))| if d == 1 && o != 1 { 0 } else { s })
        .collect()
}

impl Broadcast {
    fn new(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<Self> {
        if lhs.len() != rhs.len() {
            return Err(NnError::shape(op, format!("rank {lhs:?} vs {rhs:?}")));
        }
        let shape = lhs
            .iter()
            .zip(rhs)
            .map(|(&a, &b)| match (a, b) {
                _ if a == b => Ok(a),
                (1, b) => Ok(b),
                (a, 1) => Ok(a),
                _ => Err(NnError::shape(op, format!("{lhs:?} vs {rhs:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Broadcast {
            lhs_strides: broadcast_strides(lhs, &shape),
            rhs_strides: broadcast_strides(rhs, &shape),
            shape,
        })
    }
}

/// Visits every output index together with the matching offsets into two
/// broadcast operands. The innermost axis is walked in a tight loop.
fn for_each_offset(
    shape: &[usize],
    a_strides: &[usize],
    b_strides: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = shape.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let numel: usize = shape.iter().product();
    if numel == 0 {
        return;
    }
    let inner = shape[rank - 1];
    let (sa, sb) = (a_strides[rank - 1], b_strides[rank - 1]);
    let mut index = vec![0usize; rank - 1];
    let mut out = 0;
    loop {
        let base_a: usize = index.iter().zip(a_strides).map(|(i, s)| i * s).sum();
        let base_b: usize = index.iter().zip(b_strides).map(|(i, s)| i * s).sum();
        for k in 0..inner {
            f(out, base_a + k * sa, base_b + k * sb);
            out += 1;
        }
        // odometer over the outer axes
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < shape[axis] {
                break;
            }
            index[axis] = 0;
        }
    }
}

/// Sums `grad` (shaped like the broadcast output) down to `shape`.
pub(crate) fn reduce_to<T: Float>(grad: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if grad.shape() == shape {
        return grad.clone();
    }
    let strides = broadcast_strides(shape, grad.shape());
    let mut out = Tensor::zeros(shape);
    let dst = out.data_mut();
    let src = grad.data();
    for_each_offset(grad.shape(), &strides, &strides, |o, t, _| dst[t] += src[o]);
    out
}

fn broadcast_apply<T: Float>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    bc: &Broadcast,
    f: impl Fn(T, T) -> T,
) -> Tensor<T> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f).expect("same shape");
    }
    let mut out = Tensor::zeros(&bc.shape);
    let (ad, bd) = (a.data(), b.data());
    let dst = out.data_mut();
    for_each_offset(&bc.shape, &bc.lhs_strides, &bc.rhs_strides, |o, i, j| {
        dst[o] = f(ad[i], bd[j])
    });
    out
}

fn bc_for<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Broadcast {
    Broadcast::new("broadcast", a.shape(), b.shape()).expect("shapes validated on forward")
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl<'t, T: Float> Var<'t, T> {
    fn binary(self, other: Var<'t, T>, kind: BinaryKind) -> Result<Var<'t, T>> {
        if !self.same_tape(&other) {
            return Err(NnError::InvalidArgument(
                "operands recorded on different tapes".into(),
            ));
        }
        let (a, b) = (self.value(), other.value());
        let op_name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let bc = Broadcast::new(op_name, a.shape(), b.shape())?;
        let out = match kind {
            BinaryKind::Add => broadcast_apply(&a, &b, &bc, |x, y| x + y),
            BinaryKind::Sub => broadcast_apply(&a, &b, &bc, |x, y| x - y),
            BinaryKind::Mul => broadcast_apply(&a, &b, &bc, |x, y| x * y),
            BinaryKind::Div => broadcast_apply(&a, &b, &bc, |x, y| x / y),
        };
        let tape = self.tape();
        Ok(tape.record(out, &[self, other], move |g, needs| {
            let ga = needs[0].then(|| {
                let full = match kind {
                    BinaryKind::Add | BinaryKind::Sub => g.clone(),
                    BinaryKind::Mul => broadcast_apply(g, &b, &bc_for(g, &b), |g, y| g * y),
                    BinaryKind::Div => broadcast_apply(g, &b, &bc_for(g, &b), |g, y| g / y),
                };
                reduce_to(&full, a.shape())
            });
            let gb = needs[1].then(|| {
                let full = match kind {
                    BinaryKind::Add => g.clone(),
                    BinaryKind::Sub => g.map(|v| -v),
                    BinaryKind::Mul => broadcast_apply(g, &a, &bc_for(g, &a), |g, x| g * x),
                    BinaryKind::Div => {
                        // d(a/b)/db = -a / b^2 on the broadcast grid
                        let ab = broadcast_apply(&a, &b, &bc_for(&a, &b), |x, y| -x / (y * y));
                        g.zip_map(&ab, |g, v| g * v).expect("broadcast shapes agree")
                    }
                };
                reduce_to(&full, b.shape())
            });
            vec![ga, gb]
        }))
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinaryKind::Mul)
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinaryKind::Div)
    }

    /// Elementwise map with derivative `grad(x, y)` where `y = forward(x)`.
    pub fn unary(
        self,
        forward: impl Fn(T) -> T,
        grad: impl Fn(T, T) -> T + 'static,
    ) -> Var<'t, T> {
        let x = self.value();
        let y = Rc::new(x.map(forward));
        let y_saved = Rc::clone(&y);
        let out = (*y).clone();
        self.tape().record(out, &[self], move |g, _| {
            let mut dx = g.clone();
            for ((d, &xv), &yv) in dx.data_mut().iter_mut().zip(x.data()).zip(y_saved.data()) {
                *d *= grad(xv, yv);
            }
            vec![Some(dx)]
        })
    }

    pub fn add_scalar(self, s: T) -> Var<'t, T> {
        self.unary(move |x| x + s, |_, _| T::one())
    }

    pub fn mul_scalar(self, s: T) -> Var<'t, T> {
        self.unary(move |x| x * s, move |_, _| s)
    }

    pub fn neg(self) -> Var<'t, T> {
        self.mul_scalar(-T::one())
    }

    pub fn sqr(self) -> Var<'t, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn sqrt(self) -> Var<'t, T> {
        self.unary(|x| x.sqrt(), |_, y| T::half() / y)
    }

    pub fn exp(self) -> Var<'t, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(self) -> Var<'t, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn abs(self) -> Var<'t, T> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary(
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: T) -> Var<'t, T> {
        self.unary(
            move |x| if x > T::zero() { x } else { x * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn elu(self, alpha: T) -> Var<'t, T> {
        self.unary(
            move |x| {
                if x > T::zero() {
                    x
                } else {
                    alpha * x.exp_m1()
                }
            },
            move |x, y| if x > T::zero() { T::one() } else { y + alpha },
        )
    }

    pub fn sum_all(self) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let total = x.sum();
        self.tape()
            .record(Tensor::scalar(total), &[self], move |g, _| {
                vec![Some(Tensor::full(&shape, g.item()))]
            })
    }

    pub fn mean_all(self) -> Var<'t, T> {
        let n = T::from_f64(self.value().numel() as f64);
        self.sum_all().mul_scalar(T::one() / n)
    }
}

#[inline]
pub fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn broadcast_add_and_reduce() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_fn(&[2, 3, 2, 2], |i| i as f64));
        let b = tape.leaf(Tensor::new(&[1, 3, 1, 1], vec![10.0, 20.0, 30.0]).unwrap());
        let y = a.add(b).unwrap();
        let v = y.value();
        assert_eq!(v.shape(), &[2, 3, 2, 2]);
        assert_eq!(v.data()[0], 10.0);
        assert_eq!(v.data()[4], 24.0);
        assert_eq!(v.data()[12 + 11], 23.0 + 30.0);
        let grads = tape.backward(y.sum_all()).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[8.0, 8.0, 8.0]);
        assert!(grads.get(a).unwrap().data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn mul_gradient_uses_other_operand() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::new(&[1, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = tape.leaf(Tensor::new(&[1, 2, 1, 1], vec![0.5, -1.0]).unwrap());
        let y = a.mul(s).unwrap().sum_all();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.5, 0.5, -1.0, -1.0]);
        assert_eq!(grads.get(s).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn rank_mismatch_is_an_error() {
        let tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::zeros(&[2, 2]));
        let b = tape.leaf(Tensor::zeros(&[2]));
        assert!(a.add(b).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::ones(&[3]));
        let y = a.sqr().sum_all();
        assert!(!y.requires_grad());
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(a).is_none());
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }
}
