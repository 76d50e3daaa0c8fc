use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tensor::Tensor;

/// Maps the gradient of an op's output to gradients of its parents.
///
/// The flags say which parents need a gradient; entries for the others may be
/// `None`.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Records a forward computation so it can be differentiated afterwards.
///
/// A tape is built fresh for each training step and dropped after the
/// parameter update.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T: Float> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value().shape())
    }
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Rc::new(value), Vec::new(), None, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Rc::new(value), Vec::new(), None, false)
    }

    pub(crate) fn shared_leaf(&self, value: Rc<Tensor<T>>) -> Var<'_, T> {
        self.push(value, Vec::new(), None, true)
    }

    pub(crate) fn shared_constant(&self, value: Rc<Tensor<T>>) -> Var<'_, T> {
        self.push(value, Vec::new(), None, false)
    }

    fn push(
        &self,
        value: Rc<Tensor<T>>,
        parents: Vec<usize>,
        backward: Option<BackwardFn<T>>,
        requires_grad: bool,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records the result of an op over `parents`.
    ///
    /// The backward closure is dropped straight away when no parent needs a
    /// gradient, so frozen sub-networks cost nothing on the way back.
    pub(crate) fn record<'t>(
        &'t self,
        value: Tensor<T>,
        parents: &[Var<'t, T>],
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<'t, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        let backward: Option<BackwardFn<T>> = if requires_grad {
            Some(Box::new(backward))
        } else {
            None
        };
        self.push(
            Rc::new(value),
            parents.iter().map(|p| p.id).collect(),
            backward,
            requires_grad,
        )
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse pass from a single-element `root`.
    pub fn backward(&self, root: Var<'_, T>) -> Result<Grads<T>> {
        let value = root.value();
        if value.numel() != 1 {
            return Err(NnError::shape(
                "backward",
                format!("root must hold one element, has shape {:?}", value.shape()),
            ));
        }
        self.backward_with(root, Tensor::full(value.shape(), T::one()))
    }

    /// Reverse pass seeded with an explicit output gradient.
    pub fn backward_with(&self, root: Var<'_, T>, seed: Tensor<T>) -> Result<Grads<T>> {
        root.value().expect_same_shape("backward_with", &seed)?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.id + 1];
        grads[root.id] = Some(seed);
        let mut leaf_grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];

        for id in (0..=root.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(backward) = &node.backward else {
                leaf_grads[id] = Some(grad);
                continue;
            };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let parent_grads = backward(&grad, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&parent, pg), &need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(
                    pg.shape(),
                    nodes[parent].value.shape(),
                    "gradient shape for node {parent}"
                );
                match &mut grads[parent] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Grads { grads: leaf_grads })
    }
}

/// Gradients of the leaves reached by a reverse pass.
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Float> Grads<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }

    /// Gradient of `var`, or zeros shaped like it when it was not reached.
    pub fn get_or_zeros(&self, var: Var<'_, T>) -> Tensor<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

impl<'t, T: Float> Var<'t, T> {
    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, cut off from the graph.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.shared_constant(self.value())
    }

    pub(crate) fn same_tape(&self, other: &Var<'_, T>) -> bool {
        std::ptr::eq(self.tape, other.tape)
    }
}
