use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

thread_local! {
    static NEXT_ID: Cell<usize> = const { Cell::new(0) };
}

fn next_id() -> usize {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Backward function: receives the output gradient and the output data,
/// and accumulates gradients into the parent tensors it captured.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[T])>;

pub(crate) struct Inner<T: Scalar> {
    id: usize,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward_fn: Option<BackwardFn<T>>,
}

/// An n-dimensional array with optional reverse-mode gradient accumulation.
///
/// `Tensor` is a cheap handle (reference-counted); ops build a fresh graph
/// each forward pass. The graph is confined to one thread by construction.
pub struct Tensor<T: Scalar>(pub(crate) Rc<Inner<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> Tensor<T> {
    /// New leaf tensor. `requires_grad` marks it as a parameter or
    /// differentiable input.
    pub fn new(shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidShape {
                op: "new",
                shape: shape.to_vec(),
                detail: format!("{} elements for buffer of length {}", numel, data.len()),
            });
        }
        Ok(Self::leaf(shape.to_vec(), data, requires_grad))
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Self {
        let numel: usize = shape.iter().product();
        Self::leaf(shape.to_vec(), vec![T::zero(); numel], requires_grad)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel: usize = shape.iter().product();
        Self::leaf(shape.to_vec(), vec![value; numel], false)
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![], vec![value], false)
    }

    pub fn from_f64(shape: &[usize], values: &[f64], requires_grad: bool) -> Result<Self> {
        Self::new(
            shape,
            values.iter().map(|&v| T::cast(v)).collect(),
            requires_grad,
        )
    }

    pub(crate) fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents: Vec::new(),
            backward_fn: None,
        }))
    }

    /// Result of an op. When no parent requires a gradient the backward
    /// closure is dropped and the node becomes a constant leaf.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward_fn: BackwardFn<T>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if !requires_grad {
            return Self::leaf(shape, data, false);
        }
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad: true,
            parents,
            backward_fn: Some(backward_fn),
        }))
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.borrow().iter().map(|v| v.as_f64()).collect()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1);
        self.0.data.borrow()[0]
    }

    /// Replace the contents in place (same length required).
    pub fn set_data(&self, values: &[T]) {
        let mut d = self.0.data.borrow_mut();
        assert_eq!(d.len(), values.len(), "set_data length mismatch");
        d.copy_from_slice(values);
    }

    /// Accumulated gradient; zeros when the tensor was never touched by a
    /// backward pass.
    pub fn grad(&self) -> Vec<T> {
        match &*self.0.grad.borrow() {
            Some(g) => g.clone(),
            None => vec![T::zero(); self.numel()],
        }
    }

    pub fn grad_f64(&self) -> Vec<f64> {
        self.grad().iter().map(|v| v.as_f64()).collect()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad_at(&self, f: impl FnOnce(&mut [T])) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        let g = slot.get_or_insert_with(|| vec![T::zero(); self.numel()]);
        f(g);
    }

    /// Add `delta` elementwise into this tensor's gradient.
    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        self.accumulate_grad_at(|g| {
            for (gi, &di) in g.iter_mut().zip(delta) {
                *gi = *gi + di;
            }
        });
    }

    pub fn has_non_finite(&self) -> bool {
        self.0.data.borrow().iter().any(|v| !v.is_finite())
    }

    /// Reverse-mode pass from a scalar. Gradients accumulate into every
    /// tensor on the path that requires them; everything else stays zero.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::BackwardNonScalar {
                shape: self.shape().to_vec(),
            });
        }
        if !self.0.requires_grad {
            return Ok(());
        }

        let order = self.topo_order();
        self.accumulate_grad(&[T::one()]);
        for node in order.iter().rev() {
            if let Some(f) = &node.0.backward_fn {
                let grad_ref = node.0.grad.borrow();
                let Some(grad) = grad_ref.as_ref() else {
                    continue;
                };
                let data = node.0.data.borrow();
                f(grad, &data);
            }
        }
        Ok(())
    }

    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        // Iterative DFS; (node, child_cursor) frames.
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.0.id);
        while let Some((node, cursor)) = stack.pop() {
            if cursor < node.0.parents.len() {
                let parent = node.0.parents[cursor].clone();
                stack.push((node, cursor + 1));
                if parent.0.requires_grad && visited.insert(parent.0.id) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}
