use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::{Error, Result};

/// A dense f64 tensor, optionally a node in a reverse-mode computation graph.
///
/// Cloning is cheap (shared `Rc`); two clones see the same data and gradient
/// buffers. Parameters are built with [`Tensor::param`], constants with
/// [`Tensor::from_vec`].
pub struct Tensor {
    pub(crate) inner: Rc<Inner>,
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

pub(crate) struct Inner {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: RefCell<Vec<f64>>,
    pub(crate) grad: RefCell<Vec<f64>>,
    pub(crate) requires_grad: bool,
    pub(crate) parents: Vec<Tensor>,
    /// Reads this node's grad/data, accumulates into the parents' grads.
    pub(crate) backward: Option<Box<dyn Fn(&Inner)>>,
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if numel_of(&shape) != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel_of(&shape),
                data.len()
            )));
        }
        Ok(Tensor::leaf(shape, data, false))
    }

    /// Trainable leaf: gradients accumulate here during backward passes.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if numel_of(&shape) != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel_of(&shape),
                data.len()
            )));
        }
        Ok(Tensor::leaf(shape, data, true))
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = numel_of(&shape);
        Tensor::leaf(shape, vec![0.0; n], false)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::leaf(vec![], vec![v], false)
    }

    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        let n = data.len();
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(vec![0.0; n]),
                requires_grad,
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: Box<dyn Fn(&Inner)>,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.inner.requires_grad);
        let n = data.len();
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(vec![0.0; n]),
                requires_grad,
                parents: if requires_grad { parents } else { Vec::new() },
                backward: if requires_grad { Some(backward) } else { None },
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.inner.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Overwrite the buffer in place (optimizer updates, grad-check probes).
    pub fn set_data(&self, data: &[f64]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), data.len(), "set_data length mismatch");
        d.copy_from_slice(data);
    }

    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.inner.shape.clone()));
        }
        Ok(self.inner.data.borrow()[0])
    }

    pub fn grad(&self) -> Vec<f64> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        self.inner.grad.borrow_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    /// Populate gradients of every `requires_grad` tensor reachable from this
    /// scalar. Gradients accumulate; callers zero them between passes.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.inner.shape.clone()));
        }
        let order = topo_order(self);
        self.inner.grad.borrow_mut()[0] += 1.0;
        for node in order.iter().rev() {
            if let Some(f) = &node.inner.backward {
                f(&node.inner);
            }
        }
        Ok(())
    }
}

/// Post-order DFS; parents appear before their consumers.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    // (node, parents_pushed)
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        let id = Rc::as_ptr(&node.inner) as usize;
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(id) {
            continue;
        }
        if !node.inner.requires_grad {
            continue;
        }
        stack.push((node.clone(), true));
        for p in &node.inner.parents {
            stack.push((p.clone(), false));
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::param(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(x.backward(), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::param(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let loss = x.sum_all();
        loss.backward().unwrap();
        assert_eq!(x.grad(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_sum_gradient() {
        let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
        let loss = x.mul(&x).unwrap().sum_all();
        loss.backward().unwrap();
        assert_eq!(x.grad(), vec![2.0, 4.0]);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let x = Tensor::param(vec![2], vec![1.0, 1.0]).unwrap();
        x.sum_all().backward().unwrap();
        x.sum_all().backward().unwrap();
        assert_eq!(x.grad(), vec![2.0, 2.0]);
        x.zero_grad();
        assert_eq!(x.grad(), vec![0.0, 0.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(x + x) -> grad 2 per element
        let x = Tensor::param(vec![2], vec![3.0, 4.0]).unwrap();
        let loss = x.add(&x).unwrap().sum_all();
        loss.backward().unwrap();
        assert_eq!(x.grad(), vec![2.0, 2.0]);
    }
}
