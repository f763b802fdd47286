//! Reverse-mode automatic differentiation over [`NdArray`] values.
//!
//! Every differentiable operation returns a [`Tensor`] node that keeps its
//! parents and a backward closure. The graph is implicit in those links and is
//! released as soon as the last handle to the output is dropped.

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Element, NdArray};

/// Computes parent gradients from `(grad_output, parents, output_value)`.
/// Entries for parents that do not require gradients may be `None`.
pub(crate) type BackwardFn<E> =
    Box<dyn Fn(&NdArray<E>, &[Tensor<E>], &NdArray<E>) -> Vec<Option<NdArray<E>>>>;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static GRAD_DISABLED: Cell<usize> = const { Cell::new(0) };
}

struct Node<E: Element> {
    id: usize,
    value: Arc<NdArray<E>>,
    requires_grad: bool,
    grad: RefCell<Option<NdArray<E>>>,
    parents: Vec<Tensor<E>>,
    backward: Option<BackwardFn<E>>,
}

/// A value in the computation graph, optionally tracking gradients.
pub struct Tensor<E: Element>(Rc<Node<E>>);

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<E: Element> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

/// Disables graph recording on the current thread while alive.
pub struct NoGradGuard(());

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_DISABLED.with(|d| d.set(d.get() - 1));
    }
}

pub fn no_grad() -> NoGradGuard {
    GRAD_DISABLED.with(|d| d.set(d.get() + 1));
    NoGradGuard(())
}

fn recording() -> bool {
    GRAD_DISABLED.with(|d| d.get() == 0)
}

impl<E: Element> Tensor<E> {
    fn leaf(value: Arc<NdArray<E>>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Constant input; never receives a gradient.
    pub fn constant(value: NdArray<E>) -> Self {
        Self::leaf(Arc::new(value), false)
    }

    /// Trainable leaf whose gradient is populated by [`Tensor::backward`].
    pub fn variable(value: NdArray<E>) -> Self {
        Self::leaf(Arc::new(value), true)
    }

    /// Leaf sharing an existing buffer, used to bind model parameters
    /// without copying them.
    pub fn from_shared(value: Arc<NdArray<E>>, requires_grad: bool) -> Self {
        Self::leaf(value, requires_grad)
    }

    /// Records an operation node. When no parent tracks gradients (or
    /// recording is disabled) the node is a plain constant.
    pub(crate) fn from_op(value: NdArray<E>, parents: &[&Tensor<E>], backward: BackwardFn<E>) -> Self {
        let track = recording() && parents.iter().any(|p| p.requires_grad());
        if !track {
            return Self::constant(value);
        }
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value: Arc::new(value),
            requires_grad: true,
            grad: RefCell::new(None),
            parents: parents.iter().map(|&p| p.clone()).collect(),
            backward: Some(backward),
        }))
    }

    pub fn value(&self) -> &NdArray<E> {
        &self.0.value
    }

    pub fn shared_value(&self) -> Arc<NdArray<E>> {
        Arc::clone(&self.0.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Ref<'_, NdArray<E>>> {
        let g = self.0.grad.borrow();
        if g.is_some() {
            Some(Ref::map(g, |g| g.as_ref().unwrap()))
        } else {
            None
        }
    }

    pub fn take_grad(&self) -> Option<NdArray<E>> {
        self.0.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Detached copy of the value with no graph links.
    pub fn detach(&self) -> Self {
        Self::leaf(Arc::clone(&self.0.value), false)
    }

    /// Back-propagates from a scalar loss.
    ///
    /// Gradients of `requires_grad` leaves are accumulated: calling this twice
    /// without [`Tensor::zero_grad`] adds the two contributions.
    pub fn backward(&self) -> Result<()> {
        if self.0.value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape()),
            ));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topological_order();
        let mut pending: HashMap<usize, NdArray<E>> = HashMap::new();
        pending.insert(self.0.id, NdArray::full(self.shape().to_vec(), E::one()));

        for node in order.iter().rev() {
            let Some(grad) = pending.remove(&node.0.id) else {
                continue;
            };
            match &node.0.backward {
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.add_assign(&grad),
                        None => *slot = Some(grad),
                    }
                }
                Some(f) => {
                    let parent_grads = f(&grad, &node.0.parents, &node.0.value);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.shape(), parent.shape());
                        match pending.get_mut(&parent.0.id) {
                            Some(acc) => acc.add_assign(&pg),
                            None => {
                                pending.insert(parent.0.id, pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes that require gradients, parents before children.
    fn topological_order(&self) -> Vec<Tensor<E>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // (node, children_pushed)
        let mut stack = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.0.id) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in &node.0.parents {
                if p.requires_grad() && !visited.contains(&p.0.id) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}
