use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{shape_err, Result, TensorError};

/// Extents in (batch, channel, height, width) order.
pub type Shape = [usize; 4];

pub(crate) type BackwardFn = Box<dyn Fn(&[f32]) -> Vec<Option<Vec<f32>>> + Send + Sync>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct Node {
    name: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Shape,
    data: Vec<f32>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f32>>>,
    node: Option<Node>,
    backward_done: AtomicBool,
}

/// Rank-4 array of `f32` with an optional link into a reverse-mode graph.
///
/// Cloning is cheap (shared ownership); data is immutable once built.
/// A tensor created by an operation whose inputs require gradients records
/// the operation so that [`Tensor::backward`] can propagate through it.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.node.as_ref().map(|n| n.name))
            .finish()
    }
}

pub fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Shape, data: Vec<f32>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            node,
            backward_done: AtomicBool::new(false),
        }))
    }

    /// Constant tensor (no gradient tracking).
    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return shape_err("from_vec", format!("extents must be positive, got {shape:?}"));
        }
        if numel(&shape) != data.len() {
            return shape_err(
                "from_vec",
                format!("shape {shape:?} holds {} elements, data has {}", numel(&shape), data.len()),
            );
        }
        Ok(Self::build(shape, data, false, None))
    }

    /// Leaf tensor whose gradient is collected by [`Tensor::backward`].
    pub fn leaf(shape: Shape, data: Vec<f32>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        Ok(t.with_grad())
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::build(shape, vec![0.0; numel(&shape)], false, None)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Self::build(shape, vec![value; numel(&shape)], false, None)
    }

    pub fn scalar(value: f32) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    /// Copy of this tensor's data as a fresh gradient-tracking leaf.
    pub fn with_grad(&self) -> Self {
        Self::build(self.0.shape, self.0.data.clone(), true, None)
    }

    /// Copy of this tensor's data with no graph attached.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape, self.0.data.clone(), false, None)
    }

    /// Result of an operation. The node is recorded only if some parent
    /// requires a gradient.
    pub(crate) fn from_op(
        name: &'static str,
        shape: Shape,
        data: Vec<f32>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let node = requires_grad.then(|| Node { name, parents, backward });
        Self::build(shape, data, requires_grad, node)
    }

    pub fn shape(&self) -> Shape {
        self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        let [_, cs, hs, ws] = self.0.shape;
        self.0.data[((n * cs + c) * hs + h) * ws + w]
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.numel() != 1 {
            return shape_err("item", format!("expected one element, got shape {:?}", self.shape()));
        }
        Ok(self.0.data[0])
    }

    /// Gradient accumulated on a leaf by the last backward pass.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn take_grad(&self) -> Option<Vec<f32>> {
        self.0.grad.lock().expect("grad lock poisoned").take()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    /// Names of every operation reachable from this tensor, one entry per node.
    pub fn graph_ops(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for t in self.topo_order() {
            if let Some(node) = &t.0.node {
                out.push(node.name);
            }
        }
        out
    }

    /// Nodes in dependency order (parents before children), ending with `self`.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        // (tensor, children_pushed)
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for p in &node.parents {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }

    /// Reverse-mode accumulation from a single-element loss.
    ///
    /// Leaf gradients are added to any gradient already present on the leaf.
    /// A given loss may be backpropagated only once.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape()));
        }
        if !self.requires_grad() {
            return Err(TensorError::NotDifferentiable);
        }
        if self.0.backward_done.swap(true, Ordering::SeqCst) {
            return Err(TensorError::BackwardTwice);
        }

        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<f32>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            match &t.0.node {
                None => {
                    let mut slot = t.0.grad.lock().expect("grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g),
                    }
                }
                Some(node) => {
                    let parent_grads = (node.backward)(&g);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for (p, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel(), "gradient size for {}", node.name);
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
