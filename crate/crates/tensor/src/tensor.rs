use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use crate::error::{Result, TensorError};
use crate::real::Real;

/// Backward rule of a recorded operation.
///
/// Receives the gradient flowing into the operation's output and returns one
/// entry per parent (in parent order). `None` means "no gradient for this
/// parent".
pub(crate) trait GradFn<F: Real>: Send + Sync {
    fn backward(&self, grad: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>>;
}

struct Node<F: Real> {
    shape: Vec<usize>,
    data: RwLock<Vec<F>>,
    grad: Mutex<Option<Vec<F>>>,
    requires_grad: bool,
    parents: Vec<Tensor<F>>,
    grad_fn: Option<Box<dyn GradFn<F>>>,
}

/// Shared handle to an n-dimensional array that may take part in reverse-mode
/// differentiation.
///
/// Cloning is cheap and yields another handle to the same storage. Leaf
/// tensors created with [`Tensor::param`] accumulate gradients across
/// [`backward`](Tensor::backward) calls until [`zero_grad`](Tensor::zero_grad).
pub struct Tensor<F: Real> {
    node: Arc<Node<F>>,
}

impl<F: Real> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor {
            node: Arc::clone(&self.node),
        }
    }
}

impl<F: Real> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    if shape.iter().product::<usize>() != len {
        return Err(TensorError::DataLength {
            len,
            shape: shape.to_vec(),
        });
    }
    Ok(())
}

impl<F: Real> Tensor<F> {
    fn leaf(shape: Vec<usize>, data: Vec<F>, requires_grad: bool) -> Self {
        Tensor {
            node: Arc::new(Node {
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                parents: Vec::new(),
                grad_fn: None,
            }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self::leaf(shape, data, false))
    }

    /// Trainable leaf tensor.
    pub fn param(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self::leaf(shape, data, true))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::leaf(shape, vec![F::zero(); n], false)
    }

    pub fn scalar(v: F) -> Self {
        Self::leaf(vec![1], vec![v], false)
    }

    /// Result of a recorded operation. Parents that do not require gradients
    /// are dropped together with the backward rule when none of them do.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<F>,
        parents: Vec<Tensor<F>>,
        grad_fn: Box<dyn GradFn<F>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if !requires_grad {
            return Self::leaf(shape, data, false);
        }
        Tensor {
            node: Arc::new(Node {
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad: true,
                parents,
                grad_fn: Some(grad_fn),
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.grad_fn.is_none()
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<F>> {
        self.node.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.data().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> F {
        self.data()[0]
    }

    /// Mutates the stored values in place (used by optimizers and weight
    /// loading). The shape is fixed.
    pub fn update_data(&self, f: impl FnOnce(&mut [F])) {
        let mut guard = self.node.data.write().expect("tensor data lock poisoned");
        f(&mut guard);
    }

    pub fn set_data(&self, values: &[F]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(TensorError::DataLength {
                len: values.len(),
                shape: self.shape().to_vec(),
            });
        }
        self.update_data(|d| d.copy_from_slice(values));
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Copy of the values without any graph attached.
    pub fn detach(&self) -> Self {
        Self::leaf(self.shape().to_vec(), self.to_vec(), false)
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.node) as *const () as usize
    }

    fn accumulate_grad(&self, g: &[F]) {
        let mut slot = self.node.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Nodes reachable from `self` through gradient-requiring edges, parents
    /// before children.
    fn topo_order(&self) -> Vec<Tensor<F>> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.key()) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in t.node.parents.iter().rev() {
                if p.requires_grad() && !seen.contains(&p.key()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }

    /// Reverse-mode accumulation from a scalar. Gradients are summed into
    /// every trainable leaf reachable from `self`.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Err(TensorError::NoGraph);
        }
        let order = self.topo_order();
        let mut pending: HashMap<usize, Vec<F>> = HashMap::new();
        pending.insert(self.key(), vec![F::one()]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.key()) else {
                continue;
            };
            match &t.node.grad_fn {
                None => t.accumulate_grad(&g),
                Some(f) => {
                    let parent_grads = f.backward(&g, &t.node.parents);
                    for (p, pg) in t.node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        match pending.get_mut(&p.key()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                            None => {
                                pending.insert(p.key(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn same_shape(&self, other: &Tensor<F>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: self.shape().to_vec(),
                found: other.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.same_shape(other, "add")?;
        let data = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a + b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(AddBackward),
        ))
    }

    pub fn sub(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        other.scale(-F::one()).add(self)
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.same_shape(other, "mul")?;
        let data = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a * b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(MulBackward),
        ))
    }

    pub fn scale(&self, factor: F) -> Tensor<F> {
        let data = self.data().iter().map(|&a| a * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(ScaleBackward(factor)),
        )
    }

    pub fn sum(&self) -> Tensor<F> {
        let s = self.data().iter().copied().sum();
        Tensor::from_op(vec![1], vec![s], vec![self.clone()], Box::new(SumBackward(self.numel())))
    }

    pub fn mean(&self) -> Tensor<F> {
        self.sum().scale(F::one() / F::from_usize(self.numel().max(1)))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor<F>> {
        check_len(&shape, self.numel())?;
        Ok(Tensor::from_op(shape, self.to_vec(), vec![self.clone()], Box::new(IdentityBackward)))
    }
}

struct AddBackward;
impl<F: Real> GradFn<F> for AddBackward {
    fn backward(&self, grad: &[F], _: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        vec![Some(grad.to_vec()), Some(grad.to_vec())]
    }
}

struct MulBackward;
impl<F: Real> GradFn<F> for MulBackward {
    fn backward(&self, grad: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let a = parents[0].data();
        let b = parents[1].data();
        let ga = parents[0]
            .requires_grad()
            .then(|| grad.iter().zip(b.iter()).map(|(&g, &y)| g * y).collect());
        let gb = parents[1]
            .requires_grad()
            .then(|| grad.iter().zip(a.iter()).map(|(&g, &x)| g * x).collect());
        vec![ga, gb]
    }
}

struct ScaleBackward<F>(F);
impl<F: Real> GradFn<F> for ScaleBackward<F> {
    fn backward(&self, grad: &[F], _: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        vec![Some(grad.iter().map(|&g| g * self.0).collect())]
    }
}

struct SumBackward(usize);
impl<F: Real> GradFn<F> for SumBackward {
    fn backward(&self, grad: &[F], _: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        vec![Some(vec![grad[0]; self.0])]
    }
}

struct IdentityBackward;
impl<F: Real> GradFn<F> for IdentityBackward {
    fn backward(&self, grad: &[F], _: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        vec![Some(grad.to_vec())]
    }
}
