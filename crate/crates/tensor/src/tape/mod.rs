//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every forward op appends one node holding its output value and enough
//! context to produce input gradients. Inputs always precede outputs, so a
//! reverse sweep over node indices is a reverse topological order.

mod conv;
mod elementwise;
mod layout;
mod linalg;
mod nn;

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::kernels::ConvGeom;
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub use elementwise::{BinaryKind, UnaryKind};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op<T: Float> {
    Constant,
    Input,
    Param,
    Unary {
        x: Var,
        kind: UnaryKind,
    },
    Binary {
        a: Var,
        b: Var,
        kind: BinaryKind,
    },
    Scale {
        x: Var,
        factor: T,
    },
    Sum {
        x: Var,
    },
    SumAxis {
        x: Var,
        axis: usize,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<T>,
    },
    Reshape {
        x: Var,
    },
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    GatherRows {
        x: Var,
        index: Arc<[Option<usize>]>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Conv3d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    MaxPool3d {
        x: Var,
        argmax: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node<T: Float> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Ordered record of executed differentiable operations.
#[derive(Debug)]
pub struct Tape<T: Float> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulator used during the reverse sweep.
pub(crate) struct GradBuf<T> {
    grads: Vec<Option<Vec<T>>>,
    needs: Vec<bool>,
    sizes: Vec<usize>,
}

impl<T: Float> GradBuf<T> {
    /// Mutable gradient slot for `v`, or `None` when `v` does not need one.
    pub(crate) fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        if !self.needs[v.0] {
            return None;
        }
        let size = self.sizes[v.0];
        Some(
            self.grads[v.0]
                .get_or_insert_with(|| vec![T::zero(); size])
                .as_mut_slice(),
        )
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.needs[v.0]
    }
}

/// Gradients of a scalar with respect to the differentiable leaves of a tape.
#[derive(Debug)]
pub struct Gradients<T: Float> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Float> Gradients<T> {
    /// Gradient for an input or parameter leaf. Leaves the loss does not
    /// depend on get a zero tensor.
    pub fn get(&self, v: Var) -> Option<Tensor<T>> {
        let shape = self.shapes.get(v.0)?;
        let data = match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => vec![T::zero(); shape.iter().product()],
        };
        Tensor::new(shape.clone(), data).ok()
    }

    /// Adds every parameter gradient into the store's gradient slots.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for &(id, v) in &self.params {
            match &self.grads[v.0] {
                Some(g) => store.accumulate_grad(id, g),
                None => {
                    let n = store.get(id).numel();
                    store.accumulate_grad(id, &vec![T::zero(); n]);
                }
            }
        }
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        let bad = value.data().iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(TensorError::NonFinite {
                op: name,
                count: bad,
            });
        }
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Input | Op::Param => true,
            _ => self.inputs_of(&op).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs_of(&self, op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Constant | Op::Input | Op::Param => vec![],
            Op::Unary { x, .. }
            | Op::Scale { x, .. }
            | Op::Sum { x }
            | Op::SumAxis { x, .. }
            | Op::Softmax { x, .. }
            | Op::Reshape { x }
            | Op::Permute { x, .. }
            | Op::GatherRows { x, .. }
            | Op::Narrow { x, .. }
            | Op::MaxPool3d { x, .. } => vec![*x],
            Op::CrossEntropy { logits, .. } | Op::BceWithLogits { logits, .. } => vec![*logits],
            Op::Binary { a, b, .. } | Op::MatMul { a, b } => vec![*a, *b],
            Op::Linear { x, w, b } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Concat { xs, .. } => xs.clone(),
            Op::Conv3d {
                x, kernel, bias, ..
            } => [Some(*x), Some(*kernel), *bias].into_iter().flatten().collect(),
        }
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push("constant", value, Op::Constant)
    }

    /// Records a differentiable leaf that is not a model parameter.
    pub fn input(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push("input", value, Op::Input)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.push("param", store.value(id).clone(), Op::Param)?;
        self.params.insert(id, v);
        Ok(v)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut buf = GradBuf {
            grads: vec![None; self.nodes.len()],
            needs: self.nodes.iter().map(|n| n.needs_grad).collect(),
            sizes: self.nodes.iter().map(|n| n.value.numel()).collect(),
        };
        if let Some(g) = buf.slot(loss) {
            g[0] = T::one();
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Constant | Op::Input | Op::Param) {
                continue;
            }
            let Some(g) = buf.grads[i].take() else {
                continue;
            };
            self.backward_node(i, &g, &mut buf);
        }
        let mut params: Vec<(ParamId, Var)> = self.params.iter().map(|(&p, &v)| (p, v)).collect();
        params.sort();
        Ok(Gradients {
            grads: buf.grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params,
        })
    }

    /// Accumulates ∂loss/∂param into every parameter recorded on this tape.
    /// Gradients add onto existing slots until the store is cleared.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        self.gradients(loss)?.accumulate_into(store);
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[T], buf: &mut GradBuf<T>) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Constant | Op::Input | Op::Param => {}
            Op::Unary { x, kind } => elementwise::unary_backward(*kind, self.value(*x), y, g, *x, buf),
            Op::Binary { a, b, kind } => elementwise::binary_backward(
                *kind,
                (*a, self.value(*a)),
                (*b, self.value(*b)),
                y.shape(),
                g,
                buf,
            ),
            Op::Scale { x, factor } => {
                if let Some(gx) = buf.slot(*x) {
                    for (d, &s) in gx.iter_mut().zip(g) {
                        *d += s * *factor;
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(gx) = buf.slot(*x) {
                    for d in gx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::SumAxis { x, axis } => elementwise::sum_axis_backward(self.value(*x).shape(), *axis, g, *x, buf),
            Op::MatMul { a, b } => linalg::matmul_backward((*a, self.value(*a)), (*b, self.value(*b)), g, buf),
            Op::Linear { x, w, b } => linalg::linear_backward(
                (*x, self.value(*x)),
                (*w, self.value(*w)),
                *b,
                g,
                buf,
            ),
            Op::Softmax { x, axis } => nn::softmax_backward(y, *axis, g, *x, buf),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => nn::layer_norm_backward(
                *x,
                (*gain, self.value(*gain)),
                *bias,
                xhat,
                rstd,
                g,
                buf,
            ),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => nn::cross_entropy_backward(*logits, targets, probs, g, buf),
            Op::BceWithLogits { logits, targets } => {
                nn::bce_backward((*logits, self.value(*logits)), targets, g, buf)
            }
            Op::Reshape { x } => {
                if let Some(gx) = buf.slot(*x) {
                    for (d, &s) in gx.iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::Permute { x, perm } => layout::permute_backward(y.shape(), perm, g, *x, buf),
            Op::GatherRows { x, index } => layout::gather_backward(self.value(*x), index, g, *x, buf),
            Op::Concat { xs, axis } => {
                let shapes: Vec<&[usize]> = xs.iter().map(|v| self.shape(*v)).collect();
                layout::concat_backward(xs, &shapes, *axis, g, buf)
            }
            Op::Narrow { x, axis, start } => {
                layout::narrow_backward(self.value(*x).shape(), y.shape(), *axis, *start, g, *x, buf)
            }
            Op::Conv3d {
                x,
                kernel,
                bias,
                geom,
                cols,
            } => conv::conv3d_backward(*x, (*kernel, self.value(*kernel)), *bias, geom, cols, g, buf),
            Op::MaxPool3d { x, argmax } => {
                if let Some(gx) = buf.slot(*x) {
                    for (&src, &s) in argmax.iter().zip(g) {
                        gx[src] += s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::<f64>::new();
        let id = store.register("x", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, id).unwrap();
        let y = tape.mul(x, x).unwrap();
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(id).grad.as_ref().unwrap().data(), &[6.0]);
        // a second sweep without clearing accumulates
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(id).grad.as_ref().unwrap().data(), &[12.0]);
        store.zero_grad();
        assert!(store.get(id).grad.is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::zeros(&[2]).unwrap()).unwrap();
        assert!(matches!(tape.gradients(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn param_leaf_is_shared() {
        let mut store = ParamStore::<f32>::new();
        let id = store.register("w", Tensor::ones(&[3]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, id).unwrap();
        let b = tape.param(&store, id).unwrap();
        assert_eq!(a, b);
        assert!(tape.value(a).shares_storage(store.value(id)));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[2], 800.0).unwrap()).unwrap();
        let err = tape.exp(x).unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { op: "exp", .. }));
    }

    #[test]
    fn unreachable_params_get_zero_grad() {
        let mut store = ParamStore::<f64>::new();
        let a = store.register("a", Tensor::scalar(2.0)).unwrap();
        let b = store.register("b", Tensor::scalar(5.0)).unwrap();
        let mut tape = Tape::new();
        let va = tape.param(&store, a).unwrap();
        let _vb = tape.param(&store, b).unwrap();
        let y = tape.scale(va, 3.0).unwrap();
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(a).grad.as_ref().unwrap().data(), &[3.0]);
        assert_eq!(store.get(b).grad.as_ref().unwrap().data(), &[0.0]);
    }
}
