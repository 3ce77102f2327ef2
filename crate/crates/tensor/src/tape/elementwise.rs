use super::{GradBuf, Op, Tape, Var};
use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::{broadcast_shape, numel, strides, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Neg,
    /// tanh approximation of the Gaussian error linear unit
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn gelu<T: Float>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Float>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t)
        + half * x * (T::one() - t * t) * c * (T::one() + T::from_f64(3.0) * a * x * x)
}

/// Maps an output flat index to an operand flat index under broadcasting.
pub(crate) enum BroadcastIndex {
    Same,
    /// operand is a trailing suffix of the output shape
    Cyclic(usize),
    Table(Vec<usize>),
}

impl BroadcastIndex {
    pub(crate) fn new(out: &[usize], operand: &[usize]) -> Self {
        if out == operand {
            return BroadcastIndex::Same;
        }
        let trimmed: &[usize] = {
            let lead = operand.iter().take_while(|&&d| d == 1).count();
            &operand[lead..]
        };
        if trimmed.len() <= out.len() && out[out.len() - trimmed.len()..] == *trimmed {
            return BroadcastIndex::Cyclic(numel(trimmed).max(1));
        }
        let rank = out.len();
        let op_strides = strides(operand);
        let mut eff = vec![0usize; rank];
        for i in 0..operand.len() {
            let oi = rank - operand.len() + i;
            if operand[i] != 1 {
                eff[oi] = op_strides[i];
            }
        }
        let n = numel(out);
        let mut table = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        let mut off = 0usize;
        for _ in 0..n {
            table.push(off);
            let mut ax = rank;
            while ax > 0 {
                ax -= 1;
                idx[ax] += 1;
                off += eff[ax];
                if idx[ax] < out[ax] {
                    break;
                }
                off -= eff[ax] * out[ax];
                idx[ax] = 0;
            }
        }
        BroadcastIndex::Table(table)
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> usize {
        match self {
            BroadcastIndex::Same => i,
            BroadcastIndex::Cyclic(n) => i % n,
            BroadcastIndex::Table(t) => t[i],
        }
    }
}

impl<T: Float> Tape<T> {
    pub fn unary(&mut self, x: Var, kind: UnaryKind) -> Result<Var> {
        let xv = self.value(x);
        if kind == UnaryKind::Log && xv.data().iter().any(|&v| v <= T::zero()) {
            return Err(TensorError::Domain { op: "log" });
        }
        let f: fn(T) -> T = match kind {
            UnaryKind::Relu => |v| if v > T::zero() { v } else { T::zero() },
            UnaryKind::Sigmoid => sigmoid,
            UnaryKind::Tanh => |v| v.tanh(),
            UnaryKind::Exp => |v| v.exp(),
            UnaryKind::Log => |v| v.ln(),
            UnaryKind::Neg => |v| -v,
            UnaryKind::Gelu => gelu,
        };
        let out = xv.map(f);
        let name = match kind {
            UnaryKind::Relu => "relu",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Exp => "exp",
            UnaryKind::Log => "log",
            UnaryKind::Neg => "neg",
            UnaryKind::Gelu => "gelu",
        };
        self.push(name, out, Op::Unary { x, kind })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Tanh)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Log)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Neg)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Gelu)
    }

    pub fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out_shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| TensorError::Shape {
            op: "elementwise",
            lhs: av.shape().to_vec(),
            rhs: bv.shape().to_vec(),
        })?;
        let ia = BroadcastIndex::new(&out_shape, av.shape());
        let ib = BroadcastIndex::new(&out_shape, bv.shape());
        let (ad, bd) = (av.data(), bv.data());
        let n = numel(&out_shape);
        let f: fn(T, T) -> T = match kind {
            BinaryKind::Add => |x, y| x + y,
            BinaryKind::Sub => |x, y| x - y,
            BinaryKind::Mul => |x, y| x * y,
            BinaryKind::Div => |x, y| x / y,
        };
        let data: Vec<T> = match (&ia, &ib) {
            (BroadcastIndex::Same, BroadcastIndex::Same) => {
                ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
            }
            _ => (0..n).map(|i| f(ad[ia.get(i)], bd[ib.get(i)])).collect(),
        };
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        self.push(name, Tensor::new(out_shape, data)?, Op::Binary { a, b, kind })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Div)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let factor = T::from_f64(factor);
        let out = self.value(x).map(|v| v * factor);
        self.push("scale", out, Op::Scale { x, factor })
    }

    /// Broadcasts `x` to `shape` (gradient sums back over repeated axes).
    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let zeros = self.constant(Tensor::zeros(shape)?)?;
        let out = self.add(zeros, x)?;
        if self.shape(out) != shape {
            return Err(TensorError::Shape {
                op: "broadcast_to",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(out)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Axis {
                op: "sum_axis",
                axis,
                rank: shape.len(),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let row = &src[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += s;
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        self.push("sum_axis", Tensor::new(out_shape, out)?, Op::SumAxis { x, axis })
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = *self.shape(x).get(axis).ok_or(TensorError::Axis {
            op: "mean_axis",
            axis,
            rank: self.shape(x).len(),
        })?;
        let s = self.sum_axis(x, axis)?;
        self.scale(s, 1.0 / n as f64)
    }
}

pub(super) fn unary_backward<T: Float>(
    kind: UnaryKind,
    x: &Tensor<T>,
    y: &Tensor<T>,
    g: &[T],
    xv: Var,
    buf: &mut GradBuf<T>,
) {
    let Some(gx) = buf.slot(xv) else { return };
    let (xd, yd) = (x.data(), y.data());
    for i in 0..gx.len() {
        let d = match kind {
            UnaryKind::Relu => {
                if xd[i] > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            UnaryKind::Sigmoid => yd[i] * (T::one() - yd[i]),
            UnaryKind::Tanh => T::one() - yd[i] * yd[i],
            UnaryKind::Exp => yd[i],
            UnaryKind::Log => T::one() / xd[i],
            UnaryKind::Neg => -T::one(),
            UnaryKind::Gelu => gelu_grad(xd[i]),
        };
        gx[i] += g[i] * d;
    }
}

pub(super) fn binary_backward<T: Float>(
    kind: BinaryKind,
    (a, av): (Var, &Tensor<T>),
    (b, bv): (Var, &Tensor<T>),
    out_shape: &[usize],
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let ia = BroadcastIndex::new(out_shape, av.shape());
    let ib = BroadcastIndex::new(out_shape, bv.shape());
    let (ad, bd) = (av.data(), bv.data());
    if let Some(ga) = buf.slot(a) {
        for (i, &gi) in g.iter().enumerate() {
            let (ja, jb) = (ia.get(i), ib.get(i));
            ga[ja] += match kind {
                BinaryKind::Add | BinaryKind::Sub => gi,
                BinaryKind::Mul => gi * bd[jb],
                BinaryKind::Div => gi / bd[jb],
            };
        }
    }
    if let Some(gb) = buf.slot(b) {
        for (i, &gi) in g.iter().enumerate() {
            let (ja, jb) = (ia.get(i), ib.get(i));
            gb[jb] += match kind {
                BinaryKind::Add => gi,
                BinaryKind::Sub => -gi,
                BinaryKind::Mul => gi * ad[ja],
                BinaryKind::Div => -gi * ad[ja] / (bd[jb] * bd[jb]),
            };
        }
    }
}

pub(super) fn sum_axis_backward<T: Float>(
    shape: &[usize],
    axis: usize,
    g: &[T],
    x: Var,
    buf: &mut GradBuf<T>,
) {
    let Some(gx) = buf.slot(x) else { return };
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    for o in 0..outer {
        let grow = &g[o * inner..(o + 1) * inner];
        for k in 0..n {
            let dst = &mut gx[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(grow) {
                *d += s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn unary_values() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[-2.0, 0.0, 3.0])).unwrap();
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0]);
        let s = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(s).data()[1], 0.5);
        let n = tape.neg(x).unwrap();
        assert_eq!(tape.value(n).data(), &[2.0, -0.0, -3.0]);
        assert!(matches!(tape.log(x), Err(TensorError::Domain { op: "log" })));
    }

    #[test]
    fn binary_broadcast_values() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0])).unwrap();
        let b = tape.constant(t(&[2], &[3.0, 4.0])).unwrap();
        let s = tape.add(a, b).unwrap();
        assert_eq!(tape.value(s).data(), &[4.0, 6.0]);
        let m = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let col = tape.constant(t(&[2, 1], &[10.0, 20.0])).unwrap();
        let s = tape.add(m, col).unwrap();
        assert_eq!(tape.value(s).data(), &[11.0, 12.0, 13.0, 24.0, 25.0, 26.0]);
        let bad = tape.constant(t(&[2], &[0.0, 0.0])).unwrap();
        assert!(tape.add(m, bad).is_err());
    }

    #[test]
    fn mul_by_ones_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[1.5, -2.0, 0.25, 9.0])).unwrap();
        let ones = tape.constant(Tensor::ones(&[2, 2]).unwrap()).unwrap();
        let y = tape.mul(x, ones).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn sum_axis_values() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let s0 = tape.sum_axis(x, 0).unwrap();
        assert_eq!(tape.value(s0).data(), &[5.0, 7.0, 9.0]);
        let s1 = tape.sum_axis(x, 1).unwrap();
        assert_eq!(tape.value(s1).data(), &[6.0, 15.0]);
    }
}
