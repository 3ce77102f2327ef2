use super::{GradBuf, Op, Tape, Var};
use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::Tensor;

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Float> Tape<T> {
    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(TensorError::Axis {
                op: "softmax",
                axis,
                rank: xv.rank(),
            });
        }
        let (outer, n, inner) = axis_split(xv.shape(), axis);
        let src = xv.data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let mut mx = src[at(0)];
                for k in 1..n {
                    mx = mx.max(src[at(k)]);
                }
                let mut total = T::zero();
                for k in 0..n {
                    let e = (src[at(k)] - mx).exp();
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..n {
                    out[at(k)] /= total;
                }
            }
        }
        let shape = xv.shape().to_vec();
        self.push("softmax", Tensor::new(shape, out)?, Op::Softmax { x, axis })
    }

    /// Layer normalization over the trailing axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let d = *xv.shape().last().ok_or(TensorError::Axis {
            op: "layer_norm",
            axis: 0,
            rank: 0,
        })?;
        for p in [gain, bias] {
            if self.value(p).shape() != [d] {
                return Err(TensorError::Shape {
                    op: "layer_norm",
                    lhs: xv.shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        let (gd, bd) = (self.value(gain).data(), self.value(bias).data());
        let rows = xv.numel() / d;
        let eps = T::from_f64(eps);
        let inv_d = T::one() / T::from_f64(d as f64);
        let mut xhat = vec![T::zero(); xv.numel()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.numel()];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gd[j] + bd[j];
            }
        }
        let shape = xv.shape().to_vec();
        self.push(
            "layer_norm",
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    /// Mean sparse categorical cross-entropy of `logits: [B, C]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.shape()[0] != targets.len() {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                lhs: lv.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let c = lv.shape()[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(TensorError::Invalid {
                op: "cross_entropy",
                msg: format!("target class {bad} out of range for {c} classes"),
            });
        }
        let b = targets.len();
        let mut probs = vec![T::zero(); b * c];
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = &lv.data()[r * c..(r + 1) * c];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln() + mx;
            for j in 0..c {
                probs[r * c + j] = (row[j] - lse).exp();
            }
            total += lse - row[t];
        }
        let loss = total / T::from_f64(b as f64);
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Mean binary cross-entropy on the sigmoid of `logits: [B]`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.numel() != targets.len() {
            return Err(TensorError::Shape {
                op: "bce_with_logits",
                lhs: lv.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if targets.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(TensorError::Invalid {
                op: "bce_with_logits",
                msg: "targets must be 0 or 1".into(),
            });
        }
        let ys: Vec<T> = targets.iter().map(|&y| T::from_f64(y)).collect();
        let mut total = T::zero();
        for (&z, &y) in lv.data().iter().zip(&ys) {
            // max(z,0) - z*y + log(1 + exp(-|z|))
            total += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        }
        let loss = total / T::from_f64(ys.len() as f64);
        self.push(
            "bce_with_logits",
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                targets: ys,
            },
        )
    }
}

pub(super) fn softmax_backward<T: Float>(
    y: &Tensor<T>,
    axis: usize,
    g: &[T],
    x: Var,
    buf: &mut GradBuf<T>,
) {
    let Some(gx) = buf.slot(x) else { return };
    let (outer, n, inner) = axis_split(y.shape(), axis);
    let yd = y.data();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let mut dotp = T::zero();
            for k in 0..n {
                dotp += g[at(k)] * yd[at(k)];
            }
            for k in 0..n {
                gx[at(k)] += yd[at(k)] * (g[at(k)] - dotp);
            }
        }
    }
}

pub(super) fn layer_norm_backward<T: Float>(
    x: Var,
    (gain, gv): (Var, &Tensor<T>),
    bias: Var,
    xhat: &[T],
    rstd: &[T],
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let d = gv.numel();
    let rows = rstd.len();
    let gd = gv.data();
    if let Some(gg) = buf.slot(gain) {
        for r in 0..rows {
            for j in 0..d {
                gg[j] += g[r * d + j] * xhat[r * d + j];
            }
        }
    }
    if let Some(gb) = buf.slot(bias) {
        for r in 0..rows {
            for j in 0..d {
                gb[j] += g[r * d + j];
            }
        }
    }
    if let Some(gx) = buf.slot(x) {
        let inv_d = T::one() / T::from_f64(d as f64);
        for r in 0..rows {
            let mut m1 = T::zero();
            let mut m2 = T::zero();
            for j in 0..d {
                let dh = g[r * d + j] * gd[j];
                m1 += dh;
                m2 += dh * xhat[r * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for j in 0..d {
                let dh = g[r * d + j] * gd[j];
                gx[r * d + j] += rstd[r] * (dh - m1 - xhat[r * d + j] * m2);
            }
        }
    }
}

pub(super) fn cross_entropy_backward<T: Float>(
    logits: Var,
    targets: &[usize],
    probs: &[T],
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let Some(gl) = buf.slot(logits) else { return };
    let b = targets.len();
    let c = probs.len() / b;
    let scale = g[0] / T::from_f64(b as f64);
    for (r, &t) in targets.iter().enumerate() {
        for j in 0..c {
            let onehot = if j == t { T::one() } else { T::zero() };
            gl[r * c + j] += scale * (probs[r * c + j] - onehot);
        }
    }
}

pub(super) fn bce_backward<T: Float>(
    (logits, lv): (Var, &Tensor<T>),
    targets: &[T],
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let Some(gl) = buf.slot(logits) else { return };
    let scale = g[0] / T::from_f64(targets.len() as f64);
    for (i, (&z, &y)) in lv.data().iter().zip(targets).enumerate() {
        let p = if z >= T::zero() {
            T::one() / (T::one() + (-z).exp())
        } else {
            let e = z.exp();
            e / (T::one() + e)
        };
        gl[i] += scale * (p - y);
    }
}
