use std::sync::Arc;

use super::{GradBuf, Op, Tape, Var};
use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::{check_perm, inverse_perm, permute_data, Tensor};

impl<T: Float> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.push("reshape", out, Op::Reshape { x })
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let out = self.value(x).permute(perm)?;
        self.push(
            "permute",
            out,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
        )
    }

    /// Swaps the two trailing axes.
    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let r = self.value(x).rank();
        if r < 2 {
            return Err(TensorError::Axis {
                op: "transpose_last",
                axis: 1,
                rank: r,
            });
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(x, &perm)
    }

    /// Row gather over the trailing axis: `x` is viewed as `[R, C]` and the
    /// output is `[index.len(), C]`; `None` entries produce zero rows.
    pub fn gather_rows(&mut self, x: Var, index: Arc<[Option<usize>]>) -> Result<Var> {
        let xv = self.value(x);
        let c = *xv.shape().last().ok_or(TensorError::Axis {
            op: "gather_rows",
            axis: 0,
            rank: 0,
        })?;
        let rows = xv.numel() / c;
        if let Some(bad) = index.iter().flatten().find(|&&r| r >= rows) {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: format!("row {bad} out of range for {rows} rows"),
            });
        }
        if index.is_empty() {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: "empty index".into(),
            });
        }
        let src = xv.data();
        let mut out = Vec::with_capacity(index.len() * c);
        for r in index.iter() {
            match r {
                Some(r) => out.extend_from_slice(&src[r * c..(r + 1) * c]),
                None => out.extend(std::iter::repeat_n(T::zero(), c)),
            }
        }
        let shape = vec![index.len(), c];
        self.push("gather_rows", Tensor::new(shape, out)?, Op::GatherRows { x, index })
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .value(*xs.first().ok_or(TensorError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            })?)
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(TensorError::Axis {
                op: "concat",
                axis,
                rank: first.len(),
            });
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let n = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v).data()[o * n..(o + 1) * n]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        self.push(
            "concat",
            Tensor::new(shape, out)?,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
        )
    }

    /// Slice `len` entries of `axis` starting at `start`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Axis {
                op: "narrow",
                axis,
                rank: shape.len(),
            });
        }
        if len == 0 || start + len > shape[axis] {
            return Err(TensorError::Invalid {
                op: "narrow",
                msg: format!("range {start}..{} exceeds extent {}", start + len, shape[axis]),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(
            "narrow",
            Tensor::new(out_shape, out)?,
            Op::Narrow { x, axis, start },
        )
    }
}

pub(super) fn permute_backward<T: Float>(
    out_shape: &[usize],
    perm: &[usize],
    g: &[T],
    x: Var,
    buf: &mut GradBuf<T>,
) {
    let Some(gx) = buf.slot(x) else { return };
    debug_assert!(check_perm(perm, out_shape.len()).is_ok());
    let back = permute_data(g, out_shape, &inverse_perm(perm));
    for (d, s) in gx.iter_mut().zip(back) {
        *d += s;
    }
}

pub(super) fn gather_backward<T: Float>(
    xv: &Tensor<T>,
    index: &[Option<usize>],
    g: &[T],
    x: Var,
    buf: &mut GradBuf<T>,
) {
    let Some(gx) = buf.slot(x) else { return };
    let c = *xv.shape().last().unwrap();
    for (i, r) in index.iter().enumerate() {
        if let Some(r) = r {
            for (d, &s) in gx[r * c..(r + 1) * c].iter_mut().zip(&g[i * c..(i + 1) * c]) {
                *d += s;
            }
        }
    }
}

pub(super) fn concat_backward<T: Float>(
    xs: &[Var],
    shapes: &[&[usize]],
    axis: usize,
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let outer: usize = shapes[0][..axis].iter().product();
    let inner: usize = shapes[0][axis + 1..].iter().product();
    let total: usize = shapes.iter().map(|s| s[axis]).sum::<usize>() * inner;
    let mut offset = 0;
    for (v, s) in xs.iter().zip(shapes) {
        let n = s[axis] * inner;
        if let Some(gx) = buf.slot(*v) {
            for o in 0..outer {
                let src = &g[o * total + offset..o * total + offset + n];
                for (d, &sv) in gx[o * n..(o + 1) * n].iter_mut().zip(src) {
                    *d += sv;
                }
            }
        }
        offset += n;
    }
    debug_assert_eq!(offset, total);
}

pub(super) fn narrow_backward<T: Float>(
    in_shape: &[usize],
    out_shape: &[usize],
    axis: usize,
    start: usize,
    g: &[T],
    x: Var,
    buf: &mut GradBuf<T>,
) {
    let Some(gx) = buf.slot(x) else { return };
    let outer: usize = in_shape[..axis].iter().product();
    let inner: usize = in_shape[axis + 1..].iter().product();
    let len = out_shape[axis];
    for o in 0..outer {
        let base = (o * in_shape[axis] + start) * inner;
        let src = &g[o * len * inner..(o + 1) * len * inner];
        for (d, &s) in gx[base..base + len * inner].iter_mut().zip(src) {
            *d += s;
        }
    }
}
