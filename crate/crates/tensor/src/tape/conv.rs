use super::{GradBuf, Op, Tape, Var};
use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, maxpool3d, ConvGeom};
use crate::tensor::Tensor;

impl<T: Float> Tape<T> {
    /// Direct-sum 3D convolution of `x: [C_in, T, H, W]` with
    /// `kernel: [C_out, C_in, kt, kh, kw]`.
    pub fn conv3d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Var> {
        let (xv, kv) = (self.value(x), self.value(kernel));
        let (xs, ks) = (xv.shape(), kv.shape());
        let shape_err = || TensorError::Shape {
            op: "conv3d",
            lhs: xs.to_vec(),
            rhs: ks.to_vec(),
        };
        if xs.len() != 4 || ks.len() != 5 || ks[1] != xs[0] {
            return Err(shape_err());
        }
        let geom = ConvGeom::new(
            xs[0],
            [xs[1], xs[2], xs[3]],
            ks[0],
            [ks[2], ks[3], ks[4]],
            stride,
            padding,
        )
        .ok_or_else(shape_err)?;
        let p = geom.out_positions();
        let mut out = vec![T::zero(); geom.c_out * p];
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape() != [geom.c_out] {
                return Err(TensorError::Shape {
                    op: "conv3d",
                    lhs: ks.to_vec(),
                    rhs: bv.shape().to_vec(),
                });
            }
            for (o, &bo) in bv.data().iter().enumerate() {
                out[o * p..(o + 1) * p].iter_mut().for_each(|v| *v = bo);
            }
        }
        let cols = im2col(xv.data(), &geom);
        gemm_nn(kv.data(), &cols, &mut out, geom.c_out, geom.patch_len(), p);
        let shape = vec![geom.c_out, geom.output[0], geom.output[1], geom.output[2]];
        self.push(
            "conv3d",
            Tensor::new(shape, out)?,
            Op::Conv3d {
                x,
                kernel,
                bias,
                geom,
                cols,
            },
        )
    }

    /// Non-overlapping max pool over `[C, T, H, W]` with stride equal to the
    /// window; remainders that do not fill a window are dropped.
    pub fn maxpool3d(&mut self, x: Var, window: [usize; 3]) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 4
            || window.contains(&0)
            || window[0] > s[1]
            || window[1] > s[2]
            || window[2] > s[3]
        {
            return Err(TensorError::Shape {
                op: "maxpool3d",
                lhs: s.to_vec(),
                rhs: window.to_vec(),
            });
        }
        let (out, argmax) = maxpool3d(xv.data(), s[0], [s[1], s[2], s[3]], window);
        let shape = vec![s[0], s[1] / window[0], s[2] / window[1], s[3] / window[2]];
        self.push("maxpool3d", Tensor::new(shape, out)?, Op::MaxPool3d { x, argmax })
    }
}

pub(super) fn conv3d_backward<T: Float>(
    x: Var,
    (kernel, kv): (Var, &Tensor<T>),
    bias: Option<Var>,
    geom: &ConvGeom,
    cols: &[T],
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let p = geom.out_positions();
    let r = geom.patch_len();
    if let Some(b) = bias {
        if let Some(gb) = buf.slot(b) {
            for (o, d) in gb.iter_mut().enumerate() {
                *d += g[o * p..(o + 1) * p].iter().copied().sum::<T>();
            }
        }
    }
    if let Some(gk) = buf.slot(kernel) {
        gemm_nt(g, cols, gk, geom.c_out, p, r);
    }
    if buf.needs(x) {
        let mut dcols = vec![T::zero(); r * p];
        gemm_tn(kv.data(), g, &mut dcols, r, geom.c_out, p);
        if let Some(gx) = buf.slot(x) {
            col2im(&dcols, geom, gx);
        }
    }
}
