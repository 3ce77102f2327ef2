use super::elementwise::BroadcastIndex;
use super::{GradBuf, Op, Tape, Var};
use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::kernels::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{broadcast_shape, numel, Tensor};

struct MatmulPlan {
    batch: Vec<usize>,
    m: usize,
    k: usize,
    n: usize,
    ia: BroadcastIndex,
    ib: BroadcastIndex,
}

fn plan(a: &[usize], b: &[usize]) -> Result<MatmulPlan> {
    let err = || TensorError::Shape {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(err());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(err());
    }
    let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    let batch = broadcast_shape(ba, bb).ok_or_else(err)?;
    Ok(MatmulPlan {
        ia: BroadcastIndex::new(&batch, ba),
        ib: BroadcastIndex::new(&batch, bb),
        batch,
        m,
        k,
        n,
    })
}

impl<T: Float> Tape<T> {
    /// Batched matrix product `[..., m, k] · [..., k, n]` with broadcast
    /// batch axes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let p = plan(av.shape(), bv.shape())?;
        let nb = numel(&p.batch);
        let (m, k, n) = (p.m, p.k, p.n);
        let mut out = vec![T::zero(); nb * m * n];
        for bi in 0..nb {
            let ao = p.ia.get(bi) * m * k;
            let bo = p.ib.get(bi) * k * n;
            gemm_nn(
                &av.data()[ao..ao + m * k],
                &bv.data()[bo..bo + k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = p.batch.clone();
        shape.extend([m, n]);
        self.push("matmul", Tensor::new(shape, out)?, Op::MatMul { a, b })
    }

    /// Affine map over the trailing axis: `x · w + b` with `w: [in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let xs = xv.shape();
        let ws = wv.shape();
        let shape_err = |rhs: &[usize]| TensorError::Shape {
            op: "linear",
            lhs: xs.to_vec(),
            rhs: rhs.to_vec(),
        };
        if ws.len() != 2 || xs.is_empty() || xs[xs.len() - 1] != ws[0] {
            return Err(shape_err(ws));
        }
        let (fan_in, fan_out) = (ws[0], ws[1]);
        let rows = xv.numel() / fan_in;
        let mut out = vec![T::zero(); rows * fan_out];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [fan_out] {
                return Err(shape_err(bv.shape()));
            }
            for r in 0..rows {
                out[r * fan_out..(r + 1) * fan_out].copy_from_slice(bv.data());
            }
        }
        gemm_nn(xv.data(), wv.data(), &mut out, rows, fan_in, fan_out);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = fan_out;
        self.push("linear", Tensor::new(shape, out)?, Op::Linear { x, w, b })
    }
}

pub(super) fn matmul_backward<T: Float>(
    (a, av): (Var, &Tensor<T>),
    (b, bv): (Var, &Tensor<T>),
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let p = plan(av.shape(), bv.shape()).expect("validated in forward");
    let nb = numel(&p.batch);
    let (m, k, n) = (p.m, p.k, p.n);
    if let Some(ga) = buf.slot(a) {
        for bi in 0..nb {
            let ao = p.ia.get(bi) * m * k;
            let bo = p.ib.get(bi) * k * n;
            gemm_nt(
                &g[bi * m * n..(bi + 1) * m * n],
                &bv.data()[bo..bo + k * n],
                &mut ga[ao..ao + m * k],
                m,
                n,
                k,
            );
        }
    }
    if let Some(gb) = buf.slot(b) {
        for bi in 0..nb {
            let ao = p.ia.get(bi) * m * k;
            let bo = p.ib.get(bi) * k * n;
            gemm_tn(
                &av.data()[ao..ao + m * k],
                &g[bi * m * n..(bi + 1) * m * n],
                &mut gb[bo..bo + k * n],
                k,
                m,
                n,
            );
        }
    }
}

pub(super) fn linear_backward<T: Float>(
    (x, xv): (Var, &Tensor<T>),
    (w, wv): (Var, &Tensor<T>),
    b: Option<Var>,
    g: &[T],
    buf: &mut GradBuf<T>,
) {
    let (fan_in, fan_out) = (wv.shape()[0], wv.shape()[1]);
    let rows = xv.numel() / fan_in;
    if let Some(gx) = buf.slot(x) {
        gemm_nt(g, wv.data(), gx, rows, fan_out, fan_in);
    }
    if let Some(gw) = buf.slot(w) {
        gemm_tn(xv.data(), g, gw, fan_in, rows, fan_out);
    }
    if let Some(b) = b {
        if let Some(gb) = buf.slot(b) {
            for r in 0..rows {
                for (d, &s) in gb.iter_mut().zip(&g[r * fan_out..(r + 1) * fan_out]) {
                    *d += s;
                }
            }
        }
    }
}
