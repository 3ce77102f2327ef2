//! Slice-level numeric kernels. Every routine accumulates into its output
//! (`+=`) and visits elements in a fixed order, so results are reproducible
//! bit-for-bit.

use crate::float::Float;

#[inline]
pub fn axpy<T: Float>(y: &mut [T], alpha: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// c[m,n] += a[m,k] · b[k,n]
pub fn gemm_nn<T: Float>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            axpy(crow, av, &b[p * n..(p + 1) * n]);
        }
    }
}

/// c[m,n] += a[k,m]ᵀ · b[k,n]
pub fn gemm_tn<T: Float>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        let arow = &a[p * m..(p + 1) * m];
        for (i, &av) in arow.iter().enumerate() {
            axpy(&mut c[i * n..(i + 1) * n], av, brow);
        }
    }
}

/// c[m,n] += a[m,k] · b[n,k]ᵀ
pub fn gemm_nt<T: Float>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// Geometry of a single-sample 3D convolution over `[C, T, H, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub input: [usize; 3],
    pub c_out: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    /// Returns `None` when the kernel does not fit the padded input.
    pub fn new(
        c_in: usize,
        input: [usize; 3],
        c_out: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Option<Self> {
        let mut output = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * padding[a];
            if kernel[a] == 0 || stride[a] == 0 || kernel[a] > padded {
                return None;
            }
            output[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Some(ConvGeom {
            c_in,
            input,
            c_out,
            kernel,
            stride,
            padding,
            output,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }

    pub fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    /// Source coordinate along `axis` for output index `o` and kernel tap `k`.
    #[inline]
    fn src(&self, axis: usize, o: usize, k: usize) -> Option<usize> {
        let v = (o * self.stride[axis] + k) as isize - self.padding[axis] as isize;
        if v >= 0 && (v as usize) < self.input[axis] {
            Some(v as usize)
        } else {
            None
        }
    }

    /// Visits every (patch row, output position, source offset) triple with an
    /// in-bounds source.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [it, ih, iw] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [ot, oh, ow] = self.output;
        let plane = it * ih * iw;
        let mut r = 0;
        for c in 0..self.c_in {
            for a in 0..kt {
                for b in 0..kh {
                    for d in 0..kw {
                        for t in 0..ot {
                            let Some(st) = self.src(0, t, a) else { continue };
                            for y in 0..oh {
                                let Some(sy) = self.src(1, y, b) else { continue };
                                let row_base = c * plane + (st * ih + sy) * iw;
                                let pos_base = (t * oh + y) * ow;
                                for x in 0..ow {
                                    if let Some(sx) = self.src(2, x, d) {
                                        f(r, pos_base + x, row_base + sx);
                                    }
                                }
                            }
                        }
                        r += 1;
                    }
                }
            }
        }
    }
}

/// Unfolds `x` into a `[patch_len, out_positions]` matrix (zero for padding).
pub fn im2col<T: Float>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.out_positions();
    let mut cols = vec![T::zero(); g.patch_len() * p];
    g.for_each_tap(|r, pos, src| cols[r * p + pos] = x[src]);
    cols
}

/// Scatter-adds a column-matrix gradient back onto the input layout.
pub fn col2im<T: Float>(dcols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.out_positions();
    g.for_each_tap(|r, pos, src| dx[src] += dcols[r * p + pos]);
}

/// Non-overlapping 3D max pool over `[C, T, H, W]`; trailing remainders are
/// dropped. Returns the output and the flat argmax of every cell (first
/// maximal element in row-major window order).
pub fn maxpool3d<T: Float>(
    x: &[T],
    channels: usize,
    input: [usize; 3],
    window: [usize; 3],
) -> (Vec<T>, Vec<usize>) {
    let [it, ih, iw] = input;
    let [pt, ph, pw] = window;
    let (ot, oh, ow) = (it / pt, ih / ph, iw / pw);
    let n = channels * ot * oh * ow;
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for c in 0..channels {
        let cbase = c * it * ih * iw;
        for t in 0..ot {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = cbase + ((t * pt) * ih + y * ph) * iw + xo * pw;
                    let mut bv = x[best];
                    for a in 0..pt {
                        for b in 0..ph {
                            let row = cbase + ((t * pt + a) * ih + y * ph + b) * iw + xo * pw;
                            for (d, &v) in x[row..row + pw].iter().enumerate() {
                                if v > bv {
                                    bv = v;
                                    best = row + d;
                                }
                            }
                        }
                    }
                    out.push(bv);
                    arg.push(best);
                }
            }
        }
    }
    (out, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn gemm_variants_agree() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sqrt()).collect();
        let mut c = vec![0.0; m * n];
        gemm_nn(&a, &b, &mut c, m, k, n);
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c2 = vec![0.0; m * n];
        gemm_tn(&at, &b, &mut c2, m, k, n);
        let mut c3 = vec![0.0; m * n];
        gemm_nt(&a, &bt, &mut c3, m, k, n);
        for i in 0..m * n {
            assert!((c[i] - c2[i]).abs() < 1e-12);
            assert!((c[i] - c3[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_geometry() {
        let g = ConvGeom::new(3, [30, 224, 224], 32, [3, 3, 3], [1, 1, 1], [1, 1, 1]).unwrap();
        assert_eq!(g.output, [30, 224, 224]);
        let g = ConvGeom::new(1, [5, 7, 9], 1, [2, 3, 3], [2, 2, 3], [0, 1, 0]).unwrap();
        assert_eq!(g.output, [2, 4, 3]);
        assert!(ConvGeom::new(1, [2, 2, 2], 1, [3, 3, 3], [1, 1, 1], [0, 0, 0]).is_none());
    }

    #[test]
    fn pool_picks_first_max() {
        let x = vec![1.0f64, 3.0, 3.0, 2.0];
        let (out, arg) = maxpool3d(&x, 1, [1, 2, 2], [1, 2, 2]);
        assert_eq!(out, vec![3.0]);
        assert_eq!(arg, vec![1]);
    }
}
