//! Forward ops checked against independent loop-based reference code.

use gdsnet_tensor::tensor::inverse_perm;
use gdsnet_tensor::{Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi)).unwrap()
}

fn matmul_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a.at(&[i, p]) * b.at(&[p, j]);
            }
        }
    }
    c
}

#[test]
fn matmul_matches_triple_loop() {
    let a = random(&[4, 5], 1, -1.0, 1.0);
    let b = random(&[5, 3], 2, -1.0, 1.0);
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()).unwrap(), tape.constant(b.clone()).unwrap());
    let c = tape.matmul(va, vb).unwrap();
    let expect = matmul_oracle(&a, &b);
    for (x, y) in tape.value(c).data().iter().zip(&expect) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn softmax_matches_direct_formula() {
    let x = random(&[7], 3, -4.0, 4.0);
    let mut tape = Tape::new();
    let v = tape.constant(x.clone()).unwrap();
    let y = tape.softmax(v, 0).unwrap();
    let denom: f64 = x.data().iter().map(|v| v.exp()).sum();
    for (i, &p) in tape.value(y).data().iter().enumerate() {
        assert!((p - x.data()[i].exp() / denom).abs() <= 1e-12);
    }
}

fn conv_oracle(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<usize>, Vec<f64>) {
    let (ci, it, ih, iw) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kt, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3], k.shape()[4]);
    let ot = (it + 2 * pad[0] - kt) / stride[0] + 1;
    let oh = (ih + 2 * pad[1] - kh) / stride[1] + 1;
    let ow = (iw + 2 * pad[2] - kw) / stride[2] + 1;
    let mut out = Vec::new();
    for o in 0..co {
        for t in 0..ot {
            for y in 0..oh {
                for z in 0..ow {
                    let mut s = b.data()[o];
                    for c in 0..ci {
                        for a in 0..kt {
                            for bb in 0..kh {
                                for d in 0..kw {
                                    let st = (t * stride[0] + a) as isize - pad[0] as isize;
                                    let sy = (y * stride[1] + bb) as isize - pad[1] as isize;
                                    let sz = (z * stride[2] + d) as isize - pad[2] as isize;
                                    if st < 0 || sy < 0 || sz < 0 {
                                        continue;
                                    }
                                    let (st, sy, sz) = (st as usize, sy as usize, sz as usize);
                                    if st >= it || sy >= ih || sz >= iw {
                                        continue;
                                    }
                                    s += x.at(&[c, st, sy, sz]) * k.at(&[o, c, a, bb, d]);
                                }
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    (vec![co, ot, oh, ow], out)
}

fn pool_oracle(x: &Tensor<f64>, w: [usize; 3]) -> Vec<f64> {
    let s = x.shape();
    let mut out = Vec::new();
    for c in 0..s[0] {
        for t in 0..s[1] / w[0] {
            for y in 0..s[2] / w[1] {
                for z in 0..s[3] / w[2] {
                    let mut m = f64::NEG_INFINITY;
                    for a in 0..w[0] {
                        for b in 0..w[1] {
                            for d in 0..w[2] {
                                m = m.max(x.at(&[c, t * w[0] + a, y * w[1] + b, z * w[2] + d]));
                            }
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..40, seed in any::<u64>()) {
        let x = random(&[rows, cols], seed, -1e3, 1e3);
        let mut tape = Tape::new();
        let v = tape.constant(x).unwrap();
        let y = tape.softmax(v, 1).unwrap();
        for r in 0..rows {
            let row = &tape.value(y).data()[r * cols..(r + 1) * cols];
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn conv3d_matches_nested_loops(
        ci in 1usize..=3, co in 1usize..=3,
        t in 1usize..=6, h in 1usize..=10, w in 1usize..=10,
        k in 1usize..=3, s in 1usize..=2, p in 0usize..=1,
        seed in any::<u64>(),
    ) {
        prop_assume!(t + 2 * p >= k && h + 2 * p >= k && w + 2 * p >= k);
        let x = random(&[ci, t, h, w], seed, -1.0, 1.0);
        let kern = random(&[co, ci, k, k, k], seed ^ 1, -1.0, 1.0);
        let b = random(&[co], seed ^ 2, -1.0, 1.0);
        let mut tape = Tape::new();
        let (vx, vk, vb) = (
            tape.constant(x.clone()).unwrap(),
            tape.constant(kern.clone()).unwrap(),
            tape.constant(b.clone()).unwrap(),
        );
        let y = tape.conv3d(vx, vk, Some(vb), [s; 3], [p; 3]).unwrap();
        let (shape, expect) = conv_oracle(&x, &kern, &b, [s; 3], [p; 3]);
        prop_assert_eq!(tape.shape(y), &shape[..]);
        for (a, e) in tape.value(y).data().iter().zip(&expect) {
            prop_assert!((a - e).abs() <= 1e-10);
        }
    }

    #[test]
    fn maxpool3d_matches_loops(
        c in 1usize..=3, t in 1usize..=6, h in 1usize..=10, w in 1usize..=10,
        pt in 1usize..=2, ph in 1usize..=3, pw in 1usize..=3, seed in any::<u64>(),
    ) {
        prop_assume!(pt <= t && ph <= h && pw <= w);
        let x = random(&[c, t, h, w], seed, -5.0, 5.0);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone()).unwrap();
        let y = tape.maxpool3d(v, [pt, ph, pw]).unwrap();
        prop_assert_eq!(tape.value(y).data(), &pool_oracle(&x, [pt, ph, pw])[..]);
    }

    #[test]
    fn reshape_permute_roundtrip_bit_identical(
        dims in prop::collection::vec(1usize..5, 1..5),
        seed in any::<u64>(),
    ) {
        let x = random(&dims, seed, -1.0, 1.0);
        let mut perm: Vec<usize> = (0..dims.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut tape = Tape::new();
        let v = tape.constant(x.clone()).unwrap();
        let p = tape.permute(v, &perm).unwrap();
        let back = tape.permute(p, &inverse_perm(&perm)).unwrap();
        prop_assert_eq!(tape.value(back), &x);
        let flat = tape.reshape(v, &[x.numel()]).unwrap();
        let again = tape.reshape(flat, &dims).unwrap();
        prop_assert_eq!(tape.value(again), &x);
        let mut sorted_a = tape.value(p).data().to_vec();
        let mut sorted_b = x.data().to_vec();
        sorted_a.sort_by(f64::total_cmp);
        sorted_b.sort_by(f64::total_cmp);
        prop_assert_eq!(sorted_a, sorted_b);
    }
}
