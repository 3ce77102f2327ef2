//! Plain-loop reference implementations over `Vec<Vec<f64>>` rows.
#![allow(dead_code)]

use gdsnet_tensor::{ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi)).unwrap()
}

pub fn param(store: &ParamStore<f64>, name: &str) -> Tensor<f64> {
    store.value(store.id(name).unwrap()).clone()
}

/// Replaces every parameter with small random values.
pub fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for (k, id) in ids.into_iter().enumerate() {
        let shape = store.value(id).shape().to_vec();
        store.set(id, random(&shape, seed + k as u64, -0.5, 0.5)).unwrap();
    }
}

/// Zeroes every parameter whose name ends with one of `suffixes`.
pub fn zero_params(store: &mut ParamStore<f64>, suffixes: &[&str]) {
    let ids: Vec<_> = store
        .iter()
        .filter(|(_, p)| suffixes.iter().any(|s| p.name.ends_with(s)))
        .map(|(id, _)| id)
        .collect();
    assert!(!ids.is_empty());
    for id in ids {
        let shape = store.value(id).shape().to_vec();
        store.set(id, Tensor::zeros(&shape).unwrap()).unwrap();
    }
}

pub fn to_rows(t: &Tensor<f64>) -> Rows {
    let c = *t.shape().last().unwrap();
    t.data().chunks(c).map(|r| r.to_vec()).collect()
}

pub fn max_diff(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn linear(x: &Rows, store: &ParamStore<f64>, prefix: &str, bias: bool) -> Rows {
    let w = param(store, &format!("{prefix}.w"));
    let (fi, fo) = (w.shape()[0], w.shape()[1]);
    let b = bias.then(|| param(store, &format!("{prefix}.b")));
    x.iter()
        .map(|row| {
            (0..fo)
                .map(|o| {
                    let mut s = b.as_ref().map_or(0.0, |b| b.data()[o]);
                    for i in 0..fi {
                        s += row[i] * w.data()[i * fo + o];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn layer_norm(x: &Rows, store: &ParamStore<f64>, prefix: &str) -> Rows {
    let g = param(store, &format!("{prefix}.gain"));
    let b = param(store, &format!("{prefix}.bias"));
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g.data()[i] + b.data()[i])
                .collect()
        })
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn mlp(x: &Rows, store: &ParamStore<f64>, prefix: &str) -> Rows {
    let h = linear(x, store, &format!("{prefix}.fc1"), true);
    let h: Rows = h.iter().map(|r| r.iter().map(|&v| gelu(v)).collect()).collect();
    linear(&h, store, &format!("{prefix}.fc2"), true)
}

pub fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

/// Multi-head attention over the tokens of `x`; `allowed(i, j)` gates each
/// pair and `bias(h, i, j)` is added to the logits.
pub fn attention(
    x: &Rows,
    store: &ParamStore<f64>,
    prefix: &str,
    heads: usize,
    bias: &dyn Fn(usize, usize, usize) -> f64,
    allowed: &dyn Fn(usize, usize) -> bool,
) -> Rows {
    let q = linear(x, store, &format!("{prefix}.q"), true);
    let k = linear(x, store, &format!("{prefix}.k"), true);
    let v = linear(x, store, &format!("{prefix}.v"), true);
    let (n, d) = (x.len(), x[0].len());
    let dk = d / heads;
    let mut out = vec![vec![0.0; d]; n];
    for h in 0..heads {
        for i in 0..n {
            let js: Vec<usize> = (0..n).filter(|&j| allowed(i, j)).collect();
            let logits: Vec<f64> = js
                .iter()
                .map(|&j| {
                    let dot: f64 = (0..dk).map(|c| q[i][h * dk + c] * k[j][h * dk + c]).sum();
                    dot / (dk as f64).sqrt() + bias(h, i, j)
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for (a, &j) in js.iter().enumerate() {
                let p = (logits[a] - m).exp() / z;
                for c in 0..dk {
                    out[i][h * dk + c] += p * v[j][h * dk + c];
                }
            }
        }
    }
    linear(&out, store, &format!("{prefix}.o"), true)
}

/// Pre-norm block with unrestricted attention.
pub fn encoder_block(x: &Rows, store: &ParamStore<f64>, prefix: &str, heads: usize) -> Rows {
    let h = layer_norm(x, store, &format!("{prefix}.norm1"));
    let h = attention(&h, store, &format!("{prefix}.attn"), heads, &|_, _, _| 0.0, &|_, _| true);
    let x = add(x, &h);
    let h = layer_norm(&x, store, &format!("{prefix}.norm2"));
    add(&x, &mlp(&h, store, &format!("{prefix}.mlp")))
}
