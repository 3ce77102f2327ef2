mod common;

use std::collections::BTreeSet;

use common::*;
use gdsnet_models::nn::MultiHeadAttention;
use gdsnet_models::swin3d::{
    patch_grid, shifted_window_attention, window_partition, window_reverse, PatchMerge, Swin3d, SwinBlock, SwinConfig,
    WindowPlan,
};
use gdsnet_models::VideoModel;
use gdsnet_tensor::{check_params, GradCheckConfig, Init, ParamBuilder, ParamStore, Tape, Tensor};
use proptest::prelude::*;

fn tiny(depths: Vec<usize>) -> SwinConfig {
    SwinConfig {
        image_patch: 4,
        frame_patch: 2,
        embed_dim: 8,
        heads: vec![2; depths.len()],
        depths,
        mlp_ratio: 2,
        window: [2, 2, 2],
        classes: 2,
        input: [8, 16, 16, 3],
    }
}

#[test]
fn full_resolution_token_counts() {
    assert_eq!(patch_grid([30, 224, 224, 3], 2, 4), [15, 56, 56]);
    assert_eq!(15 * 56 * 56, 47040);
    assert_eq!(patch_grid([31, 224, 224, 3], 2, 4)[0], 16);
    assert_eq!(patch_grid([5, 6, 7, 3], 1, 1), [5, 6, 7]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn patch_embed_realizes_ceiling_formula(
        t in 1usize..9, h in 1usize..13, w in 1usize..13, p in 1usize..4, m in 1usize..5, seed in any::<u64>(),
    ) {
        let cfg = SwinConfig { image_patch: m, frame_patch: p, embed_dim: 4, depths: vec![1], heads: vec![1],
            mlp_ratio: 1, window: [2, 2, 2], classes: 2, input: [t, h, w, 3] };
        let mut store = ParamStore::<f64>::new();
        let model = Swin3d::new(cfg, &mut store, seed).unwrap();
        let mut tape = Tape::new();
        let clip = tape.constant(random(&[t, h, w, 3], seed, 0.0, 1.0)).unwrap();
        let x = model.patch_embed(&mut tape, &store, clip).unwrap();
        prop_assert_eq!(tape.shape(x)[0], t.div_ceil(p) * h.div_ceil(m) * w.div_ceil(m));
    }
}

#[test]
fn window_counts() {
    assert_eq!(WindowPlan::new([4, 8, 8], [2, 4, 4], [0; 3]).unwrap().num_windows, 8);
    let whole = WindowPlan::new([2, 3, 4], [2, 3, 4], [0; 3]).unwrap();
    assert_eq!((whole.num_windows, whole.window_len), (1, 24));
    assert!(whole.partition.iter().enumerate().all(|(i, &r)| r == Some(i)));
    assert!(WindowPlan::new([4, 8, 8], [2, 4, 4], [2, 1, 1]).is_err());
}

#[test]
fn relative_index_is_antisymmetric() {
    let plan = WindowPlan::new([4, 6, 6], [2, 3, 3], [0; 3]).unwrap();
    let n = plan.window_len;
    let idx: Vec<usize> = plan.rel_index.iter().map(|r| r.unwrap()).collect();
    for i in 0..n {
        assert_eq!(idx[i * n + i], (plan.table_len - 1) / 2);
        for j in 0..n {
            assert_eq!(idx[i * n + j] + idx[j * n + i], plan.table_len - 1);
        }
    }
}

fn grid_strategy() -> impl Strategy<Value = ([usize; 3], [usize; 3], [usize; 3], u64)> {
    (1usize..6, 1usize..7, 1usize..7, 1usize..4, 1usize..4, 1usize..4, any::<bool>(), any::<u64>()).prop_map(
        |(d, h, w, a, b, c, shifted, seed)| {
            let window = [a, b, c];
            let shift = if shifted { window.map(|x| x / 2) } else { [0; 3] };
            ([d, h, w], window, shift, seed)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn partition_is_disjoint_cover_and_reverses(case in grid_strategy()) {
        let (grid, window, shift, seed) = case;
        let plan = WindowPlan::new(grid, window, shift).unwrap();
        let n: usize = grid.iter().product();
        let covered: Vec<usize> = plan.partition.iter().flatten().copied().collect();
        prop_assert_eq!(covered.len(), n);
        prop_assert_eq!(covered.iter().copied().collect::<BTreeSet<_>>().len(), n);
        let x = random(&[grid[0], grid[1], grid[2], 3], seed, -1.0, 1.0);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone()).unwrap();
        let w = window_partition(&mut tape, v, window, shift).unwrap();
        let mut a: Vec<f64> = tape.value(w).data().iter().copied().filter(|&v| v != 0.0).collect();
        let mut b = x.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        let back = window_reverse(&mut tape, w, grid, window, shift).unwrap();
        prop_assert_eq!(tape.value(back), &x);
    }
}

fn attention_module(store: &mut ParamStore<f64>, dim: usize, heads: usize, table: usize) -> (MultiHeadAttention, gdsnet_tensor::ParamId) {
    let mut pb = ParamBuilder::new(store, 1);
    let m = MultiHeadAttention::new(&mut pb, "attn", dim, heads).unwrap();
    let bias = pb.param("rel_bias", &[table, heads], Init::Zeros).unwrap();
    (m, bias)
}

#[test]
fn full_window_matches_global_attention() {
    for seed in 0..20u64 {
        let grid = [2, 2 + seed as usize % 2, 3];
        let n: usize = grid.iter().product();
        let plan = WindowPlan::new(grid, grid, [0; 3]).unwrap();
        let mut store = ParamStore::new();
        let (m, bias) = attention_module(&mut store, 4, 2, plan.table_len);
        randomize(&mut store, 100 + seed);
        store.set(bias, Tensor::zeros(&[plan.table_len, 2]).unwrap()).unwrap();
        let x = random(&[n, 4], seed, -1.0, 1.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone()).unwrap();
        let y = shifted_window_attention(&mut tape, &store, &m, bias, &plan, xv, &mut Vec::new()).unwrap();
        let xg = tape.reshape(xv, &[1, n, 4]).unwrap();
        let g = m.forward(&mut tape, &store, xg, None, &mut Vec::new()).unwrap();
        let g = tape.reshape(g, &[n, 4]).unwrap();
        assert!(tape.value(y).max_abs_diff(tape.value(g)) <= 1e-5);
    }
}

#[test]
fn shifted_mask_zeroes_wrapped_pairs() {
    for (grid, window) in [([4, 4, 4], [2, 2, 2]), ([3, 5, 5], [2, 3, 3]), ([4, 6, 6], [4, 3, 3])] {
        let shift = window.map(|w| w / 2);
        let plan = WindowPlan::new(grid, window, shift).unwrap();
        let mut store = ParamStore::new();
        let (m, bias) = attention_module(&mut store, 4, 2, plan.table_len);
        randomize(&mut store, 7);
        let n: usize = grid.iter().product();
        let mut tape = Tape::new();
        let x = tape.constant(random(&[n, 4], 3, -1.0, 1.0)).unwrap();
        let mut trace = Vec::new();
        shifted_window_attention(&mut tape, &store, &m, bias, &plan, x, &mut trace).unwrap();
        let weights = tape.value(trace[0]);
        let wl = plan.window_len;
        let counts: Vec<usize> = (0..3).map(|a| plan.padded[a] / plan.window[a]).collect();
        let mut zeroed = 0;
        for w in 0..plan.num_windows {
            let wc = [w / (counts[1] * counts[2]), w / counts[2] % counts[1], w % counts[2]];
            // a position wrapped around the grid edge when its shifted source index overflowed
            let wrapped = |p: usize| -> [bool; 3] {
                let pc = [p / (plan.window[1] * plan.window[2]), p / plan.window[2] % plan.window[1], p % plan.window[2]];
                std::array::from_fn(|a| wc[a] * plan.window[a] + pc[a] + plan.shift[a] >= plan.padded[a])
            };
            for h in 0..2 {
                for i in 0..wl {
                    let row = &weights.data()[((w * 2 + h) * wl + i) * wl..][..wl];
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                    for j in 0..wl {
                        if wrapped(i) != wrapped(j) {
                            assert_eq!(row[j], 0.0);
                            zeroed += 1;
                        }
                    }
                }
            }
        }
        assert!(zeroed > 0);
    }
}

#[test]
fn padding_keys_get_zero_weight() {
    let plan = WindowPlan::new([3, 3, 3], [2, 2, 2], [0; 3]).unwrap();
    let mut store = ParamStore::new();
    let (m, bias) = attention_module(&mut store, 4, 1, plan.table_len);
    randomize(&mut store, 8);
    let mut tape = Tape::new();
    let x = tape.constant(random(&[27, 4], 4, -1.0, 1.0)).unwrap();
    let mut trace = Vec::new();
    shifted_window_attention(&mut tape, &store, &m, bias, &plan, x, &mut trace).unwrap();
    let wl = plan.window_len;
    let w = tape.value(trace[0]);
    for win in 0..plan.num_windows {
        for i in 0..wl {
            if plan.partition[win * wl + i].is_none() {
                continue;
            }
            for j in 0..wl {
                if plan.partition[win * wl + j].is_none() {
                    assert_eq!(w.data()[(win * wl + i) * wl + j], 0.0);
                }
            }
        }
    }
}

/// Shifted-window block evaluated token by token: windows, regions and
/// relative offsets come from coordinates rather than the gather plan.
fn block_oracle(x: &Rows, store: &ParamStore<f64>, grid: [usize; 3], cfg_window: [usize; 3], cfg_shift: [usize; 3], heads: usize) -> Rows {
    let window: [usize; 3] = std::array::from_fn(|a| cfg_window[a].min(grid[a]));
    let shift: [usize; 3] = std::array::from_fn(|a| if grid[a] <= cfg_window[a] { 0 } else { cfg_shift[a] });
    let padded: [usize; 3] = std::array::from_fn(|a| grid[a].div_ceil(window[a]) * window[a]);
    let coord = |i: usize| [i / (grid[1] * grid[2]), i / grid[2] % grid[1], i % grid[2]];
    // position after rolling the padded grid back by the shift
    let rolled = |i: usize| -> [usize; 3] {
        let c = coord(i);
        std::array::from_fn(|a| (c[a] + padded[a] - shift[a]) % padded[a])
    };
    let table = param(store, "blk.rel_bias");
    let span = cfg_window.map(|w| 2 * w - 1);
    let bias = |h: usize, i: usize, j: usize| {
        let (pi, pj) = (rolled(i), rolled(j));
        let off: [usize; 3] = std::array::from_fn(|a| pi[a] % window[a] + cfg_window[a] - 1 - pj[a] % window[a]);
        table.data()[((off[0] * span[1] + off[1]) * span[2] + off[2]) * heads + h]
    };
    let allowed = |i: usize, j: usize| {
        let (pi, pj) = (rolled(i), rolled(j));
        (0..3).all(|a| {
            let wrapped = |p: usize| p + shift[a] >= padded[a];
            pi[a] / window[a] == pj[a] / window[a] && wrapped(pi[a]) == wrapped(pj[a])
        })
    };
    let h = layer_norm(x, store, "blk.norm1");
    let h = attention(&h, store, "blk.attn", heads, &bias, &allowed);
    let x = add(x, &h);
    let h = layer_norm(&x, store, "blk.norm2");
    add(&x, &mlp(&h, store, "blk.mlp"))
}

#[test]
fn block_matches_manual_composition() {
    for (grid, window, shift) in [
        ([2, 4, 4], [2, 2, 2], [1, 1, 1]),
        ([2, 4, 4], [2, 2, 2], [0, 0, 0]),
        ([4, 6, 6], [2, 3, 3], [1, 1, 1]),
        ([3, 3, 3], [2, 2, 2], [1, 1, 1]),
        ([3, 5, 2], [2, 2, 4], [1, 1, 2]),
    ] {
        let plan = WindowPlan::new(grid, window, shift).unwrap();
        let mut store = ParamStore::new();
        let blk = {
            let mut pb = ParamBuilder::new(&mut store, 2);
            SwinBlock::new(&mut pb, "blk", 4, 2, 8, plan).unwrap()
        };
        randomize(&mut store, 30);
        let n: usize = grid.iter().product();
        let x = random(&[n, 4], 5, -1.0, 1.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone()).unwrap();
        let y = blk.forward(&mut tape, &store, xv, &mut Vec::new()).unwrap();
        let expect = block_oracle(&to_rows(&x), &store, grid, window, shift, 2);
        assert!(max_diff(&to_rows(tape.value(y)), &expect) <= 1e-6, "{grid:?} {shift:?}");
    }
}

#[test]
fn zero_branches_make_block_identity() {
    let plan = WindowPlan::new([2, 4, 4], [2, 2, 2], [1, 1, 1]).unwrap();
    let mut store = ParamStore::new();
    let blk = {
        let mut pb = ParamBuilder::new(&mut store, 2);
        SwinBlock::new(&mut pb, "blk", 4, 2, 8, plan).unwrap()
    };
    randomize(&mut store, 31);
    zero_params(&mut store, &["attn.o.w", "attn.o.b", "mlp.fc2.w", "mlp.fc2.b"]);
    let x = random(&[32, 4], 6, -1.0, 1.0);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone()).unwrap();
    let y = blk.forward(&mut tape, &store, xv, &mut Vec::new()).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn patch_merge_shapes() {
    let mut store = ParamStore::<f64>::new();
    let mut merges = Vec::new();
    let mut grid = [4, 8, 8];
    let mut dim = 96;
    {
        let mut pb = ParamBuilder::new(&mut store, 0);
        for s in 0..3 {
            merges.push(PatchMerge::new(&mut pb, &format!("m{s}"), dim, grid).unwrap());
            grid = PatchMerge::out_grid(grid);
            dim *= 2;
        }
    }
    assert_eq!(dim, 768);
    let mut tape = Tape::new();
    let mut x = tape.constant(random(&[256, 96], 1, -1.0, 1.0)).unwrap();
    let mut shapes = Vec::new();
    for m in &merges {
        x = m.forward(&mut tape, &store, x).unwrap();
        shapes.push(tape.shape(x).to_vec());
    }
    assert_eq!(shapes, vec![vec![64, 192], vec![16, 384], vec![4, 768]]);
}

#[test]
fn patch_merge_is_local() {
    for grid in [[2, 4, 6], [1, 5, 3]] {
        let mut store = ParamStore::<f64>::new();
        let m = {
            let mut pb = ParamBuilder::new(&mut store, 0);
            PatchMerge::new(&mut pb, "m", 3, grid).unwrap()
        };
        randomize(&mut store, 2);
        let n: usize = grid.iter().product();
        let out = PatchMerge::out_grid(grid);
        let x = random(&[n, 3], 9, -1.0, 1.0);
        let run = |x: &Tensor<f64>| {
            let mut tape = Tape::new();
            let v = tape.constant(x.clone()).unwrap();
            let y = m.forward(&mut tape, &store, v).unwrap();
            to_rows(tape.value(y))
        };
        let base = run(&x);
        for tok in 0..n {
            let (d, y, w) = (tok / (grid[1] * grid[2]), tok / grid[2] % grid[1], tok % grid[2]);
            let mut bumped = x.clone();
            bumped.data_mut()[tok * 3] += 0.5;
            let after = run(&bumped);
            let target = (d * out[1] + y / 2) * out[2] + w / 2;
            for (r, (a, b)) in base.iter().zip(&after).enumerate() {
                assert_eq!(a != b, r == target, "token {tok} row {r}");
            }
        }
    }
}

#[test]
fn logits_shape_and_determinism() {
    for classes in [2, 3] {
        let cfg = SwinConfig { classes, ..tiny(vec![2, 2]) };
        let clip = random(&[8, 16, 16, 3], 4, 0.0, 1.0);
        let run = || {
            let mut store = ParamStore::<f64>::new();
            let m = Swin3d::new(cfg.clone(), &mut store, 11).unwrap();
            let mut tape = Tape::new();
            let c = tape.constant(clip.clone()).unwrap();
            let y = m.forward(&mut tape, &store, c).unwrap();
            tape.value(y).clone()
        };
        let a = run();
        assert_eq!(a.shape(), &[classes]);
        assert_eq!(a, run());
    }
    let mut store = ParamStore::<f64>::new();
    let m = Swin3d::new(tiny(vec![1]), &mut store, 0).unwrap();
    let mut tape = Tape::new();
    let c = tape.constant(random(&[8, 16, 12, 3], 0, 0.0, 1.0)).unwrap();
    assert!(m.forward(&mut tape, &store, c).is_err());
}

fn gradcheck(depths: Vec<usize>) {
    let mut store = ParamStore::<f64>::new();
    let m = Swin3d::new(tiny(depths), &mut store, 5).unwrap();
    let clip = random(&[8, 16, 16, 3], 15, 0.0, 1.0);
    let report = check_params(
        &mut store,
        |tape, store| {
            let c = tape.constant(clip.clone())?;
            let y = m.forward(tape, store, c)?;
            let y = tape.reshape(y, &[1, 2])?;
            tape.cross_entropy(y, &[1])
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "max rel err {} at {:?}", report.max_rel_err, report.worst);
}

#[test]
fn gradient_check_tiny_swin() {
    gradcheck(vec![1, 1]);
}

#[test]
fn gradient_check_tiny_swin_with_shifted_blocks() {
    gradcheck(vec![2, 2]);
}
