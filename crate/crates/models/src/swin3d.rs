//! Video Swin-style hierarchical transformer: 3D patch embedding, stages of
//! (shifted) window attention with relative position bias, and spatial
//! patch merging between stages.

use std::sync::Arc;

use gdsnet_tensor::{Float, Init, ParamBuilder, ParamId, ParamStore, Result, Tape, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::nn::{LayerNorm, Linear, Mlp, MultiHeadAttention};
use crate::{check_input, VideoModel};

/// Additive logit for forbidden token pairs; `exp` of it underflows to 0.
pub const MASKED: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwinConfig {
    pub image_patch: usize,
    pub frame_patch: usize,
    pub embed_dim: usize,
    pub depths: Vec<usize>,
    pub heads: Vec<usize>,
    pub mlp_ratio: usize,
    /// `(wt, wh, ww)`.
    pub window: [usize; 3],
    pub classes: usize,
    /// `[T, H, W, C]`.
    pub input: [usize; 4],
}

impl Default for SwinConfig {
    fn default() -> Self {
        SwinConfig {
            image_patch: 4,
            frame_patch: 2,
            embed_dim: 96,
            depths: vec![2, 2, 4, 2],
            heads: vec![3, 6, 12, 24],
            mlp_ratio: 4,
            window: [8, 7, 7],
            classes: 2,
            input: [30, 224, 224, 3],
        }
    }
}

/// Token grid after patch embedding under the ceiling formula.
pub fn patch_grid(input: [usize; 4], frame_patch: usize, image_patch: usize) -> [usize; 3] {
    [
        input[0].div_ceil(frame_patch),
        input[1].div_ceil(image_patch),
        input[2].div_ceil(image_patch),
    ]
}

impl SwinConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.image_patch == 0 || self.frame_patch == 0 || self.input.contains(&0) {
            return bad("patch sizes and input extents must be positive".into());
        }
        if self.depths.is_empty() || self.depths.len() != self.heads.len() {
            return bad(format!(
                "depths {:?} and heads {:?} must be non-empty and of equal length",
                self.depths, self.heads
            ));
        }
        if self.depths.contains(&0) || self.window.contains(&0) || self.mlp_ratio == 0 {
            return bad("depths, window and mlp_ratio must be positive".into());
        }
        for (i, &h) in self.heads.iter().enumerate() {
            let dim = self.stage_dim(i);
            if h == 0 || !dim.is_multiple_of(h) {
                return bad(format!("stage {i} dim {dim} not divisible by {h} heads"));
            }
        }
        if self.classes < 2 {
            return bad("need at least 2 classes".into());
        }
        Ok(())
    }

    pub fn stage_dim(&self, stage: usize) -> usize {
        self.embed_dim << stage
    }

    /// Half the window per axis.
    pub fn shift(&self) -> [usize; 3] {
        self.window.map(|w| w / 2)
    }

    pub fn grid(&self) -> [usize; 3] {
        patch_grid(self.input, self.frame_patch, self.image_patch)
    }
}

fn flat(c: [usize; 3], dims: [usize; 3]) -> usize {
    (c[0] * dims[1] + c[1]) * dims[2] + c[2]
}

fn coords(i: usize, dims: [usize; 3]) -> [usize; 3] {
    [i / (dims[1] * dims[2]), i / dims[2] % dims[1], i % dims[2]]
}

/// Window layout for one token grid: padding, cyclic shift, partition order
/// and its inverse, plus the relative-position index into the bias table.
#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub grid: [usize; 3],
    /// Window after clamping to the grid.
    pub window: [usize; 3],
    pub shift: [usize; 3],
    pub padded: [usize; 3],
    pub num_windows: usize,
    pub window_len: usize,
    /// Windowed row -> grid token (`None` for padding).
    pub partition: Arc<[Option<usize>]>,
    /// Grid token -> windowed row.
    pub reverse: Arc<[Option<usize>]>,
    /// `window_len²` rows into a table sized by the configured window.
    pub rel_index: Arc<[Option<usize>]>,
    pub table_len: usize,
}

impl WindowPlan {
    /// Axes where the grid fits inside one window use the whole axis and no shift.
    pub fn new(grid: [usize; 3], window: [usize; 3], shift: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if window[a] == 0 || grid[a] == 0 || (shift[a] > 0 && shift[a] >= window[a]) {
                return Err(TensorError::Invalid {
                    op: "window_plan",
                    msg: format!("shift {shift:?} must be smaller than window {window:?} on grid {grid:?}"),
                });
            }
        }
        let mut win = [0; 3];
        let mut sh = [0; 3];
        let mut padded = [0; 3];
        for a in 0..3 {
            if grid[a] <= window[a] {
                win[a] = grid[a];
            } else {
                win[a] = window[a];
                sh[a] = shift[a];
            }
            padded[a] = grid[a].div_ceil(win[a]) * win[a];
        }
        let counts = [padded[0] / win[0], padded[1] / win[1], padded[2] / win[2]];
        let num_windows = counts.iter().product();
        let window_len: usize = win.iter().product();
        let mut partition = vec![None; num_windows * window_len];
        let mut reverse = vec![None; grid.iter().product()];
        for w in 0..num_windows {
            let wc = coords(w, counts);
            for p in 0..window_len {
                let pc = coords(p, win);
                let mut q = [0; 3];
                let mut inside = true;
                for a in 0..3 {
                    q[a] = (wc[a] * win[a] + pc[a] + sh[a]) % padded[a];
                    inside &= q[a] < grid[a];
                }
                if inside {
                    let row = w * window_len + p;
                    partition[row] = Some(flat(q, grid));
                    reverse[flat(q, grid)] = Some(row);
                }
            }
        }
        let span = window.map(|w| 2 * w - 1);
        let table_len = span.iter().product();
        let mut rel_index = Vec::with_capacity(window_len * window_len);
        for i in 0..window_len {
            let ci = coords(i, win);
            for j in 0..window_len {
                let cj = coords(j, win);
                let off: [usize; 3] = std::array::from_fn(|a| ci[a] + window[a] - 1 - cj[a]);
                rel_index.push(Some(flat(off, span)));
            }
        }
        Ok(WindowPlan {
            grid,
            window: win,
            shift: sh,
            padded,
            num_windows,
            window_len,
            partition: partition.into(),
            reverse: reverse.into(),
            rel_index: rel_index.into(),
            table_len,
        })
    }

    fn region(&self, p: usize, a: usize) -> usize {
        if self.shift[a] == 0 || p < self.padded[a] - self.window[a] {
            0
        } else if p < self.padded[a] - self.shift[a] {
            1
        } else {
            2
        }
    }

    pub fn needs_mask(&self) -> bool {
        self.shift.iter().any(|&s| s > 0) || self.padded != self.grid
    }

    /// `[num_windows, 1, window_len, window_len]` additive mask. A pair is
    /// blocked when the tokens come from different regions of the shifted
    /// grid, or when the key is padding (a token always sees itself).
    pub fn mask(&self) -> Vec<f64> {
        let counts: [usize; 3] = std::array::from_fn(|a| self.padded[a] / self.window[a]);
        let n = self.window_len;
        let mut out = vec![0.0; self.num_windows * n * n];
        let mut label = vec![0usize; n];
        for w in 0..self.num_windows {
            let wc = coords(w, counts);
            for (p, l) in label.iter_mut().enumerate() {
                let pc = coords(p, self.window);
                *l = (0..3).fold(0, |acc, a| acc * 3 + self.region(wc[a] * self.window[a] + pc[a], a));
            }
            let rows = &self.partition[w * n..(w + 1) * n];
            for i in 0..n {
                for j in 0..n {
                    if i != j && (label[i] != label[j] || rows[j].is_none()) {
                        out[(w * n + i) * n + j] = MASKED;
                    }
                }
            }
        }
        out
    }
}

/// Pads, shifts and partitions `x: [D, H, W, C]` into `[num_windows, window_len, C]`.
pub fn window_partition<T: Float>(tape: &mut Tape<T>, x: Var, window: [usize; 3], shift: [usize; 3]) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let plan = WindowPlan::new([s[0], s[1], s[2]], window, shift)?;
    let rows = tape.gather_rows(x, plan.partition.clone())?;
    tape.reshape(rows, &[plan.num_windows, plan.window_len, s[3]])
}

/// Inverse of [`window_partition`] back onto a `grid`.
pub fn window_reverse<T: Float>(
    tape: &mut Tape<T>,
    windows: Var,
    grid: [usize; 3],
    window: [usize; 3],
    shift: [usize; 3],
) -> Result<Var> {
    let plan = WindowPlan::new(grid, window, shift)?;
    let s = tape.shape(windows).to_vec();
    if s.len() != 3 || s[0] != plan.num_windows || s[1] != plan.window_len {
        return Err(TensorError::Shape {
            op: "window_reverse",
            lhs: s,
            rhs: vec![plan.num_windows, plan.window_len],
        });
    }
    let rows = tape.gather_rows(windows, plan.reverse.clone())?;
    tape.reshape(rows, &[grid[0], grid[1], grid[2], s[2]])
}

/// Window attention with relative position bias over tokens `x: [N, C]`
/// laid out on `plan.grid`; returns `[N, C]`.
pub fn shifted_window_attention<T: Float>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    attn: &MultiHeadAttention,
    rel_bias: ParamId,
    plan: &WindowPlan,
    x: Var,
    trace: &mut Vec<Var>,
) -> Result<Var> {
    let c = *tape.shape(x).last().expect("token matrix");
    let n = plan.window_len;
    let xw = tape.gather_rows(x, plan.partition.clone())?;
    let xw = tape.reshape(xw, &[plan.num_windows, n, c])?;
    let table = tape.param(store, rel_bias)?;
    let bias = tape.gather_rows(table, plan.rel_index.clone())?;
    let bias = tape.reshape(bias, &[n, n, attn.heads])?;
    let mut bias = tape.permute(bias, &[2, 0, 1])?;
    if plan.needs_mask() {
        let mask = plan.mask();
        let mask = Tensor::from_fn(&[plan.num_windows, 1, n, n], |i| T::from_f64(mask[i]))?;
        let mask = tape.constant(mask)?;
        bias = tape.add(bias, mask)?;
    }
    let out = attn.forward(tape, store, xw, Some(bias), trace)?;
    let out = tape.reshape(out, &[plan.num_windows * n, c])?;
    tape.gather_rows(out, plan.reverse.clone())
}

#[derive(Debug, Clone)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub rel_bias: ParamId,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
    pub plan: WindowPlan,
}

impl SwinBlock {
    pub fn new<T: Float>(
        pb: &mut ParamBuilder<T>,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_dim: usize,
        plan: WindowPlan,
    ) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(SwinBlock {
                norm1: LayerNorm::new(pb, "norm1", dim)?,
                attn: MultiHeadAttention::new(pb, "attn", dim, heads)?,
                rel_bias: pb.param("rel_bias", &[plan.table_len, heads], Init::Normal(0.02))?,
                norm2: LayerNorm::new(pb, "norm2", dim)?,
                mlp: Mlp::new(pb, "mlp", dim, mlp_dim)?,
                plan,
            })
        })
    }

    /// `x + (S)W-MSA(LN(x))`, then `x + FFN(LN(x))`, on tokens `[N, C]`.
    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, trace: &mut Vec<Var>) -> Result<Var> {
        let h = self.norm1.forward(tape, store, x)?;
        let h = shifted_window_attention(tape, store, &self.attn, self.rel_bias, &self.plan, h, trace)?;
        let x = tape.add(x, h)?;
        let h = self.norm2.forward(tape, store, x)?;
        let h = self.mlp.forward(tape, store, h)?;
        tape.add(x, h)
    }
}

/// Concatenates each 2×2 spatial neighbourhood (zero-padding odd extents),
/// normalizes, and projects `4C -> 2C`.
#[derive(Debug, Clone)]
pub struct PatchMerge {
    pub norm: LayerNorm,
    pub reduction: Linear,
    pub grid: [usize; 3],
    index: Arc<[Option<usize>]>,
}

impl PatchMerge {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, dim: usize, grid: [usize; 3]) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(PatchMerge {
                norm: LayerNorm::new(pb, "norm", 4 * dim)?,
                reduction: Linear::new(pb, "reduction", 4 * dim, 2 * dim, false)?,
                grid,
                index: Self::index(grid),
            })
        })
    }

    pub fn out_grid(grid: [usize; 3]) -> [usize; 3] {
        [grid[0], grid[1].div_ceil(2), grid[2].div_ceil(2)]
    }

    fn index(grid: [usize; 3]) -> Arc<[Option<usize>]> {
        let out = Self::out_grid(grid);
        let mut idx = Vec::with_capacity(out.iter().product::<usize>() * 4);
        for d in 0..out[0] {
            for i in 0..out[1] {
                for j in 0..out[2] {
                    for (dy, dx) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        let (y, x) = (2 * i + dy, 2 * j + dx);
                        idx.push((y < grid[1] && x < grid[2]).then(|| flat([d, y, x], grid)));
                    }
                }
            }
        }
        idx.into()
    }

    /// `x: [N, C]` on `self.grid` to `[N', 2C]` on [`PatchMerge::out_grid`].
    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let c = *tape.shape(x).last().expect("token matrix");
        let n: usize = Self::out_grid(self.grid).iter().product();
        let g = tape.gather_rows(x, self.index.clone())?;
        let g = tape.reshape(g, &[n, 4 * c])?;
        let g = self.norm.forward(tape, store, g)?;
        self.reduction.forward(tape, store, g)
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub blocks: Vec<SwinBlock>,
    pub merge: Option<PatchMerge>,
}

#[derive(Debug, Clone)]
pub struct Swin3d {
    pub cfg: SwinConfig,
    pub patch_embed: Linear,
    pub patch_norm: LayerNorm,
    pub stages: Vec<Stage>,
    pub norm: LayerNorm,
    pub head: Linear,
    patch_index: Arc<[Option<usize>]>,
}

impl Swin3d {
    pub fn new<T: Float>(cfg: SwinConfig, store: &mut ParamStore<T>, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let [_, _, _, c] = cfg.input;
        let (p, m) = (cfg.frame_patch, cfg.image_patch);
        let mut pb = ParamBuilder::new(store, seed);
        pb.push("swin3d");
        let patch_embed = Linear::new(&mut pb, "patch_embed", p * m * m * c, cfg.embed_dim, true)?;
        let patch_norm = LayerNorm::new(&mut pb, "patch_norm", cfg.embed_dim)?;
        let mut grid = cfg.grid();
        let mut stages = Vec::new();
        let last = cfg.depths.len() - 1;
        for (s, (&depth, &heads)) in cfg.depths.iter().zip(&cfg.heads).enumerate() {
            let dim = cfg.stage_dim(s);
            let stage = pb.scoped(format!("stage{s}"), |pb| -> Result<Stage> {
                let mut blocks = Vec::new();
                for b in 0..depth {
                    let shift = if b % 2 == 1 { cfg.shift() } else { [0; 3] };
                    let plan = WindowPlan::new(grid, cfg.window, shift)?;
                    blocks.push(SwinBlock::new(pb, &format!("block{b}"), dim, heads, dim * cfg.mlp_ratio, plan)?);
                }
                let merge = if s < last { Some(PatchMerge::new(pb, "merge", dim, grid)?) } else { None };
                Ok(Stage { blocks, merge })
            })?;
            if stage.merge.is_some() {
                grid = PatchMerge::out_grid(grid);
            }
            stages.push(stage);
        }
        let final_dim = cfg.stage_dim(last);
        let norm = LayerNorm::new(&mut pb, "norm", final_dim)?;
        let head = Linear::new(&mut pb, "head", final_dim, cfg.classes, true)?;
        let patch_index = Self::patch_index(&cfg);
        Ok(Swin3d {
            cfg,
            patch_embed,
            patch_norm,
            stages,
            norm,
            head,
            patch_index,
        })
    }

    /// Gathers the pixels of each `P×M×M` patch in token order, zero past the input.
    fn patch_index(cfg: &SwinConfig) -> Arc<[Option<usize>]> {
        let [t, h, w, _] = cfg.input;
        let (p, m) = (cfg.frame_patch, cfg.image_patch);
        let grid = cfg.grid();
        let mut idx = Vec::with_capacity(grid.iter().product::<usize>() * p * m * m);
        for a in 0..grid[0] {
            for b in 0..grid[1] {
                for c in 0..grid[2] {
                    for dt in 0..p {
                        for dy in 0..m {
                            for dx in 0..m {
                                let (ft, fy, fx) = (a * p + dt, b * m + dy, c * m + dx);
                                idx.push((ft < t && fy < h && fx < w).then(|| flat([ft, fy, fx], [t, h, w])));
                            }
                        }
                    }
                }
            }
        }
        idx.into()
    }

    /// Zero-pads the clip to patch multiples and projects each patch; `[N, embed_dim]`.
    pub fn patch_embed<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var) -> Result<Var> {
        let [t, h, w, c] = self.cfg.input;
        let n: usize = self.cfg.grid().iter().product();
        let patch = self.cfg.frame_patch * self.cfg.image_patch * self.cfg.image_patch * c;
        let x = tape.reshape(clip, &[t * h * w, c])?;
        let x = tape.gather_rows(x, self.patch_index.clone())?;
        let x = tape.reshape(x, &[n, patch])?;
        let x = self.patch_embed.forward(tape, store, x)?;
        self.patch_norm.forward(tape, store, x)
    }
}

impl<T: Float> VideoModel<T> for Swin3d {
    fn classes(&self) -> usize {
        self.cfg.classes
    }

    fn input_shape(&self) -> [usize; 4] {
        self.cfg.input
    }

    fn forward_traced(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var, trace: &mut Vec<Var>) -> Result<Var> {
        check_input(tape, clip, self.cfg.input, "swin3d")?;
        let mut x = self.patch_embed(tape, store, clip)?;
        for stage in &self.stages {
            for block in &stage.blocks {
                x = block.forward(tape, store, x, trace)?;
            }
            if let Some(m) = &stage.merge {
                x = m.forward(tape, store, x)?;
            }
        }
        let d = *tape.shape(x).last().expect("token matrix");
        let pooled = tape.mean_axis(x, 0)?;
        let pooled = tape.reshape(pooled, &[1, d])?;
        let pooled = self.norm.forward(tape, store, pooled)?;
        let logits = self.head.forward(tape, store, pooled)?;
        tape.reshape(logits, &[self.cfg.classes])
    }
}
