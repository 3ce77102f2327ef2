//! ViViT with tubelet embedding and a factorized encoder: a spatial
//! transformer per temporal slot, then a temporal transformer over the
//! per-slot classification tokens.

use gdsnet_tensor::{Float, Init, ParamBuilder, ParamId, ParamStore, Result, Tape, Var};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::nn::{EncoderBlock, LayerNorm, Linear};
use crate::{check_input, VideoModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VivitConfig {
    pub image_patch: usize,
    pub frame_patch: usize,
    pub embed_dim: usize,
    pub spatial_depth: usize,
    pub temporal_depth: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub classes: usize,
    /// `[T, H, W, C]`.
    pub input: [usize; 4],
}

impl Default for VivitConfig {
    fn default() -> Self {
        VivitConfig {
            image_patch: 8,
            frame_patch: 4,
            embed_dim: 128,
            spatial_depth: 4,
            temporal_depth: 4,
            heads: 4,
            mlp_dim: 512,
            classes: 2,
            input: [30, 224, 224, 3],
        }
    }
}

/// Token grid extents `(n_t, n_s)` under the floor formula.
pub fn token_grid(input: [usize; 4], frame_patch: usize, image_patch: usize) -> (usize, usize) {
    let [t, h, w, _] = input;
    (t / frame_patch, (h / image_patch) * (w / image_patch))
}

impl VivitConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let [t, h, w, c] = self.input;
        let bad = |m: String| Err(ModelError::Config(m));
        if self.image_patch == 0 || self.frame_patch == 0 || c == 0 {
            return bad("patch sizes and channels must be positive".into());
        }
        if t < self.frame_patch || h < self.image_patch || w < self.image_patch {
            return bad(format!(
                "clip {:?} smaller than one {}x{}x{} tubelet",
                self.input, self.frame_patch, self.image_patch, self.image_patch
            ));
        }
        if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad(format!("embed_dim {} not divisible by {} heads", self.embed_dim, self.heads));
        }
        if self.classes < 2 || self.mlp_dim == 0 {
            return bad("need at least 2 classes and a positive mlp_dim".into());
        }
        Ok(())
    }

    pub fn tokens(&self) -> (usize, usize) {
        token_grid(self.input, self.frame_patch, self.image_patch)
    }
}

/// Factorized self-attention block: spatial attention inside each temporal
/// slot, then temporal attention at each spatial position.
#[derive(Debug, Clone)]
pub struct FactorizedBlock {
    pub spatial: EncoderBlock,
    pub temporal: EncoderBlock,
}

impl FactorizedBlock {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, dim: usize, heads: usize, mlp_dim: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(FactorizedBlock {
                spatial: EncoderBlock::new(pb, "spatial", dim, heads, mlp_dim)?,
                temporal: EncoderBlock::new(pb, "temporal", dim, heads, mlp_dim)?,
            })
        })
    }

    /// `grid`: `[n_t, n_s, d]`.
    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, grid: Var, trace: &mut Vec<Var>) -> Result<Var> {
        let x = self.spatial.forward(tape, store, grid, trace)?;
        let x = tape.permute(x, &[1, 0, 2])?;
        let x = self.temporal.forward(tape, store, x, trace)?;
        tape.permute(x, &[1, 0, 2])
    }
}

#[derive(Debug, Clone)]
pub struct Vivit {
    pub cfg: VivitConfig,
    pub embed: Linear,
    pub pos_spatial: ParamId,
    pub pos_temporal: ParamId,
    pub spatial_cls: ParamId,
    pub temporal_cls: ParamId,
    pub spatial: Vec<EncoderBlock>,
    pub spatial_norm: LayerNorm,
    pub temporal: Vec<EncoderBlock>,
    pub temporal_norm: LayerNorm,
    pub head: Linear,
}

impl Vivit {
    pub fn new<T: Float>(cfg: VivitConfig, store: &mut ParamStore<T>, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let (n_t, n_s) = cfg.tokens();
        let d = cfg.embed_dim;
        let patch = cfg.frame_patch * cfg.image_patch * cfg.image_patch * cfg.input[3];
        let mut pb = ParamBuilder::new(store, seed);
        pb.push("vivit");
        let embed = Linear::new(&mut pb, "embed", patch, d, true)?;
        let pos_spatial = pb.param("pos_spatial", &[n_s, d], Init::Normal(0.02))?;
        let pos_temporal = pb.param("pos_temporal", &[n_t, 1, d], Init::Normal(0.02))?;
        let spatial_cls = pb.param("spatial_cls", &[1, 1, d], Init::Normal(0.02))?;
        let temporal_cls = pb.param("temporal_cls", &[1, 1, d], Init::Normal(0.02))?;
        let spatial = (0..cfg.spatial_depth)
            .map(|i| EncoderBlock::new(&mut pb, &format!("spatial{i}"), d, cfg.heads, cfg.mlp_dim))
            .collect::<Result<Vec<_>>>()?;
        let spatial_norm = LayerNorm::new(&mut pb, "spatial_norm", d)?;
        let temporal = (0..cfg.temporal_depth)
            .map(|i| EncoderBlock::new(&mut pb, &format!("temporal{i}"), d, cfg.heads, cfg.mlp_dim))
            .collect::<Result<Vec<_>>>()?;
        let temporal_norm = LayerNorm::new(&mut pb, "temporal_norm", d)?;
        let head = Linear::new(&mut pb, "head", d, cfg.classes, true)?;
        Ok(Vivit {
            cfg,
            embed,
            pos_spatial,
            pos_temporal,
            spatial_cls,
            temporal_cls,
            spatial,
            spatial_norm,
            temporal,
            temporal_norm,
            head,
        })
    }

    /// Flattens non-overlapping tubelets, projects them, and adds positional
    /// embeddings; returns `[n_t, n_s, d]`. Leftover frames and pixels are dropped.
    pub fn tubelet_embed<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var) -> Result<Var> {
        let tokens = self.tubelets(tape, store, clip)?;
        let ps = tape.param(store, self.pos_spatial)?;
        let pt = tape.param(store, self.pos_temporal)?;
        let x = tape.add(tokens, ps)?;
        tape.add(x, pt)
    }

    /// Projected tubelets before positional embeddings.
    pub fn tubelets<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var) -> Result<Var> {
        let [t, h, w, c] = self.cfg.input;
        let (pt, pp) = (self.cfg.frame_patch, self.cfg.image_patch);
        let (n_t, n_h, n_w) = (t / pt, h / pp, w / pp);
        let mut x = clip;
        for (axis, keep, full) in [(0, n_t * pt, t), (1, n_h * pp, h), (2, n_w * pp, w)] {
            if keep != full {
                x = tape.narrow(x, axis, 0, keep)?;
            }
        }
        let x = tape.reshape(x, &[n_t, pt, n_h, pp, n_w, pp, c])?;
        let x = tape.permute(x, &[0, 2, 4, 1, 3, 5, 6])?;
        let x = tape.reshape(x, &[n_t, n_h * n_w, pt * pp * pp * c])?;
        self.embed.forward(tape, store, x)
    }

    /// Prepends a broadcast copy of the `[1, 1, d]` token `cls` to every row of `x: [B, N, d]`.
    fn prepend<T: Float>(tape: &mut Tape<T>, store: &ParamStore<T>, cls: ParamId, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let cls = tape.param(store, cls)?;
        let cls = tape.broadcast_to(cls, &[s[0], 1, s[2]])?;
        tape.concat(&[cls, x], 1)
    }
}

impl<T: Float> VideoModel<T> for Vivit {
    fn classes(&self) -> usize {
        self.cfg.classes
    }

    fn input_shape(&self) -> [usize; 4] {
        self.cfg.input
    }

    fn forward_traced(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var, trace: &mut Vec<Var>) -> Result<Var> {
        check_input(tape, clip, self.cfg.input, "vivit")?;
        let (n_t, _) = self.cfg.tokens();
        let d = self.cfg.embed_dim;
        let tokens = self.tubelet_embed(tape, store, clip)?;
        let mut x = Self::prepend(tape, store, self.spatial_cls, tokens)?;
        for block in &self.spatial {
            x = block.forward(tape, store, x, trace)?;
        }
        let cls = tape.narrow(x, 1, 0, 1)?;
        let cls = self.spatial_norm.forward(tape, store, cls)?;
        let seq = tape.reshape(cls, &[1, n_t, d])?;
        let mut x = Self::prepend(tape, store, self.temporal_cls, seq)?;
        for block in &self.temporal {
            x = block.forward(tape, store, x, trace)?;
        }
        let cls = tape.narrow(x, 1, 0, 1)?;
        let cls = self.temporal_norm.forward(tape, store, cls)?;
        let cls = tape.reshape(cls, &[1, d])?;
        let logits = self.head.forward(tape, store, cls)?;
        tape.reshape(logits, &[self.cfg.classes])
    }
}
