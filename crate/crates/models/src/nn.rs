//! Building blocks shared by the transformer models.

use gdsnet_tensor::{Float, Init, ParamBuilder, ParamId, ParamStore, Result, Tape, Var};

/// Xavier-uniform bound for a `fan_in`×`fan_out` weight.
pub fn xavier(fan_in: usize, fan_out: usize) -> Init {
    Init::Uniform((6.0 / (fan_in + fan_out) as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Result<Self> {
        pb.scoped(name, |pb| {
            let w = pb.param("w", &[fan_in, fan_out], xavier(fan_in, fan_out))?;
            let b = if bias { Some(pb.param("b", &[fan_out], Init::Zeros)?) } else { None };
            Ok(Linear { w, b })
        })
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w)?;
        let b = self.b.map(|b| tape.param(store, b)).transpose()?;
        tape.linear(x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, dim: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(LayerNorm {
                gain: pb.param("gain", &[dim], Init::Ones)?,
                bias: pb.param("bias", &[dim], Init::Zeros)?,
            })
        })
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain)?;
        let b = tape.param(store, self.bias)?;
        tape.layer_norm(x, g, b, Self::EPS)
    }
}

/// Two-layer GELU feed-forward network.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(Mlp {
                fc1: Linear::new(pb, "fc1", dim, hidden, true)?,
                fc2: Linear::new(pb, "fc2", hidden, dim, true)?,
            })
        })
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, x)?;
        let h = tape.gelu(h)?;
        self.fc2.forward(tape, store, h)
    }
}

/// Multi-head scaled dot-product self-attention with separate Q/K/V/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(gdsnet_tensor::TensorError::Invalid {
                op: "attention",
                msg: format!("embedding dim {dim} not divisible by {heads} heads"),
            });
        }
        pb.scoped(name, |pb| {
            Ok(MultiHeadAttention {
                q: Linear::new(pb, "q", dim, dim, true)?,
                k: Linear::new(pb, "k", dim, dim, true)?,
                v: Linear::new(pb, "v", dim, dim, true)?,
                o: Linear::new(pb, "o", dim, dim, true)?,
                heads,
                dim,
            })
        })
    }

    fn split_heads<T: Float>(&self, tape: &mut Tape<T>, x: Var, b: usize, n: usize) -> Result<Var> {
        let x = tape.reshape(x, &[b, n, self.heads, self.dim / self.heads])?;
        tape.permute(x, &[0, 2, 1, 3])
    }

    /// `x`: `[B, N, dim]`. `bias` is added to the `[B, heads, N, N]` logits
    /// under broadcasting. The attention weights are pushed onto `trace`.
    pub fn forward<T: Float>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        bias: Option<Var>,
        trace: &mut Vec<Var>,
    ) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let (b, n) = (s[0], s[1]);
        let q = self.q.forward(tape, store, x)?;
        let k = self.k.forward(tape, store, x)?;
        let v = self.v.forward(tape, store, x)?;
        let q = self.split_heads(tape, q, b, n)?;
        let k = self.split_heads(tape, k, b, n)?;
        let v = self.split_heads(tape, v, b, n)?;
        let kt = tape.transpose_last(k)?;
        let scores = tape.matmul(q, kt)?;
        let mut scores = tape.scale(scores, 1.0 / ((self.dim / self.heads) as f64).sqrt())?;
        if let Some(bias) = bias {
            scores = tape.add(scores, bias)?;
        }
        let attn = tape.softmax(scores, 3)?;
        trace.push(attn);
        let out = tape.matmul(attn, v)?;
        let out = tape.permute(out, &[0, 2, 1, 3])?;
        let out = tape.reshape(out, &[b, n, self.dim])?;
        self.o.forward(tape, store, out)
    }
}

/// Pre-norm transformer block: `x + MSA(LN(x))`, then `x + MLP(LN(x))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

impl EncoderBlock {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, dim: usize, heads: usize, mlp_dim: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(EncoderBlock {
                norm1: LayerNorm::new(pb, "norm1", dim)?,
                attn: MultiHeadAttention::new(pb, "attn", dim, heads)?,
                norm2: LayerNorm::new(pb, "norm2", dim)?,
                mlp: Mlp::new(pb, "mlp", dim, mlp_dim)?,
            })
        })
    }

    /// `x`: `[B, N, dim]`.
    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, trace: &mut Vec<Var>) -> Result<Var> {
        let h = self.norm1.forward(tape, store, x)?;
        let h = self.attn.forward(tape, store, h, None, trace)?;
        let x = tape.add(x, h)?;
        let h = self.norm2.forward(tape, store, x)?;
        let h = self.mlp.forward(tape, store, h)?;
        tape.add(x, h)
    }
}
