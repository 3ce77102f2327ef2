//! 3D CNN feature extractor, LSTM over time, temporal attention pooling.

use gdsnet_tensor::{Float, Init, ParamBuilder, ParamId, ParamStore, Result, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::nn::Linear;
use crate::{check_input, VideoModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnLstmConfig {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub pool: [usize; 3],
    /// Width of the per-timestep projection of the flattened conv features.
    pub proj_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// `[T, H, W, C]`.
    pub input: [usize; 4],
}

impl Default for CnnLstmConfig {
    fn default() -> Self {
        CnnLstmConfig {
            channels: vec![32, 64, 128],
            kernel: 3,
            pool: [1, 2, 2],
            proj_dim: 512,
            hidden: 512,
            classes: 2,
            input: [30, 224, 224, 3],
        }
    }
}

impl CnnLstmConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channels must be non-empty and positive".into());
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        if self.pool[0] != 1 || self.pool.contains(&0) {
            return bad("temporal pool must be 1 and spatial pools positive".into());
        }
        if self.proj_dim == 0 || self.hidden == 0 || self.classes < 2 || self.input.contains(&0) {
            return bad("dimensions must be positive with at least 2 classes".into());
        }
        let [_, c, h, w] = self.feature_shape();
        if c * h * w == 0 {
            return bad(format!("input {:?} pools away to nothing", self.input));
        }
        Ok(())
    }

    /// Conv-stack output `[T, C', H', W']` from extent arithmetic alone.
    pub fn feature_shape(&self) -> [usize; 4] {
        let [t, mut h, mut w, _] = self.input;
        for _ in &self.channels {
            h /= self.pool[1];
            w /= self.pool[2];
        }
        [t, *self.channels.last().unwrap_or(&0), h, w]
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub kernel: ParamId,
    pub bias: ParamId,
}

/// Affine maps of one LSTM gate: `x W + h U + b`.
#[derive(Debug, Clone)]
pub struct Gate {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl Gate {
    fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let a = 1.0 / (hidden as f64).sqrt();
        pb.scoped(name, |pb| {
            Ok(Gate {
                w: pb.param("w", &[input, hidden], Init::Uniform(a))?,
                u: pb.param("u", &[hidden, hidden], Init::Uniform(a))?,
                b: pb.param("b", &[hidden], Init::Uniform(a))?,
            })
        })
    }

    fn pre<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, h: Var) -> Result<Var> {
        let w = tape.param(store, self.w)?;
        let b = tape.param(store, self.b)?;
        let u = tape.param(store, self.u)?;
        let xw = tape.linear(x, w, Some(b))?;
        let hu = tape.matmul(h, u)?;
        tape.add(xw, hu)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    /// `[1, hidden]`.
    pub h: Var,
    /// `[1, hidden]`.
    pub c: Var,
}

/// Gate activations of one step, kept for inspection.
#[derive(Debug, Clone, Copy)]
pub struct LstmStep {
    pub state: LstmState,
    pub forget: Var,
    pub input: Var,
    pub output: Var,
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub forget: Gate,
    pub input: Gate,
    pub cell: Gate,
    /// Output gate; named apart from the classifier head.
    pub output: Gate,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, input: usize, hidden: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(Lstm {
                forget: Gate::new(pb, "gate_forget", input, hidden)?,
                input: Gate::new(pb, "gate_input", input, hidden)?,
                cell: Gate::new(pb, "gate_cell", input, hidden)?,
                output: Gate::new(pb, "gate_out", input, hidden)?,
                hidden,
            })
        })
    }

    pub fn zero_state<T: Float>(&self, tape: &mut Tape<T>) -> Result<LstmState> {
        Ok(LstmState {
            h: tape.constant(Tensor::zeros(&[1, self.hidden])?)?,
            c: tape.constant(Tensor::zeros(&[1, self.hidden])?)?,
        })
    }

    /// `f = σ(xW_f + hU_f + b_f)`, `i = σ(…)`, `c' = f⊙c + i⊙tanh(xW_c + hU_c + b_c)`,
    /// `o = σ(…)`, `h' = o⊙tanh(c')`. `x`: `[1, input]`.
    pub fn step<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, state: LstmState) -> Result<LstmStep> {
        let f = self.forget.pre(tape, store, x, state.h)?;
        let f = tape.sigmoid(f)?;
        let i = self.input.pre(tape, store, x, state.h)?;
        let i = tape.sigmoid(i)?;
        let g = self.cell.pre(tape, store, x, state.h)?;
        let g = tape.tanh(g)?;
        let o = self.output.pre(tape, store, x, state.h)?;
        let o = tape.sigmoid(o)?;
        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok(LstmStep {
            state: LstmState { h, c },
            forget: f,
            input: i,
            output: o,
        })
    }

    /// Runs over `xs: [T, input]` from the zero state; returns hidden states `[T, hidden]`.
    pub fn run<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, xs: Var) -> Result<Var> {
        let steps = tape.shape(xs)[0];
        let mut state = self.zero_state(tape)?;
        let mut hs = Vec::with_capacity(steps);
        for t in 0..steps {
            let x = tape.narrow(xs, 0, t, 1)?;
            state = self.step(tape, store, x, state)?.state;
            hs.push(state.h);
        }
        tape.concat(&hs, 0)
    }
}

/// `e_t = tanh(h_t W_h + b_h)`, `α = softmax_t(e)`, output `Σ α_t h_t`.
#[derive(Debug, Clone)]
pub struct AttentionPool {
    pub score: Linear,
}

impl AttentionPool {
    pub fn new<T: Float>(pb: &mut ParamBuilder<T>, name: &str, hidden: usize) -> Result<Self> {
        Ok(AttentionPool {
            score: Linear::new(pb, name, hidden, 1, true)?,
        })
    }

    /// Attention weights `[T, 1]` over hidden states `hs: [T, hidden]`.
    pub fn weights<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, hs: Var) -> Result<Var> {
        let e = self.score.forward(tape, store, hs)?;
        let e = tape.tanh(e)?;
        tape.softmax(e, 0)
    }

    /// Returns the pooled `[1, hidden]` vector and the weights.
    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, hs: Var) -> Result<(Var, Var)> {
        let steps = tape.shape(hs)[0];
        let alpha = self.weights(tape, store, hs)?;
        let row = tape.reshape(alpha, &[1, steps])?;
        Ok((tape.matmul(row, hs)?, alpha))
    }
}

#[derive(Debug, Clone)]
pub struct CnnLstm {
    pub cfg: CnnLstmConfig,
    pub convs: Vec<ConvBlock>,
    pub proj: Linear,
    pub lstm: Lstm,
    pub attention: AttentionPool,
    pub head: Linear,
}

impl CnnLstm {
    pub fn new<T: Float>(cfg: CnnLstmConfig, store: &mut ParamStore<T>, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let k = cfg.kernel;
        let mut pb = ParamBuilder::new(store, seed);
        pb.push("cnn_lstm");
        let mut convs = Vec::new();
        let mut c_in = cfg.input[3];
        for (i, &c_out) in cfg.channels.iter().enumerate() {
            let fan_in = c_in * k * k * k;
            let block = pb.scoped(format!("conv{i}"), |pb| -> Result<ConvBlock> {
                Ok(ConvBlock {
                    kernel: pb.param("kernel", &[c_out, c_in, k, k, k], Init::Uniform((6.0 / fan_in as f64).sqrt()))?,
                    bias: pb.param("bias", &[c_out], Init::Zeros)?,
                })
            })?;
            convs.push(block);
            c_in = c_out;
        }
        let [_, c, h, w] = cfg.feature_shape();
        let proj = Linear::new(&mut pb, "proj", c * h * w, cfg.proj_dim, true)?;
        let lstm = Lstm::new(&mut pb, "lstm", cfg.proj_dim, cfg.hidden)?;
        let attention = AttentionPool::new(&mut pb, "attention", cfg.hidden)?;
        let head = Linear::new(&mut pb, "head", cfg.hidden, cfg.classes, true)?;
        Ok(CnnLstm {
            cfg,
            convs,
            proj,
            lstm,
            attention,
            head,
        })
    }

    /// conv → ReLU → maxpool for block `i` on `x: [C, T, H, W]`.
    pub fn conv_block<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, i: usize, x: Var) -> Result<Var> {
        let b = &self.convs[i];
        let k = tape.param(store, b.kernel)?;
        let bias = tape.param(store, b.bias)?;
        let p = self.cfg.kernel / 2;
        let y = tape.conv3d(x, k, Some(bias), [1, 1, 1], [p, p, p])?;
        let y = tape.relu(y)?;
        tape.maxpool3d(y, self.cfg.pool)
    }

    /// Per-timestep conv features `[T, C'·H'·W']`.
    pub fn features<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var) -> Result<Var> {
        let mut x = tape.permute(clip, &[3, 0, 1, 2])?;
        for i in 0..self.convs.len() {
            x = self.conv_block(tape, store, i, x)?;
        }
        let [t, c, h, w] = self.cfg.feature_shape();
        let x = tape.permute(x, &[1, 0, 2, 3])?;
        tape.reshape(x, &[t, c * h * w])
    }
}

impl<T: Float> VideoModel<T> for CnnLstm {
    fn classes(&self) -> usize {
        self.cfg.classes
    }

    fn input_shape(&self) -> [usize; 4] {
        self.cfg.input
    }

    fn forward_traced(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var, trace: &mut Vec<Var>) -> Result<Var> {
        check_input(tape, clip, self.cfg.input, "cnn_lstm")?;
        let f = self.features(tape, store, clip)?;
        let f = self.proj.forward(tape, store, f)?;
        let hs = self.lstm.run(tape, store, f)?;
        let (pooled, alpha) = self.attention.forward(tape, store, hs)?;
        trace.push(alpha);
        let logits = self.head.forward(tape, store, pooled)?;
        tape.reshape(logits, &[self.cfg.classes])
    }
}
