//! Spatiotemporal video classifiers built on `gdsnet-tensor`.
//!
//! Every model reads a clip `[T, H, W, C]` and emits class logits `[classes]`;
//! the softmax lives in the loss.

pub mod checkpoint;
pub mod cnn_lstm;
pub mod error;
pub mod nn;
pub mod swin3d;
pub mod vivit;
pub mod zoo;

use gdsnet_tensor::{Float, ParamStore, Result, Tape, TensorError, Var};

pub use cnn_lstm::{CnnLstm, CnnLstmConfig};
pub use error::ModelError;
pub use swin3d::{Swin3d, SwinConfig};
pub use vivit::{Vivit, VivitConfig};
pub use zoo::{build_model, AnyModel, ModelKind};

pub trait VideoModel<T: Float> {
    fn classes(&self) -> usize;

    /// Expected clip shape `[T, H, W, C]`.
    fn input_shape(&self) -> [usize; 4];

    /// Forward pass that also records every attention-weight tensor it computes.
    fn forward_traced(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var, trace: &mut Vec<Var>) -> Result<Var>;

    fn forward(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var) -> Result<Var> {
        self.forward_traced(tape, store, clip, &mut Vec::new())
    }
}

pub(crate) fn check_input<T: Float>(tape: &Tape<T>, clip: Var, expected: [usize; 4], op: &'static str) -> Result<()> {
    if tape.shape(clip) != expected {
        return Err(TensorError::Shape {
            op,
            lhs: tape.shape(clip).to_vec(),
            rhs: expected.to_vec(),
        });
    }
    Ok(())
}
