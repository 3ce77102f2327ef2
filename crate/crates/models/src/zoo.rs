//! Model selection by name with JSON config overrides.

use std::fmt;
use std::str::FromStr;

use gdsnet_tensor::{Float, ParamStore, Result, Tape, Var};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ModelError;
use crate::{CnnLstm, CnnLstmConfig, Swin3d, SwinConfig, VideoModel, Vivit, VivitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "vivit")]
    Vivit,
    #[serde(rename = "swin3d_t")]
    Swin3dT,
    #[serde(rename = "cnn_lstm")]
    CnnLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Vivit, ModelKind::Swin3dT, ModelKind::CnnLstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Vivit => "vivit",
            ModelKind::Swin3dT => "swin3d_t",
            ModelKind::CnnLstm => "cnn_lstm",
        }
    }

    /// Trainable-parameter total listed for the clinical configuration.
    pub fn reported_params(self) -> f64 {
        match self {
            ModelKind::Vivit => 21.13e6,
            ModelKind::Swin3dT => 28.2e6,
            ModelKind::CnnLstm => 52.3e6,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    Vivit(Vivit),
    Swin3d(Swin3d),
    CnnLstm(CnnLstm),
}

impl<T: Float> VideoModel<T> for AnyModel {
    fn classes(&self) -> usize {
        match self {
            AnyModel::Vivit(m) => VideoModel::<T>::classes(m),
            AnyModel::Swin3d(m) => VideoModel::<T>::classes(m),
            AnyModel::CnnLstm(m) => VideoModel::<T>::classes(m),
        }
    }

    fn input_shape(&self) -> [usize; 4] {
        match self {
            AnyModel::Vivit(m) => VideoModel::<T>::input_shape(m),
            AnyModel::Swin3d(m) => VideoModel::<T>::input_shape(m),
            AnyModel::CnnLstm(m) => VideoModel::<T>::input_shape(m),
        }
    }

    fn forward_traced(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var, trace: &mut Vec<Var>) -> Result<Var> {
        match self {
            AnyModel::Vivit(m) => m.forward_traced(tape, store, clip, trace),
            AnyModel::Swin3d(m) => m.forward_traced(tape, store, clip, trace),
            AnyModel::CnnLstm(m) => m.forward_traced(tape, store, clip, trace),
        }
    }
}

/// Recursively overlays `patch` onto `base`.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn configure<C: Serialize + DeserializeOwned + Default>(
    overrides: Option<&Value>,
    classes: usize,
    input: [usize; 4],
) -> Result<C, ModelError> {
    let mut v = serde_json::to_value(C::default()).expect("config serializes");
    if let Some(o) = overrides {
        if !o.is_object() {
            return Err(ModelError::Config("model overrides must be a JSON object".into()));
        }
        merge_json(&mut v, o);
    }
    v["classes"] = classes.into();
    v["input"] = serde_json::to_value(input).expect("shape serializes");
    serde_json::from_value(v).map_err(|e| ModelError::Config(e.to_string()))
}

/// Builds a model from defaults overlaid with `overrides`; `classes` and
/// `input` always come from the caller.
pub fn build_model<T: Float>(
    kind: ModelKind,
    overrides: Option<&Value>,
    classes: usize,
    input: [usize; 4],
    store: &mut ParamStore<T>,
    seed: u64,
) -> Result<AnyModel, ModelError> {
    Ok(match kind {
        ModelKind::Vivit => AnyModel::Vivit(Vivit::new(configure::<VivitConfig>(overrides, classes, input)?, store, seed)?),
        ModelKind::Swin3dT => AnyModel::Swin3d(Swin3d::new(configure::<SwinConfig>(overrides, classes, input)?, store, seed)?),
        ModelKind::CnnLstm => {
            AnyModel::CnnLstm(CnnLstm::new(configure::<CnnLstmConfig>(overrides, classes, input)?, store, seed)?)
        }
    })
}

/// Trainable parameters of the default (clinical-scale) configuration.
pub fn full_scale_params(kind: ModelKind, classes: usize) -> Result<usize, ModelError> {
    let mut store = ParamStore::<f32>::new();
    build_model(kind, None, classes, [30, 224, 224, 3], &mut store, 0)?;
    Ok(store.num_trainable())
}
