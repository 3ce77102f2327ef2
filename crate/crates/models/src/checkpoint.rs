//! Weight checkpoints: one VTEN file per parameter plus `index.json`
//! mapping names to files and shapes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gdsnet_tensor::{vten, Float, ParamStore};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub file: String,
    pub shape: Vec<usize>,
}

pub type Index = BTreeMap<String, IndexEntry>;

pub fn save<T: Float>(store: &ParamStore<T>, dir: impl AsRef<Path>) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ModelError::Io { path: dir.into(), source })?;
    let mut index = Index::new();
    for (_, p) in store.iter() {
        let file = format!("{}.vten", p.name);
        let path = dir.join(&file);
        vten::write(&path, &p.value).map_err(|source| ModelError::Vten { path, source })?;
        index.insert(
            p.name.clone(),
            IndexEntry {
                file,
                shape: p.value.shape().to_vec(),
            },
        );
    }
    let path = dir.join("index.json");
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&path, text + "\n").map_err(|source| ModelError::Io { path, source })
}

/// Loads every parameter of `store` from `dir`; names and shapes must match exactly.
pub fn load<T: Float>(store: &mut ParamStore<T>, dir: impl AsRef<Path>) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    let path = dir.join("index.json");
    let text = fs::read_to_string(&path).map_err(|source| ModelError::Io { path: path.clone(), source })?;
    let index: Index = serde_json::from_str(&text).map_err(|source| ModelError::Json { path, source })?;
    if index.len() != store.len() {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint holds {} tensors, model has {}",
            index.len(),
            store.len()
        )));
    }
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in ids {
        let entry = index
            .get(&name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter `{name}`")))?;
        let path = dir.join(&entry.file);
        let t = vten::read::<T>(&path).map_err(|source| ModelError::Vten { path, source })?;
        if t.shape() != entry.shape.as_slice() || t.shape() != store.value(id).shape() {
            return Err(ModelError::Checkpoint(format!(
                "`{name}`: shape {:?} does not match model {:?}",
                t.shape(),
                store.value(id).shape()
            )));
        }
        store.set(id, t)?;
    }
    Ok(())
}
