//! JSON model checkpoints: configuration (including the seed) plus every
//! parameter matrix with its shape. Floats are written in shortest
//! round-trip form, so a save/load cycle is bitwise exact.

use std::path::Path;

use capforge_core::model::Forecaster;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "capforge-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a Forecaster,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: Forecaster,
}

pub fn to_json(model: &Forecaster) -> String {
    let doc = CheckpointRef { format: FORMAT, version: VERSION, model };
    serde_json::to_string(&doc).expect("model serializes")
}

pub fn from_json(text: &str) -> std::result::Result<Forecaster, String> {
    let doc: Checkpoint = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(format!("unsupported format {} v{}", doc.format, doc.version));
    }
    Ok(doc.model)
}

pub fn save(path: impl AsRef<Path>, model: &Forecaster) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Forecaster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile { path: path.into() },
        _ => Error::io(path, e),
    })?;
    from_json(&text).map_err(|message| Error::Checkpoint { path: path.into(), message })
}
