//! Model file format: a single JSON document
//!
//! ```text
//! {"format": "analogues-gbdt", "version": 1, "layout_hash": "<16 hex>",
//!  "base_score": f64, "learning_rate": f64,
//!  "trees": [{"nodes": [{"kind": "split", ...} | {"kind": "leaf", ...}]}]}
//! ```
//!
//! Floats are written in shortest round-trip form, so predictions of a
//! reloaded model are bit-identical.

use serde::{Deserialize, Serialize};

use super::{GbdtModel, Tree};
use crate::error::{Error, Result};
use crate::features::LayoutHash;

pub const FORMAT_NAME: &str = "analogues-gbdt";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct FileRef<'a> {
    format: &'a str,
    version: u32,
    layout_hash: String,
    base_score: f64,
    learning_rate: f64,
    trees: &'a [Tree],
}

#[derive(Deserialize)]
struct FileOwned {
    format: String,
    version: u32,
    layout_hash: String,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

pub fn serialize(model: &GbdtModel) -> Vec<u8> {
    let file = FileRef {
        format: FORMAT_NAME,
        version: FORMAT_VERSION,
        layout_hash: model.layout.to_string(),
        base_score: model.base_score,
        learning_rate: model.learning_rate,
        trees: &model.trees,
    };
    serde_json::to_vec(&file).expect("model serializes")
}

pub fn deserialize(bytes: &[u8]) -> Result<GbdtModel> {
    let file: FileOwned =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("corrupt model stream: {e}")))?;
    if file.format != FORMAT_NAME {
        return Err(Error::Format(format!("unknown format `{}`", file.format)));
    }
    if file.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "model version {} is not supported (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    let layout = u64::from_str_radix(&file.layout_hash, 16)
        .map(LayoutHash)
        .map_err(|_| Error::Format(format!("bad layout hash `{}`", file.layout_hash)))?;
    if !file.base_score.is_finite() || !(file.learning_rate > 0.0 && file.learning_rate <= 1.0) {
        return Err(Error::Format("bad base score or learning rate".into()));
    }
    for (i, t) in file.trees.iter().enumerate() {
        t.validate(None)
            .map_err(|e| Error::Format(format!("tree {i}: {e}")))?;
    }
    Ok(GbdtModel {
        layout,
        base_score: file.base_score,
        learning_rate: file.learning_rate,
        trees: file.trees,
    })
}
