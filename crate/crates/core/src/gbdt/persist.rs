//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoostedModel, TreeNode};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "semg-gbdt";
pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize)]
struct FileRef<'a> {
    format: &'static str,
    format_version: u64,
    model: &'a BoostedModel,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    format_version: u64,
}

#[derive(Deserialize)]
struct FileOwned {
    model: BoostedModel,
}

pub fn to_json(model: &BoostedModel) -> Result<String> {
    let file = FileRef { format: MODEL_FORMAT, format_version: MODEL_FORMAT_VERSION, model };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn save_model(model: &BoostedModel, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, to_json(model)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<BoostedModel> {
    let load_err = |msg: String| Error::Load { path: path.to_path_buf(), msg };
    let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    from_json(&text).map_err(|e| match e {
        e @ Error::UnsupportedVersion { .. } => e,
        Error::Load { msg, .. } => load_err(msg),
        other => load_err(other.to_string()),
    })
}

pub fn from_json(text: &str) -> Result<BoostedModel> {
    let load_err = |msg: String| Error::Load { path: Default::default(), msg };
    let header: Header = serde_json::from_str(text).map_err(|e| load_err(e.to_string()))?;
    if header.format != MODEL_FORMAT {
        return Err(load_err(format!("not a model file (format `{}`)", header.format)));
    }
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: header.format_version, expected: MODEL_FORMAT_VERSION });
    }
    let file: FileOwned = serde_json::from_str(text).map_err(|e| load_err(e.to_string()))?;
    check_model(&file.model).map_err(load_err)?;
    Ok(file.model)
}

fn check_model(model: &BoostedModel) -> std::result::Result<(), String> {
    let m = model.n_classes;
    if m < 2 || model.init_score.len() != m {
        return Err(format!("inconsistent class count {m}"));
    }
    for (s, stage) in model.stages.iter().enumerate() {
        if stage.best_iteration > stage.rounds.len() {
            return Err(format!("stage {s}: best_iteration exceeds round count"));
        }
        for round in &stage.rounds {
            if round.len() != m {
                return Err(format!("stage {s}: round with {} trees, expected {m}", round.len()));
            }
            for tree in round {
                if tree.nodes.is_empty() {
                    return Err(format!("stage {s}: empty tree"));
                }
                for node in &tree.nodes {
                    match *node {
                        TreeNode::Leaf { value } if !value.is_finite() => {
                            return Err(format!("stage {s}: non-finite leaf value"));
                        }
                        TreeNode::Split { feature, left, right, .. }
                            if feature >= model.n_features || left >= tree.nodes.len() || right >= tree.nodes.len() =>
                        {
                            return Err(format!("stage {s}: split refers outside the tree or feature range"));
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(())
}
