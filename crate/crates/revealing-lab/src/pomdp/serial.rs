use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pomdp::TabularPomdp;

/// Format tag stamped into every serialized model file.
pub const POMDP_FORMAT: &str = "tabular-pomdp/v1";

#[derive(Serialize, Deserialize)]
struct PomdpFile {
    format: String,
    #[serde(flatten)]
    model: TabularPomdp,
}

/// Serialize a model to a JSON string (format-tagged, deterministic field
/// order, shortest round-trip float encoding — byte-stable across runs).
pub fn pomdp_to_json(pomdp: &TabularPomdp) -> Result<String> {
    let file = PomdpFile {
        format: POMDP_FORMAT.to_string(),
        model: pomdp.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parse a model from JSON; checks the format tag and fully validates.
pub fn pomdp_from_json(text: &str) -> Result<TabularPomdp> {
    let file: PomdpFile = serde_json::from_str(text)?;
    if file.format != POMDP_FORMAT {
        return Err(LabError::Format(format!(
            "expected format {POMDP_FORMAT:?}, found {:?}",
            file.format
        )));
    }
    file.model.validate()?;
    Ok(file.model)
}

pub fn save_pomdp(pomdp: &TabularPomdp, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, pomdp_to_json(pomdp)?)?;
    Ok(())
}

pub fn load_pomdp(path: impl AsRef<Path>) -> Result<TabularPomdp> {
    pomdp_from_json(&std::fs::read_to_string(path)?)
}
