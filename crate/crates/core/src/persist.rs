//! Versioned JSON envelopes for model files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    model: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    model: T,
}

pub(crate) fn to_json<T: Serialize>(format: &str, version: u32, model: &T) -> String {
    let env = EnvelopeRef {
        format,
        version,
        model,
    };
    serde_json::to_string_pretty(&env).expect("model serializes") + "\n"
}

pub(crate) fn save_model<T: Serialize>(
    path: &Path,
    format: &str,
    version: u32,
    model: &T,
) -> Result<()> {
    std::fs::write(path, to_json(format, version, model)).map_err(|e| Error::io(path, e))
}

pub(crate) fn load_model<T: DeserializeOwned>(
    path: &Path,
    format: &str,
    version: u32,
) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::ModelFile {
        path: path.to_path_buf(),
        reason,
    };
    let env: Envelope<T> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if env.format != format {
        return Err(bad(format!(
            "expected format {format}, found {}",
            env.format
        )));
    }
    if env.version != version {
        return Err(bad(format!(
            "unsupported version {} (expected {version})",
            env.version
        )));
    }
    Ok(env.model)
}
