//! Run manifests: a config snapshot plus input digests, emitted with
//! every run so results can be reproduced byte-identically from the
//! same caches.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub model_id: Option<String>,
    pub rng_seed: u64,
}

/// SHA-256 of a file's contents, streamed.
pub fn file_sha256(path: &Path) -> Result<String> {
    let display = path.display().to_string();
    let mut file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut hasher = Sha256::new();
    let mut buffer = [0u8; 64 * 1024];
    loop {
        let read = file
            .read(&mut buffer)
            .map_err(|e| Error::io(display.clone(), e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buffer[..read]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, rng_seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            model_id: None,
            rng_seed,
        }
    }

    pub fn with_model(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = Some(model_id.into());
        self
    }

    /// Records a digest for every input path that is present.
    pub fn add_inputs<'a, I>(&mut self, paths: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Path>,
    {
        for path in paths {
            self.inputs.push(InputDigest {
                path: path.display().to_string(),
                sha256: file_sha256(path)?,
            });
        }
        Ok(())
    }

    /// Writes `manifest.json` into the output directory.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        let path = out_dir.join("manifest.json");
        let display = path.display().to_string();
        let file = File::create(&path).map_err(|e| Error::io(display.clone(), e))?;
        let mut writer = BufWriter::new(file);
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("manifest serialization failed: {e}")))?;
        writeln!(writer, "{body}").map_err(|e| Error::io(display.clone(), e))?;
        writer.flush().map_err(|e| Error::io(display, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("input.txt");
        std::fs::write(&path, "hello").unwrap();
        let a = file_sha256(&path).unwrap();
        let b = file_sha256(&path).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }

    #[test]
    fn manifest_round_trip_contains_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("schema.jsonl");
        std::fs::write(&input, "{}").unwrap();
        let mut manifest = RunManifest::new(
            "classify",
            serde_json::json!({"components": "EPM"}),
            42,
        )
        .with_model("test-model");
        manifest.add_inputs([input.as_path()]).unwrap();
        let path = manifest.write(dir.path()).unwrap();
        let body = std::fs::read_to_string(path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(parsed["command"], "classify");
        assert_eq!(parsed["rng_seed"], 42);
        assert_eq!(parsed["inputs"][0]["sha256"], file_sha256(&input).unwrap());
    }
}
