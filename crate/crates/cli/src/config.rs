//! Layered settings (defaults, then a JSON config file, then flags) and the
//! run manifest.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn read_json(path: &Path) -> Result<Value> {
    let file = File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| usage(format!("{} is not valid JSON: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).with_context(|| format!("writing {}", path.display()))
}

/// Recursively replaces keys of `base` with those present in `patch`.
pub fn overlay(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// `defaults` overlaid with `file[key]`, deserialized.
pub fn layered<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<&Value>, key: &str) -> Result<T> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(patch) = file.and_then(|f| f.get(key)) {
        overlay(&mut v, patch);
    }
    serde_json::from_value(v).map_err(|e| usage(format!("invalid `{key}` settings in config file: {e}")))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

/// Builder for `manifest.json`.
pub struct Manifest {
    root: Map<String, Value>,
    inputs: Vec<Value>,
    outputs: Vec<Value>,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        let mut root = Map::new();
        root.insert("tool".into(), json!("commdecay"));
        root.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        root.insert("command".into(), json!(command));
        root.insert("argv".into(), json!(argv));
        Self {
            root,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.root.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(json!({
            "path": path.display().to_string(),
            "sha256": file_digest(path)?,
        }));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(json!({
            "path": path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "sha256": file_digest(path)?,
        }));
        Ok(())
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.root.insert("inputs".into(), Value::Array(self.inputs));
        self.root.insert("outputs".into(), Value::Array(self.outputs));
        let path = dir.join("manifest.json");
        write_json(&path, &Value::Object(self.root))?;
        Ok(path)
    }
}
