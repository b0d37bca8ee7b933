use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{data, Result};

pub const TOOL: &str = "infill-bench";

/// Reproducibility stamp carried by every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    /// `config_hash` is the SHA-256 of the result-affecting arguments as JSON
    /// (output location and worker count are excluded).
    pub fn new<A: Serialize>(command: &'static str, seed: u64, args: &A) -> Self {
        let canonical = serde_json::to_string(args).unwrap_or_default();
        Self { tool: TOOL, version: env!("CARGO_PKG_VERSION"), command, seed, config_hash: sha256_hex(canonical.as_bytes()) }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }

    fn line(&self) -> String {
        format!("{} {} {} seed={} config_hash={}", self.tool, self.version, self.command, self.seed, self.config_hash)
    }

    /// Leading comment line for CSV artifacts.
    pub fn csv_comment(&self) -> String {
        format!("# {}\n", self.line())
    }

    /// Place an XML comment right after the root element's opening tag.
    pub fn stamp_svg(&self, svg: &str) -> String {
        match svg.find('>') {
            Some(i) => format!("{}\n<!-- {} -->{}", &svg[..=i], self.line(), &svg[i + 1..]),
            None => svg.to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects artifacts written into one output directory and writes a
/// `manifest.json` with the meta stamp and each file's digest.
pub struct Outputs {
    dir: PathBuf,
    meta: Meta,
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self> {
        fs::create_dir_all(dir).map_err(data(dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), meta, files: Vec::new() })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(data(path.display()))?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    /// JSON object with a `meta` field added.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let body = with_meta(&self.meta, value);
        let text = serde_json::to_string_pretty(&body).map_err(data(name))? + "\n";
        self.write(name, text.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let text = jsonl(rows)?;
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, body: &[u8]) -> Result<()> {
        let mut out = self.meta.csv_comment().into_bytes();
        out.extend_from_slice(body);
        self.write(name, &out)
    }

    pub fn write_svg(&mut self, name: &str, svg: &str) -> Result<()> {
        let stamped = self.meta.stamp_svg(svg);
        self.write(name, stamped.as_bytes())
    }

    pub fn finish(mut self) -> Result<Vec<(String, String)>> {
        let files: serde_json::Map<String, Value> =
            self.files.iter().map(|(n, h)| (n.clone(), Value::String(h.clone()))).collect();
        let manifest = json!({ "meta": self.meta.to_value(), "files": files });
        let text = serde_json::to_string_pretty(&manifest).map_err(data("manifest"))? + "\n";
        let path = self.path("manifest.json");
        fs::write(&path, text).map_err(data(path.display()))?;
        Ok(std::mem::take(&mut self.files))
    }
}

pub fn with_meta<T: Serialize>(meta: &Meta, value: &T) -> Value {
    let inner = serde_json::to_value(value).unwrap_or(Value::Null);
    let mut obj = serde_json::Map::new();
    obj.insert("meta".into(), meta.to_value());
    match inner {
        Value::Object(m) => {
            for (k, v) in m {
                if k != "meta" {
                    obj.insert(k, v);
                }
            }
        }
        other => {
            obj.insert("data".into(), other);
        }
    }
    Value::Object(obj)
}

pub fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).map_err(data("jsonl"))?);
        text.push('\n');
    }
    Ok(text)
}
