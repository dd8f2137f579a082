use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance shared by every artifact of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Canonical flags with input paths replaced by their content digests.
    pub config: BTreeMap<String, Value>,
}

impl RunHeader {
    /// `flags` is the serialized argument struct. Keys starting with `out` are
    /// destinations and do not enter the hash; `inputs` name path-valued keys.
    pub fn new(subcommand: &str, flags: Value, inputs: &[&str], seed: Option<u64>) -> std::io::Result<RunHeader> {
        let mut config = BTreeMap::new();
        if let Value::Object(map) = flags {
            for (k, v) in map {
                if k.starts_with("out") {
                    continue;
                }
                let v = match (&v, inputs.contains(&k.as_str())) {
                    (Value::String(p), true) => json!({ "sha256": sha256_hex(&std::fs::read(p)?) }),
                    _ => v,
                };
                config.insert(k, v);
            }
        }
        let canonical = serde_json::to_string(&json!({ "subcommand": subcommand, "config": config })).unwrap();
        Ok(RunHeader {
            tool: "phishpanel",
            version: VERSION,
            subcommand: subcommand.to_string(),
            config_hash: sha256_hex(canonical.as_bytes()),
            seed,
            config,
        })
    }

    pub fn comment_lines(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# {} {}\n# subcommand {}\n# config_hash {}\n# seed {}\n",
            self.tool, self.version, self.subcommand, self.config_hash, seed
        )
    }
}

pub fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the header comment block followed by the CSV body produced by `body`.
pub fn write_csv_file<F>(path: &Path, header: &RunHeader, body: F) -> phishpanel::Result<()>
where
    F: FnOnce(&mut dyn Write) -> phishpanel::Result<()>,
{
    let mut w = create(path)?;
    w.write_all(header.comment_lines().as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_json_file(path: &Path, header: &RunHeader, result: Value) -> phishpanel::Result<()> {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "header": header,
        "result": result,
    });
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Fails before any computation if an input is unreadable or an output directory is missing.
pub fn check_paths(inputs: &[&Path], outputs: &[&PathBuf]) -> Result<(), String> {
    for p in inputs {
        if !p.is_file() {
            return Err(format!("input file `{}` does not exist", p.display()));
        }
    }
    for p in outputs {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(format!("output directory `{}` does not exist", parent.display()));
        }
    }
    Ok(())
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
