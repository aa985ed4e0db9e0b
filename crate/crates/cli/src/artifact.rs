//! Artifact envelopes: every output carries the resolved config and a content
//! hash of everything that went into it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const ARTIFACT_VERSION: u64 = 1;

/// `sha256("blob <len>\0" ‖ bytes)`, the object hash git uses in SHA-256
/// repositories.
pub fn git_blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config: Value,
    pub derived: Value,
    /// Content hashes of input files by role.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Self {
            config: serde_json::to_value(cfg)?,
            derived: serde_json::to_value(cfg.derived()?)?,
            inputs: BTreeMap::new(),
        })
    }

    pub fn with_input(mut self, role: &str, bytes: &[u8]) -> Self {
        self.inputs.insert(role.to_string(), git_blob_sha256(bytes));
        self
    }

    /// Hash over the canonical (key-sorted, compact) JSON of config and
    /// input hashes.
    pub fn inputs_sha256(&self) -> String {
        Self::hash_of(&self.config, &self.inputs)
    }

    pub fn hash_of(config: &Value, inputs: &BTreeMap<String, String>) -> String {
        let doc = json!({ "config": config, "inputs": inputs });
        git_blob_sha256(doc.to_string().as_bytes())
    }

    pub fn json_document<T: Serialize>(&self, kind: &str, data: &T) -> Result<String, CliError> {
        let doc = json!({
            "artifact": kind,
            "version": ARTIFACT_VERSION,
            "inputs_sha256": self.inputs_sha256(),
            "inputs": self.inputs,
            "config": self.config,
            "derived": self.derived,
            "data": data,
        });
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    /// `#`-prefixed metadata lines, a header row, then one row per record.
    pub fn csv_document(&self, kind: &str, columns: &[&str], rows: &[Vec<f64>]) -> String {
        let mut s = String::new();
        let meta = [
            ("artifact", kind.to_string()),
            ("version", ARTIFACT_VERSION.to_string()),
            ("inputs_sha256", self.inputs_sha256()),
            ("inputs", json!(self.inputs).to_string()),
            ("config", self.config.to_string()),
            ("derived", self.derived.to_string()),
        ];
        for (k, v) in meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "{}", columns.join(","));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// A parsed artifact.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Json(Value),
    Csv {
        meta: BTreeMap<String, String>,
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
    },
}

impl Artifact {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            return Ok(Artifact::Json(serde_json::from_str(text)?));
        }
        let mut meta = BTreeMap::new();
        let mut columns = None;
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(m) = line.strip_prefix("# ") {
                let (k, v) = m.split_once(": ").ok_or_else(|| {
                    CliError::Config(format!("line {}: malformed metadata", n + 1))
                })?;
                meta.insert(k.to_string(), v.to_string());
            } else if columns.is_none() {
                columns = Some(line.split(',').map(str::to_string).collect::<Vec<_>>());
            } else if !line.is_empty() {
                let row = line
                    .split(',')
                    .map(|c| c.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
                rows.push(row);
            }
        }
        Ok(Artifact::Csv {
            meta,
            columns: columns
                .ok_or_else(|| CliError::Config("CSV artifact has no header row".into()))?,
            rows,
        })
    }

    pub fn kind(&self) -> Option<String> {
        match self {
            Artifact::Json(v) => v
                .get("artifact")
                .and_then(Value::as_str)
                .map(str::to_string),
            Artifact::Csv { meta, .. } => meta.get("artifact").cloned(),
        }
    }

    /// Embedded config, input hashes and recorded `inputs_sha256`.
    pub fn provenance(&self) -> Result<(Value, BTreeMap<String, String>, String), CliError> {
        let missing = |k: &str| CliError::Config(format!("artifact has no `{k}` field"));
        let (config, inputs, hash) = match self {
            Artifact::Json(v) => (
                v.get("config").cloned().ok_or_else(|| missing("config"))?,
                v.get("inputs").cloned().ok_or_else(|| missing("inputs"))?,
                v.get("inputs_sha256")
                    .and_then(Value::as_str)
                    .ok_or_else(|| missing("inputs_sha256"))?
                    .to_string(),
            ),
            Artifact::Csv { meta, .. } => (
                serde_json::from_str(meta.get("config").ok_or_else(|| missing("config"))?)?,
                serde_json::from_str(meta.get("inputs").ok_or_else(|| missing("inputs"))?)?,
                meta.get("inputs_sha256")
                    .ok_or_else(|| missing("inputs_sha256"))?
                    .clone(),
            ),
        };
        Ok((config, serde_json::from_value(inputs)?, hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_blob_hash_of_empty_input() {
        // `git hash-object --object-format=sha256 /dev/null`
        assert_eq!(
            git_blob_sha256(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    fn provenance() -> Provenance {
        let cfg = RunConfig::parse("[lattice]\ndepth = 5.0\n", Path::new("a.toml")).unwrap();
        Provenance::new(&cfg).unwrap().with_input("ramp", b"abc")
    }

    #[test]
    fn csv_round_trip_keeps_metadata_and_values() {
        let p = provenance();
        let rows = vec![
            vec![0.0, 1.5e-7, -3.25],
            vec![1.0, 0.1, std::f64::consts::PI],
        ];
        let text = p.csv_document("ramp", &["a", "b", "c"], &rows);
        let Artifact::Csv {
            meta,
            columns,
            rows: back,
        } = Artifact::parse(&text).unwrap()
        else {
            panic!("expected CSV");
        };
        assert_eq!(columns, ["a", "b", "c"]);
        assert_eq!(back, rows);
        assert_eq!(meta["inputs_sha256"], p.inputs_sha256());
    }

    #[test]
    fn recorded_hash_recomputes() {
        let p = provenance();
        let a = Artifact::parse(&p.json_document("report", &json!({"x": 1})).unwrap()).unwrap();
        let (config, inputs, hash) = a.provenance().unwrap();
        assert_eq!(Provenance::hash_of(&config, &inputs), hash);
        assert_eq!(a.kind().as_deref(), Some("report"));
    }

    #[test]
    fn hash_depends_on_inputs() {
        let a = provenance();
        let b = provenance().with_input("ramp", b"abd");
        assert_ne!(a.inputs_sha256(), b.inputs_sha256());
    }
}
