use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that determines the output of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scene: Option<String>,
    /// SHA-256 of the scene file bytes.
    pub scene_sha256: Option<String>,
    pub scenario: Option<String>,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub version: &'static str,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Git-style object hash: SHA-256 of `"blob <len>\0" + content`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

impl RunManifest {
    pub fn new(command: &str, scene: Option<&Path>, scenario: Option<String>, parameters: Value, seed: Option<u64>) -> Result<Self, CliError> {
        let scene_sha256 = match scene {
            Some(p) => Some(content_hash(&std::fs::read(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?)),
            None => None,
        };
        Ok(Self {
            command: command.into(),
            scene: scene.map(|p| p.display().to_string()),
            scene_sha256,
            scenario,
            parameters,
            seed,
            version: VERSION,
        })
    }

    /// Hash of the canonical (key-sorted) JSON of the manifest.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&serde_json::to_value(self).expect("manifest serializes")).expect("json");
        content_hash(canonical.as_bytes())
    }
}

/// CSV artifact with a self-describing comment header and optional footer lines.
pub struct CsvOut {
    header: String,
    writer: csv::Writer<Vec<u8>>,
    footer: Vec<String>,
}

impl CsvOut {
    pub fn new(manifest: &RunManifest, columns: &[&str]) -> Self {
        let mut header = String::new();
        let _ = writeln!(header, "# tdb {}", manifest.version);
        let _ = writeln!(header, "# command: {}", manifest.command);
        let _ = writeln!(header, "# manifest: {}", manifest.hash());
        let _ = writeln!(header, "# parameters: {}", serde_json::to_string(manifest).expect("json"));
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Self {
            header,
            writer,
            footer: Vec::new(),
        }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn footer(&mut self, line: String) {
        self.footer.push(line);
    }

    pub fn finish(self) -> Vec<u8> {
        let mut out = self.header.into_bytes();
        out.extend(self.writer.into_inner().expect("in-memory flush"));
        for f in self.footer {
            out.extend(format!("# {f}\n").into_bytes());
        }
        out
    }
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::runtime(e.to_string())),
    }
}

/// Shortest round-trip representation; stable across platforms. Very small
/// or large magnitudes use exponent notation.
pub fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && !(1e-4..1e15).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}
