//! Artifact rendering: a comment preamble followed by CSV, or the same table as JSON.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A finished table: CSV text with a header row, plus free-form notes.
pub struct Artifact {
    pub notes: Vec<String>,
    pub csv: Vec<u8>,
}

impl Artifact {
    pub fn new(csv: Vec<u8>) -> Artifact {
        Artifact { notes: Vec::new(), csv }
    }

    pub fn note(mut self, note: impl Into<String>) -> Artifact {
        self.notes.push(note.into());
        self
    }
}

pub fn preamble(digest: &str) -> String {
    format!("mangle {} config={digest}", env!("CARGO_PKG_VERSION"))
}

fn cell(text: &str) -> Value {
    if text.is_empty() {
        return Value::Null;
    }
    match text.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        Ok(_) => Value::Null,
        Err(_) => Value::String(text.to_string()),
    }
}

pub fn render(artifact: &Artifact, digest: &str, format: Format) -> Result<Vec<u8>, csv::Error> {
    let mut out = Vec::new();
    match format {
        Format::Csv => {
            writeln!(out, "# {}", preamble(digest))?;
            for note in &artifact.notes {
                writeln!(out, "# {note}")?;
            }
            out.extend_from_slice(&artifact.csv);
        }
        Format::Json => {
            let mut reader = csv::Reader::from_reader(artifact.csv.as_slice());
            let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
            let mut rows = Vec::new();
            for record in reader.records() {
                rows.push(Value::Array(record?.iter().map(cell).collect()));
            }
            writeln!(out, "{{\"comment\":{},", json!(preamble(digest)))?;
            writeln!(out, "\"notes\":{},", json!(artifact.notes))?;
            writeln!(out, "\"columns\":{},", json!(columns))?;
            writeln!(out, "\"rows\":{}}}", Value::Array(rows))?;
        }
    }
    Ok(out)
}

/// `out` if given, else `<out_dir>/<name>.<ext>`, else standard output (`None`).
pub fn destination(out: Option<&Path>, out_dir: Option<&Path>, name: &str, format: Format) -> Option<PathBuf> {
    match (out, out_dir) {
        (Some(path), _) => Some(path.to_path_buf()),
        (None, Some(dir)) => Some(dir.join(format!("{name}.{}", format.extension()))),
        (None, None) => None,
    }
}

pub fn write(bytes: &[u8], path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()
        }
    }
}
