use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryReport;
use crate::lexical::LexicalReport;

/// One line of the diagnostics store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Diagnostic {
    Lexical(LexicalReport),
    Geometry(GeometryReport),
}

/// Writes `items` as JSON-Lines, replacing any existing file.
pub fn write_diagnostics(path: &Path, items: &[Diagnostic]) -> Result<()> {
    let mut buf = Vec::new();
    for d in items {
        serde_json::to_writer(&mut buf, d)?;
        buf.push(b'\n');
    }
    File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<Diagnostic>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let start = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            offset: start,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
