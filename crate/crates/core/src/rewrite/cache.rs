use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::orchestrator::RewriteRecord;
use crate::error::{Error, Result};

/// Successful rewrites keyed by (rewriter, template, source hash), persisted
/// as JSON-Lines of [`RewriteRecord`]. Later lines win.
#[derive(Debug)]
pub struct RewriteCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, RewriteRecord>>,
    writer: Mutex<()>,
}

impl RewriteCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("rewrites.jsonl");
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: RewriteRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: i + 1,
                    offset: 0,
                    message: e.to_string(),
                })?;
                entries.insert(Self::key(&rec.rewriter_id, &rec.template_id, &rec.source_hash), rec);
            }
        }
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn key(rewriter_id: &str, template_id: &str, source_hash: &str) -> String {
        let mut h = Sha256::new();
        for part in [rewriter_id, template_id, source_hash] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<RewriteRecord> {
        self.entries.read().expect("rewrite cache poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("rewrite cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores successful records; failed ones are ignored so they are retried
    /// on the next run.
    pub fn insert_many(&self, records: &[RewriteRecord]) -> Result<()> {
        let ok: Vec<&RewriteRecord> = records.iter().filter(|r| !r.failed).collect();
        if ok.is_empty() {
            return Ok(());
        }
        let _guard = self.writer.lock().expect("rewrite cache writer poisoned");
        if let Some(path) = &self.path {
            let mut buf = String::new();
            for r in &ok {
                buf.push_str(&serde_json::to_string(r)?);
                buf.push('\n');
            }
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| f.write_all(buf.as_bytes()))
                .map_err(|e| Error::io(path, e))?;
        }
        let mut entries = self.entries.write().expect("rewrite cache poisoned");
        for r in ok {
            entries.insert(Self::key(&r.rewriter_id, &r.template_id, &r.source_hash), r.clone());
        }
        Ok(())
    }
}
