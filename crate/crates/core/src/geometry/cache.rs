use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    key: String,
    encoder_id: String,
    dimension: usize,
    file: String,
    offset: u64,
}

/// Content-addressed store of raw embedding vectors.
///
/// On disk: one little-endian f64 vector file per encoder plus a JSON-Lines
/// manifest `(key, encoder_id, dimension, file, offset)`. Keys hash the
/// encoder id together with the exact text. Later manifest entries for the
/// same key win.
#[derive(Debug)]
pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<String, Vec<f64>>>,
    writer: Mutex<()>,
}

impl EmbeddingCache {
    /// A cache that lives only as long as this value.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    /// Opens (creating if needed) the cache directory and loads its manifest.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let manifest = dir.join(MANIFEST);
        let mut entries = HashMap::new();
        if manifest.exists() {
            let file = File::open(&manifest).map_err(|e| Error::io(&manifest, e))?;
            let mut files: HashMap<String, File> = HashMap::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&manifest, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: manifest.clone(),
                    line: i + 1,
                    offset: 0,
                    message: e.to_string(),
                })?;
                let path = dir.join(&entry.file);
                if !files.contains_key(&entry.file) {
                    let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
                    files.insert(entry.file.clone(), f);
                }
                let f = files.get_mut(&entry.file).expect("opened above");
                let mut buf = vec![0u8; entry.dimension * 8];
                f.seek(SeekFrom::Start(entry.offset))
                    .and_then(|_| f.read_exact(&mut buf))
                    .map_err(|e| Error::io(&path, e))?;
                let v = buf
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect();
                entries.insert(entry.key, v);
            }
        }
        Ok(Self {
            dir: Some(dir),
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn key(encoder_id: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(encoder_id.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().expect("cache lock poisoned").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn vector_file(encoder_id: &str) -> String {
        let h = hex::encode(Sha256::digest(encoder_id.as_bytes()));
        format!("vectors-{}.bin", &h[..16])
    }

    /// Stores raw vectors under their keys, persisting them when the cache is
    /// backed by a directory.
    pub fn insert_many(&self, encoder_id: &str, items: &[(String, Vec<f64>)]) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        let _guard = self.writer.lock().expect("cache writer poisoned");
        if let Some(dir) = &self.dir {
            let file_name = Self::vector_file(encoder_id);
            let vec_path = dir.join(&file_name);
            let manifest_path = dir.join(MANIFEST);
            let mut vf = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&vec_path)
                .map_err(|e| Error::io(&vec_path, e))?;
            let mut offset = vf.metadata().map_err(|e| Error::io(&vec_path, e))?.len();
            let mut lines = String::new();
            let mut bytes = Vec::new();
            for (key, v) in items {
                for x in v {
                    bytes.extend_from_slice(&x.to_le_bytes());
                }
                lines.push_str(&serde_json::to_string(&ManifestEntry {
                    key: key.clone(),
                    encoder_id: encoder_id.to_string(),
                    dimension: v.len(),
                    file: file_name.clone(),
                    offset,
                })?);
                lines.push('\n');
                offset += v.len() as u64 * 8;
            }
            // vectors first, so a manifest line never points past the data
            vf.write_all(&bytes).map_err(|e| Error::io(&vec_path, e))?;
            let mut mf = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&manifest_path)
                .map_err(|e| Error::io(&manifest_path, e))?;
            mf.write_all(lines.as_bytes())
                .map_err(|e| Error::io(&manifest_path, e))?;
        }
        let mut entries = self.entries.write().expect("cache lock poisoned");
        for (key, v) in items {
            entries.insert(key.clone(), v.clone());
        }
        Ok(())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let k1 = EmbeddingCache::key("enc", "hello");
        let k2 = EmbeddingCache::key("enc", "world");
        {
            let cache = EmbeddingCache::open(dir.path()).unwrap();
            cache
                .insert_many("enc", &[(k1.clone(), vec![1.5, -2.0]), (k2.clone(), vec![0.1, 0.2])])
                .unwrap();
            cache.insert_many("enc", &[(k1.clone(), vec![3.0, 4.0])]).unwrap();
        }
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        assert_eq!(cache.get(&k1), Some(vec![3.0, 4.0]));
        assert_eq!(cache.get(&k2), Some(vec![0.1, 0.2]));
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn keys_depend_on_encoder_and_text() {
        assert_ne!(EmbeddingCache::key("a", "x"), EmbeddingCache::key("b", "x"));
        assert_ne!(EmbeddingCache::key("a", "x"), EmbeddingCache::key("a", "y"));
        assert_eq!(EmbeddingCache::key("a", "x"), EmbeddingCache::key("a", "x"));
    }
}
