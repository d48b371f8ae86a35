use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::error::{Error, Result};

const SCHEMA_VERSION: u32 = 1;

/// One line of the run store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub v: u32,
    pub run_id: String,
    pub record: RunRecord,
}

/// Append-only JSON-Lines store of [`RunRecord`]s. Appends from several
/// threads are serialized through an internal lock; run ids are assigned in
/// append order.
#[derive(Debug)]
pub struct RunStore {
    path: PathBuf,
    next_seq: Mutex<u64>,
}

impl RunStore {
    /// Opens (creating if needed) the store at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let existing = if path.exists() {
            Self::read_all(&path)?.len() as u64
        } else {
            0
        };
        Ok(Self {
            path,
            next_seq: Mutex::new(existing),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends `record` and returns its run id.
    pub fn persist_run(&self, record: &RunRecord) -> Result<String> {
        let mut seq = self.next_seq.lock().expect("run store lock poisoned");
        let run_id = format!("run-{:06}", *seq);
        let line = serde_json::to_string(&StoredRun {
            v: SCHEMA_VERSION,
            run_id: run_id.clone(),
            record: record.clone(),
        })?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        *seq += 1;
        Ok(run_id)
    }

    /// Reads every stored run in append order.
    pub fn read_all(path: &Path) -> Result<Vec<StoredRun>> {
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
            let run: StoredRun = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                offset: start,
                message: e.to_string(),
            })?;
            if run.v != SCHEMA_VERSION {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    offset: start,
                    message: format!("unsupported run store schema v{}", run.v),
                });
            }
            out.push(run);
        }
        Ok(out)
    }

    pub fn records(path: &Path) -> Result<Vec<RunRecord>> {
        Ok(Self::read_all(path)?.into_iter().map(|r| r.record).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Regime, RewritePlan, Strategy, TaskFamily};
    use crate::retrieval::Gain;
    use std::collections::BTreeMap;

    fn record(i: usize) -> RunRecord {
        let per: BTreeMap<String, f64> = (0..3)
            .map(|q| (format!("q{q}"), ((i * 7 + q) as f64 * 0.1234567891).fract()))
            .collect();
        let mean = per.values().sum::<f64>() / per.len() as f64;
        RunRecord {
            encoder_id: "enc".into(),
            task_id: format!("task{}", i % 3),
            plan: RewritePlan::new(Strategy::NL, Regime::QC, "rw", "nl-v1", TaskFamily::TextToCode).unwrap(),
            ndcg_per_query: per,
            mean_ndcg: mean,
            delta_ndcg: Some(mean - 0.5),
            k: 10,
            gain: Gain::Linear,
            excluded_queries: 0,
        }
    }

    #[test]
    fn round_trip_and_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path().join("runs.jsonl")).unwrap();
        let a = store.persist_run(&record(0)).unwrap();
        let b = store.persist_run(&record(1)).unwrap();
        assert_ne!(a, b);
        let back = RunStore::read_all(store.path()).unwrap();
        assert_eq!(back[0].run_id, a);
        assert_eq!(back[1].run_id, b);
        assert_eq!(back[0].record, record(0));
        assert_eq!(back[1].record, record(1));

        // reopening continues the sequence
        let store = RunStore::open(dir.path().join("runs.jsonl")).unwrap();
        assert_eq!(store.persist_run(&record(2)).unwrap(), "run-000002");
    }

    #[test]
    fn thousand_records() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path().join("runs.jsonl")).unwrap();
        for i in 0..1000 {
            store.persist_run(&record(i)).unwrap();
        }
        assert_eq!(RunStore::records(store.path()).unwrap().len(), 1000);
    }

    #[test]
    fn write_failure_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path().join("runs.jsonl")).unwrap();
        fs::create_dir(dir.path().join("runs.jsonl")).unwrap();
        let err = store.persist_run(&record(0)).unwrap_err();
        assert!(err.to_string().contains("runs.jsonl"), "{err}");
    }
}
