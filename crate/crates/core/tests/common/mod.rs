#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use codeshift::matrix::ExperimentConfig;

pub mod faults;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn task_block(id: &str, fixture: &str, family: &str) -> String {
    let dir = fixtures().join(fixture);
    format!(
        "[[tasks]]\nid = \"{id}\"\ncorpus = \"{}\"\nqueries = \"{}\"\nqrels = \"{}\"\nfamily = \"{family}\"\n\n",
        dir.join("corpus.jsonl").display(),
        dir.join("queries.jsonl").display(),
        dir.join("qrels.tsv").display(),
    )
}

pub fn bow_encoder(id: &str, extra: &str) -> String {
    format!("[[encoders]]\nid = \"{id}\"\nendpoint = {{ kind = \"mock-bow\", dim = 512{extra} }}\n\n")
}

pub fn canned_rewriter(id: &str, extra: &str) -> String {
    format!(
        "[[rewriters]]\nid = \"{id}\"\nendpoint = {{ kind = \"canned\", table = \"{}\"{extra} }}\n\n",
        fixtures().join("signal/canned.jsonl").display()
    )
}

pub fn identity_rewriter(id: &str) -> String {
    format!("[[rewriters]]\nid = \"{id}\"\nendpoint = {{ kind = \"identity\" }}\n\n")
}

/// Config rooted at `dir`, with a fixed rewrite timestamp so outputs are
/// reproducible across runs.
pub fn config(dir: &Path, head: &str, blocks: &[String]) -> ExperimentConfig {
    let mut src = format!("seed = 11\ntimestamp = \"2025-01-01T00:00:00Z\"\n{head}\n");
    for b in blocks {
        src.push_str(b);
    }
    ExperimentConfig::from_toml(&src, dir).expect("valid config")
}

/// Every file under `root`, relative path to bytes.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
