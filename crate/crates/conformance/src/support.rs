//! Fixture paths, config builders and output snapshots.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use codeshift::matrix::{run_matrix, ExperimentConfig, MatrixOptions, MatrixSummary};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
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

pub const MARKER: &str = "FAULTY";

/// Query whose canned NL rewrite gets the marker in the faulty run. Only the
/// query side of one rewriter is touched, so exactly one cell (that
/// rewriter's NL-QC arm) fails.
const TARGET_QUERY_PREFIX: &str = "def f(items):\n    out = 0\n";

fn write_table(dir: &Path, faulty: bool) {
    let src = std::fs::read_to_string(fixtures().join("signal/canned.jsonl")).unwrap();
    let mut out = String::new();
    for line in src.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        if faulty && v["input"].as_str().unwrap().starts_with(TARGET_QUERY_PREFIX) {
            let o = format!("{} {MARKER}", v["output"].as_str().unwrap());
            v["output"] = serde_json::Value::String(o);
        }
        out.push_str(&serde_json::to_string(&v).unwrap());
        out.push('\n');
    }
    std::fs::write(dir.join("table.jsonl"), out).unwrap();
}

/// Runs the two-rewriter signal matrix rooted at `dir`; with `faulty` the
/// second rewriter's table poisons one query rewrite.
pub fn isolation_run(dir: &Path, faulty: bool) -> MatrixSummary {
    write_table(dir, faulty);
    let blocks = [
        task_block("sig", "signal", "CodeToCode"),
        bow_encoder("bow", &format!(", fail_on_substring = \"{MARKER}\"")),
        canned_rewriter("clean", ""),
        "[[rewriters]]\nid = \"poison\"\nendpoint = { kind = \"canned\", table = \"table.jsonl\" }\n\n".to_string(),
    ];
    let cfg = config(dir, "strategies = [\"NL\"]\n", &blocks);
    let opts = MatrixOptions {
        out_dir: dir.join("out"),
        cache_dir: Some(dir.join("cache")),
        ..Default::default()
    };
    run_matrix(&cfg, &opts).unwrap()
}

/// Relative dir of the cell the faulty run breaks.
pub const FAILED_CELL_DIR: &str = "cells/bow/sig/poison/NL-QC/";
