use std::path::Path;

use codeshift::matrix::{run_matrix, MatrixOptions, MatrixSummary};

use super::*;

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
