mod common;

use codeshift::corpus::{Regime, Strategy};
use codeshift::matrix::{build_reports, load_reports_input, run_matrix, MatrixOptions};
use common::*;

#[test]
fn signal_fixture_direction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "strategies = [\"NL\"]\n",
        &[
            task_block("sig", "signal", "CodeToCode"),
            bow_encoder("bow", ""),
            canned_rewriter("canned", ""),
        ],
    );
    let out = tmp.path().join("out");
    let s = run_matrix(&cfg, &MatrixOptions { out_dir: out.clone(), ..Default::default() }).unwrap();
    assert!(s.failures.is_empty(), "{:?}", s.failures);
    let input = load_reports_input(&out, 0.0).unwrap();
    for r in &input.runs {
        println!("{} {:.4} {:?}", r.plan.arm_label(), r.mean_ndcg, r.delta_ndcg);
    }
    let get = |regime| {
        input
            .runs
            .iter()
            .find(|r| r.plan.strategy() == Strategy::NL && r.plan.regime() == regime)
            .unwrap()
            .delta_ndcg
            .unwrap()
    };
    assert!(get(Regime::QC) > 0.0);
    assert!(get(Regime::C) <= 0.0);
    let bundle = build_reports(&input).unwrap();
    for (k, v) in &bundle.files {
        println!("== {k}\n{v}");
    }
}

fn opts(dir: &std::path::Path) -> MatrixOptions {
    MatrixOptions {
        out_dir: dir.join("out"),
        cache_dir: Some(dir.join("cache")),
        ..Default::default()
    }
}

fn run_count(out: &std::path::Path) -> usize {
    std::fs::read_to_string(out.join("runs.jsonl")).unwrap().lines().count()
}

#[test]
fn single_arm_matrix_has_two_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "strategies = [\"NL\"]\nregimes = [\"QC\"]\n",
        &[task_block("tiny", "tiny", "TextToCode"), bow_encoder("bow", ""), identity_rewriter("same")],
    );
    let s = run_matrix(&cfg, &opts(tmp.path())).unwrap();
    assert_eq!((s.cells, s.succeeded), (2, 2));
    assert_eq!(run_count(&tmp.path().join("out")), 2);
}

#[test]
fn full_grid_record_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut blocks: Vec<String> = (1..=6).map(|t| task_block(&format!("task{t}"), "tiny", "TextToCode")).collect();
    blocks.extend((1..=5).map(|e| bow_encoder(&format!("enc{e}"), "")));
    blocks.push(identity_rewriter("same"));
    let cfg = config(tmp.path(), "", &blocks);
    let s = run_matrix(&cfg, &opts(tmp.path())).unwrap();
    assert!(s.failures.is_empty(), "{:?}", s.failures);
    assert_eq!(s.cells, 5 * 6 * 3 * 2 + 5 * 6);
    assert_eq!(run_count(&tmp.path().join("out")), 210);
}

#[test]
fn baseline_only_without_rewriters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "strategies = []\nregimes = []\n",
        &[task_block("tiny", "tiny", "TextToCode"), bow_encoder("bow", "")],
    );
    let s = run_matrix(&cfg, &opts(tmp.path())).unwrap();
    assert_eq!(s.cells, 1);
    assert_eq!(s.rewrite_calls, 0);
}

#[test]
fn missing_input_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut block = task_block("tiny", "tiny", "TextToCode");
    block = block.replace("qrels.tsv", "absent.tsv");
    let cfg = config(tmp.path(), "", &[block, bow_encoder("bow", ""), identity_rewriter("same")]);
    let err = run_matrix(&cfg, &opts(tmp.path())).unwrap_err();
    assert!(err.is_config(), "{err}");
    assert!(err.to_string().contains("tiny"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn rerun_is_a_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "",
        &[task_block("sig", "signal", "CodeToCode"), bow_encoder("bow", ""), canned_rewriter("canned", "")],
    );
    let o = opts(tmp.path());
    let cold = run_matrix(&cfg, &o).unwrap();
    let before = snapshot(&o.out_dir);
    let warm = run_matrix(&cfg, &o).unwrap();
    assert!(cold.embed_calls > 0);
    assert_eq!((warm.embed_calls, warm.rewrite_calls), (0, 0));
    assert_eq!(before, snapshot(&o.out_dir));
}

#[test]
fn sequential_and_parallel_outputs_match() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "",
        &[
            task_block("sig", "signal", "CodeToCode"),
            task_block("tiny", "tiny", "TextToCode"),
            bow_encoder("bow", ""),
            canned_rewriter("canned", ""),
        ],
    );
    let par = opts(tmp.path());
    let seq = MatrixOptions {
        out_dir: tmp.path().join("seq"),
        mode: codeshift::ExecMode::Sequential,
        ..par.clone()
    };
    run_matrix(&cfg, &par).unwrap();
    run_matrix(&cfg, &seq).unwrap();
    assert_eq!(snapshot(&par.out_dir), snapshot(&seq.out_dir));
}

#[test]
fn injected_fault_stays_in_its_cell() {
    let clean_dir = tempfile::tempdir().unwrap();
    let faulty_dir = tempfile::tempdir().unwrap();
    let clean = faults::isolation_run(clean_dir.path(), false);
    let faulty = faults::isolation_run(faulty_dir.path(), true);
    assert!(clean.failures.is_empty());
    assert_eq!(faulty.failures.len(), 1);
    assert!(faulty.failures[0].error.contains(faults::MARKER), "{:?}", faulty.failures);
    let keep = |s: std::collections::BTreeMap<String, Vec<u8>>| -> std::collections::BTreeMap<String, Vec<u8>> {
        s.into_iter()
            .filter(|(k, _)| k.starts_with("cells/") && !k.starts_with(faults::FAILED_CELL_DIR))
            .collect()
    };
    let a = keep(snapshot(&clean_dir.path().join("out")));
    let b = keep(snapshot(&faulty_dir.path().join("out")));
    assert_eq!(a.len(), 19);
    assert_eq!(a, b);
    let failures = std::fs::read_to_string(faulty_dir.path().join("out/failures.json")).unwrap();
    assert!(failures.contains("poison"), "{failures}");
}

#[test]
fn seed_override_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "strategies = [\"NL\"]\n",
        &[task_block("tiny", "tiny", "TextToCode"), bow_encoder("bow", ""), identity_rewriter("same")],
    );
    let o = MatrixOptions {
        seed: Some(99),
        ..opts(tmp.path())
    };
    let s = run_matrix(&cfg, &o).unwrap();
    assert_eq!(s.seed, 99);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}
