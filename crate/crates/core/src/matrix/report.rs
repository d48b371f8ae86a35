use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::diagnostics::{read_diagnostics, Diagnostic};
use super::runner::{Provenance, DIAGNOSTICS_FILE, MANIFEST_FILE, RUNS_FILE};
use crate::corpus::{Regime, RunRecord, RunStore, Strategy};
use crate::error::{Error, Result};
use crate::geometry::GeometryReport;
use crate::lexical::LexicalReport;
use crate::stats::{advise, Advice, CorrelationTable, JoinedRow};

/// Stores read back for reporting.
#[derive(Debug, Clone, Default)]
pub struct ReportInput {
    pub runs: Vec<RunRecord>,
    pub diagnostics: Vec<Diagnostic>,
    pub provenance: Provenance,
    pub skip_threshold: f64,
}

/// Report files by relative name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
}

pub fn load_reports_input(out_dir: &Path, skip_threshold: f64) -> Result<ReportInput> {
    let runs = RunStore::records(&out_dir.join(RUNS_FILE))?;
    let diagnostics = read_diagnostics(&out_dir.join(DIAGNOSTICS_FILE))?;
    let manifest = out_dir.join(MANIFEST_FILE);
    let provenance = if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        serde_json::from_str(&text)?
    } else {
        Provenance::default()
    };
    Ok(ReportInput {
        runs,
        diagnostics,
        provenance,
        skip_threshold,
    })
}

pub fn write_reports(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in &bundle.files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

type Key = (String, String, String, Strategy, Regime);

fn key_of(encoder: &str, task: &str, plan: &crate::corpus::RewritePlan) -> Key {
    (
        encoder.to_string(),
        task.to_string(),
        plan.rewriter_id().to_string(),
        plan.strategy(),
        plan.regime(),
    )
}

/// Display order of strategies in the lexical table.
const LEXICAL_ORDER: [Strategy; 3] = [Strategy::NL, Strategy::Pseudo, Strategy::Rephrase];

struct Index<'a> {
    encoders: Vec<String>,
    tasks: Vec<String>,
    rewriters: Vec<String>,
    runs: BTreeMap<Key, &'a RunRecord>,
    lexical: BTreeMap<Key, &'a LexicalReport>,
    geometry: BTreeMap<Key, &'a GeometryReport>,
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

impl<'a> Index<'a> {
    fn new(input: &'a ReportInput) -> Self {
        let mut ix = Index {
            encoders: Vec::new(),
            tasks: Vec::new(),
            rewriters: Vec::new(),
            runs: BTreeMap::new(),
            lexical: BTreeMap::new(),
            geometry: BTreeMap::new(),
        };
        for r in &input.runs {
            push_unique(&mut ix.encoders, &r.encoder_id);
            push_unique(&mut ix.tasks, &r.task_id);
            if !r.plan.is_baseline() {
                push_unique(&mut ix.rewriters, r.plan.rewriter_id());
            }
            ix.runs.insert(key_of(&r.encoder_id, &r.task_id, &r.plan), r);
        }
        for d in &input.diagnostics {
            match d {
                Diagnostic::Lexical(l) => {
                    ix.lexical.insert(key_of(&l.encoder_id, &l.task_id, &l.plan), l);
                }
                Diagnostic::Geometry(g) => {
                    ix.geometry.insert(key_of(&g.encoder_id, &g.task_id, &g.plan), g);
                }
            }
        }
        ix
    }

    fn baseline_key(enc: &str, task: &str) -> Key {
        (enc.into(), task.into(), "none".into(), Strategy::Baseline, Regime::None)
    }

    fn arm_keys(&self) -> Vec<Key> {
        self.runs.keys().filter(|k| k.3 != Strategy::Baseline).cloned().collect()
    }

    fn technique(&self, rewriter: &str, s: Strategy) -> String {
        if self.rewriters.len() > 1 {
            format!("{s} ({rewriter})")
        } else {
            s.to_string()
        }
    }

    fn delta_ndcg(&self, k: &Key) -> Option<f64> {
        let b = self.runs.get(&Self::baseline_key(&k.0, &k.1))?;
        Some(self.runs.get(k)?.mean_ndcg - b.mean_ndcg)
    }

    fn delta_h(&self, k: &Key) -> Option<f64> {
        let b = self.lexical.get(&Self::baseline_key(&k.0, &k.1))?;
        Some(self.lexical.get(k)?.stats.h_bits - b.stats.h_bits)
    }

    fn delta_s(&self, k: &Key) -> Option<f64> {
        let b = self.geometry.get(&Self::baseline_key(&k.0, &k.1))?;
        Some(self.geometry.get(k)?.s_bar - b.s_bar)
    }

    /// Corpus-side diagnostics do not depend on the regime; take the first
    /// regime present for each (encoder, task, rewriter, strategy).
    fn corpus_key(&self, enc: &str, task: &str, rw: &str, s: Strategy) -> Option<Key> {
        if s == Strategy::Baseline {
            return Some(Self::baseline_key(enc, task));
        }
        [Regime::QC, Regime::C]
            .into_iter()
            .map(|r| (enc.to_string(), task.to_string(), rw.to_string(), s, r))
            .find(|k| self.lexical.contains_key(k) || self.geometry.contains_key(k))
    }
}

/// Arms with ΔH, Δs̄ and ΔNDCG all available; the rest are gaps.
pub fn join_rows(input: &ReportInput) -> (Vec<JoinedRow>, Vec<String>) {
    let ix = Index::new(input);
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for k in ix.arm_keys() {
        match (ix.delta_h(&k), ix.delta_s(&k), ix.delta_ndcg(&k)) {
            (Some(dh), Some(ds), Some(dn)) => rows.push(JoinedRow {
                encoder_id: k.0.clone(),
                task_id: k.1.clone(),
                rewriter_id: k.2.clone(),
                strategy: k.3,
                regime: k.4,
                delta_h: dh,
                delta_s_bar: ds,
                delta_ndcg: dn,
            }),
            _ => gaps.push(format!("{}/{}/{}/{}-{}: missing Baseline or diagnostics", k.0, k.1, k.2, k.3, k.4)),
        }
    }
    (rows, gaps)
}

fn header(p: &Provenance) -> String {
    format!("config {} seed {}\n\n", p.config_hash, p.seed)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.prec$}"))
}

fn opt_signed(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:+.prec$}"))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn csv_string(rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn markdown(rows: &[Vec<String>], right_from: usize) -> String {
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        out.push_str("| ");
        out.push_str(&r.join(" | "));
        out.push_str(" |\n");
        if i == 0 {
            out.push('|');
            for c in 0..r.len() {
                out.push_str(if c >= right_from { "---:|" } else { "---|" });
            }
            out.push('\n');
        }
    }
    out
}

fn ratio(k: usize, n: usize) -> String {
    if n == 0 {
        "0/0 (n/a)".to_string()
    } else {
        format!("{k}/{n} ({:.1}%)", 100.0 * k as f64 / n as f64)
    }
}

fn ndcg_table(ix: &Index<'_>) -> Vec<Vec<String>> {
    let mut rows = vec![["Model", "Augmented", "Technique"]
        .iter()
        .map(|s| s.to_string())
        .chain(ix.tasks.iter().cloned())
        .collect::<Vec<_>>()];
    for enc in &ix.encoders {
        for regime in [Regime::QC, Regime::C] {
            for rw in &ix.rewriters {
                for s in Strategy::REWRITES {
                    let cells: Vec<Option<f64>> = ix
                        .tasks
                        .iter()
                        .map(|t| {
                            ix.runs
                                .get(&(enc.clone(), t.clone(), rw.clone(), s, regime))
                                .map(|r| r.mean_ndcg)
                        })
                        .collect();
                    if cells.iter().all(Option::is_none) {
                        continue;
                    }
                    let mut row = vec![enc.clone(), regime.to_string(), ix.technique(rw, s)];
                    row.extend(cells.into_iter().map(|c| opt(c, 4)));
                    rows.push(row);
                }
            }
        }
        let mut row = vec![enc.clone(), "X".into(), "Baseline".into()];
        row.extend(
            ix.tasks
                .iter()
                .map(|t| opt(ix.runs.get(&Index::baseline_key(enc, t)).map(|r| r.mean_ndcg), 4)),
        );
        rows.push(row);
    }
    rows
}

struct LexRow {
    encoder: String,
    strategy: String,
    vocab: u32,
    unique: f64,
    h: f64,
    delta_h: Option<f64>,
    ttr: f64,
    top20: f64,
    hapax_pct: f64,
}

fn lexical_rows(ix: &Index<'_>) -> Vec<LexRow> {
    let mut out = Vec::new();
    for enc in &ix.encoders {
        let mut groups: Vec<(String, Strategy)> = vec![("none".into(), Strategy::Baseline)];
        for rw in &ix.rewriters {
            for s in LEXICAL_ORDER {
                groups.push((rw.clone(), s));
            }
        }
        for (rw, s) in groups {
            let reports: Vec<(&LexicalReport, Option<f64>)> = ix
                .tasks
                .iter()
                .filter_map(|t| {
                    let k = ix.corpus_key(enc, t, &rw, s)?;
                    let l = *ix.lexical.get(&k)?;
                    let d = if s == Strategy::Baseline { None } else { ix.delta_h(&k) };
                    Some((l, d))
                })
                .collect();
            if reports.is_empty() {
                continue;
            }
            let avg = |f: &dyn Fn(&LexicalReport) -> f64| mean(&reports.iter().map(|(l, _)| f(l)).collect::<Vec<_>>()).unwrap();
            let deltas: Vec<f64> = reports.iter().filter_map(|(_, d)| *d).collect();
            out.push(LexRow {
                encoder: enc.clone(),
                strategy: if s == Strategy::Baseline {
                    "Baseline".into()
                } else {
                    ix.technique(&rw, s)
                },
                vocab: reports[0].0.vocab_size,
                unique: avg(&|l| l.stats.unique_types as f64),
                h: avg(&|l| l.stats.h_bits),
                delta_h: if deltas.len() == reports.len() { mean(&deltas) } else { None },
                ttr: avg(&|l| l.stats.ttr),
                top20: avg(&|l| l.stats.top20_mass),
                hapax_pct: avg(&|l| 100.0 * l.stats.hapax_type_rate),
            });
        }
    }
    out
}

const LEXICAL_COLUMNS: [&str; 9] = [
    "Encoder", "Strategy", "Vocab", "Unique", "H_bits", "Delta_H", "TTR", "Top20_mass", "Hapax_pct",
];

/// (rewriter, strategy, encoder, mean ΔH, mean Δs̄, tasks).
type ShiftRow = (String, Strategy, String, Option<f64>, Option<f64>, usize);

fn shift_rows(ix: &Index<'_>) -> Vec<ShiftRow> {
    let mut out = Vec::new();
    for rw in &ix.rewriters {
        for s in Strategy::REWRITES {
            for enc in &ix.encoders {
                let keys: Vec<Key> = ix.tasks.iter().filter_map(|t| ix.corpus_key(enc, t, rw, s)).collect();
                if keys.is_empty() {
                    continue;
                }
                let dh: Vec<f64> = keys.iter().filter_map(|k| ix.delta_h(k)).collect();
                let ds: Vec<f64> = keys.iter().filter_map(|k| ix.delta_s(k)).collect();
                out.push((
                    enc.clone(),
                    s,
                    rw.clone(),
                    if dh.len() == keys.len() { mean(&dh) } else { None },
                    if ds.len() == keys.len() { mean(&ds) } else { None },
                    keys.len(),
                ));
            }
        }
    }
    out
}

#[derive(Serialize)]
struct Counts {
    config_hash: String,
    seed: u64,
    qc_dominates_c: CountLine,
    c_degradations: CountLine,
    gaps: Vec<String>,
}

#[derive(Serialize)]
struct CountLine {
    k: usize,
    n: usize,
    text: String,
}

/// Builds every report from the stores. Deterministic: the same stores give
/// the same bytes.
pub fn build_reports(input: &ReportInput) -> Result<ReportBundle> {
    if input.runs.is_empty() {
        return Err(Error::domain("run store is empty"));
    }
    if input.diagnostics.is_empty() {
        return Err(Error::domain("diagnostics store is empty"));
    }
    let ix = Index::new(input);
    let prov = &input.provenance;
    let mut files = BTreeMap::new();

    // (a) per-task NDCG
    let rows = ndcg_table(&ix);
    files.insert("ndcg.csv".into(), csv_string(&rows)?);
    files.insert("ndcg.md".into(), header(prov) + &markdown(&rows, 3));

    // (b) lexical statistics
    let lex = lexical_rows(&ix);
    let mut csv_rows = vec![LEXICAL_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let mut md_rows = csv_rows.clone();
    for r in &lex {
        csv_rows.push(vec![
            r.encoder.clone(),
            r.strategy.clone(),
            r.vocab.to_string(),
            format!("{:.1}", r.unique),
            format!("{:.6}", r.h),
            csv_opt(r.delta_h),
            format!("{:.6}", r.ttr),
            format!("{:.6}", r.top20),
            format!("{:.6}", r.hapax_pct),
        ]);
        md_rows.push(vec![
            r.encoder.clone(),
            r.strategy.clone(),
            r.vocab.to_string(),
            format!("{:.0}", r.unique),
            format!("{:.2}", r.h),
            r.delta_h.map_or_else(|| "-".into(), |d| format!("{d:+.2}")),
            format!("{:.3}", r.ttr),
            format!("{:.1}%", 100.0 * r.top20),
            format!("{:.1}%", r.hapax_pct),
        ]);
    }
    files.insert("lexical.csv".into(), csv_string(&csv_rows)?);
    files.insert("lexical.md".into(), header(prov) + &markdown(&md_rows, 2));

    // (c) ΔH / Δs̄ per technique and encoder
    let shifts = shift_rows(&ix);
    let mut csv_rows = vec![["encoder", "strategy", "rewriter", "delta_h", "delta_s_bar", "tasks"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for (enc, s, rw, dh, ds, n) in &shifts {
        csv_rows.push(vec![enc.clone(), s.to_string(), rw.clone(), csv_opt(*dh), csv_opt(*ds), n.to_string()]);
    }
    files.insert("shift.csv".into(), csv_string(&csv_rows)?);
    let mut md_rows = vec![vec!["Technique".to_string()]];
    for enc in &ix.encoders {
        md_rows[0].push(format!("{enc} ΔH"));
        md_rows[0].push(format!("{enc} Δs̄"));
    }
    for rw in &ix.rewriters {
        for s in Strategy::REWRITES {
            let mut row = vec![ix.technique(rw, s)];
            let mut any = false;
            for enc in &ix.encoders {
                match shifts.iter().find(|x| &x.0 == enc && x.1 == s && &x.2 == rw) {
                    Some((_, _, _, dh, ds, _)) => {
                        any = true;
                        row.push(opt_signed(*dh, 2));
                        row.push(opt_signed(*ds, 3));
                    }
                    None => row.extend(["n/a".to_string(), "n/a".to_string()]),
                }
            }
            if any {
                md_rows.push(row);
            }
        }
    }
    files.insert("shift.md".into(), header(prov) + &markdown(&md_rows, 1));

    // (d) correlations
    let (joined, mut gaps) = join_rows(input);
    let regimes: Vec<Regime> = [Regime::C, Regime::QC]
        .into_iter()
        .filter(|r| ix.runs.keys().any(|k| k.4 == *r))
        .collect();
    let table = CorrelationTable::build(&joined, &regimes)?;
    files.insert("correlation.csv".into(), table.to_csv()?);
    files.insert("correlation.md".into(), header(prov) + &table.to_markdown());
    files.insert(
        "correlation.json".into(),
        serde_json::to_string_pretty(&json!({
            "config_hash": prov.config_hash,
            "seed": prov.seed,
            "table": table,
        }))? + "\n",
    );

    // (e) QC vs C dominance, (f) C degradations
    let mut dominance = (0, 0);
    let mut degradation = (0, 0);
    for k in ix.arm_keys().into_iter().filter(|k| k.4 == Regime::C) {
        let qc_key = (k.0.clone(), k.1.clone(), k.2.clone(), k.3, Regime::QC);
        if let Some(qc) = ix.runs.get(&qc_key) {
            dominance.1 += 1;
            if qc.mean_ndcg > ix.runs[&k].mean_ndcg {
                dominance.0 += 1;
            }
        }
        match ix.delta_ndcg(&k) {
            Some(d) => {
                degradation.1 += 1;
                if d < 0.0 {
                    degradation.0 += 1;
                }
            }
            None => gaps.push(format!("{}/{}/{}/{}-C: no Baseline for ΔNDCG", k.0, k.1, k.2, k.3)),
        }
    }
    gaps.sort();
    gaps.dedup();
    let counts = Counts {
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        qc_dominates_c: CountLine {
            k: dominance.0,
            n: dominance.1,
            text: ratio(dominance.0, dominance.1),
        },
        c_degradations: CountLine {
            k: degradation.0,
            n: degradation.1,
            text: ratio(degradation.0, degradation.1),
        },
        gaps,
    };
    let mut md = header(prov);
    writeln!(md, "QC dominates C: {}", counts.qc_dominates_c.text).unwrap();
    writeln!(md, "C arms with ΔNDCG < 0: {}", counts.c_degradations.text).unwrap();
    if !counts.gaps.is_empty() {
        md.push_str("\nGaps:\n");
        for g in &counts.gaps {
            writeln!(md, "- {g}").unwrap();
        }
    }
    files.insert("counts.md".into(), md);
    files.insert("counts.json".into(), serde_json::to_string_pretty(&counts)? + "\n");

    // (g) scatter points
    let mut rows = vec![["encoder", "task", "rewriter", "strategy", "regime", "arm", "delta_h", "delta_s_bar", "delta_ndcg"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for k in ix.arm_keys() {
        rows.push(vec![
            k.0.clone(),
            k.1.clone(),
            k.2.clone(),
            k.3.to_string(),
            k.4.to_string(),
            format!("{}-{}", k.3, k.4),
            csv_opt(ix.delta_h(&k)),
            csv_opt(ix.delta_s(&k)),
            csv_opt(ix.delta_ndcg(&k)),
        ]);
    }
    files.insert("scatter.csv".into(), csv_string(&rows)?);

    // advice per (task, rewriter), ΔH averaged over encoders
    let mut advice: Vec<Advice> = Vec::new();
    for task in &ix.tasks {
        for rw in &ix.rewriters {
            let mut per: BTreeMap<Strategy, Vec<f64>> = BTreeMap::new();
            for enc in &ix.encoders {
                for s in Strategy::REWRITES {
                    if let Some(d) = ix.corpus_key(enc, task, rw, s).and_then(|k| ix.delta_h(&k)) {
                        per.entry(s).or_default().push(d);
                    }
                }
            }
            let means: BTreeMap<Strategy, f64> = per.iter().map(|(s, v)| (*s, mean(v).unwrap())).collect();
            if means.is_empty() {
                continue;
            }
            advice.push(advise(task, &means, input.skip_threshold)?.with_rewriter(rw.clone()));
        }
    }
    files.insert(
        "advice.json".into(),
        serde_json::to_string_pretty(&json!({
            "config_hash": prov.config_hash,
            "seed": prov.seed,
            "advice": advice,
        }))? + "\n",
    );
    let used: BTreeSet<&String> = files.keys().collect();
    debug_assert_eq!(used.len(), files.len());
    Ok(ReportBundle { files })
}
