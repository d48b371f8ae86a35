use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codeshift::corpus::{Regime, RewritePlan, RunRecord, Strategy, TaskFamily};
use codeshift::geometry::{l2_normalize, mean_offdiag_cosine, mean_offdiag_cosine_direct, EmbeddingMatrix, GeometryReport};
use codeshift::lexical::{batched_entropy, token_entropy, BatchSize, LexicalReport, TokenCounts, TokenId, WordTokenizer};
use codeshift::matrix::{build_reports, load_reports_input, run_matrix, Diagnostic, MatrixOptions, Provenance, ReportInput};
use codeshift::retrieval::{ndcg_at_k, retrieve_topk, retrieve_topk_bruteforce, Gain};
use codeshift::stats::{pearson, spearman};
use codeshift::ExecMode;
use crate::support::*;

/// Collects sub-check failures so every sub-check runs.
#[derive(Default)]
pub struct Checks {
    failed: Vec<String>,
    passed: usize,
}

impl Checks {
    fn ok(&mut self, cond: bool, msg: impl FnOnce() -> String) {
        if cond {
            self.passed += 1;
        } else if self.failed.len() < 20 {
            self.failed.push(msg());
        } else {
            self.failed.push(String::new());
        }
    }

    fn close(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        self.ok((got - want).abs() <= tol, || format!("{what}: got {got:.12}, want {want:.12} (tol {tol:e})"));
    }

    fn within(&mut self, started: Instant, limit: Duration) {
        let took = started.elapsed();
        self.ok(took < limit, || format!("runtime {took:.2?} exceeds {limit:?}"));
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn counts(pairs: &[(TokenId, u64)]) -> TokenCounts {
    TokenCounts::from_counts(pairs.iter().copied()).unwrap()
}

fn entropy_suite(c: &mut Checks) {
    let started = Instant::now();
    c.close("{a:4}", token_entropy(&counts(&[(0, 4)])).unwrap(), 0.0, 1e-12);
    c.close("{a:2,b:2}", token_entropy(&counts(&[(0, 2), (1, 2)])).unwrap(), 1.0, 1e-12);
    c.close("{a:1,b:1,c:2}", token_entropy(&counts(&[(0, 1), (1, 1), (2, 2)])).unwrap(), 1.5, 1e-12);
    for n in 1..=64u32 {
        let uniform: Vec<_> = (0..n).map(|t| (t, 7)).collect();
        c.close(&format!("uniform over {n}"), token_entropy(&counts(&uniform)).unwrap(), f64::from(n).log2(), 1e-12);
    }

    let mut r = rng(1);
    for i in 0..1000 {
        let types = r.random_range(1..40u32);
        let mut tokens: Vec<TokenId> = Vec::new();
        for t in 0..types {
            for _ in 0..r.random_range(1..20) {
                tokens.push(t * 7 + 3);
            }
        }
        let h = token_entropy(&TokenCounts::from_tokens(&tokens)).unwrap();
        tokens.shuffle(&mut r);
        let shuffled = token_entropy(&TokenCounts::from_tokens(&tokens)).unwrap();
        c.close(&format!("fixture {i} permutation"), shuffled, h, 1e-12);
        let scale = r.random_range(2..10u64);
        let base = TokenCounts::from_tokens(&tokens);
        let scaled = TokenCounts::from_counts(base.iter().map(|(t, n)| (t, n * scale))).unwrap();
        c.close(&format!("fixture {i} scaling x{scale}"), token_entropy(&scaled).unwrap(), h, 1e-12);
        let upper = f64::from(base.unique() as u32).log2();
        c.ok(h >= 0.0 && h <= upper + 1e-12, || format!("fixture {i}: H {h} outside [0, {upper}]"));
    }

    let tok = WordTokenizer::new(WordTokenizer::DEFAULT_VOCAB).unwrap();
    let words: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
    for i in 0..1000u64 {
        let mut fr = rng(10_000 + i);
        let n_texts = fr.random_range(2..=100usize);
        let equal = i % 2 == 0;
        let texts: Vec<String> = (0..n_texts)
            .map(|_| {
                let len = if equal { 5 } else { fr.random_range(1..12) };
                let skew = fr.random_range(1..=words.len());
                (0..len).map(|_| words[fr.random_range(0..skew)].as_str()).join(" ")
            })
            .collect();
        let pooled = batched_entropy(ExecMode::Sequential, &texts, &tok, BatchSize::Pooled, i).unwrap().mean;
        let batch = fr.random_range(1..=10usize);
        let b = batched_entropy(ExecMode::Parallel, &texts, &tok, BatchSize::Fixed(batch), i).unwrap();
        c.ok(b.token_weighted_mean <= pooled + 1e-12, || {
            format!("fixture {i}: token-weighted batch mean {} > pooled {pooled}", b.token_weighted_mean)
        });
        if equal && n_texts % batch == 0 {
            c.ok(b.mean <= pooled + 1e-12, || format!("fixture {i}: batch mean {} > pooled {pooled}", b.mean));
        }
    }
    c.within(started, Duration::from_secs(5));
}

fn random_matrix(r: &mut ChaCha8Rng, b: usize, d: usize) -> Vec<Vec<f64>> {
    (0..b).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

fn normalized(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
    let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
    l2_normalize(EmbeddingMatrix::from_rows("enc", ids, rows).unwrap()).unwrap()
}

/// Random orthogonal matrix by Gram-Schmidt on random vectors.
fn rotation(r: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    q
}

fn geometry_suite(c: &mut Checks) {
    let started = Instant::now();
    let hand = normalized(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]);
    c.close("three-vector case", mean_offdiag_cosine(ExecMode::Parallel, &hand).unwrap(), -1.0 / 3.0, 1e-12);

    let mut r = rng(2);
    for i in 0..100 {
        let b = r.random_range(2..=256usize);
        let d = r.random_range(1..=64usize);
        let rows = random_matrix(&mut r, b, d);
        let m = normalized(rows.clone());
        let fast = mean_offdiag_cosine(ExecMode::Parallel, &m).unwrap();
        let direct = mean_offdiag_cosine_direct(ExecMode::Sequential, &m).unwrap();
        c.close(&format!("matrix {i} ({b}x{d}) fast vs direct"), fast, direct, 1e-9);
        let lower = -1.0 / (b as f64 - 1.0);
        c.ok(fast >= lower - 1e-9 && fast <= 1.0 + 1e-9, || format!("matrix {i}: s̄ {fast} outside [{lower}, 1]"));

        let q = rotation(&mut r, d);
        let rotated: Vec<Vec<f64>> = (0..b)
            .map(|k| q.iter().map(|qr| qr.iter().zip(m.row(k)).map(|(a, x)| a * x).sum()).collect())
            .collect();
        c.close(&format!("matrix {i} rotation"), mean_offdiag_cosine(ExecMode::Parallel, &normalized(rotated)).unwrap(), fast, 1e-9);

        let mut perm = rows;
        perm.shuffle(&mut r);
        c.close(&format!("matrix {i} permutation"), mean_offdiag_cosine(ExecMode::Parallel, &normalized(perm)).unwrap(), fast, 1e-9);
    }
    c.within(started, Duration::from_secs(10));
}

fn judgments(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
    pairs.iter().map(|&(d, g)| (d.to_string(), g)).collect()
}

fn ndcg_suite(c: &mut Checks) {
    let started = Instant::now();
    let one = judgments(&[("d1", 1)]);
    c.close("ideal ranking", ndcg_at_k(&["d1", "d2"], &one, 10, Gain::Linear).unwrap(), 1.0, 1e-5);
    c.close("[d2, d1]", ndcg_at_k(&["d2", "d1"], &one, 10, Gain::Linear).unwrap(), 0.63093, 1e-5);
    let graded = judgments(&[("d1", 2), ("d2", 1)]);
    let got = ndcg_at_k(&["d2", "d1", "d3"], &graded, 10, Gain::Linear).unwrap();
    c.close("[d2, d1, d3] literal", got, 0.87253, 1e-5);
    let l3 = 3f64.log2();
    c.close("[d2, d1, d3] closed form", got, (1.0 + 2.0 / l3) / (2.0 + 1.0 / l3), 1e-12);

    let mut patterns = 0;
    for n in 1..=4usize {
        let docs: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        for grades in (0..n).map(|_| 0..=2u32).multi_cartesian_product() {
            if grades.iter().all(|&g| g == 0) {
                continue;
            }
            patterns += 1;
            let qrels: BTreeMap<String, u32> = docs.iter().cloned().zip(grades.iter().copied()).collect();
            for k in [1, 2, 3, 4, 10] {
                let reach = k.min(n);
                let mut ideal = grades.clone();
                ideal.sort_unstable_by(|a, b| b.cmp(a));
                for order in (0..n).permutations(n) {
                    let ranking: Vec<&str> = order.iter().map(|&i| docs[i].as_str()).collect();
                    let v = ndcg_at_k(&ranking, &qrels, k, Gain::Linear).unwrap();
                    c.ok((0.0..=1.0 + 1e-12).contains(&v), || format!("{grades:?} {order:?} k={k}: {v} outside [0,1]"));
                    let prefix: Vec<u32> = order.iter().take(reach).map(|&i| grades[i]).collect();
                    let is_ideal = prefix == ideal[..reach];
                    c.ok(is_ideal == ((v - 1.0).abs() < 1e-12), || {
                        format!("{grades:?} {order:?} k={k}: ndcg {v}, ideal prefix {is_ideal}")
                    });
                    for a in 0..n {
                        for b in a + 1..n {
                            if grades[order[a]] > grades[order[b]] {
                                let mut swapped = order.clone();
                                swapped.swap(a, b);
                                let sr: Vec<&str> = swapped.iter().map(|&i| docs[i].as_str()).collect();
                                let w = ndcg_at_k(&sr, &qrels, k, Gain::Linear).unwrap();
                                c.ok(w <= v + 1e-12, || format!("{grades:?} {order:?} k={k}: swap {a},{b} raised {v} to {w}"));
                            }
                        }
                    }
                }
            }
        }
    }
    c.ok(patterns == 2 + 8 + 26 + 80, || format!("enumerated {patterns} qrels patterns"));
    c.within(started, Duration::from_secs(10));
}

fn retrieval_suite(c: &mut Checks) {
    let started = Instant::now();
    for f in 0..50u64 {
        let mut r = rng(100 + f);
        let d = 4;
        let grid = |r: &mut ChaCha8Rng| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..d).map(|_| f64::from(r.random_range(-1..=1i32))).collect();
                if v.iter().any(|&x| x != 0.0) {
                    return v;
                }
            }
        };
        let mut doc_ids: Vec<String> = (0..200).map(|i| format!("doc-{i:03}")).collect();
        doc_ids.shuffle(&mut r);
        let mut rows: Vec<Vec<f64>> = (0..200).map(|_| grid(&mut r)).collect();
        for i in 0..20 {
            rows[199 - i] = rows[i].clone();
        }
        let corpus = l2_normalize(EmbeddingMatrix::from_rows("enc", doc_ids, rows).unwrap()).unwrap();
        let q_rows: Vec<Vec<f64>> = (0..20).map(|_| grid(&mut r)).collect();
        let q_ids = (0..20).map(|i| format!("q{i}")).collect();
        let queries = l2_normalize(EmbeddingMatrix::from_rows("enc", q_ids, q_rows).unwrap()).unwrap();
        for k in [1, 10, 57, 200] {
            let oracle = retrieve_topk_bruteforce(ExecMode::Sequential, &queries, &corpus, k).unwrap();
            for mode in [ExecMode::Sequential, ExecMode::Parallel] {
                let got = retrieve_topk(mode, &queries, &corpus, k).unwrap();
                c.ok(got == oracle, || format!("fixture {f} k={k} {mode:?}: top-k differs from full sort"));
            }
        }
    }
    c.within(started, Duration::from_secs(10));
}

/// Two-sided exact p over all n! orderings, written independently of the
/// crate's enumerator.
fn exhaustive_spearman_p(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    fn centered_dot(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let observed = centered_dot(&rx, &ry).abs();
    let mut hits = 0u64;
    let mut total = 0u64;
    for perm in ry.iter().copied().permutations(ry.len()) {
        total += 1;
        if centered_dot(&rx, &perm).abs() >= observed - 1e-12 * observed.max(1.0) {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn stats_suite(c: &mut Checks) {
    let started = Instant::now();
    c.close("spearman +1", spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap().coefficient, 1.0, 1e-10);
    c.close("spearman -1", spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().coefficient, -1.0, 1e-10);
    c.close("spearman 0.8", spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().coefficient, 0.8, 1e-10);
    let x = [0.5, 1.0, 4.0, -2.0, 3.0];
    let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    c.close("pearson affine", pearson(&x, &affine).unwrap().coefficient, 1.0, 1e-10);
    c.close("pearson negated", pearson(&x, &neg).unwrap().coefficient, -1.0, 1e-10);
    c.close("pearson 0.9608", pearson(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap().coefficient, 4.0 / (2.0f64 * 78.0 / 9.0).sqrt(), 1e-10);

    let mut r = rng(3);
    for n in 4..=8usize {
        for trial in 0..4 {
            let ties = trial % 2 == 1;
            let draw = |r: &mut ChaCha8Rng| -> Vec<f64> {
                loop {
                    let v: Vec<f64> = (0..n)
                        .map(|_| if ties { f64::from(r.random_range(0..3u8)) } else { r.random_range(-1.0..1.0) })
                        .collect();
                    if v.iter().any(|&a| a != v[0]) {
                        return v;
                    }
                }
            };
            let (x, y) = (draw(&mut r), draw(&mut r));
            let got = spearman(&x, &y).unwrap().p_value;
            let want = exhaustive_spearman_p(&x, &y);
            c.ok(got == want, || format!("n={n} trial {trial}: exact p {got} vs enumeration {want}"));
        }
    }

    for i in 0..500 {
        let n = r.random_range(3..30usize);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let base = spearman(&x, &y).unwrap();
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let cube: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
        let t = spearman(&ex, &cube).unwrap();
        c.close(&format!("fixture {i} monotone rho"), t.coefficient, base.coefficient, 1e-12);
        c.close(&format!("fixture {i} monotone p"), t.p_value, base.p_value, 1e-12);
    }
    c.within(started, Duration::from_secs(30));
}

fn matrix_opts(dir: &Path) -> MatrixOptions {
    MatrixOptions {
        out_dir: dir.join("out"),
        cache_dir: Some(dir.join("cache")),
        ..Default::default()
    }
}

fn noop_suite(c: &mut Checks) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "",
        &[
            task_block("tiny", "tiny", "TextToCode"),
            task_block("sig", "signal", "CodeToCode"),
            bow_encoder("bow", ""),
            identity_rewriter("same"),
        ],
    );
    let summary = run_matrix(&cfg, &matrix_opts(tmp.path())).unwrap();
    c.ok(summary.failures.is_empty(), || format!("cell failures: {:?}", summary.failures));
    c.ok(summary.cells == 2 * (1 + 3 * 2), || format!("{} cells", summary.cells));
    let input = load_reports_input(&tmp.path().join("out"), 0.0).unwrap();
    let h = |r: &LexicalReport| r.stats.h_bits;
    for arm in input.runs.iter().filter(|r| !r.plan.is_baseline()) {
        let label = format!("{}/{}", arm.task_id, arm.plan.arm_label());
        let base = input
            .runs
            .iter()
            .find(|b| b.plan.is_baseline() && b.task_id == arm.task_id && b.encoder_id == arm.encoder_id)
            .unwrap();
        let mut as_base = arm.clone();
        as_base.plan = base.plan.clone();
        as_base.delta_ndcg = base.delta_ndcg;
        c.ok(&as_base == base, || format!("{label}: run record differs from Baseline"));
        c.ok(arm.delta_ndcg == Some(0.0), || format!("{label}: ΔNDCG {:?}", arm.delta_ndcg));
    }
    let mut lex = BTreeMap::new();
    let mut geo = BTreeMap::new();
    for d in &input.diagnostics {
        match d {
            Diagnostic::Lexical(l) => {
                lex.insert((l.task_id.clone(), l.arm.clone()), l.clone());
            }
            Diagnostic::Geometry(g) => {
                geo.insert((g.task_id.clone(), g.arm.clone()), g.clone());
            }
        }
    }
    c.ok(lex.len() == summary.cells && geo.len() == summary.cells, || "missing diagnostics".into());
    for ((task, arm), l) in &lex {
        let base = &lex[&(task.clone(), "Baseline".to_string())];
        c.close(&format!("{task}/{arm} ΔH"), h(l) - h(base), 0.0, 1e-12);
        let g = &geo[&(task.clone(), arm.clone())];
        let gb = &geo[&(task.clone(), "Baseline".to_string())];
        c.close(&format!("{task}/{arm} Δs̄"), g.s_bar - gb.s_bar, 0.0, 1e-12);
    }
}

fn signal_suite(c: &mut Checks) {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "strategies = [\"NL\"]\n",
        &[task_block("sig", "signal", "CodeToCode"), bow_encoder("bow", ""), canned_rewriter("canned", "")],
    );
    let summary = run_matrix(&cfg, &matrix_opts(tmp.path())).unwrap();
    c.ok(summary.failures.is_empty(), || format!("cell failures: {:?}", summary.failures));
    let input = load_reports_input(&tmp.path().join("out"), 0.0).unwrap();
    let delta = |regime: Regime| {
        input
            .runs
            .iter()
            .find(|r| r.plan.strategy() == Strategy::NL && r.plan.regime() == regime)
            .and_then(|r| r.delta_ndcg)
    };
    let (qc, cc) = (delta(Regime::QC), delta(Regime::C));
    c.ok(qc.is_some_and(|d| d > 0.0), || format!("QC ΔNDCG {qc:?} is not positive"));
    c.ok(cc.is_some_and(|d| d <= 0.0), || format!("C ΔNDCG {cc:?} is positive"));
    c.within(started, Duration::from_secs(30));
}

/// Store where ΔNDCG is an exact monotone function of ΔH: increasing under
/// QC, decreasing under C. `encoders` sets n per regime.
fn synthetic_store(encoders: usize) -> ReportInput {
    let family = TaskFamily::TextToCode;
    let tok = WordTokenizer::new(64).unwrap();
    let texts = vec!["placeholder text".to_string()];
    let mut runs = Vec::new();
    let mut diagnostics = Vec::new();
    let mut push = |enc: &str, plan: RewritePlan, h: f64, s: f64, ndcg: f64| {
        let mut lex = LexicalReport::compute(ExecMode::Sequential, enc, "task", &plan, &texts, &tok, BatchSize::Pooled, 0).unwrap();
        lex.stats.h_bits = h;
        diagnostics.push(Diagnostic::Lexical(lex));
        diagnostics.push(Diagnostic::Geometry(GeometryReport {
            encoder_id: enc.to_string(),
            task_id: "task".into(),
            arm: plan.arm_label(),
            plan: plan.clone(),
            s_bar: s,
            delta_s_bar: None,
            batch_size_used: 100,
        }));
        runs.push(RunRecord {
            encoder_id: enc.to_string(),
            task_id: "task".into(),
            plan,
            ndcg_per_query: BTreeMap::new(),
            mean_ndcg: ndcg,
            delta_ndcg: None,
            k: 10,
            gain: Gain::Linear,
            excluded_queries: 0,
        });
    };
    for e in 0..encoders {
        let enc = format!("enc{e:02}");
        let dh = 0.1 * (e as f64 + 1.0);
        push(&enc, RewritePlan::baseline(family), 5.0, 0.4, 0.5);
        let qc = RewritePlan::new(Strategy::NL, Regime::QC, "rw", "tpl", family).unwrap();
        push(&enc, qc, 5.0 + dh, 0.4 - dh / 10.0, 0.5 + dh / 10.0);
        let cc = RewritePlan::new(Strategy::NL, Regime::C, "rw", "tpl", family).unwrap();
        push(&enc, cc, 5.0 + dh, 0.4 + dh / 10.0, 0.5 - dh * dh / 10.0);
    }
    ReportInput {
        runs,
        diagnostics,
        provenance: Provenance { config_hash: "0123456789abcdef".into(), seed: 7 },
        skip_threshold: 0.0,
    }
}

fn report_suite(c: &mut Checks) {
    let bundle = build_reports(&synthetic_store(12)).unwrap();
    let md = &bundle.files["correlation.md"];
    c.ok(md.starts_with("config 0123456789abcdef seed 7"), || "correlation.md lacks the provenance line".into());
    c.ok(md.contains("| Pair | C Spearman ρ | C Pearson r | QC Spearman ρ | QC Pearson r |"), || {
        format!("correlation.md header:\n{md}")
    });
    let line = |label: &str| md.lines().find(|l| l.starts_with(&format!("| {label} |"))).unwrap_or("").to_string();
    let dh_ndcg = line("ΔH vs ΔNDCG@10");
    c.ok(dh_ndcg.starts_with("| ΔH vs ΔNDCG@10 | -1.000*** |") && dh_ndcg.contains("| +1.000*** | +1.000*** |"), || {
        format!("ΔH vs ΔNDCG@10 row: {dh_ndcg}")
    });
    let ds_ndcg = line("Δs̄ vs ΔNDCG@10");
    c.ok(ds_ndcg.starts_with("| Δs̄ vs ΔNDCG@10 | -1.000*** |") && ds_ndcg.contains("| -1.000*** | -1.000*** |"), || {
        format!("Δs̄ vs ΔNDCG@10 row: {ds_ndcg}")
    });
    c.ok(md.contains("*p<0.05, **p<0.01, ***p<0.001"), || "star legend missing".into());
    c.ok(md.contains("| n | 12 (t_approx) | | 12 (t_approx) | |"), || format!("n row missing:\n{md}"));

    let small = build_reports(&synthetic_store(5)).unwrap();
    let small_md = &small.files["correlation.md"];
    c.ok(small_md.contains("| ΔH vs ΔNDCG@10 | -1.000* | -0.9"), || format!("n=5 permutation stars:\n{small_md}"));
    c.ok(small_md.contains("| n | 5 (permutation) |"), || format!("n=5 method:\n{small_md}"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "strategies = [\"NL\"]\n",
        &[task_block("tiny", "tiny", "TextToCode"), bow_encoder("bow", ""), identity_rewriter("same")],
    );
    run_matrix(&cfg, &matrix_opts(tmp.path())).unwrap();
    let reports = build_reports(&load_reports_input(&tmp.path().join("out"), 0.0).unwrap()).unwrap();
    let csv = &reports.files["lexical.csv"];
    let mut lines = csv.lines();
    c.ok(lines.next() == Some("Encoder,Strategy,Vocab,Unique,H_bits,Delta_H,TTR,Top20_mass,Hapax_pct"), || {
        format!("lexical.csv header:\n{csv}")
    });
    c.ok(lines.next() == Some("bow,Baseline,2147483648,3.0,1.459148,,0.500000,0.500000,33.333333"), || {
        format!("tiny Baseline row:\n{csv}")
    });
    c.ok(lines.next() == Some("bow,NL,2147483648,3.0,1.459148,0.000000,0.500000,0.500000,33.333333"), || {
        format!("tiny NL row:\n{csv}")
    });
    let lmd = &reports.files["lexical.md"];
    c.ok(lmd.contains("| Encoder | Strategy | Vocab | Unique | H_bits | Delta_H | TTR | Top20_mass | Hapax_pct |"), || {
        format!("lexical.md header:\n{lmd}")
    });
}

fn idempotence_suite(c: &mut Checks) {
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
    let opts = matrix_opts(tmp.path());
    let first = run_matrix(&cfg, &opts).unwrap();
    let snap1 = snapshot(&opts.out_dir);
    let second = run_matrix(&cfg, &opts).unwrap();
    let snap2 = snapshot(&opts.out_dir);
    c.ok(first.embed_calls > 0 && first.rewrite_calls > 0, || "cold run made no endpoint calls".into());
    c.ok(second.embed_calls == 0 && second.rewrite_calls == 0, || {
        format!("warm rerun made {} embed and {} rewrite calls", second.embed_calls, second.rewrite_calls)
    });
    c.ok(snap1 == snap2, || {
        let diff: Vec<_> = snap1.keys().chain(snap2.keys()).filter(|k| snap1.get(*k) != snap2.get(*k)).collect();
        format!("rerun changed {diff:?}")
    });
    let seq = MatrixOptions { out_dir: tmp.path().join("seq"), mode: ExecMode::Sequential, ..opts.clone() };
    run_matrix(&cfg, &seq).unwrap();
    c.ok(snapshot(&seq.out_dir) == snap1, || "sequential run differs from parallel run".into());

    let clean_dir = tempfile::tempdir().unwrap();
    let faulty_dir = tempfile::tempdir().unwrap();
    let clean = isolation_run(clean_dir.path(), false);
    let faulty = isolation_run(faulty_dir.path(), true);
    c.ok(clean.failures.is_empty(), || format!("clean run failures: {:?}", clean.failures));
    c.ok(faulty.failures.len() == 1, || format!("faulty run failures: {:?}", faulty.failures));
    let a = snapshot(&clean_dir.path().join("out"));
    let b = snapshot(&faulty_dir.path().join("out"));
    let cells = |s: &BTreeMap<String, Vec<u8>>| -> BTreeMap<String, Vec<u8>> {
        s.iter()
            .filter(|(k, _)| k.starts_with("cells/") && !k.starts_with(FAILED_CELL_DIR))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    };
    let (ca, cb) = (cells(&a), cells(&b));
    c.ok(ca.len() == 4 + 3 * 5, || format!("only {} cell files compared", ca.len()));
    c.ok(ca == cb, || {
        let diff: Vec<_> = ca.keys().chain(cb.keys()).filter(|k| ca.get(*k) != cb.get(*k)).collect();
        format!("fault leaked into {diff:?}")
    });
    c.ok(b.contains_key(&format!("{FAILED_CELL_DIR}error.txt")), || "failed cell has no error.txt".into());
}

pub type Criterion = (&'static str, fn(&mut Checks));

pub const CRITERIA: [Criterion; 9] = [
    ("entropy suite", entropy_suite),
    ("geometry suite", geometry_suite),
    ("ndcg suite", ndcg_suite),
    ("retrieval oracle", retrieval_suite),
    ("statistics suite", stats_suite),
    ("pipeline no-op equivalence", noop_suite),
    ("synthetic end-to-end signal", signal_suite),
    ("report formats", report_suite),
    ("idempotence and cell isolation", idempotence_suite),
];

/// Runs one criterion and prints its PASS/FAIL line. Returns whether it
/// passed.
pub fn run(name: &str, criterion: fn(&mut Checks)) -> bool {
    let started = Instant::now();
    let mut checks = Checks::default();
    criterion(&mut checks);
    let took = started.elapsed();
    let total = checks.failed.len() + checks.passed;
    if checks.failed.is_empty() {
        println!("PASS {name} ({total} checks, {took:.2?})");
        return true;
    }
    println!("FAIL {name} ({} of {total} checks failed, {took:.2?})", checks.failed.len());
    for m in checks.failed.iter().filter(|m| !m.is_empty()) {
        println!("    {m}");
    }
    false
}

/// Runs every criterion; returns the number that failed.
pub fn run_all() -> usize {
    let failed = CRITERIA.iter().filter(|(name, c)| !run(name, *c)).count();
    println!("acceptance: {} passed, {failed} failed", CRITERIA.len() - failed);
    failed
}
