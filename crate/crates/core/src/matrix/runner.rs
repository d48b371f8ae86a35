use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::diagnostics::{write_diagnostics, Diagnostic};
use crate::corpus::{ingest_collection, Collection, Regime, RewritePlan, RunRecord, RunStore, Strategy, TaskFamily};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::{delta_s, embed_texts, EmbedConfig, EmbeddingCache, EmbeddingEndpoint, EmbeddingMatrix, GeometryReport};
use crate::lexical::{delta_h, LexicalReport, Tokenizer};
use crate::retrieval::{evaluate_arm, ArmInputs, ArmSettings, RankedList};
use crate::rewrite::{
    system_clock, Completion, RewriteCache, RewriteConfig, RewriteRecord, RewriteRequest, Rewriter, RewriterEndpoint,
    Side, TemplateCatalog,
};

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct MatrixOptions {
    pub out_dir: PathBuf,
    /// Replaces both configured cache directories with subdirectories of this.
    pub cache_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: ExecMode,
}

/// One (encoder, task, arm) cell. Baselines have no rewriter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub encoder_id: String,
    pub task_id: String,
    pub rewriter_id: Option<String>,
    pub strategy: Strategy,
    pub regime: Regime,
}

impl CellKey {
    pub fn baseline(encoder_id: &str, task_id: &str) -> Self {
        Self {
            encoder_id: encoder_id.into(),
            task_id: task_id.into(),
            rewriter_id: None,
            strategy: Strategy::Baseline,
            regime: Regime::None,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.strategy == Strategy::Baseline
    }

    fn arm(&self) -> String {
        if self.is_baseline() {
            "Baseline".into()
        } else {
            format!("{}-{}", self.strategy, self.regime)
        }
    }

    pub fn label(&self) -> String {
        match &self.rewriter_id {
            Some(r) => format!("{}/{}/{}/{}", self.encoder_id, self.task_id, r, self.arm()),
            None => format!("{}/{}/{}", self.encoder_id, self.task_id, self.arm()),
        }
    }

    /// Output directory of the cell, relative to the run's out dir.
    pub fn rel_dir(&self) -> PathBuf {
        let mut p = PathBuf::from("cells");
        p.push(path_component(&self.encoder_id));
        p.push(path_component(&self.task_id));
        if let Some(r) = &self.rewriter_id {
            p.push(path_component(r));
        }
        p.push(self.arm());
        p
    }
}

fn path_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub run: RunRecord,
    pub lexical: LexicalReport,
    pub geometry: GeometryReport,
    pub rewrites: Vec<RewriteRecord>,
    pub rankings: Vec<RankedList>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub config_hash: String,
    pub seed: u64,
    pub cells: usize,
    pub succeeded: usize,
    pub failures: Vec<CellFailure>,
    /// Rewrites that fell back to the original text.
    pub rewrite_fallbacks: usize,
    /// Deltas left empty because the Baseline cell failed.
    pub gaps: Vec<String>,
    #[serde(skip)]
    pub embed_calls: u64,
    #[serde(skip)]
    pub rewrite_calls: u64,
}

/// Config hash and seed, written next to the stores for the report step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

pub const RUNS_FILE: &str = "runs.jsonl";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FAILURES_FILE: &str = "failures.json";

struct CountingEmbedder {
    inner: Arc<dyn EmbeddingEndpoint>,
    calls: AtomicU64,
}

impl EmbeddingEndpoint for CountingEmbedder {
    fn encoder_id(&self) -> &str {
        self.inner.encoder_id()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.embed_batch(texts)
    }
}

struct CountingRewriter {
    inner: Arc<dyn RewriterEndpoint>,
    calls: AtomicU64,
}

impl RewriterEndpoint for CountingRewriter {
    fn rewriter_id(&self) -> &str {
        self.inner.rewriter_id()
    }

    fn complete(&self, request: &RewriteRequest<'_>) -> Result<Completion> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

struct Task {
    id: String,
    family: TaskFamily,
    collection: Collection,
}

struct Encoder {
    endpoint: CountingEmbedder,
    tokenizer: Arc<dyn Tokenizer>,
}

/// Everything resolved before the first cell runs.
struct Prepared {
    seed: u64,
    tasks: Vec<Task>,
    encoders: Vec<Encoder>,
    rewriters: Vec<CountingRewriter>,
    catalog: TemplateCatalog,
    embed_cache: EmbeddingCache,
    rewrite_cache: RewriteCache,
    clock: Box<dyn Fn() -> String + Sync>,
    settings: ArmSettings,
    rewrite_config: RewriteConfig,
}

fn preflight(cfg: &ExperimentConfig, opts: &MatrixOptions, seed: u64) -> Result<Prepared> {
    let mut tasks = Vec::new();
    for t in &cfg.tasks {
        let collection = ingest_collection(&cfg.resolve(&t.corpus), &cfg.resolve(&t.queries), &cfg.resolve(&t.qrels))
            .map_err(|e| e.context(format!("task {}", t.id)))?;
        if collection.evaluable_queries().is_empty() {
            return Err(Error::config(format!("task {} has no query with a positive judgment", t.id)));
        }
        tasks.push(Task {
            id: t.id.clone(),
            family: t.family,
            collection,
        });
    }
    let mut encoders = Vec::new();
    for e in &cfg.encoders {
        encoders.push(Encoder {
            endpoint: CountingEmbedder {
                inner: cfg.build_encoder(e)?,
                calls: AtomicU64::new(0),
            },
            tokenizer: e
                .tokenizer
                .build(&cfg.base_dir)
                .map_err(|err| err.context(format!("encoder {}", e.id)))?,
        });
    }
    let mut rewriters = Vec::new();
    for r in &cfg.rewriters {
        rewriters.push(CountingRewriter {
            inner: cfg.build_rewriter(r).map_err(|err| err.context(format!("rewriter {}", r.id)))?,
            calls: AtomicU64::new(0),
        });
    }
    let mut catalog = TemplateCatalog::builtin();
    if let Some(dir) = &cfg.template_dir {
        for t in TemplateCatalog::load_dir(&cfg.resolve(dir))?.templates() {
            catalog.insert(t.clone());
        }
    }
    for t in &tasks {
        for &s in &cfg.strategies {
            catalog.lookup(s, t.family, Side::Corpus)?;
            if cfg.regimes.contains(&Regime::QC) {
                catalog.lookup(s, t.family, Side::Query)?;
            }
        }
    }
    let (embed_dir, rewrite_dir) = match &opts.cache_dir {
        Some(d) => (Some(d.join("embeddings")), Some(d.join("rewrites"))),
        None => (
            cfg.cache.embeddings.as_ref().map(|p| cfg.resolve(p)),
            cfg.cache.rewrites.as_ref().map(|p| cfg.resolve(p)),
        ),
    };
    let embed_cache = match embed_dir {
        Some(d) => EmbeddingCache::open(d)?,
        None => EmbeddingCache::in_memory(),
    };
    let rewrite_cache = match rewrite_dir {
        Some(d) => RewriteCache::open(d)?,
        None => RewriteCache::in_memory(),
    };
    let clock: Box<dyn Fn() -> String + Sync> = match &cfg.timestamp {
        Some(ts) => {
            let ts = ts.clone();
            Box::new(move || ts.clone())
        }
        None => Box::new(system_clock),
    };
    let retry = cfg.limits.retry();
    Ok(Prepared {
        seed,
        tasks,
        encoders,
        rewriters,
        catalog,
        embed_cache,
        rewrite_cache,
        clock,
        settings: ArmSettings {
            k: cfg.k,
            gain: cfg.gain,
            embed: EmbedConfig {
                batch_size: cfg.limits.embed_batch_size,
                concurrency: cfg.limits.embed_concurrency,
                retry,
            },
            mode: opts.mode,
        },
        rewrite_config: RewriteConfig {
            concurrency: cfg.limits.rewrite_concurrency,
            retry,
        },
    })
}

impl Prepared {
    fn rewriter(&self, idx: usize) -> Rewriter<'_> {
        Rewriter {
            catalog: &self.catalog,
            endpoint: &self.rewriters[idx],
            cache: &self.rewrite_cache,
            config: self.rewrite_config,
            clock: &*self.clock,
        }
    }

    fn plan(&self, task: &Task, rewriter: usize, strategy: Strategy, regime: Regime) -> Result<RewritePlan> {
        let template = self.catalog.lookup(strategy, task.family, Side::Corpus)?;
        RewritePlan::new(
            strategy,
            regime,
            self.rewriters[rewriter].rewriter_id(),
            template.template_id.clone(),
            task.family,
        )
    }
}

#[derive(Clone)]
struct CellSpec {
    key: CellKey,
    encoder: usize,
    task: usize,
    rewriter: Option<usize>,
}

fn run_cell(p: &Prepared, spec: &CellSpec, entropy_batch: crate::lexical::BatchSize) -> Result<CellOutput> {
    let task = &p.tasks[spec.task];
    let encoder = &p.encoders[spec.encoder];
    let (plan, rewriter) = match spec.rewriter {
        None => (RewritePlan::baseline(task.family), None),
        Some(r) => (p.plan(task, r, spec.key.strategy, spec.key.regime)?, Some(p.rewriter(r))),
    };
    let inputs = ArmInputs {
        task_id: &task.id,
        collection: &task.collection,
        rewriter: rewriter.as_ref(),
        encoder: &encoder.endpoint,
        embed_cache: &p.embed_cache,
    };
    let eval = evaluate_arm(&inputs, &plan, &p.settings, None)?;
    let label = spec.key.label();
    let lexical = LexicalReport::compute(
        p.settings.mode,
        encoder.endpoint.encoder_id(),
        &task.id,
        &plan,
        &eval.corpus_texts,
        &*encoder.tokenizer,
        entropy_batch,
        p.seed,
    )
    .map_err(|e| e.context(&label))?;
    let geometry =
        GeometryReport::compute(p.settings.mode, &task.id, &plan, &eval.corpus_embeddings).map_err(|e| e.context(&label))?;
    Ok(CellOutput {
        run: eval.record,
        lexical,
        geometry,
        rewrites: eval.rewrite_records,
        rankings: eval.rankings,
    })
}

/// Rewrites every (task, rewriter, strategy) corpus, and the queries when QC
/// is requested, once up front so cells only read the cache.
fn warm_rewrites(cfg: &ExperimentConfig, p: &Prepared) {
    let mut jobs = Vec::new();
    for t in 0..p.tasks.len() {
        for r in 0..p.rewriters.len() {
            for &s in &cfg.strategies {
                jobs.push((t, r, s));
            }
        }
    }
    let qc = cfg.regimes.contains(&Regime::QC);
    exec::with_pool(cfg.limits.cells, || {
        exec::map(p.settings.mode, &jobs, |&(t, r, s)| {
            let task = &p.tasks[t];
            let rewriter = p.rewriter(r);
            let regime = if qc { Regime::QC } else { Regime::C };
            let Ok(plan) = p.plan(task, r, s, regime) else { return };
            if let Err(e) = rewriter.rewrite_corpus(&task.collection.documents, &plan) {
                log::debug!("warm-up rewrite of {} failed: {e}", task.id);
            }
            if qc {
                let queries: Vec<_> = task.collection.evaluable_queries().into_iter().cloned().collect();
                if let Err(e) = rewriter.rewrite_queries(&queries, &plan) {
                    log::debug!("warm-up query rewrite of {} failed: {e}", task.id);
                }
            }
        })
    });
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn clear_outputs(out: &Path) -> Result<()> {
    let cells = out.join("cells");
    if cells.exists() {
        fs::remove_dir_all(&cells).map_err(|e| Error::io(&cells, e))?;
    }
    for f in [RUNS_FILE, DIAGNOSTICS_FILE, SUMMARY_FILE, FAILURES_FILE, MANIFEST_FILE] {
        let p = out.join(f);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Runs every (encoder, task, rewriter, strategy, regime) cell plus one
/// Baseline per (encoder, task) and writes the stores under `opts.out_dir`.
///
/// Only pre-flight problems (config, ingestion, templates, caches) return
/// `Err`; a failing cell is recorded in the summary and the other cells are
/// unaffected. Outputs from a previous run in the same directory are
/// replaced, so a rerun with warm caches reproduces them byte for byte.
pub fn run_matrix(cfg: &ExperimentConfig, opts: &MatrixOptions) -> Result<MatrixSummary> {
    let session = Session::open(cfg, opts)?;
    let effective = &session.config;
    let p = &session.prepared;
    let provenance = session.provenance.clone();
    let seed = provenance.seed;

    let mut baselines = Vec::new();
    let mut arms = Vec::new();
    for enc in &effective.encoders {
        for task in &effective.tasks {
            baselines.push(session.spec(&CellKey::baseline(&enc.id, &task.id))?);
            for rw in &effective.rewriters {
                for &strategy in &effective.strategies {
                    for &regime in &effective.regimes {
                        arms.push(session.spec(&CellKey {
                            encoder_id: enc.id.clone(),
                            task_id: task.id.clone(),
                            rewriter_id: Some(rw.id.clone()),
                            strategy,
                            regime,
                        })?);
                    }
                }
            }
        }
    }

    warm_rewrites(effective, p);
    let run_all = |specs: &[CellSpec]| {
        exec::with_pool(effective.limits.cells, || {
            exec::map(opts.mode, specs, |s| run_cell(p, s, effective.entropy_batch))
        })
    };
    let baseline_results = run_all(&baselines);
    let arm_results = run_all(&arms);

    let baseline_by_pair: BTreeMap<(String, String), &CellOutput> = baselines
        .iter()
        .zip(&baseline_results)
        .filter_map(|(s, r)| {
            r.as_ref()
                .ok()
                .map(|o| ((s.key.encoder_id.clone(), s.key.task_id.clone()), o))
        })
        .collect();

    let mut gaps = Vec::new();
    let mut outcomes: Vec<(CellKey, std::result::Result<CellOutput, String>)> = Vec::new();
    for (s, r) in baselines.iter().zip(baseline_results.iter()) {
        outcomes.push((s.key.clone(), r.as_ref().cloned().map_err(|e| e.to_string())));
    }
    for (s, r) in arms.iter().zip(arm_results) {
        let r = r.and_then(|mut out| {
            match baseline_by_pair.get(&(s.key.encoder_id.clone(), s.key.task_id.clone())) {
                Some(b) => {
                    out.run.attach_baseline(&b.run)?;
                    out.lexical.delta_h_bits = Some(delta_h(&b.lexical, &out.lexical)?);
                    out.geometry.delta_s_bar = Some(delta_s(&b.geometry, &out.geometry)?);
                }
                None => gaps.push(format!("{}: Baseline failed, deltas left empty", s.key.label())),
            }
            Ok(out)
        });
        outcomes.push((s.key.clone(), r.map_err(|e| e.to_string())));
    }
    // canonical order: encoder, task, Baseline first, then rewriter/strategy/regime
    let order = |k: &CellKey| {
        let e = effective.encoders.iter().position(|x| x.id == k.encoder_id);
        let t = effective.tasks.iter().position(|x| x.id == k.task_id);
        (e, t, !k.is_baseline())
    };
    outcomes.sort_by_key(|(k, _)| order(k));

    let out = &opts.out_dir;
    clear_outputs(out)?;
    let store = RunStore::open(out.join(RUNS_FILE))?;
    let mut diagnostics = Vec::new();
    let mut failures = Vec::new();
    let mut fallbacks = 0;
    for (key, result) in &outcomes {
        let dir = out.join(key.rel_dir());
        match result {
            Ok(o) => {
                store.persist_run(&o.run)?;
                diagnostics.push(Diagnostic::Lexical(o.lexical.clone()));
                diagnostics.push(Diagnostic::Geometry(o.geometry.clone()));
                fallbacks += o.rewrites.iter().filter(|r| r.failed).count();
                write_file(&dir.join("run.json"), &pretty(&o.run)?)?;
                write_file(&dir.join("lexical.json"), &pretty(&o.lexical)?)?;
                write_file(&dir.join("geometry.json"), &pretty(&o.geometry)?)?;
                let mut buf = Vec::new();
                for r in &o.rankings {
                    serde_json::to_writer(&mut buf, r)?;
                    buf.push(b'\n');
                }
                write_file(&dir.join("rankings.jsonl"), &buf)?;
                if !key.is_baseline() {
                    let mut buf = Vec::new();
                    for r in &o.rewrites {
                        serde_json::to_writer(&mut buf, r)?;
                        buf.push(b'\n');
                    }
                    write_file(&dir.join("rewrites.jsonl"), &buf)?;
                }
            }
            Err(e) => {
                log::error!("cell {} failed: {e}", key.label());
                write_file(&dir.join("error.txt"), format!("{e}\n").as_bytes())?;
                failures.push(CellFailure {
                    cell: key.label(),
                    error: e.clone(),
                });
            }
        }
    }
    write_diagnostics(&out.join(DIAGNOSTICS_FILE), &diagnostics)?;
    write_file(&out.join(FAILURES_FILE), &pretty(&failures)?)?;
    write_file(&out.join(MANIFEST_FILE), &pretty(&provenance)?)?;

    let (embed_calls, rewrite_calls) = session.calls();
    let summary = MatrixSummary {
        config_hash: provenance.config_hash,
        seed,
        cells: outcomes.len(),
        succeeded: outcomes.len() - failures.len(),
        failures,
        rewrite_fallbacks: fallbacks,
        gaps,
        embed_calls,
        rewrite_calls,
    };
    write_file(&out.join(SUMMARY_FILE), &pretty(&summary)?)?;
    Ok(summary)
}

/// A validated config with endpoints, caches and collections loaded. Used
/// by [`run_matrix`] and for running single cells.
pub struct Session {
    config: ExperimentConfig,
    provenance: Provenance,
    prepared: Prepared,
}

impl Session {
    /// Pre-flight: every failure here is a configuration error.
    pub fn open(cfg: &ExperimentConfig, opts: &MatrixOptions) -> Result<Self> {
        let seed = opts.seed.unwrap_or(cfg.seed);
        let mut config = cfg.clone();
        config.seed = seed;
        config.validate()?;
        let provenance = Provenance {
            config_hash: config.hash(),
            seed,
        };
        let prepared = preflight(&config, opts, seed).map_err(|e| {
            if e.is_config() {
                e
            } else {
                Error::config(format!("pre-flight: {e}"))
            }
        })?;
        Ok(Self {
            config,
            provenance,
            prepared,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Endpoint calls so far: (embedding batches, rewrite completions).
    pub fn calls(&self) -> (u64, u64) {
        let p = &self.prepared;
        (
            p.encoders.iter().map(|e| e.endpoint.calls.load(Ordering::Relaxed)).sum(),
            p.rewriters.iter().map(|r| r.calls.load(Ordering::Relaxed)).sum(),
        )
    }

    pub fn collection(&self, task_id: &str) -> Result<&Collection> {
        Ok(&self.prepared.tasks[self.task_index(task_id)?].collection)
    }

    fn task_index(&self, id: &str) -> Result<usize> {
        self.config
            .tasks
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::config(format!("unknown task {id:?}")))
    }

    fn encoder_index(&self, id: &str) -> Result<usize> {
        self.config
            .encoders
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::config(format!("unknown encoder {id:?}")))
    }

    fn rewriter_index(&self, id: &str) -> Result<usize> {
        self.config
            .rewriters
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::config(format!("unknown rewriter {id:?}")))
    }

    fn spec(&self, key: &CellKey) -> Result<CellSpec> {
        let rewriter = match (&key.rewriter_id, key.is_baseline()) {
            (_, true) => None,
            (Some(r), false) => Some(self.rewriter_index(r)?),
            (None, false) => return Err(Error::config(format!("{} needs a rewriter", key.label()))),
        };
        if key.is_baseline() != (key.regime == Regime::None) {
            return Err(Error::config(format!("{}: Baseline goes with regime None only", key.label())));
        }
        Ok(CellSpec {
            key: key.clone(),
            encoder: self.encoder_index(&key.encoder_id)?,
            task: self.task_index(&key.task_id)?,
            rewriter,
        })
    }

    /// Runs one cell without deltas.
    pub fn cell(&self, key: &CellKey) -> Result<CellOutput> {
        run_cell(&self.prepared, &self.spec(key)?, self.config.entropy_batch)
    }

    /// Runs one cell and its Baseline, filling ΔNDCG, ΔH and Δs̄.
    pub fn cell_with_deltas(&self, key: &CellKey) -> Result<CellOutput> {
        let mut out = self.cell(key)?;
        if !key.is_baseline() {
            let b = self.cell(&CellKey::baseline(&key.encoder_id, &key.task_id))?;
            out.run.attach_baseline(&b.run)?;
            out.lexical.delta_h_bits = Some(delta_h(&b.lexical, &out.lexical)?);
            out.geometry.delta_s_bar = Some(delta_s(&b.geometry, &out.geometry)?);
        }
        Ok(out)
    }

    /// Rewrites a task's corpus, or its evaluable queries, with one strategy.
    pub fn rewrite(&self, task_id: &str, rewriter_id: &str, strategy: Strategy, queries: bool) -> Result<Vec<RewriteRecord>> {
        let p = &self.prepared;
        let (t, r) = (self.task_index(task_id)?, self.rewriter_index(rewriter_id)?);
        let task = &p.tasks[t];
        let rewriter = p.rewriter(r);
        if queries {
            let plan = p.plan(task, r, strategy, Regime::QC)?;
            let qs: Vec<_> = task.collection.evaluable_queries().into_iter().cloned().collect();
            Ok(rewriter.rewrite_queries(&qs, &plan)?.records)
        } else {
            let plan = p.plan(task, r, strategy, Regime::C)?;
            Ok(rewriter.rewrite_corpus(&task.collection.documents, &plan)?.records)
        }
    }

    /// Embeds a task's raw corpus (or evaluable queries) through the cache.
    pub fn embed(&self, encoder_id: &str, task_id: &str, queries: bool) -> Result<EmbeddingMatrix> {
        let p = &self.prepared;
        let task = &p.tasks[self.task_index(task_id)?];
        let encoder = &p.encoders[self.encoder_index(encoder_id)?];
        let (ids, texts): (Vec<String>, Vec<String>) = if queries {
            task.collection
                .evaluable_queries()
                .into_iter()
                .map(|q| (q.id.clone(), q.text.clone()))
                .unzip()
        } else {
            task.collection.documents.iter().map(|d| (d.id.clone(), d.text.clone())).unzip()
        };
        embed_texts(&ids, &texts, &encoder.endpoint, &p.embed_cache, &p.settings.embed)
    }
}
