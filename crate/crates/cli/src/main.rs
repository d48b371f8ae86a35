use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};
use codeshift::corpus::{ingest_collection, Regime, Strategy};
use codeshift::matrix::{
    build_reports, join_rows, load_reports_input, run_matrix, write_reports, CellKey, ExperimentConfig, MatrixOptions,
    Session,
};
use codeshift::rewrite::{audit_sample, RewriteRecord};
use codeshift::stats::{advise, correlate, stars, CorrelationTable, DEFAULT_SKIP_THRESHOLD};
use codeshift::{Error, ExecMode};

#[derive(Parser, Debug)]
#[command(name = "codeshift", version, about = "Rewriting-augmented code retrieval workbench")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cache root; embeddings and rewrites go in subdirectories.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Run data-parallel kernels on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a collection and print the ingest report.
    Ingest(IngestArgs),
    /// Rewrite a task's corpus (or queries) with one strategy.
    Rewrite(RewriteArgs),
    /// Embed a task's corpus (or queries) into the cache.
    Embed(EmbedArgs),
    /// Print top-k rankings of one cell as JSON lines.
    Retrieve(CellArgs),
    /// Print the run record of one cell.
    Eval(CellArgs),
    /// Print the lexical and geometry reports of one cell.
    Diagnose(CellArgs),
    /// Correlation table from the stores, or two CSV columns.
    Correlate(CorrelateArgs),
    /// ΔH-based strategy recommendation.
    Advise(AdviseArgs),
    /// Run the full experiment matrix and write reports.
    RunMatrix(ThresholdArgs),
    /// Regenerate reports from the stores in the out dir.
    Report(ThresholdArgs),
    /// Sample rewrite records for human review.
    Audit(AuditArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Task from the config to ingest.
    #[arg(long, conflicts_with_all = ["corpus", "queries", "qrels"])]
    task: Option<String>,
    #[arg(long, requires_all = ["queries", "qrels"])]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RewriteArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    rewriter: String,
    #[arg(long)]
    strategy: Strategy,
    /// Rewrite the evaluable queries instead of the corpus.
    #[arg(long)]
    queries: bool,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    encoder: String,
    #[arg(long)]
    queries: bool,
}

#[derive(Args, Debug)]
struct CellArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    encoder: String,
    #[arg(long)]
    rewriter: Option<String>,
    #[arg(long, default_value = "Baseline")]
    strategy: Strategy,
    /// QC or C; ignored for Baseline.
    #[arg(long, default_value = "QC")]
    regime: Regime,
}

impl CellArgs {
    fn key(&self) -> CellKey {
        if self.strategy == Strategy::Baseline {
            return CellKey::baseline(&self.encoder, &self.task);
        }
        CellKey {
            encoder_id: self.encoder.clone(),
            task_id: self.task.clone(),
            rewriter_id: self.rewriter.clone(),
            strategy: self.strategy,
            regime: self.regime,
        }
    }
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    /// CSV file to read two columns from instead of the stores.
    #[arg(long, requires_all = ["x", "y"])]
    csv: Option<PathBuf>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
}

#[derive(Args, Debug)]
struct AdviseArgs {
    /// Strategy=ΔH pairs; without them, ΔH comes from the stores.
    #[arg(long = "delta-h", value_parser = parse_delta)]
    delta_h: Vec<(Strategy, f64)>,
    #[arg(long, default_value = "cli")]
    task: String,
    #[arg(long, default_value_t = DEFAULT_SKIP_THRESHOLD, allow_negative_numbers = true)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// ΔH threshold below which the advisor recommends skipping.
    #[arg(long, allow_negative_numbers = true)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long, default_value_t = 20)]
    sample: usize,
}

fn parse_delta(s: &str) -> Result<(Strategy, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected Strategy=value, got {s:?}"))?;
    let strategy: Strategy = k.trim().parse().map_err(|e: Error| e.to_string())?;
    let value: f64 = v.trim().parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((strategy, value))
}

struct Ctx {
    cli: Cli,
}

impl Ctx {
    fn mode(&self) -> ExecMode {
        if self.cli.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }

    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let path = self
            .cli
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --config".into()))?;
        Ok(ExperimentConfig::load(path)?)
    }

    fn options(&self) -> MatrixOptions {
        MatrixOptions {
            out_dir: self.cli.out_dir.clone(),
            cache_dir: self.cli.cache_dir.clone(),
            seed: self.cli.seed,
            mode: self.mode(),
        }
    }

    fn session(&self) -> anyhow::Result<Session> {
        Ok(Session::open(&self.config()?, &self.options())?)
    }

    fn threshold(&self, explicit: Option<f64>) -> f64 {
        explicit
            .or_else(|| self.config().ok().map(|c| c.skip_threshold))
            .unwrap_or(DEFAULT_SKIP_THRESHOLD)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(ctx: &Ctx) -> anyhow::Result<ExitCode> {
    match &ctx.cli.command {
        Command::Ingest(a) => {
            let collection = match (&a.task, &a.corpus, &a.queries, &a.qrels) {
                (Some(task), ..) => {
                    let cfg = ctx.config()?;
                    let t = cfg
                        .tasks
                        .iter()
                        .find(|t| &t.id == task)
                        .ok_or_else(|| Error::Config(format!("unknown task {task:?}")))?;
                    ingest_collection(&cfg.resolve(&t.corpus), &cfg.resolve(&t.queries), &cfg.resolve(&t.qrels))?
                }
                (None, Some(c), Some(q), Some(r)) => ingest_collection(c, q, r)?,
                _ => return Err(Error::Config("give --task or --corpus/--queries/--qrels".into()).into()),
            };
            print_json(&collection.report)?;
        }
        Command::Rewrite(a) => {
            let session = ctx.session()?;
            let records = session.rewrite(&a.task, &a.rewriter, a.strategy, a.queries)?;
            let side = if a.queries { "queries" } else { "corpus" };
            let path = ctx
                .cli
                .out_dir
                .join("rewrites")
                .join(format!("{}.{}.{}.{side}.jsonl", a.task, a.rewriter, a.strategy));
            write_jsonl(&path, &records)?;
            let failed = records.iter().filter(|r| r.failed).count();
            eprintln!("{} records ({failed} failed) -> {}", records.len(), path.display());
        }
        Command::Embed(a) => {
            let session = ctx.session()?;
            let m = session.embed(&a.encoder, &a.task, a.queries)?;
            let s_bar = codeshift::geometry::mean_offdiag_cosine(ctx.mode(), &m).ok();
            let (calls, _) = session.calls();
            print_json(&serde_json::json!({
                "encoder_id": a.encoder,
                "task_id": a.task,
                "rows": m.len(),
                "dim": m.dim(),
                "s_bar": s_bar,
                "endpoint_calls": calls,
            }))?;
        }
        Command::Retrieve(a) => {
            let out = ctx.session()?.cell(&a.key())?;
            let mut stdout = std::io::stdout().lock();
            for r in &out.rankings {
                serde_json::to_writer(&mut stdout, r)?;
                writeln!(stdout)?;
            }
        }
        Command::Eval(a) => print_json(&ctx.session()?.cell_with_deltas(&a.key())?.run)?,
        Command::Diagnose(a) => {
            let out = ctx.session()?.cell_with_deltas(&a.key())?;
            print_json(&serde_json::json!({ "lexical": out.lexical, "geometry": out.geometry }))?;
        }
        Command::Correlate(a) => match &a.csv {
            Some(path) => {
                let (xs, ys) = read_columns(path, a.x.as_deref().unwrap(), a.y.as_deref().unwrap())?;
                let r = correlate(&xs, &ys)?;
                print_json(&serde_json::json!({
                    "result": r,
                    "spearman_stars": stars(r.spearman_p),
                    "pearson_stars": stars(r.pearson_p),
                }))?;
            }
            None => {
                let input = load_reports_input(&ctx.cli.out_dir, DEFAULT_SKIP_THRESHOLD)?;
                let (rows, _) = join_rows(&input);
                let table = CorrelationTable::build(&rows, &[Regime::C, Regime::QC])?;
                print!("{}", table.to_markdown());
            }
        },
        Command::Advise(a) => {
            if a.delta_h.is_empty() {
                let input = load_reports_input(&ctx.cli.out_dir, a.threshold)?;
                let bundle = build_reports(&input)?;
                print!("{}", bundle.files["advice.json"]);
            } else {
                let map: BTreeMap<Strategy, f64> = a.delta_h.iter().copied().collect();
                print_json(&advise(&a.task, &map, a.threshold)?)?;
            }
        }
        Command::RunMatrix(a) => {
            let cfg = ctx.config()?;
            let summary = run_matrix(&cfg, &ctx.options())?;
            eprintln!(
                "{} cells, {} failed, {} rewrite fallbacks; endpoint calls: {} embed, {} rewrite",
                summary.cells,
                summary.failures.len(),
                summary.rewrite_fallbacks,
                summary.embed_calls,
                summary.rewrite_calls
            );
            if summary.succeeded > 0 {
                let input = load_reports_input(&ctx.cli.out_dir, a.threshold.unwrap_or(cfg.skip_threshold))?;
                write_reports(&build_reports(&input)?, &ctx.cli.out_dir.join("reports"))?;
            }
            for f in &summary.failures {
                eprintln!("failed: {}: {}", f.cell, f.error);
            }
            if !summary.failures.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report(a) => {
            let input = load_reports_input(&ctx.cli.out_dir, ctx.threshold(a.threshold))?;
            let dir = ctx.cli.out_dir.join("reports");
            write_reports(&build_reports(&input)?, &dir)?;
            eprintln!("reports -> {}", dir.display());
        }
        Command::Audit(a) => {
            let records = collect_rewrites(&ctx.cli.out_dir.join("cells"))?;
            let mut sources = HashMap::new();
            if ctx.cli.config.is_some() {
                let session = ctx.session()?;
                for t in &session.config().tasks {
                    let c = session.collection(&t.id)?;
                    sources.extend(c.documents.iter().map(|d| (d.id.clone(), d.text.clone())));
                    sources.extend(c.queries.iter().map(|q| (q.id.clone(), q.text.clone())));
                }
            }
            let seed = ctx.cli.seed.or_else(|| ctx.config().ok().map(|c| c.seed)).unwrap_or(0);
            let bundle = audit_sample(&records, &sources, a.sample.min(records.len()), seed)?;
            let path = ctx.cli.out_dir.join("audit.json");
            fs::write(&path, serde_json::to_string_pretty(&bundle)? + "\n")
                .with_context(|| path.display().to_string())?;
            eprintln!("{} of {} records -> {}", bundle.items.len(), bundle.population, path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    for i in items {
        serde_json::to_writer(&mut buf, i)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).with_context(|| path.display().to_string())
}

fn read_columns(path: &Path, x: &str, y: &str) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| path.display().to_string())?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("no column {name:?} in {}", path.display())))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let get = |i: usize| -> anyhow::Result<Option<f64>> {
            let f = row.get(i).map(str::trim).unwrap_or("");
            if f.is_empty() {
                return Ok(None);
            }
            Ok(Some(f.parse().with_context(|| format!("row {}: {f:?}", n + 2))?))
        };
        // rows with a blank cell are gaps
        if let (Some(a), Some(b)) = (get(xi)?, get(yi)?) {
            xs.push(a);
            ys.push(b);
        }
    }
    Ok((xs, ys))
}

fn collect_rewrites(cells: &Path) -> anyhow::Result<Vec<RewriteRecord>> {
    if !cells.exists() {
        bail!("{} does not exist; run the matrix first", cells.display());
    }
    let mut files = Vec::new();
    let mut stack = vec![cells.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "rewrites.jsonl") {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut out = Vec::new();
    for f in files {
        for line in fs::read_to_string(&f)?.lines().filter(|l| !l.trim().is_empty()) {
            out.push(serde_json::from_str(line).with_context(|| f.display().to_string())?);
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let ctx = Ctx { cli };
    match run(&ctx) {
        Ok(code) => code,
        Err(e) => {
            // library errors already carry their causes in Display
            match e.downcast_ref::<Error>() {
                Some(inner) => eprintln!("error: {inner}"),
                None => eprintln!("error: {e:#}"),
            }
            let config = e.downcast_ref::<Error>().is_some_and(Error::is_config);
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
