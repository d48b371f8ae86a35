//! Collection types, ingestion, and the append-only run store.

mod ingest;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::Gain;

pub use ingest::{ingest_collection, read_items, read_qrels, DanglingQrel, IngestReport, QrelRow, RawRecord};
pub use store::{RunStore, StoredRun};

/// A corpus item. When the source record carries a title, `text` already
/// holds `title + "\n" + body`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

/// query-id → doc-id → graded relevance.
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;

/// A validated retrieval task.
#[derive(Debug, Clone)]
pub struct Collection {
    pub documents: Vec<Document>,
    pub queries: Vec<Query>,
    /// Judgments restricted to known queries.
    pub qrels: Qrels,
    pub report: IngestReport,
}

impl Collection {
    /// Queries that can be scored: known, and with at least one positive grade.
    pub fn evaluable_queries(&self) -> Vec<&Query> {
        self.queries
            .iter()
            .filter(|q| {
                self.qrels
                    .get(&q.id)
                    .is_some_and(|m| m.values().any(|&g| g > 0))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Baseline,
    Rephrase,
    Pseudo,
    NL,
}

impl Strategy {
    /// The three rewriting strategies, in hierarchy order (least to most abstract).
    pub const REWRITES: [Strategy; 3] = [Strategy::Rephrase, Strategy::Pseudo, Strategy::NL];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Baseline => "Baseline",
            Strategy::Rephrase => "Rephrase",
            Strategy::Pseudo => "Pseudo",
            Strategy::NL => "NL",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Strategy::Baseline),
            "rephrase" => Ok(Strategy::Rephrase),
            "pseudo" | "pseudocode" => Ok(Strategy::Pseudo),
            "nl" => Ok(Strategy::NL),
            _ => Err(Error::config(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Queries and corpus both rewritten.
    QC,
    /// Corpus only.
    C,
    None,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::QC => "QC",
            Regime::C => "C",
            Regime::None => "None",
        }
    }

    pub fn rewrites_queries(self) -> bool {
        self == Regime::QC
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "QC" => Ok(Regime::QC),
            "C" => Ok(Regime::C),
            "NONE" => Ok(Regime::None),
            _ => Err(Error::config(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskFamily {
    CodeToCode,
    TextToCode,
    Hybrid,
}

impl TaskFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::CodeToCode => "CodeToCode",
            TaskFamily::TextToCode => "TextToCode",
            TaskFamily::Hybrid => "Hybrid",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "codetocode" | "c2c" => Ok(TaskFamily::CodeToCode),
            "texttocode" | "t2c" => Ok(TaskFamily::TextToCode),
            "hybrid" => Ok(TaskFamily::Hybrid),
            _ => Err(Error::config(format!("unknown task family {s:?}"))),
        }
    }
}

/// One transformation arm. Construction enforces Baseline ⇔ regime None.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct RewritePlan {
    strategy: Strategy,
    regime: Regime,
    rewriter_id: String,
    template_id: String,
    task_family: TaskFamily,
}

#[derive(Deserialize)]
struct RawPlan {
    strategy: Strategy,
    regime: Regime,
    rewriter_id: String,
    template_id: String,
    task_family: TaskFamily,
}

impl TryFrom<RawPlan> for RewritePlan {
    type Error = Error;

    fn try_from(raw: RawPlan) -> Result<Self> {
        if raw.strategy == Strategy::Baseline {
            if raw.regime != Regime::None {
                return Err(Error::contract("Baseline plan must use regime None"));
            }
            return Ok(RewritePlan::baseline(raw.task_family));
        }
        RewritePlan::new(
            raw.strategy,
            raw.regime,
            raw.rewriter_id,
            raw.template_id,
            raw.task_family,
        )
    }
}

impl RewritePlan {
    pub fn new(
        strategy: Strategy,
        regime: Regime,
        rewriter_id: impl Into<String>,
        template_id: impl Into<String>,
        task_family: TaskFamily,
    ) -> Result<Self> {
        if (strategy == Strategy::Baseline) != (regime == Regime::None) {
            return Err(Error::contract(format!(
                "strategy {strategy} is incompatible with regime {regime}: Baseline iff None"
            )));
        }
        Ok(Self {
            strategy,
            regime,
            rewriter_id: rewriter_id.into(),
            template_id: template_id.into(),
            task_family,
        })
    }

    pub fn baseline(task_family: TaskFamily) -> Self {
        Self {
            strategy: Strategy::Baseline,
            regime: Regime::None,
            rewriter_id: "none".into(),
            template_id: "none".into(),
            task_family,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn rewriter_id(&self) -> &str {
        &self.rewriter_id
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn task_family(&self) -> TaskFamily {
        self.task_family
    }

    pub fn is_baseline(&self) -> bool {
        self.strategy == Strategy::Baseline
    }

    /// "Baseline", or "{strategy}-{regime}".
    pub fn arm_label(&self) -> String {
        if self.is_baseline() {
            "Baseline".into()
        } else {
            format!("{}-{}", self.strategy, self.regime)
        }
    }
}

/// Retrieval outcome for one (encoder, task, arm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub encoder_id: String,
    pub task_id: String,
    pub plan: RewritePlan,
    pub ndcg_per_query: BTreeMap<String, f64>,
    pub mean_ndcg: f64,
    pub delta_ndcg: Option<f64>,
    pub k: usize,
    pub gain: Gain,
    /// Known queries left out of the mean because they have no positive grade.
    pub excluded_queries: usize,
}

impl RunRecord {
    /// Sets `delta_ndcg` against `baseline`, which must be the Baseline run
    /// for the same encoder and task.
    pub fn attach_baseline(&mut self, baseline: &RunRecord) -> Result<()> {
        if !baseline.plan.is_baseline()
            || baseline.encoder_id != self.encoder_id
            || baseline.task_id != self.task_id
        {
            return Err(Error::config(format!(
                "run {}/{}/{} cannot be compared with {}/{}/{}",
                self.encoder_id,
                self.task_id,
                self.plan.arm_label(),
                baseline.encoder_id,
                baseline.task_id,
                baseline.plan.arm_label()
            )));
        }
        self.delta_ndcg = Some(self.mean_ndcg - baseline.mean_ndcg);
        Ok(())
    }
}
