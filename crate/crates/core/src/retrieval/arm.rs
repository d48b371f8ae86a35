use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ndcg::{ndcg_at_k, Gain};
use super::topk::{retrieve_topk, RankedList};
use crate::corpus::{Collection, Document, Query, RewritePlan, RunRecord};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::geometry::{embed_texts, EmbedConfig, EmbeddingCache, EmbeddingEndpoint, EmbeddingMatrix};
use crate::rewrite::{RewriteRecord, Rewriter};

/// Evaluation knobs shared by every arm of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmSettings {
    pub k: usize,
    pub gain: Gain,
    pub embed: EmbedConfig,
    #[serde(skip)]
    pub mode: ExecMode,
}

impl Default for ArmSettings {
    fn default() -> Self {
        Self {
            k: 10,
            gain: Gain::Linear,
            embed: EmbedConfig::default(),
            mode: ExecMode::Parallel,
        }
    }
}

/// Everything an arm reads.
pub struct ArmInputs<'a> {
    pub task_id: &'a str,
    pub collection: &'a Collection,
    /// Required for non-Baseline plans.
    pub rewriter: Option<&'a Rewriter<'a>>,
    pub encoder: &'a dyn EmbeddingEndpoint,
    pub embed_cache: &'a EmbeddingCache,
}

#[derive(Debug, Clone)]
pub struct ArmEvaluation {
    pub record: RunRecord,
    pub rankings: Vec<RankedList>,
    /// Corpus texts as embedded (rewritten when the plan rewrites the corpus).
    pub corpus_texts: Vec<String>,
    pub corpus_embeddings: EmbeddingMatrix,
    /// Corpus records followed by query records.
    pub rewrite_records: Vec<RewriteRecord>,
}

/// rewrite (per regime) → embed → retrieve → score.
///
/// Only evaluable queries (known, with a positive grade) are rewritten,
/// embedded and scored. `baseline`, when given, fills `delta_ndcg`.
pub fn evaluate_arm(
    inputs: &ArmInputs<'_>,
    plan: &RewritePlan,
    settings: &ArmSettings,
    baseline: Option<&RunRecord>,
) -> Result<ArmEvaluation> {
    let ctx = format!("{}/{}/{}", inputs.encoder.encoder_id(), inputs.task_id, plan.arm_label());
    evaluate(inputs, plan, settings, baseline).map_err(|e| e.context(ctx))
}

fn evaluate(
    inputs: &ArmInputs<'_>,
    plan: &RewritePlan,
    settings: &ArmSettings,
    baseline: Option<&RunRecord>,
) -> Result<ArmEvaluation> {
    let coll = inputs.collection;
    let evaluable: Vec<Query> = coll.evaluable_queries().into_iter().cloned().collect();
    if evaluable.is_empty() {
        return Err(Error::domain("no query has a positive relevance judgment"));
    }

    let mut rewrite_records = Vec::new();
    let (documents, queries): (Vec<Document>, Vec<Query>) = if plan.is_baseline() {
        (coll.documents.clone(), evaluable)
    } else {
        let rewriter = inputs
            .rewriter
            .ok_or_else(|| Error::config("a rewriting plan needs a rewriter"))?;
        let docs = rewriter.rewrite_corpus(&coll.documents, plan)?;
        rewrite_records.extend(docs.records);
        let queries = if plan.regime().rewrites_queries() {
            let q = rewriter.rewrite_queries(&evaluable, plan)?;
            rewrite_records.extend(q.records);
            q.items
        } else {
            evaluable
        };
        (docs.items, queries)
    };

    let doc_ids: Vec<String> = documents.iter().map(|d| d.id.clone()).collect();
    let corpus_texts: Vec<String> = documents.into_iter().map(|d| d.text).collect();
    let corpus = embed_texts(&doc_ids, &corpus_texts, inputs.encoder, inputs.embed_cache, &settings.embed)?;
    let query_ids: Vec<String> = queries.iter().map(|q| q.id.clone()).collect();
    let query_texts: Vec<String> = queries.into_iter().map(|q| q.text).collect();
    let query_matrix = embed_texts(&query_ids, &query_texts, inputs.encoder, inputs.embed_cache, &settings.embed)?;

    let rankings = retrieve_topk(settings.mode, &query_matrix, &corpus, settings.k)?;
    let mut ndcg_per_query = BTreeMap::new();
    for r in &rankings {
        let judged = &coll.qrels[&r.query_id];
        ndcg_per_query.insert(r.query_id.clone(), ndcg_at_k(&r.doc_ids(), judged, settings.k, settings.gain)?);
    }
    let mean_ndcg = ndcg_per_query.values().sum::<f64>() / ndcg_per_query.len() as f64;
    let mut record = RunRecord {
        encoder_id: inputs.encoder.encoder_id().to_string(),
        task_id: inputs.task_id.to_string(),
        plan: plan.clone(),
        ndcg_per_query,
        mean_ndcg,
        delta_ndcg: None,
        k: settings.k,
        gain: settings.gain,
        excluded_queries: coll.queries.len() - rankings.len(),
    };
    if let Some(b) = baseline {
        record.attach_baseline(b)?;
    }
    Ok(ArmEvaluation {
        record,
        rankings,
        corpus_texts,
        corpus_embeddings: corpus,
        rewrite_records,
    })
}
