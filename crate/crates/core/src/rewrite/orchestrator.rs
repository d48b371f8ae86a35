use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::RewriteCache;
use super::endpoint::{RewriteRequest, RewriterEndpoint};
use super::template::{PromptTemplate, Side, TemplateCatalog};
use crate::corpus::{Document, Query, RewritePlan};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::retry::RetryPolicy;

/// Audit trail entry for one rewritten item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRecord {
    pub source_id: String,
    pub arm: String,
    /// SHA-256 of the exact input text, hex.
    pub source_hash: String,
    pub output_text: String,
    pub rewriter_id: String,
    pub template_id: String,
    pub timestamp: String,
    pub truncated: bool,
    /// The rewrite failed and `output_text` is the original input.
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn source_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewriteConfig {
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        Self {
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Strips one pair of surrounding code fences and leading/trailing blank lines.
pub fn postprocess_output(raw: &str) -> String {
    fn trim_blank<'a>(lines: &'a [&'a str]) -> &'a [&'a str] {
        let start = lines.iter().position(|l| !l.trim().is_empty()).unwrap_or(lines.len());
        let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(start, |e| e + 1);
        &lines[start..end]
    }
    let lines: Vec<&str> = raw.lines().collect();
    let mut body = trim_blank(&lines);
    if body.len() >= 2 && body[0].trim_start().starts_with("```") && body[body.len() - 1].trim() == "```" {
        body = trim_blank(&body[1..body.len() - 1]);
    }
    body.join("\n")
}

/// Rewritten items plus one record per input, both in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Rewritten<T> {
    pub items: Vec<T>,
    pub records: Vec<RewriteRecord>,
}

impl<T> Rewritten<T> {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed).count()
    }
}

/// Drives one rewriter endpoint through the template catalog with caching.
pub struct Rewriter<'a> {
    pub catalog: &'a TemplateCatalog,
    pub endpoint: &'a dyn RewriterEndpoint,
    pub cache: &'a RewriteCache,
    pub config: RewriteConfig,
    /// Timestamp source for new records.
    pub clock: &'a (dyn Fn() -> String + Sync),
}

pub fn system_clock() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Rewriter<'_> {
    fn check_plan(&self, plan: &RewritePlan) -> Result<()> {
        if plan.is_baseline() {
            return Err(Error::contract("Baseline plans are never rewritten"));
        }
        if plan.rewriter_id() != self.endpoint.rewriter_id() {
            return Err(Error::config(format!(
                "plan names rewriter {} but endpoint is {}",
                plan.rewriter_id(),
                self.endpoint.rewriter_id()
            )));
        }
        Ok(())
    }

    /// Rewrites every document under `plan`; ids are preserved. Documents
    /// whose rewrite fails keep their original text and a failed record.
    pub fn rewrite_corpus(&self, documents: &[Document], plan: &RewritePlan) -> Result<Rewritten<Document>> {
        self.check_plan(plan)?;
        let template = self.catalog.lookup(plan.strategy(), plan.task_family(), Side::Corpus)?;
        if plan.template_id() != template.template_id {
            return Err(Error::config(format!(
                "plan expects template {} but the catalog provides {}",
                plan.template_id(),
                template.template_id
            )));
        }
        let inputs: Vec<(&str, &str)> = documents.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
        let (texts, records) = self.run(&inputs, plan, template)?;
        let items = documents
            .iter()
            .zip(texts)
            .map(|(d, text)| Document {
                id: d.id.clone(),
                text,
                title: None,
                lang_tag: d.lang_tag.clone(),
            })
            .collect();
        Ok(Rewritten { items, records })
    }

    /// Rewrites queries. Only the QC regime rewrites queries.
    pub fn rewrite_queries(&self, queries: &[Query], plan: &RewritePlan) -> Result<Rewritten<Query>> {
        if !plan.regime().rewrites_queries() {
            return Err(Error::contract(format!(
                "regime {} never rewrites queries",
                plan.regime()
            )));
        }
        self.check_plan(plan)?;
        let template = self.catalog.lookup(plan.strategy(), plan.task_family(), Side::Query)?;
        let inputs: Vec<(&str, &str)> = queries.iter().map(|q| (q.id.as_str(), q.text.as_str())).collect();
        let (texts, records) = self.run(&inputs, plan, template)?;
        let items = queries
            .iter()
            .zip(texts)
            .map(|(q, text)| Query { id: q.id.clone(), text })
            .collect();
        Ok(Rewritten { items, records })
    }

    fn run(
        &self,
        inputs: &[(&str, &str)],
        plan: &RewritePlan,
        template: &PromptTemplate,
    ) -> Result<(Vec<String>, Vec<RewriteRecord>)> {
        let arm = plan.arm_label();
        let hashes: Vec<String> = inputs.iter().map(|(_, t)| source_hash(t)).collect();

        // one call per distinct text
        let mut first_of: HashMap<&str, usize> = HashMap::new();
        let mut unique = Vec::new();
        for (i, h) in hashes.iter().enumerate() {
            if !first_of.contains_key(h.as_str()) {
                first_of.insert(h, i);
                unique.push(i);
            }
        }

        let outcomes: Vec<RewriteRecord> = exec::with_pool(self.config.concurrency, || {
            exec::map(ExecMode::Parallel, &unique, |&i| {
                self.rewrite_one(inputs[i].0, inputs[i].1, &hashes[i], &arm, plan, template)
            })
        });
        let fresh: Vec<RewriteRecord> = outcomes.iter().filter(|r| !r.failed).cloned().collect();
        self.cache.insert_many(&fresh)?;

        let by_hash: HashMap<&str, &RewriteRecord> = outcomes.iter().map(|r| (r.source_hash.as_str(), r)).collect();
        let mut texts = Vec::with_capacity(inputs.len());
        let mut records = Vec::with_capacity(inputs.len());
        for ((id, _), h) in inputs.iter().zip(&hashes) {
            let mut rec = (*by_hash[h.as_str()]).clone();
            rec.source_id = id.to_string();
            texts.push(rec.output_text.clone());
            records.push(rec);
        }
        Ok((texts, records))
    }

    fn rewrite_one(
        &self,
        id: &str,
        text: &str,
        hash: &str,
        arm: &str,
        plan: &RewritePlan,
        template: &PromptTemplate,
    ) -> RewriteRecord {
        let key = RewriteCache::key(self.endpoint.rewriter_id(), &template.template_id, hash);
        if let Some(mut hit) = self.cache.get(&key) {
            hit.source_id = id.to_string();
            hit.arm = arm.to_string();
            return hit;
        }
        let request = RewriteRequest {
            strategy: plan.strategy(),
            system: &template.system_text,
            user: template.render_user(text),
            input: text,
            max_tokens: template.max_output_tokens,
        };
        let result = self
            .config
            .retry
            .run(|| {
                let c = self.endpoint.complete(&request)?;
                let cleaned = postprocess_output(&c.text);
                if cleaned.trim().is_empty() {
                    return Err(Error::Endpoint {
                        endpoint: self.endpoint.rewriter_id().to_string(),
                        message: "empty rewrite".into(),
                    });
                }
                Ok((cleaned, c.truncated))
            });
        let mut rec = RewriteRecord {
            source_id: id.to_string(),
            arm: arm.to_string(),
            source_hash: hash.to_string(),
            output_text: String::new(),
            rewriter_id: self.endpoint.rewriter_id().to_string(),
            template_id: template.template_id.clone(),
            timestamp: (self.clock)(),
            truncated: false,
            failed: false,
            error: None,
        };
        match result {
            Ok((out, truncated)) => {
                rec.output_text = out;
                rec.truncated = truncated;
            }
            Err((e, attempts)) => {
                log::warn!("rewrite of {id} failed after {attempts} attempt(s): {e}");
                rec.output_text = text.to_string();
                rec.failed = true;
                rec.error = Some(e.to_string());
            }
        }
        rec
    }
}
