//! LLM rewriting of corpora and queries: prompt templates, rewriter
//! endpoints, the rewrite cache, and audit sampling.

mod audit;
mod cache;
mod endpoint;
mod orchestrator;
mod template;

pub use audit::{audit_sample, AuditBundle, AuditItem};
pub use cache::RewriteCache;
pub use endpoint::{
    CannedEntry, Completion, HttpChatEndpoint, MockRewriter, OnMissing, RewriteRequest, RewriterEndpoint,
};
pub use orchestrator::{
    postprocess_output, source_hash, system_clock, RewriteConfig, RewriteRecord, Rewritten, Rewriter,
};
pub use template::{PromptTemplate, Side, TemplateCatalog, INPUT_PLACEHOLDER};
