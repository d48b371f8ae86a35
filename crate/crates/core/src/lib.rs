//! Rewriting-augmented code retrieval workbench.
//!
//! Rewrites corpora and queries with pluggable LLM endpoints (Rephrase,
//! Pseudo, NL strategies under query+corpus or corpus-only regimes), embeds
//! them with pluggable encoders, runs exact top-k retrieval, scores NDCG@10,
//! and measures the representational shift each rewrite causes: token
//! entropy change (ΔH) and mean pairwise cosine change (Δs̄). The `stats`
//! module correlates those shifts with retrieval gain and turns ΔH into a
//! rewrite/skip recommendation.
//!
//! Data-parallel kernels run on rayon when the `parallel` feature is on
//! (the default) and fall back to sequential loops otherwise. Both paths
//! reduce in a fixed order, so results are bit-identical either way.

pub mod corpus;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod lexical;
pub mod matrix;
pub mod retrieval;
pub mod rewrite;
pub mod stats;

mod retry;

pub use retry::RetryPolicy;

pub use error::{Error, Result};
pub use exec::ExecMode;
