//! Embedding acquisition and the embedding-side diagnostic: mean off-diagonal
//! cosine s̄ and its change Δs̄ under rewriting.

mod cache;
mod embed;
mod endpoint;
mod matrix;

pub use cache::EmbeddingCache;
pub use embed::{embed_texts, EmbedConfig};
pub use endpoint::{BagOfWordsEmbedder, EmbeddingEndpoint, HttpEmbeddingEndpoint};
pub(crate) use matrix::dot as dot_product;
pub use matrix::{
    delta_s, l2_normalize, mean_offdiag_cosine, mean_offdiag_cosine_direct, EmbeddingMatrix, GeometryReport,
    UNIT_NORM_TOLERANCE,
};
