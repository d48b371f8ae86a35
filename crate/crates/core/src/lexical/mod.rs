//! Tokenizers and input-side corpus statistics: token entropy, ΔH, type/token
//! ratios, top-20% mass, hapax rates and vocabulary coverage.

mod stats;
mod tokenizer;

pub use stats::{
    batched_entropy, coverage_cdf, delta_h, lexical_stats, token_entropy, tokenize_all, BatchSize,
    BatchedEntropy, Coverage, LexicalReport, LexicalStats, TokenCounts,
};
pub use tokenizer::{split_words, SubwordTokenizer, TokenId, Tokenizer, TokenizerSpec, WordTokenizer};
