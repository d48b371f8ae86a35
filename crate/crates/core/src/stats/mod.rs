//! Rank and product-moment correlations with significance, and the
//! ΔH-based rewrite advisor.

mod advisor;
mod correlation;
mod table;

pub use advisor::{advise, Advice, Recommendation, DEFAULT_SKIP_THRESHOLD};
pub use correlation::{
    average_ranks, correlate, pearson, permutation_extreme_count, spearman, stars, Correlation,
    CorrelationResult, PValueMethod, EXACT_PERMUTATION_BELOW,
};
pub use table::{correlation_table, format_coefficient, CorrelationCell, CorrelationTable, JoinedRow, MetricPair};
