//! Exact dense retrieval, NDCG@k scoring, and the per-arm evaluation pipeline.

mod arm;
mod ndcg;
mod topk;

pub use arm::{evaluate_arm, ArmEvaluation, ArmInputs, ArmSettings};
pub use ndcg::{ndcg_at_k, Gain};
pub use topk::{retrieve_topk, retrieve_topk_bruteforce, RankedList};
