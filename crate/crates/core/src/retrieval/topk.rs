use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::EmbeddingMatrix;

/// Top-k results for one query: descending score, ties by ascending doc id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|(d, _)| d.as_str()).collect()
    }
}

fn rank_order(ids: &[String]) -> impl Fn(&(usize, f64), &(usize, f64)) -> Ordering + '_ {
    move |a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0]))
}

fn check_pair(queries: &EmbeddingMatrix, corpus: &EmbeddingMatrix, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if !queries.is_normalized() || !corpus.is_normalized() {
        return Err(Error::contract("retrieval needs l2-normalized query and corpus matrices"));
    }
    if queries.encoder_id() != corpus.encoder_id() {
        return Err(Error::contract(format!(
            "query encoder {} differs from corpus encoder {}",
            queries.encoder_id(),
            corpus.encoder_id()
        )));
    }
    if queries.dim() != corpus.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: queries {} vs corpus {}",
            queries.dim(),
            corpus.dim()
        )));
    }
    if corpus.is_empty() {
        return Err(Error::domain("empty corpus"));
    }
    if k > corpus.len() {
        log::warn!("k={k} exceeds corpus size {}; clamping", corpus.len());
        return Ok(corpus.len());
    }
    Ok(k)
}

fn scores(query: &[f64], corpus: &EmbeddingMatrix) -> Vec<(usize, f64)> {
    corpus
        .rows()
        .enumerate()
        .map(|(j, row)| (j, crate::geometry::dot_product(query, row)))
        .collect()
}

fn to_list(query_id: &str, top: &[(usize, f64)], corpus: &EmbeddingMatrix) -> RankedList {
    RankedList {
        query_id: query_id.to_string(),
        entries: top
            .iter()
            .map(|&(j, s)| (corpus.ids()[j].clone(), s))
            .collect(),
    }
}

/// Exact top-k by inner product for every query row.
pub fn retrieve_topk(
    mode: ExecMode,
    queries: &EmbeddingMatrix,
    corpus: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<RankedList>> {
    let k = check_pair(queries, corpus, k)?;
    let order = rank_order(corpus.ids());
    Ok(exec::map_range(mode, queries.len(), |qi| {
        let mut s = scores(queries.row(qi), corpus);
        if k < s.len() {
            s.select_nth_unstable_by(k - 1, &order);
            s.truncate(k);
        }
        s.sort_unstable_by(&order);
        to_list(&queries.ids()[qi], &s, corpus)
    }))
}

/// Full sort of every score, then truncation. Reference path for
/// [`retrieve_topk`].
pub fn retrieve_topk_bruteforce(
    mode: ExecMode,
    queries: &EmbeddingMatrix,
    corpus: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<RankedList>> {
    let k = check_pair(queries, corpus, k)?;
    let order = rank_order(corpus.ids());
    Ok(exec::map_range(mode, queries.len(), |qi| {
        let mut s = scores(queries.row(qi), corpus);
        s.sort_by(&order);
        to_list(&queries.ids()[qi], &s[..k], corpus)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::l2_normalize;

    fn m(ids: &[&str], rows: &[&[f64]]) -> EmbeddingMatrix {
        l2_normalize(
            EmbeddingMatrix::from_rows(
                "e",
                ids.iter().map(|s| s.to_string()).collect(),
                rows.iter().map(|r| r.to_vec()).collect(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn exact_match_ranks_first() {
        let corpus = m(&["A", "B", "C"], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.5, 0.5, 0.1]]);
        let q = m(&["q"], &[&[0.0, 1.0, 0.0]]);
        let r = retrieve_topk(ExecMode::Sequential, &q, &corpus, 1).unwrap();
        assert_eq!(r[0].entries[0].0, "B");
        assert!((r[0].entries[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_docs_and_clamping() {
        let corpus = m(&["A", "B"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let q = m(&["q"], &[&[1.0, 0.0]]);
        let r = retrieve_topk(ExecMode::Parallel, &q, &corpus, 10).unwrap();
        assert_eq!(r[0].entries, vec![("A".to_string(), 1.0), ("B".to_string(), 0.0)]);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let corpus = m(&["z", "b", "m"], &[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]]);
        let q = m(&["q"], &[&[1.0, 0.0]]);
        let r = retrieve_topk(ExecMode::Sequential, &q, &corpus, 2).unwrap();
        assert_eq!(r[0].doc_ids(), vec!["b", "m"]);
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let corpus = m(&["A"], &[&[1.0, 0.0]]);
        let q = m(&["q"], &[&[1.0, 0.0, 0.0]]);
        assert!(matches!(retrieve_topk(ExecMode::Sequential, &q, &corpus, 1), Err(Error::Contract(_))));
        assert!(retrieve_topk(ExecMode::Sequential, &corpus, &corpus, 0).is_err());
    }
}
