use serde::{Deserialize, Serialize};

use crate::corpus::RewritePlan;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Rows of a normalized matrix must have norm within this of 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

const ROW_CHUNK: usize = 64;

/// Row-major B × d matrix of embeddings, one row per item id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    encoder_id: String,
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Builds an unnormalized matrix; all rows must share one dimension.
    pub fn from_rows(encoder_id: impl Into<String>, ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::contract(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::contract(format!(
                    "row {id:?} has dimension {} but matrix dimension is {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            encoder_id: encoder_id.into(),
            ids,
            dim,
            data,
            normalized: false,
        })
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1)).take(self.ids.len())
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    fn check_unit_rows(&self) -> Result<()> {
        if !self.normalized {
            return Err(Error::contract("matrix is not flagged as l2-normalized"));
        }
        for (i, row) in self.rows().enumerate() {
            let norm = dot(row, row).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::contract(format!(
                    "row {:?} has norm {norm}, expected 1",
                    self.ids[i]
                )));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales every row to unit ℓ2 norm. A zero (or non-finite) row is a domain
/// error naming its id.
pub fn l2_normalize(mut matrix: EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let dim = matrix.dim;
    for (i, row) in matrix.data.chunks_mut(dim.max(1)).enumerate() {
        let norm = dot(row, row).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::domain(format!(
                "cannot normalize row {:?}: norm is {norm}",
                matrix.ids[i]
            )));
        }
        row.iter_mut().for_each(|x| *x /= norm);
    }
    matrix.normalized = true;
    Ok(matrix)
}

fn require_pairs(matrix: &EmbeddingMatrix) -> Result<()> {
    if matrix.len() < 2 {
        return Err(Error::domain(format!(
            "mean off-diagonal cosine needs at least 2 rows, got {}",
            matrix.len()
        )));
    }
    matrix.check_unit_rows()
}

/// s̄ = 1/(B(B−1)) Σ_{i≠j} e_iᵀe_j, via ‖Σe_i‖² − Σ‖e_i‖² in O(Bd).
pub fn mean_offdiag_cosine(mode: ExecMode, matrix: &EmbeddingMatrix) -> Result<f64> {
    require_pairs(matrix)?;
    let d = matrix.dim;
    let partials = exec::map_chunks(mode, matrix.data(), ROW_CHUNK * d.max(1), |block| {
        let mut sum = vec![0.0; d];
        let mut sq = 0.0;
        for row in block.chunks(d.max(1)) {
            for (s, x) in sum.iter_mut().zip(row) {
                *s += x;
            }
            sq += dot(row, row);
        }
        (sum, sq)
    });
    let mut total = vec![0.0; d];
    let mut sq_norms = 0.0;
    for (sum, sq) in partials {
        for (t, s) in total.iter_mut().zip(&sum) {
            *t += s;
        }
        sq_norms += sq;
    }
    let b = matrix.len() as f64;
    let s_bar = (dot(&total, &total) - sq_norms) / (b * (b - 1.0));
    Ok(s_bar.clamp(-1.0, 1.0))
}

/// The O(B²d) double sum over ordered pairs i ≠ j.
pub fn mean_offdiag_cosine_direct(mode: ExecMode, matrix: &EmbeddingMatrix) -> Result<f64> {
    require_pairs(matrix)?;
    let n = matrix.len();
    let per_row = exec::map_range(mode, n, |i| {
        let ri = matrix.row(i);
        (0..n).filter(|&j| j != i).map(|j| dot(ri, matrix.row(j))).sum::<f64>()
    });
    let b = n as f64;
    Ok(per_row.iter().sum::<f64>() / (b * (b - 1.0)))
}

/// Embedding-side report for one (encoder, task, arm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub encoder_id: String,
    pub task_id: String,
    pub plan: RewritePlan,
    pub arm: String,
    pub s_bar: f64,
    pub delta_s_bar: Option<f64>,
    /// Number of embeddings s̄ was pooled over (the whole corpus).
    pub batch_size_used: usize,
}

impl GeometryReport {
    pub fn compute(
        mode: ExecMode,
        task_id: &str,
        plan: &RewritePlan,
        corpus: &EmbeddingMatrix,
    ) -> Result<Self> {
        Ok(Self {
            encoder_id: corpus.encoder_id().to_string(),
            task_id: task_id.to_string(),
            plan: plan.clone(),
            arm: plan.arm_label(),
            s_bar: mean_offdiag_cosine(mode, corpus)?,
            delta_s_bar: None,
            batch_size_used: corpus.len(),
        })
    }
}

/// Δs̄ = s̄(rewritten) − s̄(baseline).
pub fn delta_s(baseline: &GeometryReport, rewritten: &GeometryReport) -> Result<f64> {
    if baseline.encoder_id != rewritten.encoder_id || baseline.task_id != rewritten.task_id {
        return Err(Error::config(format!(
            "Δs̄ needs matching encoder and task: {}/{} vs {}/{}",
            baseline.encoder_id, baseline.task_id, rewritten.encoder_id, rewritten.task_id
        )));
    }
    Ok(rewritten.s_bar - baseline.s_bar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        EmbeddingMatrix::from_rows("enc", ids, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let m = l2_normalize(matrix(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(m.row(0), &[0.6, 0.8]);
        let again = l2_normalize(m.clone()).unwrap();
        for (a, b) in again.row(0).iter().zip(m.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
        let err = l2_normalize(matrix(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap_err();
        assert!(err.to_string().contains("r1"), "{err}");
    }

    #[test]
    fn s_bar_examples() {
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            let same = l2_normalize(matrix(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]])).unwrap();
            assert!((mean_offdiag_cosine(mode, &same).unwrap() - 1.0).abs() < 1e-12);

            let orth = l2_normalize(matrix(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
            assert_eq!(mean_offdiag_cosine(mode, &orth).unwrap(), 0.0);

            let three = l2_normalize(matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
            assert!((mean_offdiag_cosine(mode, &three).unwrap() + 1.0 / 3.0).abs() < 1e-12);
            assert!((mean_offdiag_cosine_direct(mode, &three).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn s_bar_preconditions() {
        let one = l2_normalize(matrix(&[&[1.0, 0.0]])).unwrap();
        assert!(matches!(mean_offdiag_cosine(ExecMode::Sequential, &one), Err(Error::Domain(_))));
        let raw = matrix(&[&[2.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(mean_offdiag_cosine(ExecMode::Sequential, &raw), Err(Error::Contract(_))));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = EmbeddingMatrix::from_rows("e", vec!["a".into(), "b".into()], vec![vec![1.0], vec![1.0, 2.0]]);
        assert!(err.is_err());
    }
}
