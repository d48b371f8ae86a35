use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gain applied to a relevance grade before discounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `rel` (trec_eval / BEIR convention).
    #[default]
    Linear,
    /// `2^rel − 1`.
    Exp,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(grade),
            Gain::Exp => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

fn dcg(grades: impl Iterator<Item = u32>, gain: Gain) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| gain.apply(g) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of a ranking against one query's judgments. Unjudged documents have
/// grade 0. The query must have at least one positive grade.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], judgments: &BTreeMap<String, u32>, k: usize, gain: Gain) -> Result<f64> {
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return Err(Error::contract(
            "NDCG requested for a query without positive judgments",
        ));
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k), gain);
    let actual = dcg(
        ranking
            .iter()
            .take(k)
            .map(|d| judgments.get(d.as_ref()).copied().unwrap_or(0)),
        gain,
    );
    Ok((actual / idcg).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|&(d, g)| (d.to_string(), g)).collect()
    }

    #[test]
    fn hand_derived_values() {
        let q = qrels(&[("d1", 1)]);
        assert_eq!(ndcg_at_k(&["d1", "d2"], &q, 10, Gain::Linear).unwrap(), 1.0);
        let v = ndcg_at_k(&["d2", "d1"], &q, 10, Gain::Linear).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.63093).abs() < 1e-5);

        let q = qrels(&[("d1", 2), ("d2", 1)]);
        let v = ndcg_at_k(&["d2", "d1", "d3"], &q, 10, Gain::Linear).unwrap();
        let expected = (1.0 + 2.0 / 3f64.log2()) / (2.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.85972).abs() < 1e-5);
    }

    #[test]
    fn cutoff_and_gain() {
        let q = qrels(&[("d1", 1)]);
        let ranking: Vec<String> = (2..=12).map(|i| format!("d{i}")).chain(["d1".to_string()]).collect();
        assert_eq!(ndcg_at_k(&ranking, &q, 10, Gain::Linear).unwrap(), 0.0);

        let q = qrels(&[("a", 3), ("b", 1)]);
        let lin = ndcg_at_k(&["b", "a"], &q, 10, Gain::Linear).unwrap();
        let exp = ndcg_at_k(&["b", "a"], &q, 10, Gain::Exp).unwrap();
        let exp_expected = (1.0 + 7.0 / 3f64.log2()) / (7.0 + 1.0 / 3f64.log2());
        assert!((exp - exp_expected).abs() < 1e-12);
        assert!(exp < lin);
    }

    #[test]
    fn no_positive_grade_is_contract_violation() {
        let q = qrels(&[("d1", 0)]);
        assert!(matches!(ndcg_at_k(&["d1"], &q, 10, Gain::Linear), Err(Error::Contract(_))));
    }
}
