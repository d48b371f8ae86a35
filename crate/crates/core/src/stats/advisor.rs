use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Strategy;
use crate::error::{Error, Result};

pub const DEFAULT_SKIP_THRESHOLD: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recommendation {
    Rephrase,
    Pseudo,
    NL,
    Skip,
}

impl From<Strategy> for Recommendation {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Rephrase => Recommendation::Rephrase,
            Strategy::Pseudo => Recommendation::Pseudo,
            Strategy::NL => Recommendation::NL,
            Strategy::Baseline => Recommendation::Skip,
        }
    }
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recommendation::Rephrase => "Rephrase",
            Recommendation::Pseudo => "Pseudo",
            Recommendation::NL => "NL",
            Recommendation::Skip => "Skip",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewriter_id: Option<String>,
    /// Mean ΔH in bits per strategy.
    pub delta_h: BTreeMap<Strategy, f64>,
    pub skip_threshold: f64,
    pub recommended: Recommendation,
    pub rationale: String,
}

impl Advice {
    pub fn with_rewriter(mut self, rewriter_id: impl Into<String>) -> Self {
        self.rewriter_id = Some(rewriter_id.into());
        self
    }
}

/// Picks the strategy with the largest ΔH, or Skip when none exceeds
/// `skip_threshold`. Exact ties go to the more abstract strategy.
pub fn advise(task_id: &str, delta_h: &BTreeMap<Strategy, f64>, skip_threshold: f64) -> Result<Advice> {
    if delta_h.is_empty() {
        return Err(Error::domain(format!("no strategy ΔH measured for task {task_id}")));
    }
    if delta_h.contains_key(&Strategy::Baseline) {
        return Err(Error::contract("Baseline has no ΔH to advise on"));
    }
    if let Some((s, v)) = delta_h.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::domain(format!("ΔH for {s} is not finite: {v}")));
    }

    let mut best: Option<(Strategy, f64)> = None;
    for s in Strategy::REWRITES.iter().rev() {
        if let Some(&v) = delta_h.get(s) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((*s, v));
            }
        }
    }
    let (strategy, value) = best.expect("non-empty");

    let table = Strategy::REWRITES
        .iter()
        .filter_map(|s| delta_h.get(s).map(|v| format!("{s} {v:+.2}")))
        .collect::<Vec<_>>()
        .join(", ");
    let (recommended, rationale) = if value > skip_threshold {
        (
            Recommendation::from(strategy),
            format!("ΔH bits: {table}. {strategy} has the largest ΔH ({value:+.2} > threshold {skip_threshold:+.2})."),
        )
    } else {
        (
            Recommendation::Skip,
            format!("ΔH bits: {table}. Best ΔH {value:+.2} ({strategy}) does not exceed threshold {skip_threshold:+.2}; rewriting is not expected to help."),
        )
    };
    Ok(Advice {
        task_id: task_id.to_string(),
        rewriter_id: None,
        delta_h: delta_h.clone(),
        skip_threshold,
        recommended,
        rationale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(Strategy, f64)]) -> BTreeMap<Strategy, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn examples() {
        let a = advise(
            "t",
            &map(&[(Strategy::Rephrase, 0.60), (Strategy::Pseudo, 0.95), (Strategy::NL, 0.90)]),
            0.0,
        )
        .unwrap();
        assert_eq!(a.recommended, Recommendation::Pseudo);
        assert!(a.rationale.contains("+0.95"));

        let a = advise("t", &map(&[(Strategy::NL, -0.36)]), 0.0).unwrap();
        assert_eq!(a.recommended, Recommendation::Skip);
        assert!(a.rationale.contains("-0.36"));

        let a = advise("t", &map(&[(Strategy::Rephrase, 0.5), (Strategy::NL, 0.5)]), 0.0).unwrap();
        assert_eq!(a.recommended, Recommendation::NL);
        let a = advise("t", &map(&[(Strategy::Rephrase, 0.5), (Strategy::Pseudo, 0.5)]), 0.0).unwrap();
        assert_eq!(a.recommended, Recommendation::Pseudo);
    }

    #[test]
    fn threshold_is_strict() {
        let a = advise("t", &map(&[(Strategy::NL, 0.0)]), 0.0).unwrap();
        assert_eq!(a.recommended, Recommendation::Skip);
        let a = advise("t", &map(&[(Strategy::NL, 0.3)]), 0.5).unwrap();
        assert_eq!(a.recommended, Recommendation::Skip);
    }

    #[test]
    fn errors() {
        assert!(matches!(advise("t", &BTreeMap::new(), 0.0), Err(Error::Domain(_))));
        assert!(advise("t", &map(&[(Strategy::Baseline, 1.0)]), 0.0).is_err());
        assert!(advise("t", &map(&[(Strategy::NL, f64::NAN)]), 0.0).is_err());
    }

    #[test]
    fn json_shape() {
        let a = advise("t", &map(&[(Strategy::NL, 0.4)]), 0.0).unwrap().with_rewriter("gpt");
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(v["recommended"], "NL");
        assert_eq!(v["delta_h"]["NL"], 0.4);
        assert_eq!(v["rewriter_id"], "gpt");
    }
}
