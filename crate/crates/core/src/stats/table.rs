use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::correlation::{correlate, stars, CorrelationResult};
use crate::corpus::{Regime, Strategy};
use crate::error::{Error, Result};

/// One arm's shifts joined with its retrieval change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedRow {
    pub encoder_id: String,
    pub task_id: String,
    pub rewriter_id: String,
    pub strategy: Strategy,
    pub regime: Regime,
    pub delta_h: f64,
    pub delta_s_bar: f64,
    pub delta_ndcg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricPair {
    DeltaHVsNdcg,
    DeltaSVsNdcg,
    DeltaHVsDeltaS,
}

impl MetricPair {
    pub const ALL: [MetricPair; 3] = [
        MetricPair::DeltaHVsNdcg,
        MetricPair::DeltaSVsNdcg,
        MetricPair::DeltaHVsDeltaS,
    ];

    pub fn id(self) -> &'static str {
        match self {
            MetricPair::DeltaHVsNdcg => "dH_vs_dNDCG",
            MetricPair::DeltaSVsNdcg => "dSbar_vs_dNDCG",
            MetricPair::DeltaHVsDeltaS => "dH_vs_dSbar",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricPair::DeltaHVsNdcg => "ΔH vs ΔNDCG@10",
            MetricPair::DeltaSVsNdcg => "Δs̄ vs ΔNDCG@10",
            MetricPair::DeltaHVsDeltaS => "ΔH vs Δs̄",
        }
    }

    fn columns(self, rows: &[&JoinedRow]) -> (Vec<f64>, Vec<f64>) {
        rows.iter()
            .map(|r| match self {
                MetricPair::DeltaHVsNdcg => (r.delta_h, r.delta_ndcg),
                MetricPair::DeltaSVsNdcg => (r.delta_s_bar, r.delta_ndcg),
                MetricPair::DeltaHVsDeltaS => (r.delta_h, r.delta_s_bar),
            })
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub pair: MetricPair,
    pub regime: Regime,
    pub n: usize,
    /// `None` when the correlation is undefined; `note` says why.
    pub result: Option<CorrelationResult>,
    pub note: Option<String>,
}

/// Correlations for every metric pair over the rows of one regime.
pub fn correlation_table(rows: &[JoinedRow], regime: Regime) -> Result<Vec<CorrelationCell>> {
    let selected: Vec<&JoinedRow> = rows.iter().filter(|r| r.regime == regime).collect();
    if selected.len() < 3 {
        return Err(Error::domain(format!(
            "regime {regime} has {} joined rows, correlation needs n >= 3",
            selected.len()
        )));
    }
    MetricPair::ALL
        .iter()
        .map(|&pair| {
            let (x, y) = pair.columns(&selected);
            let (result, note) = match correlate(&x, &y) {
                Ok(r) => (Some(r), None),
                Err(Error::Domain(msg)) => (None, Some(msg)),
                Err(e) => return Err(e),
            };
            Ok(CorrelationCell {
                pair,
                regime,
                n: selected.len(),
                result,
                note,
            })
        })
        .collect()
}

/// Correlation cells for several regimes; a regime with too few rows
/// becomes a gap instead of an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub regimes: Vec<Regime>,
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationTable {
    pub fn build(rows: &[JoinedRow], regimes: &[Regime]) -> Result<Self> {
        let mut cells = Vec::new();
        for &regime in regimes {
            match correlation_table(rows, regime) {
                Ok(c) => cells.extend(c),
                Err(Error::Domain(msg)) => {
                    let n = rows.iter().filter(|r| r.regime == regime).count();
                    cells.extend(MetricPair::ALL.iter().map(|&pair| CorrelationCell {
                        pair,
                        regime,
                        n,
                        result: None,
                        note: Some(msg.clone()),
                    }));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(CorrelationTable {
            regimes: regimes.to_vec(),
            cells,
        })
    }

    pub fn cell(&self, pair: MetricPair, regime: Regime) -> Option<&CorrelationCell> {
        self.cells.iter().find(|c| c.pair == pair && c.regime == regime)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "pair",
            "regime",
            "n",
            "method",
            "spearman_rho",
            "spearman_p",
            "spearman_stars",
            "pearson_r",
            "pearson_p",
            "pearson_stars",
            "note",
        ])?;
        for c in &self.cells {
            let mut rec = vec![c.pair.id().to_string(), c.regime.to_string(), c.n.to_string()];
            match &c.result {
                Some(r) => rec.extend([
                    r.method.to_string(),
                    format!("{:.6}", r.spearman_rho),
                    format!("{:.6e}", r.spearman_p),
                    stars(r.spearman_p).to_string(),
                    format!("{:.6}", r.pearson_r),
                    format!("{:.6e}", r.pearson_p),
                    stars(r.pearson_p).to_string(),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 7)),
            }
            rec.push(c.note.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Rows are metric pairs; each regime contributes a Spearman and a
    /// Pearson column. Values carry their significance stars.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Pair |");
        for r in &self.regimes {
            write!(out, " {r} Spearman ρ | {r} Pearson r |").unwrap();
        }
        out.push_str("\n|---|");
        for _ in &self.regimes {
            out.push_str("---:|---:|");
        }
        out.push('\n');
        for pair in MetricPair::ALL {
            write!(out, "| {} |", pair.label()).unwrap();
            for &regime in &self.regimes {
                match self.cell(pair, regime).and_then(|c| c.result.as_ref()) {
                    Some(r) => write!(
                        out,
                        " {} | {} |",
                        format_coefficient(r.spearman_rho, r.spearman_p),
                        format_coefficient(r.pearson_r, r.pearson_p)
                    )
                    .unwrap(),
                    None => out.push_str(" n/a | n/a |"),
                }
            }
            out.push('\n');
        }
        out.push_str("\n| n |");
        for &regime in &self.regimes {
            let n = self.cell(MetricPair::DeltaHVsNdcg, regime).map_or(0, |c| c.n);
            let method = self
                .cell(MetricPair::DeltaHVsNdcg, regime)
                .and_then(|c| c.result.as_ref())
                .map_or("-".to_string(), |r| r.method.to_string());
            write!(out, " {n} ({method}) | |").unwrap();
        }
        out.push('\n');
        out.push_str("\n*p<0.05, **p<0.01, ***p<0.001 (two-sided)\n");
        out
    }
}

/// `+0.356**` style cell text.
pub fn format_coefficient(value: f64, p: f64) -> String {
    format!("{value:+.3}{}", stars(p))
}
