use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::orchestrator::RewriteRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditItem {
    pub source_id: String,
    pub arm: String,
    pub rewriter_id: String,
    pub source_text: Option<String>,
    pub output_text: String,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub seed: u64,
    pub population: usize,
    pub items: Vec<AuditItem>,
}

/// Seeded uniform sample (without replacement) of rewrite records for human
/// review, ordered by (source id, arm). `sources` maps ids to original text.
pub fn audit_sample(
    records: &[RewriteRecord],
    sources: &HashMap<String, String>,
    sample_size: usize,
    seed: u64,
) -> Result<AuditBundle> {
    if records.is_empty() {
        return Err(Error::domain("no rewrite records to audit"));
    }
    if sample_size > records.len() {
        return Err(Error::domain(format!(
            "sample size {sample_size} exceeds {} records",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, records.len(), sample_size);
    let mut items: Vec<AuditItem> = picked
        .into_iter()
        .map(|i| {
            let r = &records[i];
            AuditItem {
                source_id: r.source_id.clone(),
                arm: r.arm.clone(),
                rewriter_id: r.rewriter_id.clone(),
                source_text: sources.get(&r.source_id).cloned(),
                output_text: r.output_text.clone(),
                failed: r.failed,
            }
        })
        .collect();
    items.sort_by(|a, b| {
        (&a.source_id, &a.arm, &a.rewriter_id).cmp(&(&b.source_id, &b.arm, &b.rewriter_id))
    });
    Ok(AuditBundle {
        seed,
        population: records.len(),
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<RewriteRecord> {
        (0..n)
            .map(|i| RewriteRecord {
                source_id: format!("d{i:03}"),
                arm: "NL-QC".into(),
                source_hash: format!("{i}"),
                output_text: format!("out {i}"),
                rewriter_id: "r".into(),
                template_id: "t".into(),
                timestamp: "t0".into(),
                truncated: false,
                failed: false,
                error: None,
            })
            .collect()
    }

    #[test]
    fn full_sample_is_everything_sorted() {
        let mut recs = records(5);
        recs.reverse();
        let src: HashMap<_, _> = [("d001".to_string(), "orig".to_string())].into_iter().collect();
        let b = audit_sample(&recs, &src, 5, 1).unwrap();
        let ids: Vec<_> = b.items.iter().map(|i| i.source_id.as_str()).collect();
        assert_eq!(ids, vec!["d000", "d001", "d002", "d003", "d004"]);
        assert_eq!(b.items[1].source_text.as_deref(), Some("orig"));
    }

    #[test]
    fn seeded_and_varies_with_seed() {
        let recs = records(100);
        let src = HashMap::new();
        let a = audit_sample(&recs, &src, 10, 42).unwrap();
        assert_eq!(a, audit_sample(&recs, &src, 10, 42).unwrap());
        let differing = (0..20u64)
            .filter(|s| audit_sample(&recs, &src, 10, 1000 + s).unwrap().items != a.items)
            .count();
        // chance of a repeat is 1 / C(100,10) per seed
        assert_eq!(differing, 20);
    }

    #[test]
    fn errors() {
        assert!(audit_sample(&[], &HashMap::new(), 0, 0).is_err());
        assert!(audit_sample(&records(3), &HashMap::new(), 4, 0).is_err());
    }
}
