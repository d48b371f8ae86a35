use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::cache::EmbeddingCache;
use super::endpoint::EmbeddingEndpoint;
use super::matrix::{l2_normalize, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::retry::RetryPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub batch_size: usize,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Embeds `texts` (labelled by `ids`) through `endpoint`, serving what it can
/// from `cache` and storing what it fetches. Identical texts are requested
/// once. Returns the ℓ2-normalized matrix in input order.
pub fn embed_texts(
    ids: &[String],
    texts: &[String],
    endpoint: &dyn EmbeddingEndpoint,
    cache: &EmbeddingCache,
    config: &EmbedConfig,
) -> Result<EmbeddingMatrix> {
    if ids.len() != texts.len() {
        return Err(Error::contract(format!("{} ids for {} texts", ids.len(), texts.len())));
    }
    if texts.is_empty() {
        return Err(Error::domain("nothing to embed"));
    }
    let encoder_id = endpoint.encoder_id();
    let keys: Vec<String> = texts.iter().map(|t| EmbeddingCache::key(encoder_id, t)).collect();

    let mut seen = HashSet::new();
    let missing: Vec<usize> = (0..texts.len())
        .filter(|&i| !cache.contains(&keys[i]) && seen.insert(keys[i].as_str()))
        .collect();

    if !missing.is_empty() {
        let batches: Vec<&[usize]> = missing.chunks(config.batch_size.max(1)).collect();
        let fetched = exec::with_pool(config.concurrency, || {
            exec::map(ExecMode::Parallel, &batches, |batch| {
                let batch_texts: Vec<String> = batch.iter().map(|&i| texts[i].clone()).collect();
                config
                    .retry
                    .run(|| endpoint.embed_batch(&batch_texts))
                    .map_err(|(e, attempts)| Error::Endpoint {
                        endpoint: encoder_id.to_string(),
                        message: format!(
                            "batch of {} starting at item {:?} failed after {attempts} attempt(s): {e}",
                            batch.len(),
                            ids[batch[0]]
                        ),
                    })
                    .and_then(|vecs| {
                        if vecs.len() != batch.len() {
                            return Err(Error::Endpoint {
                                endpoint: encoder_id.to_string(),
                                message: format!("sent {} texts, got {} vectors", batch.len(), vecs.len()),
                            });
                        }
                        Ok(batch.iter().map(|&i| keys[i].clone()).zip(vecs).collect::<Vec<_>>())
                    })
            })
        });
        let mut all = Vec::with_capacity(missing.len());
        for batch in fetched {
            all.extend(batch?);
        }
        cache.insert_many(encoder_id, &all)?;
    }

    let rows: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| cache.get(k).expect("every key cached by now"))
        .collect();
    let dim = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(Error::Endpoint {
            endpoint: encoder_id.to_string(),
            message: format!(
                "dimension mismatch: item {:?} has {} dims, item {:?} has {dim}",
                ids[i],
                r.len(),
                ids[0]
            ),
        });
    }
    l2_normalize(EmbeddingMatrix::from_rows(encoder_id, ids.to_vec(), rows)?)
}
