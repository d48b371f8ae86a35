use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lexical::split_words;

/// Something that turns a batch of texts into raw (unnormalized) vectors,
/// one per input, in input order.
pub trait EmbeddingEndpoint: Send + Sync {
    fn encoder_id(&self) -> &str;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// OpenAI-embeddings-compatible HTTP endpoint.
pub struct HttpEmbeddingEndpoint {
    encoder_id: String,
    model: String,
    url: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpEmbeddingEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmbeddingEndpoint")
            .field("encoder_id", &self.encoder_id)
            .field("model", &self.model)
            .field("url", &self.url)
            .field("token", &self.token.as_ref().map(|_| "[REDACTED]"))
            .finish()
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbeddingEndpoint {
    pub fn new(
        encoder_id: impl Into<String>,
        model: impl Into<String>,
        url: impl Into<String>,
        token: Option<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let encoder_id = encoder_id.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Endpoint {
                endpoint: encoder_id.clone(),
                message: e.to_string(),
            })?;
        Ok(Self {
            encoder_id,
            model: model.into(),
            url: url.into(),
            token,
            client,
        })
    }

    /// Request body sent for `texts`.
    pub fn request_body(&self, texts: &[String]) -> serde_json::Value {
        json!({ "model": self.model, "input": texts })
    }

    /// Parses a response body into vectors ordered by `index` when present.
    pub fn parse_response(&self, body: &str, expected: usize) -> Result<Vec<Vec<f64>>> {
        let err = |message: String| Error::Endpoint {
            endpoint: self.encoder_id.clone(),
            message,
        };
        let mut resp: EmbeddingResponse =
            serde_json::from_str(body).map_err(|e| err(format!("bad response body: {e}")))?;
        if resp.data.len() != expected {
            return Err(err(format!(
                "expected {expected} embeddings, got {}",
                resp.data.len()
            )));
        }
        if resp.data.iter().all(|d| d.index.is_some()) {
            resp.data.sort_by_key(|d| d.index);
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl EmbeddingEndpoint for HttpEmbeddingEndpoint {
    fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut req = self.client.post(&self.url).json(&self.request_body(texts));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let err = |message: String| Error::Endpoint {
            endpoint: self.encoder_id.clone(),
            message,
        };
        let resp = req.send().map_err(|e| err(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| err(e.to_string()))?;
        if !status.is_success() {
            return Err(err(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>())));
        }
        self.parse_response(&body, texts.len())
    }
}

/// Offline stand-in encoder: a feature-hashed bag of lower-cased words and
/// identifier parts (`snake_case` and `camelCase` are split). Cosine between
/// two vectors tracks their token overlap.
#[derive(Debug, Clone)]
pub struct BagOfWordsEmbedder {
    encoder_id: String,
    dim: usize,
    fail_on_substring: Option<String>,
}

impl BagOfWordsEmbedder {
    pub fn new(encoder_id: impl Into<String>, dim: usize) -> Self {
        Self {
            encoder_id: encoder_id.into(),
            dim: dim.max(1),
            fail_on_substring: None,
        }
    }

    /// Makes every batch containing `marker` fail, for fault-injection runs.
    pub fn failing_on(mut self, marker: impl Into<String>) -> Self {
        self.fail_on_substring = Some(marker.into());
        self
    }

    fn terms(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in split_words(text) {
            let lower = word.to_lowercase();
            let parts = identifier_parts(word);
            if parts.len() > 1 {
                out.extend(parts);
            }
            out.push(lower);
        }
        out
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for term in Self::terms(text) {
            let digest = Sha256::digest(term.as_bytes());
            let mut head = [0u8; 8];
            head.copy_from_slice(&digest[..8]);
            let bucket = (u64::from_le_bytes(head) % self.dim as u64) as usize;
            v[bucket] += 1.0;
        }
        v
    }
}

fn identifier_parts(word: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for ch in word.chars() {
        if ch == '_' {
            if !cur.is_empty() {
                parts.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if ch.is_uppercase() && prev_lower && !cur.is_empty() {
            parts.push(std::mem::take(&mut cur));
        }
        prev_lower = ch.is_lowercase() || ch.is_numeric();
        cur.extend(ch.to_lowercase());
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    parts
}

impl EmbeddingEndpoint for BagOfWordsEmbedder {
    fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if let Some(marker) = &self.fail_on_substring {
            if texts.iter().any(|t| t.contains(marker.as_str())) {
                return Err(Error::Endpoint {
                    endpoint: self.encoder_id.clone(),
                    message: format!("injected failure on {marker:?}"),
                });
            }
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
