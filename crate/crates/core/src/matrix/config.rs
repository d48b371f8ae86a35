use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Regime, Strategy, TaskFamily};
use crate::error::{Error, Result};
use crate::geometry::{BagOfWordsEmbedder, EmbeddingEndpoint, HttpEmbeddingEndpoint};
use crate::lexical::{BatchSize, TokenizerSpec};
use crate::retrieval::Gain;
use crate::rewrite::{CannedEntry, HttpChatEndpoint, MockRewriter, OnMissing, RewriterEndpoint};
use crate::retry::RetryPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: String,
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
    pub family: TaskFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EncoderEndpointConfig {
    /// OpenAI-compatible `/embeddings`.
    Http {
        url: String,
        model: String,
        /// Environment variable holding the bearer token.
        #[serde(default)]
        token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    /// Offline bag-of-words embedder.
    MockBow {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        fail_on_substring: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub id: String,
    pub endpoint: EncoderEndpointConfig,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RewriterEndpointConfig {
    /// OpenAI-compatible `/chat/completions`.
    Http {
        url: String,
        model: String,
        #[serde(default)]
        token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Identity {
        #[serde(default)]
        fail_on_substring: Option<String>,
    },
    /// JSON-Lines table of `{strategy?, input, output}`.
    Canned {
        table: PathBuf,
        #[serde(default)]
        on_missing: OnMissing,
        #[serde(default)]
        fail_on_substring: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewriterConfig {
    pub id: String,
    pub endpoint: RewriterEndpointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub embeddings: Option<PathBuf>,
    pub rewrites: Option<PathBuf>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            embeddings: Some("cache/embeddings".into()),
            rewrites: Some("cache/rewrites".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    /// Matrix cells evaluated at once.
    pub cells: usize,
    pub embed_batch_size: usize,
    pub embed_concurrency: usize,
    pub rewrite_concurrency: usize,
    pub retries: u32,
    pub base_delay_ms: u64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            cells: 4,
            embed_batch_size: 32,
            embed_concurrency: 4,
            rewrite_concurrency: 4,
            retries: retry.retries,
            base_delay_ms: retry.base_delay_ms,
        }
    }
}

impl LimitsConfig {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.retries,
            base_delay_ms: self.base_delay_ms,
        }
    }
}

/// A whole experiment, as read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub gain: Gain,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default)]
    pub entropy_batch: BatchSize,
    #[serde(default)]
    pub skip_threshold: f64,
    /// Extra prompt templates, overriding built-ins with the same key.
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    /// Fixed timestamp for new rewrite records (reproducible outputs).
    #[serde(default)]
    pub timestamp: Option<String>,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub limits: LimitsConfig,
    pub tasks: Vec<TaskConfig>,
    pub encoders: Vec<EncoderConfig>,
    #[serde(default)]
    pub rewriters: Vec<RewriterConfig>,
    /// Directory relative paths resolve against; set by [`ExperimentConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_k() -> usize {
    10
}

fn default_dim() -> usize {
    256
}

fn default_timeout() -> u64 {
    60
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::REWRITES.to_vec()
}

fn default_regimes() -> Vec<Regime> {
    vec![Regime::QC, Regime::C]
}

impl ExperimentConfig {
    pub fn from_toml(source: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(source).map_err(|e| Error::config(format!("invalid experiment config: {e}")))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&source, base).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::config("at least one task is required"));
        }
        if self.encoders.is_empty() {
            return Err(Error::config("at least one encoder is required"));
        }
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if !self.skip_threshold.is_finite() {
            return Err(Error::config("skip_threshold must be finite"));
        }
        if let BatchSize::Fixed(0) = self.entropy_batch {
            return Err(Error::config("entropy_batch must be at least 1"));
        }
        if self.strategies.contains(&Strategy::Baseline) {
            return Err(Error::config("Baseline is always included; list only rewriting strategies"));
        }
        if self.regimes.contains(&Regime::None) {
            return Err(Error::config("regimes may only be QC and C"));
        }
        if !self.strategies.is_empty() && !self.regimes.is_empty() && self.rewriters.is_empty() {
            return Err(Error::config("strategies and regimes are set but no rewriter is configured"));
        }
        unique("task", self.tasks.iter().map(|t| t.id.as_str()))?;
        unique("encoder", self.encoders.iter().map(|e| e.id.as_str()))?;
        unique("rewriter", self.rewriters.iter().map(|r| r.id.as_str()))?;
        unique("strategy", self.strategies.iter().map(|s| s.as_str()))?;
        unique("regime", self.regimes.iter().map(|r| r.as_str()))?;
        let l = &self.limits;
        if l.cells == 0 || l.embed_batch_size == 0 || l.embed_concurrency == 0 || l.rewrite_concurrency == 0 {
            return Err(Error::config("limits must be at least 1"));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Short hash of the canonical config, echoed in every report.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
    }

    pub fn build_encoder(&self, enc: &EncoderConfig) -> Result<Arc<dyn EmbeddingEndpoint>> {
        Ok(match &enc.endpoint {
            EncoderEndpointConfig::Http {
                url,
                model,
                token_env,
                timeout_secs,
            } => Arc::new(HttpEmbeddingEndpoint::new(
                enc.id.clone(),
                model.clone(),
                url.clone(),
                token_from_env(token_env.as_deref())?,
                Duration::from_secs(*timeout_secs),
            )?),
            EncoderEndpointConfig::MockBow { dim, fail_on_substring } => {
                if *dim == 0 {
                    return Err(Error::config(format!("encoder {}: dim must be at least 1", enc.id)));
                }
                let mut e = BagOfWordsEmbedder::new(enc.id.clone(), *dim);
                if let Some(m) = fail_on_substring {
                    e = e.failing_on(m.clone());
                }
                Arc::new(e)
            }
        })
    }

    pub fn build_rewriter(&self, rw: &RewriterConfig) -> Result<Arc<dyn RewriterEndpoint>> {
        Ok(match &rw.endpoint {
            RewriterEndpointConfig::Http {
                url,
                model,
                token_env,
                timeout_secs,
            } => Arc::new(HttpChatEndpoint::new(
                rw.id.clone(),
                model.clone(),
                url.clone(),
                token_from_env(token_env.as_deref())?,
                Duration::from_secs(*timeout_secs),
            )?),
            RewriterEndpointConfig::Identity { fail_on_substring } => {
                let mut m = MockRewriter::identity(rw.id.clone());
                if let Some(s) = fail_on_substring {
                    m = m.failing_on(s.clone());
                }
                Arc::new(m)
            }
            RewriterEndpointConfig::Canned {
                table,
                on_missing,
                fail_on_substring,
            } => {
                let entries = read_canned(&self.resolve(table))?;
                let mut m = MockRewriter::canned(rw.id.clone(), entries, *on_missing);
                if let Some(s) = fail_on_substring {
                    m = m.failing_on(s.clone());
                }
                Arc::new(m)
            }
        })
    }
}

fn unique<'a>(what: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::config(format!("duplicate {what} {id:?}")));
        }
    }
    Ok(())
}

fn token_from_env(var: Option<&str>) -> Result<Option<String>> {
    match var {
        None => Ok(None),
        Some(v) => std::env::var(v)
            .map(Some)
            .map_err(|_| Error::config(format!("environment variable {v} is not set"))),
    }
}

/// Reads a canned rewrite table (one JSON object per line).
pub fn read_canned(path: &Path) -> Result<Vec<CannedEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut offset = 0u64;
    let mut out = Vec::new();
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len() as u64;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            offset: start,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[tasks]]
id = "t"
corpus = "corpus.jsonl"
queries = "queries.jsonl"
qrels = "qrels.tsv"
family = "TextToCode"

[[encoders]]
id = "bow"
endpoint = { kind = "mock-bow", dim = 64 }

[[rewriters]]
id = "id"
endpoint = { kind = "identity" }
"#;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL, "/x").unwrap();
        assert_eq!(c.k, 10);
        assert_eq!(c.strategies, Strategy::REWRITES.to_vec());
        assert_eq!(c.regimes, vec![Regime::QC, Regime::C]);
        assert_eq!(c.entropy_batch, BatchSize::Pooled);
        assert_eq!(c.encoders[0].tokenizer, TokenizerSpec::default());
        assert_eq!(c.resolve(Path::new("a")), PathBuf::from("/x/a"));
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(MINIMAL, "/x").unwrap();
        let b = ExperimentConfig::from_toml(&format!("seed = 7\n{MINIMAL}"), "/x").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ExperimentConfig::from_toml(MINIMAL, "/y").unwrap().hash());
    }

    #[test]
    fn rejects_bad_configs() {
        let no_enc = MINIMAL.split("[[encoders]]").next().unwrap();
        assert!(ExperimentConfig::from_toml(no_enc, "").unwrap_err().is_config());
        let bad = format!("strategies = [\"Baseline\"]\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&bad, "").is_err());
        let bad = format!("regimes = [\"None\"]\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&bad, "").is_err());
        let bad = format!("{MINIMAL}\n[[encoders]]\nid = \"bow\"\nendpoint = {{ kind = \"mock-bow\" }}\n");
        assert!(ExperimentConfig::from_toml(&bad, "").unwrap_err().to_string().contains("duplicate"));
        let bad = format!("api_key = \"x\"\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&bad, "").is_err());
    }

    #[test]
    fn tokens_only_from_env() {
        let e = token_from_env(Some("CODESHIFT_TEST_SURELY_UNSET_VAR")).unwrap_err();
        assert!(e.is_config());
        assert_eq!(token_from_env(None).unwrap(), None);
    }
}
