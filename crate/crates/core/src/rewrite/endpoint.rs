use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::Strategy;
use crate::error::{Error, Result};

/// One rendered rewrite prompt.
#[derive(Debug, Clone)]
pub struct RewriteRequest<'a> {
    pub strategy: Strategy,
    pub system: &'a str,
    pub user: String,
    /// The raw text substituted into the prompt.
    pub input: &'a str,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub truncated: bool,
}

pub trait RewriterEndpoint: Send + Sync {
    fn rewriter_id(&self) -> &str;
    fn complete(&self, request: &RewriteRequest<'_>) -> Result<Completion>;
}

/// Chat-completions-compatible HTTP endpoint, sampled at temperature 0.
pub struct HttpChatEndpoint {
    rewriter_id: String,
    model: String,
    url: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpChatEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatEndpoint")
            .field("rewriter_id", &self.rewriter_id)
            .field("model", &self.model)
            .field("url", &self.url)
            .field("token", &self.token.as_ref().map(|_| "[REDACTED]"))
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatEndpoint {
    pub fn new(
        rewriter_id: impl Into<String>,
        model: impl Into<String>,
        url: impl Into<String>,
        token: Option<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let rewriter_id = rewriter_id.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Endpoint {
                endpoint: rewriter_id.clone(),
                message: e.to_string(),
            })?;
        Ok(Self {
            rewriter_id,
            model: model.into(),
            url: url.into(),
            token,
            client,
        })
    }

    pub fn request_body(&self, req: &RewriteRequest<'_>) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": 0,
            "max_tokens": req.max_tokens,
        })
    }

    pub fn parse_response(&self, body: &str) -> Result<Completion> {
        let err = |message: String| Error::Endpoint {
            endpoint: self.rewriter_id.clone(),
            message,
        };
        let resp: ChatResponse = serde_json::from_str(body).map_err(|e| err(format!("bad response body: {e}")))?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| err("response has no choices".into()))?;
        Ok(Completion {
            text: choice.message.content.unwrap_or_default(),
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}

impl RewriterEndpoint for HttpChatEndpoint {
    fn rewriter_id(&self) -> &str {
        &self.rewriter_id
    }

    fn complete(&self, request: &RewriteRequest<'_>) -> Result<Completion> {
        let mut req = self.client.post(&self.url).json(&self.request_body(request));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let err = |message: String| Error::Endpoint {
            endpoint: self.rewriter_id.clone(),
            message,
        };
        let resp = req.send().map_err(|e| err(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| err(e.to_string()))?;
        if !status.is_success() {
            return Err(err(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>())));
        }
        self.parse_response(&body)
    }
}

/// What a [`MockRewriter`] does with an input missing from its table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnMissing {
    /// Return the input unchanged.
    #[default]
    Identity,
    Fail,
}

/// One canned mapping; `strategy` restricts it to one strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CannedEntry {
    #[serde(default)]
    pub strategy: Option<Strategy>,
    pub input: String,
    pub output: String,
}

/// Offline rewriter: looks the raw input up in a table, otherwise echoes it
/// (or fails). With an empty table it is the identity rewriter.
#[derive(Debug, Clone)]
pub struct MockRewriter {
    rewriter_id: String,
    table: HashMap<(Option<Strategy>, String), String>,
    on_missing: OnMissing,
    fail_on_substring: Option<String>,
}

impl MockRewriter {
    pub fn identity(rewriter_id: impl Into<String>) -> Self {
        Self {
            rewriter_id: rewriter_id.into(),
            table: HashMap::new(),
            on_missing: OnMissing::Identity,
            fail_on_substring: None,
        }
    }

    pub fn canned(rewriter_id: impl Into<String>, entries: impl IntoIterator<Item = CannedEntry>, on_missing: OnMissing) -> Self {
        let mut m = Self::identity(rewriter_id);
        m.on_missing = on_missing;
        for e in entries {
            m.table.insert((e.strategy, e.input), e.output);
        }
        m
    }

    /// Every input containing `marker` fails.
    pub fn failing_on(mut self, marker: impl Into<String>) -> Self {
        self.fail_on_substring = Some(marker.into());
        self
    }
}

impl RewriterEndpoint for MockRewriter {
    fn rewriter_id(&self) -> &str {
        &self.rewriter_id
    }

    fn complete(&self, request: &RewriteRequest<'_>) -> Result<Completion> {
        let fail = |message: String| Error::Endpoint {
            endpoint: self.rewriter_id.clone(),
            message,
        };
        if let Some(marker) = &self.fail_on_substring {
            if request.input.contains(marker.as_str()) {
                return Err(fail(format!("injected failure on {marker:?}")));
            }
        }
        let hit = self
            .table
            .get(&(Some(request.strategy), request.input.to_string()))
            .or_else(|| self.table.get(&(None, request.input.to_string())));
        match (hit, self.on_missing) {
            (Some(out), _) => Ok(Completion {
                text: out.clone(),
                truncated: false,
            }),
            (None, OnMissing::Identity) => Ok(Completion {
                text: request.input.to_string(),
                truncated: false,
            }),
            (None, OnMissing::Fail) => Err(fail("no canned output for input".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(input: &str, strategy: Strategy) -> RewriteRequest<'_> {
        RewriteRequest {
            strategy,
            system: "sys",
            user: format!("do: {input}"),
            input,
            max_tokens: 16,
        }
    }

    #[test]
    fn chat_wire_format() {
        let ep = HttpChatEndpoint::new("rw", "m", "http://localhost:1/v1/chat/completions", None, Duration::from_secs(1)).unwrap();
        let body = ep.request_body(&req("x", Strategy::NL));
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["max_tokens"], 16);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "do: x");
        let c = ep
            .parse_response(r#"{"choices":[{"message":{"role":"assistant","content":"hi"},"finish_reason":"length"}]}"#)
            .unwrap();
        assert_eq!(c, Completion { text: "hi".into(), truncated: true });
        assert!(ep.parse_response(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn mock_lookup_order() {
        let m = MockRewriter::canned(
            "m",
            [
                CannedEntry { strategy: None, input: "a".into(), output: "any".into() },
                CannedEntry { strategy: Some(Strategy::NL), input: "a".into(), output: "nl".into() },
            ],
            OnMissing::Fail,
        );
        assert_eq!(m.complete(&req("a", Strategy::NL)).unwrap().text, "nl");
        assert_eq!(m.complete(&req("a", Strategy::Pseudo)).unwrap().text, "any");
        assert!(m.complete(&req("b", Strategy::NL)).is_err());
        let id = MockRewriter::identity("id").failing_on("!!");
        assert_eq!(id.complete(&req("b", Strategy::NL)).unwrap().text, "b");
        assert!(id.complete(&req("b!!", Strategy::NL)).is_err());
    }
}
