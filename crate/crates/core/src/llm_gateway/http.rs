//! OpenAI-compatible HTTP backend (`/v1/chat/completions`, `/v1/embeddings`).

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, EmbeddingBackend, EndpointProfile, GatewayError};
use crate::text::{TokenCounter, WhitespaceTokenizer};

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Serialize)]
struct EmbeddingBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Joins `path` (e.g. `/chat/completions`) onto a base URL, adding `/v1`
/// unless the base already ends with it.
pub fn endpoint_url(base_url: &str, path: &str) -> String {
    let base = base_url.trim_end_matches('/');
    if base.ends_with("/v1") {
        format!("{base}{path}")
    } else {
        format!("{base}/v1{path}")
    }
}

pub struct OpenAiCompatible {
    client: Client,
    base_url: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for OpenAiCompatible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiCompatible")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

fn classify(err: reqwest::Error) -> BackendError {
    if err.is_timeout() || err.is_connect() || err.is_request() {
        BackendError::Transient(err.to_string())
    } else {
        BackendError::Fatal(err.to_string())
    }
}

fn status_error(status: StatusCode, body: String) -> BackendError {
    let message = format!("HTTP {status}: {}", body.chars().take(500).collect::<String>());
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        BackendError::Transient(message)
    } else {
        BackendError::Fatal(message)
    }
}

impl OpenAiCompatible {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: std::time::Duration,
    ) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(OpenAiCompatible {
            client,
            base_url: base_url.into(),
            api_key,
        })
    }

    /// Reads the API key from the profile's environment variable, if set.
    pub fn from_profile(profile: &EndpointProfile) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&profile.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(profile.base_url.clone(), api_key, profile.timeout())
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, BackendError> {
        let mut request = self.client.post(endpoint_url(&self.base_url, path)).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(status_error(status, response.text().unwrap_or_default()));
        }
        let text = response.text().map_err(classify)?;
        serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("malformed response body: {e}")))
    }
}

impl ChatBackend for OpenAiCompatible {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let body = ChatBody {
            model: request.model,
            messages: vec![Message {
                role: "user",
                content: request.prompt,
            }],
            temperature: request.config.temperature,
            max_tokens: request.config.max_new_tokens,
            seed: request.config.seed,
        };
        let response: ChatResponse = self.post("/chat/completions", &body)?;
        Ok(response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

impl EmbeddingBackend for OpenAiCompatible {
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let response: EmbeddingResponse = self.post("/embeddings", &EmbeddingBody { model, input: texts })?;
        let mut items = response.data;
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index);
        }
        Ok(items.into_iter().map(|i| i.embedding).collect())
    }
}

#[derive(Serialize)]
struct TokenizeBody<'a> {
    model: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct TokenizeResponse {
    count: usize,
}

/// Token counts from a server exposing `POST /tokenize` (`{model, prompt}` →
/// `{count}`). Falls back to whitespace counting when the call fails.
pub struct RemoteTokenizer {
    client: Client,
    url: String,
    model: String,
}

impl RemoteTokenizer {
    pub fn new(base_url: &str, model: impl Into<String>) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(RemoteTokenizer {
            client,
            url: format!("{}/tokenize", base_url.trim_end_matches('/').trim_end_matches("/v1")),
            model: model.into(),
        })
    }

    fn remote_count(&self, text: &str) -> Result<usize, reqwest::Error> {
        let response: TokenizeResponse = self
            .client
            .post(&self.url)
            .json(&TokenizeBody {
                model: &self.model,
                prompt: text,
            })
            .send()?
            .error_for_status()?
            .json()?;
        Ok(response.count)
    }
}

impl TokenCounter for RemoteTokenizer {
    fn count(&self, text: &str) -> usize {
        match self.remote_count(text) {
            Ok(n) => n,
            Err(e) => {
                log::warn!("tokenizer endpoint failed ({e}); counting whitespace tokens");
                WhitespaceTokenizer.count(text)
            }
        }
    }
}
