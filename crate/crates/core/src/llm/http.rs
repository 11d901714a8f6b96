//! Chat completions over an OpenAI-style HTTP API.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatProvider, ChatRequest, ProviderError, ProviderErrorKind};

/// On-the-wire request body: note the `max_tokens` spelling.
#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireErrorBody {
    error: WireErrorDetail,
}

#[derive(Deserialize, Default)]
struct WireErrorDetail {
    #[serde(default)]
    message: String,
    #[serde(default)]
    code: Option<String>,
}

/// Classifies a non-success HTTP response.
///
/// The error body's `code` field wins over the status: providers report
/// over-long prompts as plain 400s with `code == "context_length_exceeded"`.
fn classify_http_error(status: u16, body: &str) -> ProviderError {
    let detail_body: WireErrorDetail = serde_json::from_str::<WireErrorBody>(body)
        .map(|b| b.error)
        .unwrap_or_default();
    let message = if detail_body.message.is_empty() {
        body.chars().take(200).collect::<String>()
    } else {
        detail_body.message
    };
    let detail = format!("http status {status}: {message}");
    if detail_body.code.as_deref() == Some("context_length_exceeded") {
        return ProviderError::new(ProviderErrorKind::ContextLengthExceeded, detail);
    }
    let kind = match status {
        429 => ProviderErrorKind::RateLimited,
        401 | 403 => ProviderErrorKind::Auth,
        500..=599 => ProviderErrorKind::Network,
        _ => ProviderErrorKind::MalformedResponse,
    };
    ProviderError::new(kind, detail)
}

/// A chat provider speaking the common `POST <base>/chat/completions`
/// protocol with bearer-token auth.
#[derive(Debug)]
pub struct HttpChatProvider {
    id: String,
    base_url: String,
    api_key: Option<String>,
    context_limit: Option<u32>,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    /// Creates a provider for `base_url` (with or without a trailing slash).
    ///
    /// # Errors
    ///
    /// [`ProviderErrorKind::Network`] when the HTTP client cannot be built.
    pub fn new(id: impl Into<String>, base_url: impl Into<String>) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|err| {
                ProviderError::new(
                    ProviderErrorKind::Network,
                    format!("could not construct http client: {err}"),
                )
            })?;
        Ok(Self {
            id: id.into(),
            base_url: base_url.into(),
            api_key: None,
            context_limit: None,
            client,
        })
    }

    /// Sends `Authorization: Bearer <key>` with every request.
    #[must_use]
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Enables preflight context-length checks.
    #[must_use]
    pub fn with_context_limit(mut self, limit: u32) -> Self {
        self.context_limit = Some(limit);
        self
    }

    #[must_use]
    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl ChatProvider for HttpChatProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let wire = WireRequest {
            model: &request.model,
            messages: &request.messages,
            max_tokens: request.max_output_tokens,
            temperature: request.temperature,
        };
        let mut builder = self.client.post(&url).json(&wire);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|err| {
            ProviderError::new(ProviderErrorKind::Network, format!("request failed: {err}"))
        })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|err| {
            ProviderError::new(
                ProviderErrorKind::Network,
                format!("could not read response body: {err}"),
            )
        })?;
        if !(200..300).contains(&status) {
            return Err(classify_http_error(status, &body));
        }
        let parsed: WireResponse = serde_json::from_str(&body).map_err(|err| {
            ProviderError::new(
                ProviderErrorKind::MalformedResponse,
                format!("unparseable completion body: {err}"),
            )
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|choice| choice.message.content)
            .ok_or_else(|| {
                ProviderError::new(
                    ProviderErrorKind::MalformedResponse,
                    "completion had no choices".to_string(),
                )
            })
    }

    fn context_limit(&self) -> Option<u32> {
        self.context_limit
    }
}
