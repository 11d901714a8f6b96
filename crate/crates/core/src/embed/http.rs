//! Sentence embeddings over an OpenAI-style HTTP API.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedProvider};

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct WireResponse {
    data: Vec<WireData>,
}

#[derive(Deserialize)]
struct WireData {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// An embedding provider speaking the common `POST <base>/embeddings`
/// protocol with bearer-token auth.
#[derive(Debug)]
pub struct HttpEmbedProvider {
    id: String,
    base_url: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEmbedProvider {
    /// Creates a provider; `dim` must match what the remote model produces
    /// (mismatches surface as [`EmbedError::DimensionMismatch`] downstream).
    ///
    /// # Errors
    ///
    /// [`EmbedError::InvalidDimension`] for `dim < 2`, or a provider error
    /// when the HTTP client cannot be built.
    pub fn new(
        id: impl Into<String>,
        base_url: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
    ) -> Result<Self, EmbedError> {
        if dim < 2 {
            return Err(EmbedError::InvalidDimension { dim });
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|err| EmbedError::Provider {
                detail: format!("could not construct http client: {err}"),
                retryable: false,
            })?;
        Ok(Self {
            id: id.into(),
            base_url: base_url.into(),
            model: model.into(),
            dim,
            api_key: None,
            client,
        })
    }

    /// Sends `Authorization: Bearer <key>` with every request.
    #[must_use]
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }
}

impl EmbedProvider for HttpEmbedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let url = format!("{}/embeddings", self.base_url.trim_end_matches('/'));
        let wire = WireRequest {
            model: &self.model,
            input: texts,
        };
        let mut builder = self.client.post(&url).json(&wire);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|err| EmbedError::Provider {
            detail: format!("request failed: {err}"),
            retryable: true,
        })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|err| EmbedError::Provider {
            detail: format!("could not read response body: {err}"),
            retryable: true,
        })?;
        if status == 413 {
            return Err(EmbedError::PayloadTooLarge { batch: texts.len() });
        }
        if !(200..300).contains(&status) {
            return Err(EmbedError::Provider {
                detail: format!(
                    "http status {status}: {}",
                    body.chars().take(200).collect::<String>()
                ),
                retryable: status == 429 || (500..600).contains(&status),
            });
        }
        let parsed: WireResponse = serde_json::from_str(&body).map_err(|err| {
            EmbedError::Provider {
                detail: format!("unparseable embedding body: {err}"),
                retryable: false,
            }
        })?;
        let mut data = parsed.data;
        // Some providers return entries out of order but tagged with their
        // input index; restore input order before shape checks.
        let indexed = data.iter().all(|d| d.index.is_some());
        if indexed {
            data.sort_by_key(|d| d.index.unwrap_or(usize::MAX));
        }
        if data.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                found: data.len(),
            });
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
