//! A canned chat provider for tests and offline replays.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Deserialize;

use super::{ChatProvider, ChatRequest, ProviderError, ProviderErrorKind, Role};

/// Replays canned responses keyed by the final user message.
///
/// An unknown prompt is a (non-retryable) [`ProviderErrorKind::MalformedResponse`]
/// error, which makes missing fixtures loud instead of silently empty.
#[derive(Debug)]
pub struct FixtureProvider {
    id: String,
    responses: HashMap<String, String>,
    calls: AtomicU64,
    context_limit: Option<u32>,
}

/// One line of a fixture file.
#[derive(Debug, Deserialize)]
struct FixtureLine {
    prompt: String,
    response: String,
}

impl FixtureProvider {
    /// Builds a provider from in-memory (prompt, response) pairs.
    #[must_use]
    pub fn from_pairs(
        id: impl Into<String>,
        pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        Self {
            id: id.into(),
            responses: pairs.into_iter().collect(),
            calls: AtomicU64::new(0),
            context_limit: None,
        }
    }

    /// Loads `{"prompt": …, "response": …}` JSON lines from `path`.
    ///
    /// # Errors
    ///
    /// [`ProviderErrorKind::MalformedResponse`] when the file cannot be read
    /// or a line cannot be parsed.
    pub fn from_file(id: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        let contents = fs::read_to_string(path).map_err(|err| {
            ProviderError::new(
                ProviderErrorKind::MalformedResponse,
                format!("could not read fixture file {}: {err}", path.display()),
            )
        })?;
        let mut responses = HashMap::new();
        for (number, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine = serde_json::from_str(line).map_err(|err| {
                ProviderError::new(
                    ProviderErrorKind::MalformedResponse,
                    format!(
                        "bad fixture line {} in {}: {err}",
                        number + 1,
                        path.display()
                    ),
                )
            })?;
            responses.insert(parsed.prompt, parsed.response);
        }
        Ok(Self {
            id: id.into(),
            responses,
            calls: AtomicU64::new(0),
            context_limit: None,
        })
    }

    /// Advertises a context window so preflight length checks apply.
    #[must_use]
    pub fn with_context_limit(mut self, limit: u32) -> Self {
        self.context_limit = Some(limit);
        self
    }

    /// How many times `complete` has been invoked.
    #[must_use]
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatProvider for FixtureProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        self.responses.get(prompt).cloned().ok_or_else(|| {
            ProviderError::new(
                ProviderErrorKind::MalformedResponse,
                format!(
                    "no fixture response for prompt starting {:?}",
                    prompt.chars().take(60).collect::<String>()
                ),
            )
        })
    }

    fn context_limit(&self) -> Option<u32> {
        self.context_limit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    fn request(prompt: &str) -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::user(prompt)], 16, 0.0).unwrap()
    }

    #[test]
    fn replays_by_last_user_message() {
        let provider = FixtureProvider::from_pairs(
            "fix",
            vec![("hello".to_string(), "Hi there.".to_string())],
        );
        assert_eq!(provider.complete(&request("hello")).unwrap(), "Hi there.");
        assert_eq!(provider.calls(), 1);
    }

    #[test]
    fn unknown_prompt_is_a_malformed_response_error() {
        let provider = FixtureProvider::from_pairs("fix", vec![]);
        let err = provider.complete(&request("unseen")).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::MalformedResponse);
        assert!(!err.retryable);
    }

    #[test]
    fn loads_json_lines_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        std::fs::write(
            &path,
            "{\"prompt\":\"a\",\"response\":\"Alpha.\"}\n\n{\"prompt\":\"b\",\"response\":\"Beta.\"}\n",
        )
        .unwrap();
        let provider = FixtureProvider::from_file("fix", &path).unwrap();
        assert_eq!(provider.len(), 2);
        assert_eq!(provider.complete(&request("b")).unwrap(), "Beta.");
    }

    #[test]
    fn bad_fixture_line_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        std::fs::write(&path, "{\"prompt\":\"a\",\"response\":\"A.\"}\nnot json\n").unwrap();
        let err = FixtureProvider::from_file("fix", &path).unwrap_err();
        assert!(err.detail.contains("line 2"), "detail: {}", err.detail);
    }
}
