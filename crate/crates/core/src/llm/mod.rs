//! Chat providers and corpus summarization.
//!
//! The summarizer makes at most one provider call per *unique* fragment:
//! fragments are keyed by content hash, looked up in the durable
//! [`SummaryStore`] first, and deduplicated within a run, so the number of
//! calls never depends on how many fragment *pairs* are later compared.
//! Failed sentence extractions are persisted as empty records (a rerun will
//! not repeat the call); transient provider failures are reported but not
//! persisted (a rerun will retry them).

mod fixture;
mod http;

pub use fixture::FixtureProvider;
pub use http::HttpChatProvider;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CodeFragment, Corpus};
use crate::hash::sha256_hex;
use crate::prompt::{extract_first_sentence, PromptLanguage, PromptTemplate, StopList, Summary};
use crate::store::{StoreError, SummaryKey, SummaryRecord, SummaryStore};

/// Errors from summarization runs.
#[derive(Debug, Error)]
pub enum LlmError {
    /// A provider call failed in a way that aborts the run (single-fragment
    /// summarization, or an authentication failure mid-corpus).
    #[error("provider error on fragment {fragment_id}: {source}")]
    Provider {
        fragment_id: String,
        #[source]
        source: ProviderError,
    },
    /// More fragments failed than the configured cap allows.
    #[error("summary failure rate exceeded cap: {failures}/{total} fragments failed (cap {cap})")]
    FailureCapExceeded {
        failures: usize,
        total: usize,
        cap: f64,
    },
    /// The chat request itself was malformed.
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    /// The summarize options were malformed.
    #[error("invalid summarize options: {0}")]
    InvalidOptions(String),
    /// The summary cache could not be read or written.
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// What went wrong on the provider side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderErrorKind {
    /// The request would not (or did not) fit the model's context window.
    ContextLengthExceeded,
    /// The provider asked us to slow down; worth retrying.
    RateLimited,
    /// Credentials are missing or rejected; retrying is pointless.
    Auth,
    /// Transport failure or server-side error; worth retrying.
    Network,
    /// The provider answered with something we could not interpret.
    MalformedResponse,
}

impl std::fmt::Display for ProviderErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::ContextLengthExceeded => "context length exceeded",
            Self::RateLimited => "rate limited",
            Self::Auth => "authentication failed",
            Self::Network => "network error",
            Self::MalformedResponse => "malformed response",
        };
        f.write_str(name)
    }
}

/// A classified provider failure.
#[derive(Debug, Clone, Error)]
#[error("{kind}: {detail}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub detail: String,
    /// Whether a retry might succeed. Derived from `kind` at construction.
    pub retryable: bool,
}

impl ProviderError {
    /// Classifies a failure; rate limits and network errors are retryable.
    #[must_use]
    pub fn new(kind: ProviderErrorKind, detail: impl Into<String>) -> Self {
        let retryable = matches!(
            kind,
            ProviderErrorKind::RateLimited | ProviderErrorKind::Network
        );
        Self {
            kind,
            detail: detail.into(),
            retryable,
        }
    }
}

/// Message author role, serialized lowercase as on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    #[must_use]
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    #[must_use]
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

/// A validated chat-completion request.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    /// Requires at least one message, the last of which must come from the
    /// user.
    ///
    /// # Errors
    ///
    /// [`LlmError::InvalidRequest`] otherwise.
    pub fn new(
        model: impl Into<String>,
        messages: Vec<ChatMessage>,
        max_output_tokens: u32,
        temperature: f64,
    ) -> Result<Self, LlmError> {
        let last = messages
            .last()
            .ok_or_else(|| LlmError::InvalidRequest("request has no messages".to_string()))?;
        if last.role != Role::User {
            return Err(LlmError::InvalidRequest(
                "the final message must come from the user".to_string(),
            ));
        }
        Ok(Self {
            model: model.into(),
            messages,
            max_output_tokens,
            temperature,
        })
    }
}

/// A source of chat completions.
pub trait ChatProvider: Send + Sync {
    /// Stable identifier; part of summary cache keys, so it should name the
    /// model it stands for.
    fn id(&self) -> &str;

    /// Performs one completion call.
    ///
    /// # Errors
    ///
    /// A classified [`ProviderError`].
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;

    /// Context window in tokens, when known. `None` disables preflight
    /// length checks.
    fn context_limit(&self) -> Option<u32> {
        None
    }

    /// Conservative token estimate for `request`: one token per four
    /// characters of message text, plus the requested completion budget.
    fn estimate_tokens(&self, request: &ChatRequest) -> u32 {
        let chars: usize = request
            .messages
            .iter()
            .map(|m| m.content.chars().count())
            .sum();
        let input = u32::try_from(chars.div_ceil(4)).unwrap_or(u32::MAX);
        input.saturating_add(request.max_output_tokens)
    }
}

/// Exponential-backoff retry schedule for retryable provider errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Additional attempts after the first (0 disables retries).
    pub max_retries: u32,
    /// Delay before the first retry; doubles per retry.
    pub initial_delay: Duration,
    /// Upper bound on the per-retry delay.
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// A policy that never retries.
    #[must_use]
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }
}

/// A successful completion plus how many retries it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatCompletion {
    pub text: String,
    pub retries: u32,
}

/// Calls the provider with retries and a preflight context-length check.
///
/// When the provider advertises a context limit and the estimated request
/// size exceeds it, this fails immediately *without any provider call*.
/// Retryable errors (rate limits, network) are retried with exponential
/// backoff; all other errors propagate at once.
///
/// # Errors
///
/// The final [`ProviderError`] once retries are exhausted, or the preflight
/// [`ProviderErrorKind::ContextLengthExceeded`].
pub fn chat_complete(
    provider: &dyn ChatProvider,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<ChatCompletion, ProviderError> {
    if let Some(limit) = provider.context_limit() {
        let estimate = provider.estimate_tokens(request);
        if estimate > limit {
            let input = estimate.saturating_sub(request.max_output_tokens);
            return Err(ProviderError::new(
                ProviderErrorKind::ContextLengthExceeded,
                format!(
                    "maximum context length is {limit} tokens; estimated request is \
                     {estimate} tokens ({input} in messages, {} in completion)",
                    request.max_output_tokens
                ),
            ));
        }
    }
    let mut retries = 0u32;
    let mut delay = policy.initial_delay;
    loop {
        match provider.complete(request) {
            Ok(text) => return Ok(ChatCompletion { text, retries }),
            Err(err) if err.retryable && retries < policy.max_retries => {
                retries += 1;
                std::thread::sleep(delay);
                delay = (delay * 2).min(policy.max_delay);
            }
            Err(err) => return Err(err),
        }
    }
}

/// Knobs for summarization runs.
#[derive(Debug, Clone)]
pub struct SummarizeOptions {
    /// Model name sent to the provider.
    pub model: String,
    /// Worker threads for corpus runs.
    pub parallelism: usize,
    /// Maximum tolerated fraction of failed fragments before the run errors.
    pub failure_cap: f64,
    pub retry: RetryPolicy,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl Default for SummarizeOptions {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".to_string(),
            parallelism: 4,
            failure_cap: 0.01,
            retry: RetryPolicy::default(),
            max_output_tokens: 256,
            temperature: 0.0,
        }
    }
}

fn validate_options(options: &SummarizeOptions) -> Result<(), LlmError> {
    if options.parallelism == 0 {
        return Err(LlmError::InvalidOptions(
            "parallelism must be at least 1".to_string(),
        ));
    }
    if !(0.0..=1.0).contains(&options.failure_cap) {
        return Err(LlmError::InvalidOptions(format!(
            "failure cap must be in [0, 1], got {}",
            options.failure_cap
        )));
    }
    if options.max_output_tokens == 0 {
        return Err(LlmError::InvalidOptions(
            "max_output_tokens must be at least 1".to_string(),
        ));
    }
    if !options.temperature.is_finite() || options.temperature < 0.0 {
        return Err(LlmError::InvalidOptions(format!(
            "temperature must be finite and non-negative, got {}",
            options.temperature
        )));
    }
    Ok(())
}

fn key_for(fragment: &CodeFragment, provider: &dyn ChatProvider, template: &PromptTemplate) -> SummaryKey {
    SummaryKey {
        fragment_hash: sha256_hex(fragment.text.as_bytes()),
        provider: provider.id().to_string(),
        lang: template.language().tag().to_string(),
        template_hash: template.body_hash(),
    }
}

/// Result of summarizing one fragment.
#[derive(Debug, Clone)]
pub struct FragmentSummary {
    /// The cached or freshly written record (empty summary = failed
    /// extraction).
    pub record: SummaryRecord,
    /// Whether the record came from the store without a provider call.
    pub cache_hit: bool,
    /// Retries spent on the provider call (0 on cache hits).
    pub retries: u32,
}

/// Summarizes one fragment, consulting and updating the store.
///
/// Cache hits (including cached failures) return without any provider call.
/// On a miss the extracted sentence — or an empty summary, when no sentence
/// could be extracted — is persisted before returning.
///
/// # Errors
///
/// Provider errors propagate as [`LlmError::Provider`] tagged with the
/// fragment id; nothing is persisted for them.
pub fn summarize_fragment(
    fragment: &CodeFragment,
    template: &PromptTemplate,
    provider: &dyn ChatProvider,
    store: &mut SummaryStore,
    options: &SummarizeOptions,
) -> Result<FragmentSummary, LlmError> {
    validate_options(options)?;
    let key = key_for(fragment, provider, template);
    if let Some(record) = store.get(&key) {
        return Ok(FragmentSummary {
            record: record.clone(),
            cache_hit: true,
            retries: 0,
        });
    }
    let request = ChatRequest::new(
        options.model.clone(),
        vec![ChatMessage::user(template.render(fragment))],
        options.max_output_tokens,
        options.temperature,
    )?;
    let completion = chat_complete(provider, &request, &options.retry).map_err(|source| {
        LlmError::Provider {
            fragment_id: fragment.id.clone(),
            source,
        }
    })?;
    let summary = extract_first_sentence(&completion.text, template.language()).unwrap_or_default();
    let record = SummaryRecord::new(key, fragment.id.clone(), summary, false);
    store.put(record.clone())?;
    Ok(FragmentSummary {
        record,
        cache_hit: false,
        retries: completion.retries,
    })
}

/// Per-fragment summarization result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SummaryOutcome {
    /// A usable summary sentence.
    Summarized(Summary),
    /// No summary: extraction failed (possibly cached) or the provider
    /// errored on this fragment.
    Failed { reason: String },
}

/// One corpus slot: the fragment id and what became of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub fragment_id: String,
    pub outcome: SummaryOutcome,
}

/// Summaries aligned to corpus order: entry `i` is for fragment `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarySet {
    pub entries: Vec<SummaryEntry>,
    pub provider_id: String,
    pub language: PromptLanguage,
}

impl SummarySet {
    #[must_use]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Iterates the successful summaries in corpus order.
    pub fn successes(&self) -> impl Iterator<Item = &Summary> {
        self.entries.iter().filter_map(|entry| match &entry.outcome {
            SummaryOutcome::Summarized(summary) => Some(summary),
            SummaryOutcome::Failed { .. } => None,
        })
    }

    #[must_use]
    pub fn failure_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|entry| matches!(entry.outcome, SummaryOutcome::Failed { .. }))
            .count()
    }

    /// Applies stop-word removal to every successful summary. A summary that
    /// loses all of its words becomes a failure; already failed entries pass
    /// through unchanged.
    #[must_use]
    pub fn remove_stop_words(&self, stops: &StopList) -> SummarySet {
        let entries = self
            .entries
            .iter()
            .map(|entry| {
                let outcome = match &entry.outcome {
                    SummaryOutcome::Summarized(summary) => {
                        match crate::prompt::remove_stop_words(summary, stops) {
                            Ok(stripped) => SummaryOutcome::Summarized(stripped),
                            Err(err) => SummaryOutcome::Failed {
                                reason: err.to_string(),
                            },
                        }
                    }
                    failed @ SummaryOutcome::Failed { .. } => failed.clone(),
                };
                SummaryEntry {
                    fragment_id: entry.fragment_id.clone(),
                    outcome,
                }
            })
            .collect();
        SummarySet {
            entries,
            provider_id: self.provider_id.clone(),
            language: self.language.clone(),
        }
    }
}

/// Tallies for one corpus summarization run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizeStats {
    /// Fragments in the corpus.
    pub total: usize,
    /// Unique fragments actually sent to the provider (never more than the
    /// number of distinct fragment texts, regardless of later pairing).
    pub provider_calls: usize,
    /// Fragments resolved without a fresh provider call: store hits plus
    /// in-run duplicates.
    pub cache_hits: usize,
    /// Fragments without a usable summary.
    pub failures: usize,
    /// Total provider-call retries across the run.
    pub retries: u64,
}

/// One failed fragment and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureNote {
    pub fragment_id: String,
    pub reason: String,
}

/// A completed corpus run: the aligned summaries plus accounting.
#[derive(Debug, Clone)]
pub struct SummaryRun {
    pub set: SummarySet,
    pub stats: SummarizeStats,
    /// Failed fragments in corpus order.
    pub failures: Vec<FailureNote>,
}

enum Source {
    Cached(SummaryRecord),
    Job(usize),
}

enum JobResult {
    Summarized(SummaryRecord),
    Failed { reason: String },
}

struct Job {
    key: SummaryKey,
    first_index: usize,
}

const CACHED_FAILURE_REASON: &str = "cached summarization failure";

fn outcome_from_record(
    record: &SummaryRecord,
    fragment_id: &str,
    language: &PromptLanguage,
) -> SummaryOutcome {
    if record.is_failed() {
        SummaryOutcome::Failed {
            reason: CACHED_FAILURE_REASON.to_string(),
        }
    } else {
        SummaryOutcome::Summarized(Summary {
            text: record.summary.clone(),
            fragment_id: fragment_id.to_string(),
            prompt_language: language.clone(),
            stopwords_removed: record.stopwords_removed,
        })
    }
}

/// Summarizes a whole corpus with at most one provider call per unique
/// fragment.
///
/// Fragments already in the store (successes *and* recorded failures) are
/// served from cache; identical texts within the corpus share a single call.
/// Work is spread over `options.parallelism` threads, but the returned
/// entries are always aligned to corpus order and serialize byte-identically
/// across runs with identical inputs.
///
/// Per-fragment provider failures are recorded (not persisted, so a rerun
/// retries them); failed extractions are persisted as empty records. When
/// more than `options.failure_cap` of the corpus fails, the run errors after
/// committing whatever succeeded.
///
/// # Errors
///
/// [`LlmError::Provider`] on authentication failures (retrying other
/// fragments would be pointless), [`LlmError::FailureCapExceeded`] when too
/// many fragments failed, [`LlmError::Store`] when the cache cannot be
/// written, [`LlmError::InvalidOptions`] for bad options.
pub fn summarize_corpus(
    corpus: &Corpus,
    template: &PromptTemplate,
    provider: &dyn ChatProvider,
    store: &mut SummaryStore,
    options: &SummarizeOptions,
) -> Result<SummaryRun, LlmError> {
    validate_options(options)?;

    // Phase 1: resolve cache hits and deduplicate the remaining work.
    let mut jobs: Vec<Job> = Vec::new();
    let mut job_of_key: HashMap<SummaryKey, usize> = HashMap::new();
    let mut sources: Vec<Source> = Vec::with_capacity(corpus.len());
    let mut cache_hits = 0usize;
    for (index, fragment) in corpus.fragments().iter().enumerate() {
        let key = key_for(fragment, provider, template);
        if let Some(record) = store.get(&key) {
            cache_hits += 1;
            sources.push(Source::Cached(record.clone()));
        } else if let Some(&job) = job_of_key.get(&key) {
            cache_hits += 1;
            sources.push(Source::Job(job));
        } else {
            let job = jobs.len();
            job_of_key.insert(key.clone(), job);
            jobs.push(Job {
                key,
                first_index: index,
            });
            sources.push(Source::Job(job));
        }
    }

    // Phase 2: run the unique jobs on a worker pool. Results land in
    // per-job cells, so completion order never affects output order.
    let results: Vec<OnceLock<JobResult>> = (0..jobs.len()).map(|_| OnceLock::new()).collect();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let fatal: Mutex<Option<LlmError>> = Mutex::new(None);
    let calls = AtomicUsize::new(0);
    let retries_total = AtomicU64::new(0);
    let store = Mutex::new(store);
    if !jobs.is_empty() {
        let workers = options.parallelism.min(jobs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| {
                    summarize_worker(
                        corpus, template, provider, options, &jobs, &results, &next, &stop,
                        &fatal, &calls, &retries_total, &store,
                    );
                });
            }
        });
    }
    if let Some(err) = fatal.into_inner().expect("fatal slot is not poisoned") {
        return Err(err);
    }

    // Phase 3: assemble entries in corpus order.
    let results: Vec<JobResult> = results
        .into_iter()
        .map(|cell| cell.into_inner().expect("every job ran to completion"))
        .collect();
    let mut entries = Vec::with_capacity(corpus.len());
    let mut failures = Vec::new();
    for (fragment, source) in corpus.fragments().iter().zip(&sources) {
        let outcome = match source {
            Source::Cached(record) => {
                outcome_from_record(record, &fragment.id, template.language())
            }
            Source::Job(job) => match &results[*job] {
                JobResult::Summarized(record) => {
                    outcome_from_record(record, &fragment.id, template.language())
                }
                JobResult::Failed { reason } => SummaryOutcome::Failed {
                    reason: reason.clone(),
                },
            },
        };
        if let SummaryOutcome::Failed { reason } = &outcome {
            failures.push(FailureNote {
                fragment_id: fragment.id.clone(),
                reason: reason.clone(),
            });
        }
        entries.push(SummaryEntry {
            fragment_id: fragment.id.clone(),
            outcome,
        });
    }

    let stats = SummarizeStats {
        total: corpus.len(),
        provider_calls: calls.load(Ordering::SeqCst),
        cache_hits,
        failures: failures.len(),
        retries: retries_total.load(Ordering::SeqCst),
    };
    let set = SummarySet {
        entries,
        provider_id: provider.id().to_string(),
        language: template.language().clone(),
    };
    if stats.total > 0 {
        let rate = stats.failures as f64 / stats.total as f64;
        if rate > options.failure_cap {
            return Err(LlmError::FailureCapExceeded {
                failures: stats.failures,
                total: stats.total,
                cap: options.failure_cap,
            });
        }
    }
    Ok(SummaryRun {
        set,
        stats,
        failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize_worker(
    corpus: &Corpus,
    template: &PromptTemplate,
    provider: &dyn ChatProvider,
    options: &SummarizeOptions,
    jobs: &[Job],
    results: &[OnceLock<JobResult>],
    next: &AtomicUsize,
    stop: &AtomicBool,
    fatal: &Mutex<Option<LlmError>>,
    calls: &AtomicUsize,
    retries_total: &AtomicU64,
    store: &Mutex<&mut SummaryStore>,
) {
    let abort = |err: LlmError| {
        let mut slot = fatal.lock().expect("fatal slot is not poisoned");
        if slot.is_none() {
            *slot = Some(err);
        }
        stop.store(true, Ordering::SeqCst);
    };
    loop {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        let index = next.fetch_add(1, Ordering::SeqCst);
        let Some(job) = jobs.get(index) else {
            return;
        };
        let fragment = &corpus.fragments()[job.first_index];
        let request = ChatRequest::new(
            options.model.clone(),
            vec![ChatMessage::user(template.render(fragment))],
            options.max_output_tokens,
            options.temperature,
        )
        .expect("a single user message is always a valid request");
        calls.fetch_add(1, Ordering::SeqCst);
        match chat_complete(provider, &request, &options.retry) {
            Ok(completion) => {
                retries_total.fetch_add(u64::from(completion.retries), Ordering::SeqCst);
                let (summary, failure) =
                    match extract_first_sentence(&completion.text, template.language()) {
                        Ok(sentence) => (sentence, None),
                        Err(err) => (String::new(), Some(err.to_string())),
                    };
                let record =
                    SummaryRecord::new(job.key.clone(), fragment.id.clone(), summary, false);
                if let Err(err) = store
                    .lock()
                    .expect("store lock is not poisoned")
                    .put(record.clone())
                {
                    abort(err.into());
                    return;
                }
                let result = match failure {
                    None => JobResult::Summarized(record),
                    Some(reason) => JobResult::Failed { reason },
                };
                let _ = results[index].set(result);
            }
            Err(err) if err.kind == ProviderErrorKind::Auth => {
                abort(LlmError::Provider {
                    fragment_id: fragment.id.clone(),
                    source: err,
                });
                return;
            }
            Err(err) => {
                let _ = results[index].set(JobResult::Failed {
                    reason: err.to_string(),
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LanguageHint;
    use std::sync::atomic::AtomicU32;

    fn corpus(texts: &[&str]) -> Corpus {
        let fragments = texts
            .iter()
            .enumerate()
            .map(|(i, text)| CodeFragment {
                id: format!("f{i}"),
                label: None,
                text: (*text).to_string(),
                language: LanguageHint::C,
                source_path: None,
            })
            .collect();
        Corpus::new("test", fragments).unwrap()
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_retries: 3,
            initial_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(4),
        }
    }

    fn options() -> SummarizeOptions {
        SummarizeOptions {
            retry: fast_retry(),
            ..SummarizeOptions::default()
        }
    }

    /// Provider that echoes a canned response keyed by fragment text, after
    /// failing a configurable number of times.
    struct FlakyProvider {
        kind: ProviderErrorKind,
        failures_before_success: u32,
        calls: AtomicU32,
        response: String,
    }

    impl FlakyProvider {
        fn new(kind: ProviderErrorKind, failures: u32, response: &str) -> Self {
            Self {
                kind,
                failures_before_success: failures,
                calls: AtomicU32::new(0),
                response: response.to_string(),
            }
        }
    }

    impl ChatProvider for FlakyProvider {
        fn id(&self) -> &str {
            "flaky"
        }

        fn complete(&self, _request: &ChatRequest) -> Result<String, ProviderError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            if call < self.failures_before_success {
                Err(ProviderError::new(self.kind, "scripted failure"))
            } else {
                Ok(self.response.clone())
            }
        }
    }

    fn fixture_for(corpus: &Corpus, template: &PromptTemplate) -> FixtureProvider {
        let pairs = corpus.fragments().iter().map(|fragment| {
            (
                template.render(fragment),
                format!("This code handles {}. It was generated for a test.", fragment.id),
            )
        });
        FixtureProvider::from_pairs("fixture", pairs)
    }

    fn store_in(dir: &tempfile::TempDir) -> SummaryStore {
        SummaryStore::open(dir.path().join("summaries.jsonl")).unwrap()
    }

    #[test]
    fn summarize_fragment_cold_then_cached() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["int main() { return 0; }"]);
        let fragment = &corpus.fragments()[0];
        let provider = fixture_for(&corpus, &template);

        let first =
            summarize_fragment(fragment, &template, &provider, &mut store, &options()).unwrap();
        assert!(!first.cache_hit);
        assert_eq!(first.record.summary, "This code handles f0.");
        assert_eq!(provider.calls(), 1);

        let second =
            summarize_fragment(fragment, &template, &provider, &mut store, &options()).unwrap();
        assert!(second.cache_hit);
        assert_eq!(second.record, first.record);
        assert_eq!(provider.calls(), 1, "cache hit must not call the provider");
    }

    #[test]
    fn chat_complete_retries_rate_limits() {
        let provider = FlakyProvider::new(ProviderErrorKind::RateLimited, 2, "Fine. Extra.");
        let request = ChatRequest::new(
            "m",
            vec![ChatMessage::user("hello")],
            16,
            0.0,
        )
        .unwrap();
        let completion = chat_complete(&provider, &request, &fast_retry()).unwrap();
        assert_eq!(completion.retries, 2);
        assert_eq!(completion.text, "Fine. Extra.");
        assert_eq!(provider.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn chat_complete_gives_up_after_max_retries() {
        let provider = FlakyProvider::new(ProviderErrorKind::RateLimited, 10, "never");
        let request = ChatRequest::new("m", vec![ChatMessage::user("hello")], 16, 0.0).unwrap();
        let err = chat_complete(&provider, &request, &fast_retry()).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::RateLimited);
        // 1 initial + 3 retries.
        assert_eq!(provider.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let provider = FlakyProvider::new(ProviderErrorKind::Auth, 10, "never");
        let request = ChatRequest::new("m", vec![ChatMessage::user("hello")], 16, 0.0).unwrap();
        let err = chat_complete(&provider, &request, &fast_retry()).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Auth);
        assert!(!err.retryable);
        assert_eq!(provider.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn preflight_context_check_makes_no_call() {
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["x".repeat(4000).as_str()]);
        let provider = fixture_for(&corpus, &template).with_context_limit(100);
        let request = ChatRequest::new(
            "m",
            vec![ChatMessage::user(template.render(&corpus.fragments()[0]))],
            256,
            0.0,
        )
        .unwrap();
        let err = chat_complete(&provider, &request, &fast_retry()).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::ContextLengthExceeded);
        assert!(err.detail.contains("maximum context length is 100 tokens"));
        assert_eq!(provider.calls(), 0, "preflight failure must not hit the provider");
    }

    #[test]
    fn estimate_counts_chars_and_output_budget() {
        let provider = FlakyProvider::new(ProviderErrorKind::Network, 0, "ok");
        let request =
            ChatRequest::new("m", vec![ChatMessage::user("12345678")], 100, 0.0).unwrap();
        // ceil(8 / 4) = 2 input tokens plus the completion budget.
        assert_eq!(provider.estimate_tokens(&request), 102);
    }

    #[test]
    fn chat_request_requires_trailing_user_message() {
        assert!(matches!(
            ChatRequest::new("m", vec![], 1, 0.0),
            Err(LlmError::InvalidRequest(_))
        ));
        assert!(matches!(
            ChatRequest::new("m", vec![ChatMessage::system("s")], 1, 0.0),
            Err(LlmError::InvalidRequest(_))
        ));
        assert!(ChatRequest::new(
            "m",
            vec![ChatMessage::system("s"), ChatMessage::user("u")],
            1,
            0.0
        )
        .is_ok());
    }

    #[test]
    fn corpus_run_calls_once_per_unique_fragment() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        // f0 and f2 share a text: 3 fragments, 2 unique.
        let corpus = corpus(&["int a;", "int b;", "int a;"]);
        let provider = fixture_for(&corpus, &template);

        let run =
            summarize_corpus(&corpus, &template, &provider, &mut store, &options()).unwrap();
        assert_eq!(provider.calls(), 2, "duplicate texts must share one call");
        assert_eq!(run.stats.provider_calls, 2);
        assert_eq!(run.stats.cache_hits, 1);
        assert_eq!(run.stats.total, 3);
        assert_eq!(run.stats.failures, 0);
        // Aligned to corpus order; f0 and f2 share one summary text (the
        // fixture keys responses by prompt, so the duplicate prompt resolves
        // to a single response) but each keeps its own fragment id.
        let ids: Vec<&str> = run.set.entries.iter().map(|e| e.fragment_id.as_str()).collect();
        assert_eq!(ids, ["f0", "f1", "f2"]);
        let texts: Vec<&str> = run.set.successes().map(|s| s.text.as_str()).collect();
        assert_eq!(texts[0], texts[2], "duplicate texts share a summary");
        assert_eq!(texts[1], "This code handles f1.");
        assert_eq!(run.set.entries[2].fragment_id, "f2");
        if let SummaryOutcome::Summarized(summary) = &run.set.entries[2].outcome {
            assert_eq!(summary.fragment_id, "f2");
        } else {
            panic!("duplicate fragment should be summarized");
        }
    }

    #[test]
    fn warm_rerun_is_all_cache_hits() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["int a;", "int b;", "int c;"]);
        let provider = fixture_for(&corpus, &template);

        summarize_corpus(&corpus, &template, &provider, &mut store, &options()).unwrap();
        assert_eq!(provider.calls(), 3);

        let rerun =
            summarize_corpus(&corpus, &template, &provider, &mut store, &options()).unwrap();
        assert_eq!(provider.calls(), 3, "warm rerun must not call the provider");
        assert_eq!(rerun.stats.provider_calls, 0);
        assert_eq!(rerun.stats.cache_hits, 3);
    }

    #[test]
    fn parallel_runs_serialize_byte_identically() {
        let template = PromptTemplate::english_default();
        let texts: Vec<String> = (0..40).map(|i| format!("int v{i};")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let corpus = corpus(&refs);
        let provider = fixture_for(&corpus, &template);

        let mut serialized = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let mut store = store_in(&dir);
            let run =
                summarize_corpus(&corpus, &template, &provider, &mut store, &options()).unwrap();
            serialized.push(serde_json::to_string(&run.set).unwrap());
        }
        assert_eq!(serialized[0], serialized[1]);
    }

    #[test]
    fn failed_extraction_is_persisted_and_cached() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["int a;", "int b;"]);
        // f1's response is whitespace, so no sentence can be extracted.
        let provider = FixtureProvider::from_pairs(
            "fixture",
            vec![
                (
                    template.render(&corpus.fragments()[0]),
                    "Declares an integer.".to_string(),
                ),
                (template.render(&corpus.fragments()[1]), "   ".to_string()),
            ],
        );
        let lax = SummarizeOptions {
            failure_cap: 1.0,
            ..options()
        };

        let run = summarize_corpus(&corpus, &template, &provider, &mut store, &lax).unwrap();
        assert_eq!(run.stats.failures, 1);
        assert_eq!(run.failures.len(), 1);
        assert_eq!(run.failures[0].fragment_id, "f1");
        assert_eq!(store.len(), 2, "failed extraction must be persisted");

        // The failure is served from cache: no new provider calls.
        let rerun = summarize_corpus(&corpus, &template, &provider, &mut store, &lax).unwrap();
        assert_eq!(provider.calls(), 2);
        assert_eq!(rerun.stats.provider_calls, 0);
        assert_eq!(rerun.stats.failures, 1);
        assert_eq!(
            rerun.failures[0].reason, CACHED_FAILURE_REASON,
            "cached failures must be identifiable"
        );
    }

    #[test]
    fn provider_failure_is_not_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["int a;", "int b;"]);
        // Only f0 has a scripted response; f1 misses and errors.
        let provider = FixtureProvider::from_pairs(
            "fixture",
            vec![(
                template.render(&corpus.fragments()[0]),
                "Declares an integer.".to_string(),
            )],
        );
        let lax = SummarizeOptions {
            failure_cap: 1.0,
            ..options()
        };

        let run = summarize_corpus(&corpus, &template, &provider, &mut store, &lax).unwrap();
        assert_eq!(run.stats.failures, 1);
        assert_eq!(store.len(), 1, "provider failures must not be persisted");

        // A rerun retries the failed fragment.
        let calls_before = provider.calls();
        summarize_corpus(&corpus, &template, &provider, &mut store, &lax).unwrap();
        assert_eq!(provider.calls(), calls_before + 1);
    }

    #[test]
    fn failure_cap_aborts_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["int a;", "int b;"]);
        let provider = FixtureProvider::from_pairs(
            "fixture",
            vec![(
                template.render(&corpus.fragments()[0]),
                "Declares an integer.".to_string(),
            )],
        );
        let strict = SummarizeOptions {
            failure_cap: 0.0,
            ..options()
        };
        let err =
            summarize_corpus(&corpus, &template, &provider, &mut store, &strict).unwrap_err();
        match err {
            LlmError::FailureCapExceeded {
                failures,
                total,
                cap,
            } => {
                assert_eq!((failures, total), (1, 2));
                assert_eq!(cap, 0.0);
            }
            other => panic!("expected FailureCapExceeded, got {other}"),
        }
        // Work that succeeded before the cap check is still committed.
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn auth_failure_aborts_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["int a;", "int b;", "int c;"]);
        let provider = FlakyProvider::new(ProviderErrorKind::Auth, u32::MAX, "never");
        let err =
            summarize_corpus(&corpus, &template, &provider, &mut store, &options()).unwrap_err();
        match err {
            LlmError::Provider { source, .. } => assert_eq!(source.kind, ProviderErrorKind::Auth),
            other => panic!("expected Provider error, got {other}"),
        }
    }

    #[test]
    fn invalid_options_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(&dir);
        let template = PromptTemplate::english_default();
        let corpus = corpus(&["int a;"]);
        let provider = fixture_for(&corpus, &template);
        for bad in [
            SummarizeOptions {
                parallelism: 0,
                ..options()
            },
            SummarizeOptions {
                failure_cap: 1.5,
                ..options()
            },
            SummarizeOptions {
                failure_cap: -0.1,
                ..options()
            },
            SummarizeOptions {
                max_output_tokens: 0,
                ..options()
            },
            SummarizeOptions {
                temperature: f64::NAN,
                ..options()
            },
        ] {
            let err = summarize_corpus(&corpus, &template, &provider, &mut store, &bad)
                .unwrap_err();
            assert!(matches!(err, LlmError::InvalidOptions(_)), "got {err}");
        }
        assert_eq!(provider.calls(), 0);
    }

    #[test]
    fn stop_word_removal_maps_and_fails_all_stop_summaries() {
        let stops = StopList::new(["this", "code", "the"]);
        let set = SummarySet {
            entries: vec![
                SummaryEntry {
                    fragment_id: "a".to_string(),
                    outcome: SummaryOutcome::Summarized(Summary {
                        text: "This code sorts the array.".to_string(),
                        fragment_id: "a".to_string(),
                        prompt_language: PromptLanguage::English,
                        stopwords_removed: false,
                    }),
                },
                SummaryEntry {
                    fragment_id: "b".to_string(),
                    outcome: SummaryOutcome::Summarized(Summary {
                        text: "this code the".to_string(),
                        fragment_id: "b".to_string(),
                        prompt_language: PromptLanguage::English,
                        stopwords_removed: false,
                    }),
                },
                SummaryEntry {
                    fragment_id: "c".to_string(),
                    outcome: SummaryOutcome::Failed {
                        reason: "already failed".to_string(),
                    },
                },
            ],
            provider_id: "p".to_string(),
            language: PromptLanguage::English,
        };
        let stripped = set.remove_stop_words(&stops);
        let texts: Vec<&str> = stripped.successes().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["sorts array."]);
        assert_eq!(stripped.failure_count(), 2);
        assert!(stripped.successes().all(|s| s.stopwords_removed));
    }
}
