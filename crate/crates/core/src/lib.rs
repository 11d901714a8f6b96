//! Clone detection and clustering for source-code corpora via natural-language
//! summaries.
//!
//! The pipeline turns each code fragment into a single descriptive sentence
//! (one LLM call per unique fragment, cached on disk), embeds those sentences
//! as unit vectors, and then answers similarity questions with cheap vector
//! arithmetic: cosine thresholding for clone detection, k-means for
//! clustering, and t-SNE for 2-D inspection plots.
//!
//! Modules follow the pipeline order:
//!
//! - [`dataset`] — corpus loading, labeled pair sets, balanced pair sampling
//! - [`prompt`] — summarization prompt templates, sentence extraction,
//!   stop-word removal
//! - [`llm`] — chat providers, retries, corpus summarization
//! - [`store`] — append-only JSONL cache of summaries keyed by content hash
//! - [`embed`] — sentence-embedding providers and fixed-width vector sets
//! - [`cloneval`] — cosine-threshold clone classification and threshold sweeps
//! - [`cluster`] — k-means (k-means++ seeding, Lloyd iterations, restarts)
//! - [`metrics`] — accuracy/precision/recall/F1 and the adjusted Rand index
//! - [`viz`] — exact t-SNE projection to 2-D with KL trace

pub mod cloneval;
pub mod cluster;
pub mod dataset;
pub mod embed;
pub mod hash;
pub mod llm;
pub mod matrix;
pub mod metrics;
pub mod prompt;
pub mod store;
#[cfg(test)]
pub(crate) mod testserver;
pub mod viz;

pub use cloneval::{ClonePrediction, EvalError, SweepRow, SweepTable, ThresholdConfig};
pub use cluster::{ClusterError, ClusteringResult, KmeansConfig};
pub use dataset::{CodeFragment, Corpus, CorpusLayout, DatasetError, LabeledPair, PairDataset};
pub use embed::{
    DeterministicEmbedProvider, EmbedError, EmbedProvider, EmbeddingSet, HttpEmbedProvider,
};
pub use llm::{
    ChatCompletion, ChatMessage, ChatProvider, ChatRequest, FailureNote, FixtureProvider,
    FragmentSummary, HttpChatProvider, LlmError, ProviderError, ProviderErrorKind, RetryPolicy,
    Role, SummarizeOptions, SummarizeStats, SummaryEntry, SummaryOutcome, SummaryRun, SummarySet,
};
pub use matrix::RowMatrix;
pub use metrics::{Averaging, ConfusionCounts, EvalReport, MetricsError};
pub use prompt::{PromptError, PromptLanguage, PromptTemplate, StopList, Summary};
pub use store::{StoreError, SummaryKey, SummaryRecord, SummaryStore};
pub use viz::{Projection2D, TsneConfig, TsneTrace, VizError};
