//! Pipeline orchestration: each subcommand is a sequence of stages
//! (load corpus → summarize → embed → clone / cluster / viz) with every
//! artifact written under `output_dir` and stamped with the config hash.
//!
//! Stage errors abort the run with a stage-named diagnostic and map onto the
//! process exit codes: 2 for configuration problems, 3 for provider
//! failures, 4 when the summarization failure cap is exceeded, 1 otherwise.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use codesum_core::cloneval::{
    classify_pairs, sweep_thresholds, write_predictions_jsonl, EvalError, SweepTable,
    ThresholdConfig,
};
use codesum_core::cluster::{
    kmeans, write_assignments_jsonl, write_centroids_f32, ClusterError, KmeansConfig,
};
use codesum_core::dataset::{
    load_corpus_dir_filtered, load_pair_jsonl, sample_balanced_pairs, Corpus, CorpusFilter,
    CorpusLayout, DatasetError, LabeledPair, PairDataset,
};
use codesum_core::embed::{
    embed_summaries, DeterministicEmbedProvider, EmbedError, EmbedProvider, EmbeddingSet,
    HttpEmbedProvider,
};
use codesum_core::llm::{
    summarize_corpus, ChatProvider, FailureNote, FixtureProvider, HttpChatProvider, LlmError,
    ProviderError, SummarizeOptions, SummaryRun, SummarySet,
};
use codesum_core::metrics::{adjusted_rand_index, MetricsError};
use codesum_core::prompt::{PromptError, PromptLanguage, PromptTemplate, StopList};
use codesum_core::store::{StoreError, SummaryStore};
use codesum_core::viz::{tsne, TsneConfig, VizError};

use crate::config::{api_key_var, ConfigError, PipelineConfig};

/// Artifact file names under `output_dir`.
pub const SUMMARIZE_MANIFEST: &str = "summarize_manifest.json";
pub const EMBEDDINGS_BIN: &str = "embeddings.f32";
pub const EMBEDDINGS_META: &str = "embeddings.meta.json";
pub const CLONE_SWEEP_CSV: &str = "clone_sweep.csv";
pub const CLONE_SWEEP_JSON: &str = "clone_sweep.json";
pub const CLONE_PREDICTIONS: &str = "clone_predictions.jsonl";
pub const CLUSTER_ASSIGNMENTS: &str = "cluster_assignments.jsonl";
pub const CLUSTER_CENTROIDS: &str = "centroids.f32";
pub const CLUSTER_REPORT: &str = "cluster_report.json";
pub const PROJECTION_CSV: &str = "projection.csv";
pub const PROJECTION_JSON: &str = "projection.json";
pub const RUN_MANIFEST: &str = "run_manifest.json";

/// A failed pipeline run, carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Configuration or input-declaration problem (exit 2).
    Config(String),
    /// Chat or embedding provider failure (exit 3).
    Provider(String),
    /// Summarization failure ratio exceeded the configured cap (exit 4).
    FailureCap(String),
    /// Anything else: I/O, corrupted artifacts (exit 1).
    Other(String),
}

impl CliError {
    #[must_use]
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Provider(_) => 3,
            Self::FailureCap(_) => 4,
            Self::Other(_) => 1,
        }
    }

    /// Prefixes the message with the failing stage's name.
    #[must_use]
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Self::Config(m) => Self::Config(format!("{stage} stage: {m}")),
            Self::Provider(m) => Self::Provider(format!("{stage} stage: {m}")),
            Self::FailureCap(m) => Self::FailureCap(format!("{stage} stage: {m}")),
            Self::Other(m) => Self::Other(format!("{stage} stage: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) | Self::Provider(m) | Self::FailureCap(m) | Self::Other(m) => {
                write!(f, "{m}")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::Other(e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Provider { .. } => Self::Provider(e.to_string()),
            LlmError::FailureCapExceeded { .. } => Self::FailureCap(e.to_string()),
            LlmError::InvalidRequest(_) | LlmError::InvalidOptions(_) => {
                Self::Config(e.to_string())
            }
            LlmError::Store(inner) => Self::Other(inner.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Provider { .. }
            | EmbedError::PayloadTooLarge { .. }
            | EmbedError::CountMismatch { .. }
            | EmbedError::DimensionMismatch { .. }
            | EmbedError::ZeroVector { .. } => Self::Provider(e.to_string()),
            EmbedError::InvalidBatchSize | EmbedError::InvalidDimension { .. } => {
                Self::Config(e.to_string())
            }
            EmbedError::DuplicateId { .. } | EmbedError::Io { .. } | EmbedError::Meta(_) => {
                Self::Other(e.to_string())
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidThreshold { .. } | EvalError::InvalidGrid(_)
            | EvalError::EmptyPairs => Self::Config(e.to_string()),
            EvalError::MissingEmbedding { .. } | EvalError::Metrics(_)
            | EvalError::Io { .. } => Self::Other(e.to_string()),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::InvalidK { .. } | ClusterError::InvalidConfig(_)
            | ClusterError::EmptyData => Self::Config(e.to_string()),
            ClusterError::Io { .. } => Self::Other(e.to_string()),
        }
    }
}

impl From<VizError> for CliError {
    fn from(e: VizError) -> Self {
        match e {
            VizError::InvalidConfig(_)
            | VizError::PerplexityTooLarge { .. }
            | VizError::TooFewPoints { .. } => Self::Config(e.to_string()),
            VizError::ZeroVariance | VizError::Io { .. } => Self::Other(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::Other(e.to_string())
    }
}

fn io_other(context: &str, path: &Path, e: &std::io::Error) -> CliError {
    CliError::Other(format!("{context} {}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Manifests

/// `summarize` manifest: call accounting plus the failed fragments.
#[derive(Debug, Serialize, Deserialize)]
pub struct SummarizeManifest {
    pub config_hash: String,
    pub corpus: String,
    pub total: usize,
    pub calls: usize,
    pub hits: usize,
    pub failures: usize,
    pub retries: u64,
    pub corrupt_cache_lines: usize,
    pub failed: Vec<FailureNote>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedBlock {
    pub n: usize,
    pub dim: usize,
    pub provider_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CloneBlock {
    pub pairs: usize,
    /// Pairs dropped because one side has no usable summary.
    pub dropped_pairs: usize,
    pub best_threshold: f64,
    pub best_weighted_f1: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterReport {
    pub config_hash: String,
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub n: usize,
    pub inertia: f64,
    pub iterations: usize,
    /// Partition agreement against corpus labels, when the corpus has them.
    pub ari: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VizBlock {
    pub points: usize,
    pub final_kl: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummarizeBlock {
    pub total: usize,
    pub calls: usize,
    pub hits: usize,
    pub failures: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusBlock {
    pub name: String,
    pub fragments: usize,
    pub skipped_files: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StagesBlock {
    pub summarize: SummarizeBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed: Option<EmbedBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clone: Option<CloneBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viz: Option<VizBlock>,
}

/// `run` manifest: one document describing the whole pipeline invocation.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub corpus: CorpusBlock,
    pub stages: StagesBlock,
}

fn write_json_pretty<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, body).map_err(|e| io_other("writing", path, &e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let body = fs::read_to_string(path).map_err(|e| io_other("reading", path, &e))?;
    serde_json::from_str(&body)
        .map_err(|e| CliError::Other(format!("parsing {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Stage building blocks

fn load_corpus(config: &PipelineConfig) -> Result<Corpus, CliError> {
    let layout = match config.dataset.layout.as_str() {
        "problem-dirs" => CorpusLayout::ProblemDirs,
        _ => CorpusLayout::Flat,
    };
    let filter = CorpusFilter {
        first_problems: config.dataset.first_problems,
        programs_per_problem: config.dataset.programs_per_problem,
    };
    let mut corpus = load_corpus_dir_filtered(&config.dataset.path, layout, filter)
        .map_err(CliError::from)
        .map_err(|e| e.in_stage("dataset"))?;
    corpus.set_name(config.corpus_name());
    if corpus.is_empty() {
        return Err(CliError::Config(format!(
            "dataset stage: no fragments loaded from {}",
            config.dataset.path.display()
        )));
    }
    info!(
        "loaded corpus \"{}\": {} fragments ({} files skipped)",
        corpus.name(),
        corpus.len(),
        corpus.skipped_files()
    );
    Ok(corpus)
}

fn prompt_language(config: &PipelineConfig) -> PromptLanguage {
    match config.llm.language.as_str() {
        "chinese" => PromptLanguage::Chinese,
        _ => PromptLanguage::English,
    }
}

fn prompt_template(config: &PipelineConfig) -> Result<PromptTemplate, CliError> {
    let language = prompt_language(config);
    match &config.llm.template_path {
        Some(path) => PromptTemplate::from_file(language, path).map_err(CliError::from),
        None => Ok(match language {
            PromptLanguage::Chinese => PromptTemplate::chinese_default(),
            _ => PromptTemplate::english_default(),
        }),
    }
}

fn chat_provider(config: &PipelineConfig) -> Result<Box<dyn ChatProvider>, CliError> {
    let id = config.llm_provider_id();
    let provider_error = |e: ProviderError| CliError::Config(e.to_string());
    match config.llm.provider.as_str() {
        "fixture" => {
            let path = config
                .llm
                .fixture_path
                .as_ref()
                .expect("validated: fixture provider has a path");
            let mut provider = FixtureProvider::from_file(&id, path).map_err(provider_error)?;
            if let Some(limit) = config.llm.context_limit {
                provider = provider.with_context_limit(limit);
            }
            Ok(Box::new(provider))
        }
        _ => {
            let endpoint = config
                .llm
                .endpoint
                .as_ref()
                .expect("validated: http provider has an endpoint");
            let mut provider =
                HttpChatProvider::new(&id, endpoint).map_err(provider_error)?;
            let var = api_key_var(&id);
            if let Ok(key) = std::env::var(&var) {
                provider = provider.with_api_key(key);
            } else {
                info!("no {var} in the environment; calling {endpoint} without a key");
            }
            if let Some(limit) = config.llm.context_limit {
                provider = provider.with_context_limit(limit);
            }
            Ok(Box::new(provider))
        }
    }
}

fn embed_provider(config: &PipelineConfig) -> Result<Box<dyn EmbedProvider>, CliError> {
    match config.embedding.provider.as_str() {
        "deterministic" => {
            let provider = DeterministicEmbedProvider::new(config.embedding.dim, config.embedding.seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(provider))
        }
        _ => {
            let id = config.embedding_provider_id();
            let endpoint = config
                .embedding
                .endpoint
                .as_ref()
                .expect("validated: http embedding has an endpoint");
            let model = config
                .embedding
                .model
                .as_ref()
                .expect("validated: http embedding has a model");
            let mut provider =
                HttpEmbedProvider::new(&id, endpoint, model, config.embedding.dim)
                    .map_err(|e| CliError::Config(e.to_string()))?;
            let var = api_key_var(&id);
            if let Ok(key) = std::env::var(&var) {
                provider = provider.with_api_key(key);
            } else {
                info!("no {var} in the environment; calling {endpoint} without a key");
            }
            Ok(Box::new(provider))
        }
    }
}

fn stop_list(config: &PipelineConfig) -> Result<StopList, CliError> {
    match &config.stopwords.list {
        Some(path) => StopList::from_file(path).map_err(CliError::from),
        None => Ok(match prompt_language(config) {
            PromptLanguage::Chinese => StopList::default_chinese(),
            _ => StopList::default_english(),
        }),
    }
}

/// Output of the summarization stage: the raw run (for accounting) and the
/// summary set the rest of the pipeline consumes (stop words removed when
/// the ablation is enabled).
pub struct SummarizeStage {
    pub run: SummaryRun,
    pub set: SummarySet,
    pub corrupt_cache_lines: usize,
}

fn summarize_stage(config: &PipelineConfig, corpus: &Corpus) -> Result<SummarizeStage, CliError> {
    let in_stage = |e: CliError| e.in_stage("summarize");
    let template = prompt_template(config).map_err(in_stage)?;
    let provider = chat_provider(config).map_err(in_stage)?;
    let language = prompt_language(config);
    let mut store = SummaryStore::open_layout(
        &config.cache_root,
        &config.corpus_name(),
        &config.llm_provider_id(),
        language.tag(),
    )
    .map_err(CliError::from)
    .map_err(in_stage)?;
    let corrupt_cache_lines = store.corrupt_lines();

    let options = SummarizeOptions {
        model: config.llm.model.clone(),
        parallelism: config.llm.parallelism,
        failure_cap: config.llm.failure_cap,
        max_output_tokens: config.llm.max_output_tokens,
        temperature: config.llm.temperature,
        ..SummarizeOptions::default()
    };
    let run = summarize_corpus(corpus, &template, provider.as_ref(), &mut store, &options)
        .map_err(CliError::from)
        .map_err(in_stage)?;
    info!(
        "summarization complete: calls={}, hits={}, failures={}",
        run.stats.provider_calls, run.stats.cache_hits, run.stats.failures
    );

    let set = if config.stopwords.enabled {
        let stops = stop_list(config).map_err(in_stage)?;
        let filtered = run.set.remove_stop_words(&stops);
        info!(
            "stop-word removal: {} summaries emptied out",
            filtered.failure_count().saturating_sub(run.set.failure_count())
        );
        filtered
    } else {
        run.set.clone()
    };
    Ok(SummarizeStage {
        run,
        set,
        corrupt_cache_lines,
    })
}

fn embed_stage(config: &PipelineConfig, set: &SummarySet) -> Result<EmbeddingSet, CliError> {
    let in_stage = |e: CliError| e.in_stage("embed");
    let provider = embed_provider(config).map_err(in_stage)?;
    let embeddings = embed_summaries(set, provider.as_ref(), config.embedding.batch_size)
        .map_err(CliError::from)
        .map_err(in_stage)?;
    if embeddings.is_empty() {
        return Err(CliError::Other(
            "embed stage: no summaries available to embed".to_string(),
        ));
    }
    info!(
        "embedded {} summaries at dimension {}",
        embeddings.len(),
        embeddings.dim()
    );
    Ok(embeddings)
}

fn load_pairs(config: &PipelineConfig, corpus: &Corpus) -> Result<PairDataset, CliError> {
    if let Some(path) = &config.dataset.pairs {
        let pairs = load_pair_jsonl(path)?;
        pairs.validate_against(corpus)?;
        return Ok(pairs);
    }
    match (config.dataset.n_pos, config.dataset.n_neg) {
        (Some(n_pos), Some(n_neg)) => {
            Ok(sample_balanced_pairs(corpus, n_pos, n_neg, config.dataset.seed)?)
        }
        _ => Err(CliError::Config(
            "clone task needs dataset.pairs or dataset.n_pos/dataset.n_neg".to_string(),
        )),
    }
}

/// Drops pairs whose fragments have no embedding (failed summaries).
fn evaluable_pairs(
    pairs: &PairDataset,
    embeddings: &EmbeddingSet,
) -> Result<(PairDataset, usize), CliError> {
    let kept: Vec<LabeledPair> = pairs
        .pairs()
        .iter()
        .filter(|p| embeddings.get(&p.id_a).is_some() && embeddings.get(&p.id_b).is_some())
        .cloned()
        .collect();
    let dropped = pairs.len() - kept.len();
    if dropped == 0 {
        return Ok((pairs.clone(), 0));
    }
    warn!("dropping {dropped} pairs whose fragments have no usable summary");
    let filtered = PairDataset::new(kept, pairs.source_corpus.clone(), pairs.seed)?;
    Ok((filtered, dropped))
}

fn clone_stage(
    config: &PipelineConfig,
    corpus: &Corpus,
    embeddings: &EmbeddingSet,
    out: &Path,
) -> Result<CloneBlock, CliError> {
    let in_stage = |e: CliError| e.in_stage("clone");
    let task = config
        .tasks
        .clone
        .as_ref()
        .expect("caller checks the clone task is enabled");
    let pairs = load_pairs(config, corpus).map_err(in_stage)?;
    let (pairs, dropped_pairs) = evaluable_pairs(&pairs, embeddings).map_err(in_stage)?;
    if pairs.is_empty() {
        return Err(CliError::Config(
            "clone stage: no evaluable pairs (every pair references a failed summary)"
                .to_string(),
        ));
    }
    let grid = ThresholdConfig::new(task.grid.clone())
        .map_err(CliError::from)
        .map_err(in_stage)?;
    let table = sweep_thresholds(&pairs, embeddings, &grid)
        .map_err(CliError::from)
        .map_err(in_stage)?;
    table
        .write_csv(&out.join(CLONE_SWEEP_CSV))
        .map_err(CliError::from)
        .map_err(in_stage)?;
    table
        .write_json(&out.join(CLONE_SWEEP_JSON))
        .map_err(CliError::from)
        .map_err(in_stage)?;

    let mut predictions = Vec::new();
    for &threshold in grid.grid() {
        predictions.extend(
            classify_pairs(&pairs, embeddings, threshold)
                .map_err(CliError::from)
                .map_err(in_stage)?,
        );
    }
    write_predictions_jsonl(&predictions, &out.join(CLONE_PREDICTIONS))
        .map_err(CliError::from)
        .map_err(in_stage)?;

    let best = table.best_by_f1();
    info!(
        "clone sweep over {} pairs: best weighted F1 {:.4} at T={}",
        pairs.len(),
        best.weighted.f1,
        best.threshold
    );
    Ok(CloneBlock {
        pairs: pairs.len(),
        dropped_pairs,
        best_threshold: best.threshold,
        best_weighted_f1: best.weighted.f1,
    })
}

/// Labels of the embedded fragments, when every one of them is labeled.
fn embedded_labels(corpus: &Corpus, embeddings: &EmbeddingSet) -> Option<Vec<i64>> {
    embeddings
        .ids()
        .iter()
        .map(|id| corpus.get(id).and_then(|f| f.label))
        .collect()
}

fn cluster_stage(
    config: &PipelineConfig,
    corpus: &Corpus,
    embeddings: &EmbeddingSet,
    out: &Path,
) -> Result<ClusterReport, CliError> {
    let in_stage = |e: CliError| e.in_stage("cluster");
    let task = config
        .tasks
        .cluster
        .as_ref()
        .expect("caller checks the cluster task is enabled");
    let labels = embedded_labels(corpus, embeddings);
    let k = match task.k {
        Some(k) => k,
        None => match &labels {
            Some(labels) => {
                let mut distinct: Vec<i64> = labels.clone();
                distinct.sort_unstable();
                distinct.dedup();
                distinct.len()
            }
            None => {
                return Err(CliError::Config(
                    "cluster stage: tasks.cluster.k is required for an unlabeled corpus"
                        .to_string(),
                ));
            }
        },
    };
    let mut kconfig = KmeansConfig::new(k);
    kconfig.seed = task.seed;
    if let Some(restarts) = task.restarts {
        kconfig.restarts = restarts;
    }
    let result = kmeans(embeddings.matrix(), &kconfig)
        .map_err(CliError::from)
        .map_err(in_stage)?;
    write_assignments_jsonl(embeddings.ids(), &result.assignments, &out.join(CLUSTER_ASSIGNMENTS))
        .map_err(CliError::from)
        .map_err(in_stage)?;
    write_centroids_f32(&result.centroids, &out.join(CLUSTER_CENTROIDS))
        .map_err(CliError::from)
        .map_err(in_stage)?;

    let ari = match &labels {
        Some(labels) => Some(
            adjusted_rand_index(labels, &result.assignments)
                .map_err(CliError::from)
                .map_err(in_stage)?,
        ),
        None => None,
    };
    let report = ClusterReport {
        config_hash: config.config_hash(),
        k,
        seed: kconfig.seed,
        restarts: kconfig.restarts,
        n: embeddings.len(),
        inertia: result.inertia,
        iterations: result.iterations,
        ari,
    };
    write_json_pretty(&report, &out.join(CLUSTER_REPORT)).map_err(in_stage)?;
    match report.ari {
        Some(ari) => info!(
            "clustered {} points into k={k}: inertia {:.6}, ARI {ari:.4}",
            report.n, report.inertia
        ),
        None => info!(
            "clustered {} points into k={k}: inertia {:.6}",
            report.n, report.inertia
        ),
    }
    Ok(report)
}

fn viz_stage(
    config: &PipelineConfig,
    corpus: &Corpus,
    embeddings: &EmbeddingSet,
    out: &Path,
) -> Result<VizBlock, CliError> {
    let in_stage = |e: CliError| e.in_stage("viz");
    let task = config
        .tasks
        .viz
        .as_ref()
        .expect("caller checks the viz task is enabled");
    let tsne_config = TsneConfig {
        perplexity: task.perplexity,
        learning_rate: task.learning_rate,
        iterations: task.iterations,
        seed: task.seed,
        ..TsneConfig::default()
    };
    let labels = embedded_labels(corpus, embeddings);
    let projection = tsne(embeddings, labels, &tsne_config)
        .map_err(CliError::from)
        .map_err(in_stage)?;
    projection
        .write_csv(&out.join(PROJECTION_CSV))
        .map_err(CliError::from)
        .map_err(in_stage)?;
    projection
        .write_json(&out.join(PROJECTION_JSON))
        .map_err(CliError::from)
        .map_err(in_stage)?;
    info!(
        "projected {} points to 2-D: final KL divergence {:.6}",
        projection.ids.len(),
        projection.final_kl
    );
    Ok(VizBlock {
        points: projection.ids.len(),
        final_kl: projection.final_kl,
    })
}

fn ensure_output_dir(config: &PipelineConfig) -> Result<PathBuf, CliError> {
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| io_other("creating output dir", &out, &e))?;
    Ok(out)
}

fn summarize_manifest(
    config: &PipelineConfig,
    corpus: &Corpus,
    stage: &SummarizeStage,
) -> SummarizeManifest {
    SummarizeManifest {
        config_hash: config.config_hash(),
        corpus: corpus.name().to_string(),
        total: stage.run.stats.total,
        calls: stage.run.stats.provider_calls,
        hits: stage.run.stats.cache_hits,
        failures: stage.run.stats.failures,
        retries: stage.run.stats.retries,
        corrupt_cache_lines: stage.corrupt_cache_lines,
        failed: stage.run.failures.clone(),
    }
}

// ---------------------------------------------------------------------------
// Subcommands

/// `summarize`: fill the cache and write the call-accounting manifest.
///
/// # Errors
///
/// Any stage failure; see [`CliError`] for the exit-code mapping.
pub fn cmd_summarize(config: &PipelineConfig) -> Result<(), CliError> {
    config.validate(false)?;
    let out = ensure_output_dir(config)?;
    let corpus = load_corpus(config)?;
    let stage = summarize_stage(config, &corpus)?;
    write_json_pretty(&summarize_manifest(config, &corpus, &stage), &out.join(SUMMARIZE_MANIFEST))?;
    Ok(())
}

/// `embed`: summarize (cache-backed) and export the embedding artifacts.
///
/// # Errors
///
/// Any stage failure.
pub fn cmd_embed(config: &PipelineConfig) -> Result<(), CliError> {
    config.validate(false)?;
    let out = ensure_output_dir(config)?;
    let corpus = load_corpus(config)?;
    let stage = summarize_stage(config, &corpus)?;
    write_json_pretty(&summarize_manifest(config, &corpus, &stage), &out.join(SUMMARIZE_MANIFEST))?;
    let embeddings = embed_stage(config, &stage.set)?;
    let in_stage = |e: CliError| e.in_stage("embed");
    embeddings
        .write_f32(&out.join(EMBEDDINGS_BIN))
        .map_err(CliError::from)
        .map_err(in_stage)?;
    embeddings
        .write_meta_json(&out.join(EMBEDDINGS_META))
        .map_err(CliError::from)
        .map_err(in_stage)?;
    Ok(())
}

fn single_task(
    config: &PipelineConfig,
    enabled: bool,
    section: &str,
    stage: impl FnOnce(&PipelineConfig, &Corpus, &EmbeddingSet, &Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    config.validate(false)?;
    if !enabled {
        return Err(CliError::Config(format!(
            "this command needs a [{section}] section in the config"
        )));
    }
    let out = ensure_output_dir(config)?;
    let corpus = load_corpus(config)?;
    let summaries = summarize_stage(config, &corpus)?;
    let embeddings = embed_stage(config, &summaries.set)?;
    stage(config, &corpus, &embeddings, &out)
}

/// `clone`: threshold-sweep clone detection.
///
/// # Errors
///
/// Any stage failure.
pub fn cmd_clone(config: &PipelineConfig) -> Result<(), CliError> {
    single_task(config, config.tasks.clone.is_some(), "tasks.clone", |c, corpus, e, out| {
        clone_stage(c, corpus, e, out).map(|_| ())
    })
}

/// `cluster`: k-means over the embeddings.
///
/// # Errors
///
/// Any stage failure.
pub fn cmd_cluster(config: &PipelineConfig) -> Result<(), CliError> {
    single_task(config, config.tasks.cluster.is_some(), "tasks.cluster", |c, corpus, e, out| {
        cluster_stage(c, corpus, e, out).map(|_| ())
    })
}

/// `viz`: 2-D projection of the embeddings.
///
/// # Errors
///
/// Any stage failure.
pub fn cmd_viz(config: &PipelineConfig) -> Result<(), CliError> {
    single_task(config, config.tasks.viz.is_some(), "tasks.viz", |c, corpus, e, out| {
        viz_stage(c, corpus, e, out).map(|_| ())
    })
}

/// `run`: all enabled stages, plus the run manifest.
///
/// # Errors
///
/// Any stage failure.
pub fn cmd_run(config: &PipelineConfig) -> Result<(), CliError> {
    config.validate(true)?;
    let out = ensure_output_dir(config)?;
    let corpus = load_corpus(config)?;
    let summaries = summarize_stage(config, &corpus)?;
    write_json_pretty(
        &summarize_manifest(config, &corpus, &summaries),
        &out.join(SUMMARIZE_MANIFEST),
    )?;

    let embeddings = embed_stage(config, &summaries.set)?;
    let in_embed = |e: CliError| e.in_stage("embed");
    embeddings
        .write_f32(&out.join(EMBEDDINGS_BIN))
        .map_err(CliError::from)
        .map_err(in_embed)?;
    embeddings
        .write_meta_json(&out.join(EMBEDDINGS_META))
        .map_err(CliError::from)
        .map_err(in_embed)?;

    let clone_block = match &config.tasks.clone {
        Some(_) => Some(clone_stage(config, &corpus, &embeddings, &out)?),
        None => None,
    };
    let cluster_block = match &config.tasks.cluster {
        Some(_) => Some(cluster_stage(config, &corpus, &embeddings, &out)?),
        None => None,
    };
    let viz_block = match &config.tasks.viz {
        Some(_) => Some(viz_stage(config, &corpus, &embeddings, &out)?),
        None => None,
    };

    let manifest = RunManifest {
        config_hash: config.config_hash(),
        corpus: CorpusBlock {
            name: corpus.name().to_string(),
            fragments: corpus.len(),
            skipped_files: corpus.skipped_files(),
        },
        stages: StagesBlock {
            summarize: SummarizeBlock {
                total: summaries.run.stats.total,
                calls: summaries.run.stats.provider_calls,
                hits: summaries.run.stats.cache_hits,
                failures: summaries.run.stats.failures,
            },
            embed: Some(EmbedBlock {
                n: embeddings.len(),
                dim: embeddings.dim(),
                provider_id: embeddings.provider_id().to_string(),
            }),
            clone: clone_block,
            cluster: cluster_block,
            viz: viz_block,
        },
    };
    write_json_pretty(&manifest, &out.join(RUN_MANIFEST))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Report rendering

fn render_sweep(out: &mut String, table: &SweepTable) {
    out.push_str("clone detection (weighted / binary metrics per threshold):\n");
    out.push_str(
        "  T      w-acc   w-prec  w-rec   w-f1    b-prec  b-rec   b-f1\n",
    );
    for row in table.rows() {
        out.push_str(&format!(
            "  {:<5}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}\n",
            row.threshold,
            row.weighted.accuracy,
            row.weighted.precision,
            row.weighted.recall,
            row.weighted.f1,
            row.binary.precision,
            row.binary.recall,
            row.binary.f1,
        ));
    }
    let best = table.best_by_f1();
    out.push_str(&format!(
        "  best threshold by weighted F1: T={} (f1={:.4})\n",
        best.threshold, best.weighted.f1
    ));
}

/// Re-renders a text report from the JSON artifacts in `output_dir`.
///
/// # Errors
///
/// [`CliError::Config`] when no artifacts exist there.
pub fn render_report(output_dir: &Path) -> Result<String, CliError> {
    let mut out = String::new();
    let mut found = false;

    let manifest_path = output_dir.join(RUN_MANIFEST);
    if manifest_path.is_file() {
        let manifest: RunManifest = read_json(&manifest_path)?;
        found = true;
        out.push_str(&format!("run {}\n", manifest.config_hash));
        out.push_str(&format!(
            "corpus \"{}\": {} fragments ({} files skipped)\n",
            manifest.corpus.name, manifest.corpus.fragments, manifest.corpus.skipped_files
        ));
        let s = &manifest.stages.summarize;
        out.push_str(&format!(
            "summaries: calls={}, hits={}, failures={} (of {})\n",
            s.calls, s.hits, s.failures, s.total
        ));
        if let Some(e) = &manifest.stages.embed {
            out.push_str(&format!(
                "embeddings: {} vectors, dim {}, provider {}\n",
                e.n, e.dim, e.provider_id
            ));
        }
    } else {
        let manifest_path = output_dir.join(SUMMARIZE_MANIFEST);
        if manifest_path.is_file() {
            let manifest: SummarizeManifest = read_json(&manifest_path)?;
            found = true;
            out.push_str(&format!("run {}\n", manifest.config_hash));
            out.push_str(&format!(
                "summaries for \"{}\": calls={}, hits={}, failures={} (of {})\n",
                manifest.corpus, manifest.calls, manifest.hits, manifest.failures, manifest.total
            ));
        }
    }

    let sweep_path = output_dir.join(CLONE_SWEEP_JSON);
    if sweep_path.is_file() {
        let table: SweepTable = read_json(&sweep_path)?;
        found = true;
        render_sweep(&mut out, &table);
    }

    let cluster_path = output_dir.join(CLUSTER_REPORT);
    if cluster_path.is_file() {
        let report: ClusterReport = read_json(&cluster_path)?;
        found = true;
        match report.ari {
            Some(ari) => out.push_str(&format!(
                "clustering: k={}, n={}, inertia={:.6}, ARI={:.4}\n",
                report.k, report.n, report.inertia, ari
            )),
            None => out.push_str(&format!(
                "clustering: k={}, n={}, inertia={:.6}\n",
                report.k, report.n, report.inertia
            )),
        }
    }

    let projection_path = output_dir.join(PROJECTION_JSON);
    if projection_path.is_file() {
        let value: serde_json::Value = read_json(&projection_path)?;
        if let Some(points) = value.get("points").and_then(|p| p.as_array()) {
            found = true;
            out.push_str(&format!("projection: {} points in {}\n", points.len(), PROJECTION_CSV));
        }
    }

    if !found {
        return Err(CliError::Config(format!(
            "no artifacts found in {}; run the pipeline first",
            output_dir.display()
        )));
    }
    Ok(out)
}

/// `report`: print the re-rendered report to stdout.
///
/// # Errors
///
/// No artifacts present, or unreadable artifacts.
pub fn cmd_report(config: &PipelineConfig) -> Result<(), CliError> {
    let report = render_report(&config.output_dir)?;
    print!("{report}");
    Ok(())
}
