//! Declarative pipeline configuration.
//!
//! A run is fully described by one TOML file; command-line overrides mirror
//! the config keys (`--dataset.path`, `--tasks.clone.grid=0.50,0.55`), and
//! the only environment inputs are API keys (`CODESUM_API_KEY_<PROVIDER>`),
//! which never appear in the file or in any report. The config hash covers
//! exactly the semantic fields — everything except `cache_root` and
//! `output_dir` — so relocating caches or outputs never changes it.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// A configuration or usage problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Corpus location and pair-sampling parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// "problem-dirs" (one numbered directory per class) or "flat".
    pub layout: String,
    pub path: PathBuf,
    /// Corpus name for cache layout; defaults to the directory basename.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Keep only the first N problem directories (ascending numeric order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_problems: Option<usize>,
    /// Keep only the first N programs per problem (lexicographic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub programs_per_problem: Option<usize>,
    /// Pre-built labeled pair file (JSONL); overrides sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PathBuf>,
    /// Balanced pair sampling: positives to draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pos: Option<usize>,
    /// Balanced pair sampling: negatives to draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_neg: Option<usize>,
    /// Sampling seed.
    #[serde(default)]
    pub seed: u64,
}

/// Chat-provider selection and summarization options.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    /// "http" or "fixture".
    pub provider: String,
    /// Provider id used for cache layout and the API-key variable; defaults
    /// to the model name for http and "fixture" for fixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    /// Chat-completions base URL (http provider).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Prompt→response JSONL (fixture provider).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    /// Prompt language: "english" or "chinese".
    #[serde(default = "default_language")]
    pub language: String,
    /// Custom prompt template file containing a `{code}` placeholder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_path: Option<PathBuf>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    /// Abort when more than this fraction of fragments fail.
    #[serde(default = "default_failure_cap")]
    pub failure_cap: f64,
    /// Prompt-size guard: estimated tokens above this fail before any call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_limit: Option<u32>,
}

fn default_model() -> String {
    "gpt-3.5-turbo".to_string()
}

fn default_language() -> String {
    "english".to_string()
}

fn default_parallelism() -> usize {
    4
}

fn default_max_output_tokens() -> u32 {
    256
}

fn default_failure_cap() -> f64 {
    0.01
}

/// Sentence-embedding provider selection.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// "http" or "deterministic".
    pub provider: String,
    /// Provider id; defaults to the model name for http.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Embeddings base URL (http provider).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub dim: usize,
    /// Hash seed (deterministic provider).
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    64
}

/// Clone-detection task: the similarity threshold grid to sweep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CloneTaskConfig {
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
}

fn default_grid() -> Vec<f64> {
    vec![0.50, 0.55, 0.60, 0.65, 0.70, 0.75]
}

/// Clustering task.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClusterTaskConfig {
    /// Cluster count; defaults to the corpus's distinct label count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: Option<usize>,
}

fn default_restarts() -> Option<usize> {
    Some(10)
}

/// 2-D projection task.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VizTaskConfig {
    #[serde(default = "default_perplexity")]
    pub perplexity: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_perplexity() -> f64 {
    30.0
}

fn default_learning_rate() -> f64 {
    200.0
}

fn default_iterations() -> usize {
    1000
}

/// Enabled downstream tasks; a task runs iff its section is present.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TasksConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clone: Option<CloneTaskConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterTaskConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viz: Option<VizTaskConfig>,
}

/// Stop-word ablation, applied to summaries after extraction and caching,
/// before embedding.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StopwordsConfig {
    #[serde(default)]
    pub enabled: bool,
    /// One stop word per line; defaults to the built-in list for the
    /// configured prompt language.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<PathBuf>,
}

/// The complete declarative description of a pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_cache_root")]
    pub cache_root: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub llm: LlmConfig,
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub tasks: TasksConfig,
    #[serde(default)]
    pub stopwords: StopwordsConfig,
}

fn default_cache_root() -> PathBuf {
    PathBuf::from(".codesum-cache")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Every override key the CLI accepts, mirroring the config tree.
pub const OVERRIDE_KEYS: &[&str] = &[
    "cache_root",
    "output_dir",
    "dataset.layout",
    "dataset.path",
    "dataset.name",
    "dataset.first_problems",
    "dataset.programs_per_problem",
    "dataset.pairs",
    "dataset.n_pos",
    "dataset.n_neg",
    "dataset.seed",
    "llm.provider",
    "llm.name",
    "llm.model",
    "llm.endpoint",
    "llm.fixture_path",
    "llm.language",
    "llm.template_path",
    "llm.temperature",
    "llm.parallelism",
    "llm.max_output_tokens",
    "llm.failure_cap",
    "llm.context_limit",
    "embedding.provider",
    "embedding.name",
    "embedding.model",
    "embedding.endpoint",
    "embedding.dim",
    "embedding.seed",
    "embedding.batch_size",
    "tasks.clone.grid",
    "tasks.cluster.k",
    "tasks.cluster.seed",
    "tasks.cluster.restarts",
    "tasks.viz.perplexity",
    "tasks.viz.learning_rate",
    "tasks.viz.iterations",
    "tasks.viz.seed",
    "stopwords.enabled",
    "stopwords.list",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError(format!("invalid value for --{key}: {e}")))
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError(format!("invalid value for --{key}: {e}")))
        })
        .collect()
}

impl PipelineConfig {
    /// Parses the TOML file at `path`.
    ///
    /// # Errors
    ///
    /// Unreadable file or invalid/unknown keys.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))
    }

    /// Applies one `key=value` override; keys mirror the config tree.
    ///
    /// # Errors
    ///
    /// Unknown key or unparseable value.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "cache_root" => self.cache_root = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "dataset.layout" => self.dataset.layout = value.to_string(),
            "dataset.path" => self.dataset.path = PathBuf::from(value),
            "dataset.name" => self.dataset.name = Some(value.to_string()),
            "dataset.first_problems" => {
                self.dataset.first_problems = Some(parse(key, value)?);
            }
            "dataset.programs_per_problem" => {
                self.dataset.programs_per_problem = Some(parse(key, value)?);
            }
            "dataset.pairs" => self.dataset.pairs = Some(PathBuf::from(value)),
            "dataset.n_pos" => self.dataset.n_pos = Some(parse(key, value)?),
            "dataset.n_neg" => self.dataset.n_neg = Some(parse(key, value)?),
            "dataset.seed" => self.dataset.seed = parse(key, value)?,
            "llm.provider" => self.llm.provider = value.to_string(),
            "llm.name" => self.llm.name = Some(value.to_string()),
            "llm.model" => self.llm.model = value.to_string(),
            "llm.endpoint" => self.llm.endpoint = Some(value.to_string()),
            "llm.fixture_path" => self.llm.fixture_path = Some(PathBuf::from(value)),
            "llm.language" => self.llm.language = value.to_string(),
            "llm.template_path" => self.llm.template_path = Some(PathBuf::from(value)),
            "llm.temperature" => self.llm.temperature = parse(key, value)?,
            "llm.parallelism" => self.llm.parallelism = parse(key, value)?,
            "llm.max_output_tokens" => self.llm.max_output_tokens = parse(key, value)?,
            "llm.failure_cap" => self.llm.failure_cap = parse(key, value)?,
            "llm.context_limit" => self.llm.context_limit = Some(parse(key, value)?),
            "embedding.provider" => self.embedding.provider = value.to_string(),
            "embedding.name" => self.embedding.name = Some(value.to_string()),
            "embedding.model" => self.embedding.model = Some(value.to_string()),
            "embedding.endpoint" => self.embedding.endpoint = Some(value.to_string()),
            "embedding.dim" => self.embedding.dim = parse(key, value)?,
            "embedding.seed" => self.embedding.seed = parse(key, value)?,
            "embedding.batch_size" => self.embedding.batch_size = parse(key, value)?,
            "tasks.clone.grid" => {
                let grid = parse_grid(key, value)?;
                match &mut self.tasks.clone {
                    Some(clone) => clone.grid = grid,
                    None => self.tasks.clone = Some(CloneTaskConfig { grid }),
                }
            }
            "tasks.cluster.k" => {
                let k = Some(parse(key, value)?);
                match &mut self.tasks.cluster {
                    Some(cluster) => cluster.k = k,
                    None => {
                        self.tasks.cluster = Some(ClusterTaskConfig {
                            k,
                            seed: 0,
                            restarts: default_restarts(),
                        });
                    }
                }
            }
            "tasks.cluster.seed" => {
                let cluster = self.tasks.cluster.get_or_insert(ClusterTaskConfig {
                    k: None,
                    seed: 0,
                    restarts: default_restarts(),
                });
                cluster.seed = parse(key, value)?;
            }
            "tasks.cluster.restarts" => {
                let cluster = self.tasks.cluster.get_or_insert(ClusterTaskConfig {
                    k: None,
                    seed: 0,
                    restarts: default_restarts(),
                });
                cluster.restarts = Some(parse(key, value)?);
            }
            "tasks.viz.perplexity" | "tasks.viz.learning_rate" | "tasks.viz.iterations"
            | "tasks.viz.seed" => {
                let viz = self.tasks.viz.get_or_insert(VizTaskConfig {
                    perplexity: default_perplexity(),
                    learning_rate: default_learning_rate(),
                    iterations: default_iterations(),
                    seed: 0,
                });
                match key {
                    "tasks.viz.perplexity" => viz.perplexity = parse(key, value)?,
                    "tasks.viz.learning_rate" => viz.learning_rate = parse(key, value)?,
                    "tasks.viz.iterations" => viz.iterations = parse(key, value)?,
                    _ => viz.seed = parse(key, value)?,
                }
            }
            "stopwords.enabled" => self.stopwords.enabled = parse(key, value)?,
            "stopwords.list" => self.stopwords.list = Some(PathBuf::from(value)),
            _ => return err(format!("unknown config key {key}")),
        }
        Ok(())
    }

    /// Structural validation: enum-like strings, provider requirements, and
    /// existence of every referenced input path. `needs_task` additionally
    /// requires at least one task section.
    ///
    /// # Errors
    ///
    /// [`ConfigError`] describing the first problem found.
    pub fn validate(&self, needs_task: bool) -> Result<(), ConfigError> {
        match self.dataset.layout.as_str() {
            "problem-dirs" | "flat" => {}
            other => {
                return err(format!(
                    "dataset.layout must be \"problem-dirs\" or \"flat\", got \"{other}\""
                ));
            }
        }
        if !self.dataset.path.is_dir() {
            return err(format!(
                "dataset.path {} is not a directory",
                self.dataset.path.display()
            ));
        }
        if let Some(pairs) = &self.dataset.pairs {
            if !pairs.is_file() {
                return err(format!("dataset.pairs {} does not exist", pairs.display()));
            }
        }
        if self.dataset.n_pos.is_some() != self.dataset.n_neg.is_some() {
            return err("dataset.n_pos and dataset.n_neg must be set together");
        }

        match self.llm.provider.as_str() {
            "http" => {
                if self.llm.endpoint.is_none() {
                    return err("llm.provider \"http\" requires llm.endpoint");
                }
            }
            "fixture" => match &self.llm.fixture_path {
                None => return err("llm.provider \"fixture\" requires llm.fixture_path"),
                Some(path) if !path.is_file() => {
                    return err(format!("llm.fixture_path {} does not exist", path.display()));
                }
                Some(_) => {}
            },
            other => {
                return err(format!(
                    "llm.provider must be \"http\" or \"fixture\", got \"{other}\""
                ));
            }
        }
        match self.llm.language.as_str() {
            "english" | "chinese" => {}
            other => {
                return err(format!(
                    "llm.language must be \"english\" or \"chinese\", got \"{other}\""
                ));
            }
        }
        if let Some(template) = &self.llm.template_path {
            if !template.is_file() {
                return err(format!(
                    "llm.template_path {} does not exist",
                    template.display()
                ));
            }
        }

        match self.embedding.provider.as_str() {
            "http" => {
                if self.embedding.endpoint.is_none() {
                    return err("embedding.provider \"http\" requires embedding.endpoint");
                }
                if self.embedding.model.is_none() {
                    return err("embedding.provider \"http\" requires embedding.model");
                }
            }
            "deterministic" => {}
            other => {
                return err(format!(
                    "embedding.provider must be \"http\" or \"deterministic\", got \"{other}\""
                ));
            }
        }

        if let Some(list) = &self.stopwords.list {
            if !list.is_file() {
                return err(format!("stopwords.list {} does not exist", list.display()));
            }
        }

        if needs_task
            && self.tasks.clone.is_none()
            && self.tasks.cluster.is_none()
            && self.tasks.viz.is_none()
        {
            return err("no task enabled: add a [tasks.clone], [tasks.cluster], or [tasks.viz] section");
        }
        Ok(())
    }

    /// Corpus name: explicit `dataset.name` or the directory basename.
    #[must_use]
    pub fn corpus_name(&self) -> String {
        self.dataset.name.clone().unwrap_or_else(|| {
            self.dataset
                .path
                .file_name()
                .map_or_else(|| "corpus".to_string(), |n| n.to_string_lossy().into_owned())
        })
    }

    /// Chat-provider id for cache layout and API-key lookup.
    #[must_use]
    pub fn llm_provider_id(&self) -> String {
        self.llm.name.clone().unwrap_or_else(|| {
            if self.llm.provider == "fixture" {
                "fixture".to_string()
            } else {
                self.llm.model.clone()
            }
        })
    }

    /// Embedding-provider id.
    #[must_use]
    pub fn embedding_provider_id(&self) -> String {
        self.embedding.name.clone().unwrap_or_else(|| {
            self.embedding
                .model
                .clone()
                .unwrap_or_else(|| "deterministic".to_string())
        })
    }

    /// Hash of the semantic configuration. Cache and output locations are
    /// excluded, so moving artifacts around never invalidates a run identity.
    #[must_use]
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config always serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("cache_root");
            map.remove("output_dir");
        }
        // Value objects keep sorted key order, so this rendering is canonical.
        codesum_core::hash::sha256_hex(value.to_string().as_bytes())
    }
}

/// The environment variable holding the API key for `provider_id`.
#[must_use]
pub fn api_key_var(provider_id: &str) -> String {
    let mut var = String::from("CODESUM_API_KEY_");
    for c in provider_id.chars() {
        if c.is_ascii_alphanumeric() {
            var.push(c.to_ascii_uppercase());
        } else {
            var.push('_');
        }
    }
    var
}
