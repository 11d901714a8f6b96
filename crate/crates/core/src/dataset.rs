//! Corpus loading and labeled pair sets.
//!
//! Two on-disk corpus layouts are supported:
//!
//! - `ProblemDirs`: `<root>/<problem>/<file>` where each problem directory name is
//!   an integer class label and every file under it is one program solving
//!   that problem. Fragment ids are `"<problem>/<file>"`.
//! - `Flat`: a single directory of source files with no labels; fragment ids
//!   are the file names.
//!
//! Clone-detection ground truth is a list of fragment-id pairs with a binary
//! label, stored as JSONL (`{"id1": ..., "id2": ..., "label": 0|1}`). Pair
//! sets can be loaded from disk or sampled from a labeled corpus with
//! [`sample_balanced_pairs`], which draws a reproducible, duplicate-free
//! balance of same-label and cross-label pairs from a seed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from corpus and pair-set handling.
#[derive(Debug, Error)]
pub enum DatasetError {
    /// Filesystem access failed at a point where skipping is not an option.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The corpus root is not a directory.
    #[error("corpus root {path} is not a directory")]
    NotADirectory { path: PathBuf },
    /// No fragments survived loading.
    #[error("no fragments loaded from {path}")]
    EmptyCorpus { path: PathBuf },
    /// Two fragments share an id.
    #[error("duplicate fragment id {id:?}")]
    DuplicateId { id: String },
    /// A fragment has an empty id or empty text.
    #[error("fragment {id:?} is empty")]
    EmptyFragment { id: String },
    /// A pair file line is not valid JSON of the expected shape.
    #[error("malformed pair on line {line}: {detail}")]
    MalformedPairLine { line: usize, detail: String },
    /// A pair label is neither boolean nor 0/1.
    #[error("invalid pair label on line {line}: {found}")]
    InvalidLabel { line: usize, found: String },
    /// A pair references the same fragment twice.
    #[error("pair on line {line} relates fragment {id:?} to itself")]
    SelfPair { line: usize, id: String },
    /// The same unordered pair appears twice.
    #[error("duplicate pair on line {line}: ({id_a:?}, {id_b:?})")]
    DuplicatePair {
        line: usize,
        id_a: String,
        id_b: String,
    },
    /// A pair references a fragment id missing from the corpus.
    #[error("pair references unknown fragment id {id:?}")]
    UnknownId { id: String },
    /// Pair sampling needs every fragment labeled.
    #[error("cannot sample pairs: {count} fragments have no label")]
    UnlabeledFragments { count: usize },
    /// More pairs were requested than the corpus can provide.
    #[error("requested {requested} {kind} pairs but only {achievable} exist")]
    InsufficientPairs {
        kind: &'static str,
        requested: u64,
        achievable: u64,
    },
}

/// Coarse source-language tag attached to each fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageHint {
    C,
    Java,
    Other,
}

/// One source-code fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeFragment {
    /// Unique id within the corpus.
    pub id: String,
    /// Ground-truth class label, when the layout provides one.
    pub label: Option<i64>,
    /// Fragment source text (never empty).
    pub text: String,
    /// Best-effort language tag, from layout and file extension.
    pub language: LanguageHint,
    /// Originating file, when loaded from disk.
    pub source_path: Option<PathBuf>,
}

/// On-disk corpus layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusLayout {
    /// `<root>/<integer label>/<file>`.
    ProblemDirs,
    /// A single directory of unlabeled files.
    Flat,
}

/// Optional narrowing of a `ProblemDirs` load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusFilter {
    /// Keep only the first N problems in numeric order.
    pub first_problems: Option<usize>,
    /// Keep only the first M files (name order) of each problem.
    pub programs_per_problem: Option<usize>,
}

/// An ordered set of code fragments with unique ids.
#[derive(Debug, Clone)]
pub struct Corpus {
    name: String,
    fragments: Vec<CodeFragment>,
    index: HashMap<String, usize>,
    skipped_files: usize,
}

impl Corpus {
    /// Builds a corpus from fragments, validating id uniqueness and
    /// non-emptiness.
    ///
    /// # Errors
    ///
    /// [`DatasetError::DuplicateId`] or [`DatasetError::EmptyFragment`].
    pub fn new(name: impl Into<String>, fragments: Vec<CodeFragment>) -> Result<Self, DatasetError> {
        let mut index = HashMap::with_capacity(fragments.len());
        for (i, fragment) in fragments.iter().enumerate() {
            if fragment.id.is_empty() || fragment.text.is_empty() {
                return Err(DatasetError::EmptyFragment {
                    id: fragment.id.clone(),
                });
            }
            if index.insert(fragment.id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateId {
                    id: fragment.id.clone(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            fragments,
            index,
            skipped_files: 0,
        })
    }

    /// Corpus name (defaults to the root directory name when loaded).
    #[must_use]
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Replaces the corpus name (used when config overrides the default).
    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    /// Fragments in deterministic load order.
    #[must_use]
    pub fn fragments(&self) -> &[CodeFragment] {
        &self.fragments
    }

    /// Fragment lookup by id.
    #[must_use]
    pub fn get(&self, id: &str) -> Option<&CodeFragment> {
        self.index.get(id).map(|&i| &self.fragments[i])
    }

    /// Number of files skipped during loading (unreadable or empty).
    #[must_use]
    pub fn skipped_files(&self) -> usize {
        self.skipped_files
    }

    /// All labels, if every fragment has one.
    #[must_use]
    pub fn labels(&self) -> Option<Vec<i64>> {
        self.fragments.iter().map(|f| f.label).collect()
    }

    /// Number of distinct labels among labeled fragments.
    #[must_use]
    pub fn distinct_labels(&self) -> usize {
        self.fragments
            .iter()
            .filter_map(|f| f.label)
            .collect::<HashSet<_>>()
            .len()
    }

    /// Writes one `{"id", "label", "path"}` JSON object per fragment.
    ///
    /// # Errors
    ///
    /// Propagates I/O failures.
    pub fn write_manifest_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
        for fragment in &self.fragments {
            let line = serde_json::json!({
                "id": fragment.id,
                "label": fragment.label,
                "path": fragment.source_path.as_ref().map(|p| p.display().to_string()),
            });
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

fn hint_for(layout: CorpusLayout, path: &Path) -> LanguageHint {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("java") => LanguageHint::Java,
        Some("c" | "h" | "cc" | "cpp" | "cxx" | "hpp") => LanguageHint::C,
        // Problem-set exports commonly use bare or .txt names for C programs.
        _ => match layout {
            CorpusLayout::ProblemDirs => LanguageHint::C,
            CorpusLayout::Flat => LanguageHint::Other,
        },
    }
}

/// Reads one file as a fragment, or logs and returns `None` when the file is
/// unreadable or empty.
fn read_fragment(
    layout: CorpusLayout,
    id: String,
    label: Option<i64>,
    path: &Path,
) -> Option<CodeFragment> {
    let bytes = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(err) => {
            log::warn!("skipping unreadable file {}: {err}", path.display());
            return None;
        }
    };
    let text = String::from_utf8_lossy(&bytes).into_owned();
    if text.is_empty() {
        log::warn!("skipping empty file {}", path.display());
        return None;
    }
    Some(CodeFragment {
        id,
        label,
        text,
        language: hint_for(layout, path),
        source_path: Some(path.to_path_buf()),
    })
}

/// Directory entries of `dir` that are regular files, sorted by name.
fn files_sorted(dir: &Path) -> Result<Vec<(String, PathBuf)>, DatasetError> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        // Count symlinks and other non-regular entries as files so broken
        // links surface as skips rather than silently vanishing.
        if path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        files.push((name, path));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

/// Loads a corpus from `root` with the given layout; see [`load_corpus_dir_filtered`].
///
/// # Errors
///
/// See [`load_corpus_dir_filtered`].
pub fn load_corpus_dir(root: &Path, layout: CorpusLayout) -> Result<Corpus, DatasetError> {
    load_corpus_dir_filtered(root, layout, CorpusFilter::default())
}

/// Loads a corpus from `root`, optionally narrowed by `filter`.
///
/// Load order is deterministic: problem directories ascend numerically, files
/// within a directory ascend by name. Unreadable and empty files are skipped
/// with a warning and counted in [`Corpus::skipped_files`]. The filter only
/// applies to the `ProblemDirs` layout.
///
/// # Errors
///
/// Fatal conditions are an unreadable root, a non-directory root, and a
/// corpus that ends up with zero fragments.
pub fn load_corpus_dir_filtered(
    root: &Path,
    layout: CorpusLayout,
    filter: CorpusFilter,
) -> Result<Corpus, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::NotADirectory {
            path: root.to_path_buf(),
        });
    }
    let name = root
        .file_name()
        .map_or_else(|| "corpus".to_string(), |n| n.to_string_lossy().into_owned());

    let mut fragments = Vec::new();
    let mut skipped = 0usize;

    match layout {
        CorpusLayout::ProblemDirs => {
            let mut problems: Vec<(i64, String, PathBuf)> = Vec::new();
            let entries = fs::read_dir(root).map_err(|source| DatasetError::Io {
                path: root.to_path_buf(),
                source,
            })?;
            for entry in entries {
                let entry = entry.map_err(|source| DatasetError::Io {
                    path: root.to_path_buf(),
                    source,
                })?;
                let path = entry.path();
                let dir_name = entry.file_name().to_string_lossy().into_owned();
                if !path.is_dir() {
                    log::warn!("skipping stray entry {} in labeled corpus root", path.display());
                    skipped += 1;
                    continue;
                }
                match dir_name.parse::<i64>() {
                    Ok(label) => problems.push((label, dir_name, path)),
                    Err(_) => {
                        log::warn!("skipping non-numeric problem directory {dir_name:?}");
                        skipped += 1;
                    }
                }
            }
            problems.sort_by_key(|(label, _, _)| *label);
            if let Some(n) = filter.first_problems {
                problems.truncate(n);
            }
            for (label, dir_name, dir) in problems {
                let mut files = files_sorted(&dir)?;
                if let Some(m) = filter.programs_per_problem {
                    files.truncate(m);
                }
                for (file_name, path) in files {
                    let id = format!("{dir_name}/{file_name}");
                    match read_fragment(layout, id, Some(label), &path) {
                        Some(fragment) => fragments.push(fragment),
                        None => skipped += 1,
                    }
                }
            }
        }
        CorpusLayout::Flat => {
            for (file_name, path) in files_sorted(root)? {
                match read_fragment(layout, file_name, None, &path) {
                    Some(fragment) => fragments.push(fragment),
                    None => skipped += 1,
                }
            }
        }
    }

    if fragments.is_empty() {
        return Err(DatasetError::EmptyCorpus {
            path: root.to_path_buf(),
        });
    }
    let mut corpus = Corpus::new(name, fragments)?;
    corpus.skipped_files = skipped;
    Ok(corpus)
}

/// One ground-truth clone pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub id_a: String,
    pub id_b: String,
    /// `true` when the two fragments are clones (same class).
    pub truth: bool,
}

/// A set of labeled pairs over one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pairs: Vec<LabeledPair>,
    /// Name of the corpus the ids refer to (in-memory provenance only).
    pub source_corpus: String,
    /// Sampling seed, when this set was sampled rather than loaded.
    pub seed: Option<u64>,
}

impl PairDataset {
    /// Builds a pair set, validating that no pair is reflexive and no
    /// unordered pair repeats.
    ///
    /// # Errors
    ///
    /// [`DatasetError::SelfPair`] or [`DatasetError::DuplicatePair`] (line
    /// numbers refer to pair positions, 1-based).
    pub fn new(
        pairs: Vec<LabeledPair>,
        source_corpus: impl Into<String>,
        seed: Option<u64>,
    ) -> Result<Self, DatasetError> {
        let mut seen: HashSet<(String, String)> = HashSet::with_capacity(pairs.len());
        for (i, pair) in pairs.iter().enumerate() {
            let line = i + 1;
            if pair.id_a == pair.id_b {
                return Err(DatasetError::SelfPair {
                    line,
                    id: pair.id_a.clone(),
                });
            }
            let key = canonical_key(&pair.id_a, &pair.id_b);
            if !seen.insert(key) {
                return Err(DatasetError::DuplicatePair {
                    line,
                    id_a: pair.id_a.clone(),
                    id_b: pair.id_b.clone(),
                });
            }
        }
        Ok(Self {
            pairs,
            source_corpus: source_corpus.into(),
            seed,
        })
    }

    #[must_use]
    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of clone (positive) pairs.
    #[must_use]
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.truth).count()
    }

    /// Number of non-clone (negative) pairs.
    #[must_use]
    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }

    /// Checks that every referenced id exists in `corpus`.
    ///
    /// # Errors
    ///
    /// [`DatasetError::UnknownId`] naming the first missing id.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<(), DatasetError> {
        for pair in &self.pairs {
            for id in [&pair.id_a, &pair.id_b] {
                if corpus.get(id).is_none() {
                    return Err(DatasetError::UnknownId { id: id.clone() });
                }
            }
        }
        Ok(())
    }
}

fn canonical_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Deserialize)]
struct RawPair {
    id1: String,
    id2: String,
    label: serde_json::Value,
}

/// Loads a JSONL pair file (`{"id1", "id2", "label"}` per line).
///
/// Labels may be booleans or the integers 0/1. Blank lines are skipped;
/// anything else malformed is an error naming the 1-based line number.
///
/// # Errors
///
/// I/O failures, malformed lines, invalid labels, reflexive pairs, and
/// duplicate unordered pairs are all fatal.
pub fn load_pair_jsonl(path: &Path) -> Result<PairDataset, DatasetError> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPair =
            serde_json::from_str(&line).map_err(|err| DatasetError::MalformedPairLine {
                line: line_no,
                detail: err.to_string(),
            })?;
        let truth = match &raw.label {
            serde_json::Value::Bool(b) => *b,
            serde_json::Value::Number(n) if n.as_i64() == Some(0) => false,
            serde_json::Value::Number(n) if n.as_i64() == Some(1) => true,
            other => {
                return Err(DatasetError::InvalidLabel {
                    line: line_no,
                    found: other.to_string(),
                })
            }
        };
        if raw.id1 == raw.id2 {
            return Err(DatasetError::SelfPair {
                line: line_no,
                id: raw.id1,
            });
        }
        if !seen.insert(canonical_key(&raw.id1, &raw.id2)) {
            return Err(DatasetError::DuplicatePair {
                line: line_no,
                id_a: raw.id1,
                id_b: raw.id2,
            });
        }
        pairs.push(LabeledPair {
            id_a: raw.id1,
            id_b: raw.id2,
            truth,
        });
    }
    let source_corpus = path
        .file_stem()
        .map_or_else(|| "pairs".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(PairDataset {
        pairs,
        source_corpus,
        seed: None,
    })
}

/// Writes a pair set as JSONL with integer labels.
///
/// # Errors
///
/// Propagates I/O failures.
pub fn write_pair_jsonl(dataset: &PairDataset, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for pair in &dataset.pairs {
        let line = serde_json::json!({
            "id1": pair.id_a,
            "id2": pair.id_b,
            "label": i32::from(pair.truth),
        });
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Fragment index pairs `(i, j)` with `i < j`, encoded for set membership.
fn encode(i: usize, j: usize) -> u64 {
    ((i as u64) << 32) | j as u64
}

/// Samples `n_pos` same-label and `n_neg` cross-label fragment pairs.
///
/// The draw is uniform without replacement within each kind, deterministic in
/// `seed`, and free of duplicates and reflexive pairs. Positive pairs come
/// first in the result; each pair is emitted in corpus order (`id_a` before
/// `id_b`). Rejection sampling is used while it stays cheap; when a kind is
/// scarce relative to the request (or rejection stalls) the sampler falls
/// back to full enumeration plus a seeded partial shuffle, so termination
/// never depends on luck.
///
/// # Errors
///
/// Fails when any fragment lacks a label or when a kind has fewer achievable
/// pairs than requested (the error reports the achievable count).
pub fn sample_balanced_pairs(
    corpus: &Corpus,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<PairDataset, DatasetError> {
    let unlabeled = corpus.fragments().iter().filter(|f| f.label.is_none()).count();
    if unlabeled > 0 {
        return Err(DatasetError::UnlabeledFragments { count: unlabeled });
    }
    let n = corpus.len();
    let labels: Vec<i64> = corpus.fragments().iter().map(|f| f.label.unwrap()).collect();

    // Group corpus indices by label, iterated in ascending label order.
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        groups.entry(label).or_default().push(i);
    }

    let total_pairs = choose2(n as u64);
    let max_pos: u64 = groups.values().map(|g| choose2(g.len() as u64)).sum();
    let max_neg = total_pairs - max_pos;
    if n_pos as u64 > max_pos {
        return Err(DatasetError::InsufficientPairs {
            kind: "positive",
            requested: n_pos as u64,
            achievable: max_pos,
        });
    }
    if n_neg as u64 > max_neg {
        return Err(DatasetError::InsufficientPairs {
            kind: "negative",
            requested: n_neg as u64,
            achievable: max_neg,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let enumerate_pos = || -> Vec<(usize, usize)> {
        let mut all = Vec::with_capacity(max_pos as usize);
        for group in groups.values() {
            for (a, &i) in group.iter().enumerate() {
                for &j in &group[a + 1..] {
                    all.push((i, j));
                }
            }
        }
        all
    };
    let enumerate_neg = || -> Vec<(usize, usize)> {
        let mut all = Vec::with_capacity(max_neg as usize);
        for i in 0..n {
            for j in (i + 1)..n {
                if labels[i] != labels[j] {
                    all.push((i, j));
                }
            }
        }
        all
    };

    let positives = sample_kind(&mut rng, n, n_pos, max_pos, enumerate_pos, |i, j| {
        labels[i] == labels[j]
    });
    let negatives = sample_kind(&mut rng, n, n_neg, max_neg, enumerate_neg, |i, j| {
        labels[i] != labels[j]
    });

    let to_pair = |(i, j): (usize, usize), truth: bool| LabeledPair {
        id_a: corpus.fragments()[i].id.clone(),
        id_b: corpus.fragments()[j].id.clone(),
        truth,
    };
    let pairs: Vec<LabeledPair> = positives
        .into_iter()
        .map(|p| to_pair(p, true))
        .chain(negatives.into_iter().map(|p| to_pair(p, false)))
        .collect();

    PairDataset::new(pairs, corpus.name().to_string(), Some(seed))
}

/// Draws `want` distinct index pairs accepted by `accept`, using rejection
/// sampling when plentiful and seeded enumeration otherwise.
fn sample_kind(
    rng: &mut ChaCha8Rng,
    n: usize,
    want: usize,
    achievable: u64,
    enumerate: impl Fn() -> Vec<(usize, usize)>,
    accept: impl Fn(usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    if want == 0 {
        return Vec::new();
    }
    let exhaustive = |rng: &mut ChaCha8Rng| {
        let mut all = enumerate();
        let (picked, _) = all.partial_shuffle(rng, want);
        picked.to_vec()
    };
    // Dedup congestion: rejection slows sharply past half the population.
    if (want as u64) * 2 > achievable {
        return exhaustive(rng);
    }
    let mut chosen = Vec::with_capacity(want);
    let mut seen: HashSet<u64> = HashSet::with_capacity(want * 2);
    // Generous budget; scarcity beyond this means enumeration is the right tool.
    let max_attempts = 1_000_000 + 200 * want as u64;
    let mut attempts = 0u64;
    while chosen.len() < want {
        attempts += 1;
        if attempts > max_attempts {
            log::warn!("pair rejection sampling stalled; falling back to enumeration");
            return exhaustive(rng);
        }
        let i = rng.random_range(0..n as u64) as usize;
        let j = rng.random_range(0..n as u64) as usize;
        if i == j {
            continue;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        if !accept(i, j) || !seen.insert(encode(i, j)) {
            continue;
        }
        chosen.push((i, j));
    }
    chosen
}
