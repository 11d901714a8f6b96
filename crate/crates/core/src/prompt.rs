//! Summarization prompts, sentence extraction, and stop-word removal.
//!
//! A prompt template is a fixed instruction with exactly one `{code}`
//! placeholder; every fragment gets the same instruction so summaries differ
//! only because the code does. Model responses are reduced to their first
//! sentence: chatty preamble lines ("Sure, here is the summary:") are
//! skipped, then the text is cut at the first sentence-terminal delimiter of
//! the prompt language, with a guard so abbreviations like `e.g.` do not end
//! the sentence early. An optional pass strips stop words from the extracted
//! sentence before embedding.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::CodeFragment;
use crate::hash::sha256_hex;

/// The placeholder substituted with fragment text.
pub const CODE_PLACEHOLDER: &str = "{code}";

const DEFAULT_ENGLISH_TEMPLATE: &str = "Now that you are a programmer, read the following \
code in detail and succinctly summarize the function of this code in one sentence without \
explaining the process:\n{code}";

const DEFAULT_CHINESE_TEMPLATE: &str =
    "现在你是一名程序员，请仔细阅读以下代码，并用一句话简洁地概括这段代码的功能，不要解释过程：\n{code}";

/// Errors from prompt handling and summary post-processing.
#[derive(Debug, Error)]
pub enum PromptError {
    /// A template must contain the `{code}` placeholder exactly once.
    #[error("template must contain {CODE_PLACEHOLDER} exactly once, found {found}")]
    PlaceholderCount { found: usize },
    /// The model response had no extractable sentence.
    #[error("could not extract a sentence: {reason}")]
    ExtractionFailed { reason: String },
    /// Stop-word removal deleted the entire summary.
    #[error("summary consists entirely of stop words")]
    AllStopWords,
    /// File access failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Natural language of the prompt and its summaries.
///
/// Serialized as a plain tag (`"english"`, `"chinese"`, or a custom string),
/// which is also the `lang` component of summary cache keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum PromptLanguage {
    English,
    Chinese,
    Other(String),
}

impl PromptLanguage {
    /// Canonical lowercase tag.
    #[must_use]
    pub fn tag(&self) -> &str {
        match self {
            Self::English => "english",
            Self::Chinese => "chinese",
            Self::Other(tag) => tag,
        }
    }

    /// Sentence-terminal delimiters for this language. The unknown-language
    /// fallback accepts both scripts' delimiters.
    fn delimiters(&self) -> &'static [char] {
        match self {
            Self::English => &['.', '!', '?'],
            Self::Chinese => &['。', '！', '？'],
            Self::Other(_) => &['.', '!', '?', '。', '！', '？'],
        }
    }
}

impl From<String> for PromptLanguage {
    fn from(tag: String) -> Self {
        match tag.to_ascii_lowercase().as_str() {
            "english" | "en" => Self::English,
            "chinese" | "zh" => Self::Chinese,
            _ => Self::Other(tag),
        }
    }
}

impl From<PromptLanguage> for String {
    fn from(lang: PromptLanguage) -> Self {
        lang.tag().to_string()
    }
}

/// A summarization instruction with a single `{code}` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    language: PromptLanguage,
    body: String,
}

impl PromptTemplate {
    /// Validates that `body` contains exactly one placeholder.
    ///
    /// # Errors
    ///
    /// [`PromptError::PlaceholderCount`] otherwise.
    pub fn new(language: PromptLanguage, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let found = body.matches(CODE_PLACEHOLDER).count();
        if found != 1 {
            return Err(PromptError::PlaceholderCount { found });
        }
        Ok(Self { language, body })
    }

    /// The built-in English instruction.
    #[must_use]
    pub fn english_default() -> Self {
        Self::new(PromptLanguage::English, DEFAULT_ENGLISH_TEMPLATE)
            .expect("built-in template is valid")
    }

    /// The built-in Chinese instruction.
    #[must_use]
    pub fn chinese_default() -> Self {
        Self::new(PromptLanguage::Chinese, DEFAULT_CHINESE_TEMPLATE)
            .expect("built-in template is valid")
    }

    /// Loads a template body from a file.
    ///
    /// # Errors
    ///
    /// I/O failures and placeholder-count violations.
    pub fn from_file(language: PromptLanguage, path: &Path) -> Result<Self, PromptError> {
        let body = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::new(language, body)
    }

    #[must_use]
    pub fn language(&self) -> &PromptLanguage {
        &self.language
    }

    #[must_use]
    pub fn body(&self) -> &str {
        &self.body
    }

    /// SHA-256 of the template body; part of the summary cache key.
    #[must_use]
    pub fn body_hash(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }

    /// Substitutes the fragment text into the placeholder.
    #[must_use]
    pub fn render(&self, fragment: &CodeFragment) -> String {
        self.body.replacen(CODE_PLACEHOLDER, &fragment.text, 1)
    }
}

/// One extracted fragment summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    /// The summary sentence (never empty; at most one unguarded
    /// sentence-terminal delimiter).
    pub text: String,
    /// Id of the summarized fragment.
    pub fragment_id: String,
    /// Language of the prompt that produced this summary.
    pub prompt_language: PromptLanguage,
    /// Whether stop words have been stripped from `text`.
    pub stopwords_removed: bool,
}

/// True for a line that introduces rather than states the summary.
/// Decides whether the delimiter `c` at byte offset `i` genuinely ends a
/// sentence. `!`, `?`, and the fullwidth delimiters always do. An ASCII
/// period is discounted mid-token ("3.14", the inner dot of "e.g.") and when
/// the next word continues in lowercase ("e.g. parses dates" reads on).
fn is_sentence_end(content: &str, i: usize, c: char) -> bool {
    if c != '.' {
        return true;
    }
    let rest = &content[i + c.len_utf8()..];
    match rest.chars().next() {
        None => true,
        Some(next) if !next.is_whitespace() => false,
        Some(_) => rest
            .trim_start()
            .chars()
            .next()
            .is_none_or(|follow| !follow.is_ascii_lowercase()),
    }
}

fn is_preamble_line(line: &str) -> bool {
    let line = line.trim_end();
    line.ends_with(':') || line.ends_with('：')
}

/// Reduces a raw model response to its first sentence.
///
/// Leading blank lines and preamble lines (ending with a colon) are skipped;
/// if everything looks like preamble the whole response is used as-is. The
/// sentence ends at the first terminal delimiter of `language`, inclusive,
/// except that an ASCII period immediately followed by a lowercase ASCII
/// letter is treated as part of an abbreviation. Without any delimiter the
/// first line is returned. The function is idempotent: re-extracting from its
/// own output changes nothing.
///
/// # Errors
///
/// [`PromptError::ExtractionFailed`] when the response is empty or
/// whitespace-only.
pub fn extract_first_sentence(
    response: &str,
    language: &PromptLanguage,
) -> Result<String, PromptError> {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return Err(PromptError::ExtractionFailed {
            reason: "response is empty".to_string(),
        });
    }

    let lines: Vec<&str> = trimmed.lines().collect();
    let mut start = 0;
    while start < lines.len() {
        let line = lines[start].trim();
        if line.is_empty() || is_preamble_line(line) {
            start += 1;
        } else {
            break;
        }
    }
    if start == lines.len() {
        // Nothing but preamble: take the response at face value.
        start = 0;
    }
    let content = lines[start..].join("\n");
    let content = content.trim();

    let delimiters = language.delimiters();
    for (i, c) in content.char_indices() {
        if !delimiters.contains(&c) || !is_sentence_end(content, i, c) {
            continue;
        }
        let end = i + c.len_utf8();
        return Ok(content[..end].trim().to_string());
    }

    Ok(content
        .lines()
        .next()
        .expect("trimmed non-empty content has a first line")
        .trim()
        .to_string())
}

/// A stop-word list.
///
/// English removal compares whitespace-delimited tokens case-insensitively;
/// Chinese removal scans the raw character stream with longest-match, since
/// the script has no word boundaries.
#[derive(Debug, Clone, Default)]
pub struct StopList {
    /// Lowercased words, longest (in chars) first, for longest-match scans.
    by_length: Vec<String>,
    set: HashSet<String>,
}

impl StopList {
    /// Builds a list from words; entries are trimmed, lowercased, and
    /// deduplicated, and empties are dropped.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for word in words {
            let word = word.as_ref().trim().to_lowercase();
            if !word.is_empty() {
                set.insert(word);
            }
        }
        let mut by_length: Vec<String> = set.iter().cloned().collect();
        by_length.sort_by(|a, b| {
            b.chars()
                .count()
                .cmp(&a.chars().count())
                .then_with(|| a.cmp(b))
        });
        Self { by_length, set }
    }

    /// Reads one word per line; blank lines are ignored.
    ///
    /// # Errors
    ///
    /// Propagates I/O failures.
    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let contents = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::new(contents.lines()))
    }

    /// A small built-in list of common English function words.
    #[must_use]
    pub fn default_english() -> Self {
        Self::new([
            "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "of", "to",
            "in", "on", "at", "for", "with", "by", "from", "as", "that", "this", "these",
            "those", "it", "its", "and", "or", "but", "not", "then", "there", "which", "will",
            "can", "into", "over", "such", "each", "all", "some", "any",
        ])
    }

    /// A small built-in list of common Chinese function words.
    #[must_use]
    pub fn default_chinese() -> Self {
        Self::new([
            "的", "了", "和", "是", "就", "都", "而", "及", "与", "着", "或", "也", "在",
            "于", "对", "把", "被", "向", "之", "这个", "那个", "这些", "那些", "一个",
            "我们", "它们",
        ])
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.by_length.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.by_length.is_empty()
    }

    /// Case-insensitive membership test.
    #[must_use]
    pub fn contains(&self, word: &str) -> bool {
        self.set.contains(&word.to_lowercase())
    }
}

/// One longest-match removal pass over a character stream.
fn strip_longest_match(text: &str, stops: &StopList) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'outer: while !rest.is_empty() {
        for word in &stops.by_length {
            if rest.starts_with(word.as_str()) {
                rest = &rest[word.len()..];
                continue 'outer;
            }
        }
        let c = rest.chars().next().expect("non-empty rest");
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Removes stop words from a summary, dispatching on its prompt language.
///
/// English (and unknown-language) summaries are filtered token-by-token on
/// whitespace, case-insensitively; Chinese summaries are scanned with
/// longest-match over raw characters, repeated to a fixed point so removals
/// that splice new matches together are also caught. With an empty list the
/// text is returned unchanged. The result always has `stopwords_removed`
/// set, and re-applying the same list is a no-op.
///
/// # Errors
///
/// [`PromptError::AllStopWords`] when nothing remains.
pub fn remove_stop_words(summary: &Summary, stops: &StopList) -> Result<Summary, PromptError> {
    let text = match summary.prompt_language {
        PromptLanguage::Chinese => {
            let mut current = summary.text.clone();
            loop {
                let next = strip_longest_match(&current, stops);
                if next == current {
                    break current;
                }
                current = next;
            }
        }
        _ => summary
            .text
            .split_whitespace()
            .filter(|token| !stops.contains(token))
            .collect::<Vec<_>>()
            .join(" "),
    };
    if text.trim().is_empty() {
        return Err(PromptError::AllStopWords);
    }
    Ok(Summary {
        text: text.trim().to_string(),
        fragment_id: summary.fragment_id.clone(),
        prompt_language: summary.prompt_language.clone(),
        stopwords_removed: true,
    })
}
