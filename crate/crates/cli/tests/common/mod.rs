#![allow(dead_code)] // shared by multiple test targets, each using a subset

//! Shared helpers for the CLI end-to-end tests: a small labeled corpus with
//! a canned chat fixture whose summaries separate cleanly in the hashing
//! embedding space (within-group cosine ≥ 0.875, across-group ≤ 0.125 at
//! dim 256, seed 0).

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;

use codesum_core::dataset::{CodeFragment, LanguageHint};
use codesum_core::prompt::PromptTemplate;

pub const GROUPS: usize = 3;
pub const PER_GROUP: usize = 10;

#[must_use]
pub fn golden_code(group: usize, program: usize) -> String {
    format!("int solve_{group}_{program}(int x) {{\n    return x * {group} + {program};\n}}\n")
}

/// One-sentence summary: seven tokens shared by the whole group plus one
/// token unique to the fragment.
#[must_use]
pub fn golden_summary(group: usize, program: usize) -> String {
    format!(
        "Task{group} alpha{group} beta{group} gamma{group} delta{group} \
         epsilon{group} zeta{group} unique{group}x{program}."
    )
}

/// The canned chat response: the summary plus a second sentence that the
/// first-sentence extraction must discard.
#[must_use]
pub fn golden_response(group: usize, program: usize) -> String {
    format!(
        "{} It also has a second sentence.",
        golden_summary(group, program)
    )
}

/// Writes the corpus as one numbered directory per group.
pub fn write_golden_corpus(corpus_dir: &Path) {
    for group in 0..GROUPS {
        let problem = corpus_dir.join((group + 1).to_string());
        fs::create_dir_all(&problem).expect("create problem dir");
        for program in 0..PER_GROUP {
            fs::write(problem.join(format!("p{program}.c")), golden_code(group, program))
                .expect("write program");
        }
    }
}

/// Writes the prompt→response fixture, keyed by the default English prompt.
/// `skip_first` group-0 programs get no fixture line (to provoke failures).
pub fn write_golden_fixture(path: &Path, skip_first: usize) {
    let template = PromptTemplate::english_default();
    let mut file = fs::File::create(path).expect("create fixture");
    for group in 0..GROUPS {
        for program in 0..PER_GROUP {
            if group == 0 && program < skip_first {
                continue;
            }
            let fragment = CodeFragment {
                id: format!("{}/p{program}.c", group + 1),
                label: Some((group + 1) as i64),
                text: golden_code(group, program),
                language: LanguageHint::C,
                source_path: None,
            };
            let line = serde_json::json!({
                "prompt": template.render(&fragment),
                "response": golden_response(group, program),
            });
            writeln!(file, "{line}").expect("write fixture line");
        }
    }
}

/// A full pipeline config covering all three tasks.
#[must_use]
pub fn golden_config(
    corpus_dir: &Path,
    fixture: &Path,
    cache_root: &Path,
    output_dir: &Path,
) -> String {
    format!(
        r#"cache_root = "{cache}"
output_dir = "{out}"

[dataset]
layout = "problem-dirs"
path = "{corpus}"
name = "golden"
n_pos = 100
n_neg = 100
seed = 7

[llm]
provider = "fixture"
fixture_path = "{fixture}"
parallelism = 2

[embedding]
provider = "deterministic"
dim = 256
seed = 0

[stopwords]
enabled = false

[tasks.clone]

[tasks.cluster]
seed = 0

[tasks.viz]
perplexity = 8.0
iterations = 250
seed = 0
"#,
        cache = cache_root.display(),
        out = output_dir.display(),
        corpus = corpus_dir.display(),
        fixture = fixture.display(),
    )
}

/// The `codesum` binary under test, with quiet logging.
#[must_use]
pub fn codesum() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_codesum"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

/// Prepares corpus + fixture + config under `dir`; returns the config path.
pub fn setup_golden(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    write_golden_corpus(&corpus);
    let fixture = dir.join("fixture.jsonl");
    write_golden_fixture(&fixture, 0);
    let config = golden_config(&corpus, &fixture, &dir.join("cache"), &dir.join("out"));
    let config_path = dir.join("config.toml");
    fs::write(&config_path, config).expect("write config");
    config_path
}
