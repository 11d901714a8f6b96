//! `codesum` — summarize a source-code corpus with a chat model, embed the
//! summaries, and evaluate clone detection, clustering, and 2-D projection.
//!
//! Exit codes: 0 success, 2 configuration error, 3 provider error,
//! 4 summarization failure cap exceeded, 1 anything else.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{ConfigError, PipelineConfig, OVERRIDE_KEYS};
use pipeline::CliError;

fn cli() -> Command {
    let mut cmd = Command::new("codesum")
        .about("Code-summary embeddings: clone detection, clustering, 2-D projection")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .short('c')
                .long("config")
                .value_name("FILE")
                .help("Pipeline config (TOML)")
                .global(true)
                .action(ArgAction::Set),
        );
    for key in OVERRIDE_KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(key)
                .value_name("VALUE")
                .help("Override the config key of the same name")
                .hide_short_help(true)
                .global(true)
                .action(ArgAction::Set),
        );
    }
    cmd.subcommand(Command::new("summarize").about("Summarize every fragment (fills the cache)"))
        .subcommand(Command::new("embed").about("Summarize and write embedding artifacts"))
        .subcommand(Command::new("clone").about("Clone detection: cosine threshold sweep"))
        .subcommand(Command::new("cluster").about("Cluster the embeddings with k-means"))
        .subcommand(Command::new("viz").about("Project the embeddings to 2-D"))
        .subcommand(Command::new("run").about("Run every task enabled in the config"))
        .subcommand(Command::new("report").about("Re-render a text report from artifacts"))
}

fn load_config(matches: &ArgMatches) -> Result<PipelineConfig, ConfigError> {
    let path: &String = matches
        .get_one("config")
        .ok_or_else(|| ConfigError("--config <FILE> is required".to_string()))?;
    let mut config = PipelineConfig::from_file(&PathBuf::from(path))?;
    for key in OVERRIDE_KEYS {
        if let Some(value) = matches.get_one::<String>(key) {
            config.apply_override(key, value)?;
        }
    }
    Ok(config)
}

fn dispatch(name: &str, config: &PipelineConfig) -> Result<(), CliError> {
    match name {
        "summarize" => pipeline::cmd_summarize(config),
        "embed" => pipeline::cmd_embed(config),
        "clone" => pipeline::cmd_clone(config),
        "cluster" => pipeline::cmd_cluster(config),
        "viz" => pipeline::cmd_viz(config),
        "run" => pipeline::cmd_run(config),
        "report" => pipeline::cmd_report(config),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let matches = cli().get_matches();
    let (name, sub_matches) = matches
        .subcommand()
        .expect("subcommand_required is set");

    let config = match load_config(sub_matches) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(name, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
