//! The `discourse` command line. Every subcommand reads the same flat
//! configuration (`--config FILE` plus per-key flags) and writes into
//! `--out-dir`.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 checkpoint
//! mismatch.

mod config;
mod rundir;
mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::error::Error;

pub use config::{ConfigValue, DecodeMode, RunConfig};
pub use rundir::{JsonLines, Manifest, RunDir, MANIFEST};
pub use stages::{read_generations, GenerationRow, KITCHEN_LEXICON};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECKPOINT: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Checkpoint(_) | Error::ChecksumMismatch { .. } => EXIT_CHECKPOINT,
        _ => EXIT_DATA,
    }
}

const SUBCOMMANDS: [(&str, &str); 6] = [
    ("make-synthetic", "Write a scripted recipe corpus and its event lexicon"),
    ("train-teacher", "Train an absolute- or relative-order teacher"),
    ("pretrain", "Pretrain the generator on the likelihood loss"),
    ("train-policy", "Fine-tune the generator with self-critical rewards"),
    ("generate", "Decode the dev split with a generator checkpoint"),
    ("evaluate", "Score generations with word, action and state-change overlap"),
];

pub fn command() -> Command {
    let defaults = RunConfig::default().to_pairs();
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .value_parser(clap::value_parser!(PathBuf))
        .help("key = value file; flags override it")];
    for ((key, help), (_, default)) in RunConfig::KEYS.iter().zip(&defaults) {
        let mut a = Arg::new(*key)
            .long(key.replace('_', "-"))
            .value_name("VALUE")
            .action(ArgAction::Set)
            .help(format!("{help} [default: {default}]"));
        if default == "true" || default == "false" {
            a = a.num_args(0..=1).default_missing_value("true");
        }
        args.push(a);
    }
    Command::new("discourse")
        .about("Sentence-ordering rewards for long-form recipe generation")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(
            SUBCOMMANDS
                .iter()
                .map(|(name, about)| Command::new(*name).about(*about).args(args.clone())),
        )
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(m: &ArgMatches) -> crate::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(p).map_err(|e| match e {
            Error::Io(io) => Error::invalid(format!("cannot read config {}: {io}", p.display())),
            Error::Parse { path, line, message } => {
                Error::invalid(format!("{}:{line}: {message}", path.display()))
            }
            other => other,
        })?;
    }
    for (key, _) in RunConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(name: &str, cfg: &RunConfig) -> crate::Result<()> {
    match name {
        "make-synthetic" => stages::make_synthetic(cfg),
        "train-teacher" => stages::train_teacher_stage(cfg),
        "pretrain" => stages::pretrain_stage(cfg),
        "train-policy" => stages::train_policy_stage(cfg),
        "generate" => stages::generate_stage(cfg),
        "evaluate" => stages::evaluate_stage(cfg),
        other => Err(Error::invalid(format!("unknown subcommand {other}"))),
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let Some((name, sub)) = m.subcommand() else {
        return EXIT_USAGE;
    };
    let result = resolve_config(sub).and_then(|cfg| dispatch(name, &cfg));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
