//! Merging a `key=value` config file under the command line.
//!
//! File entries are turned into `--key value` arguments placed before the
//! user's own arguments; since every argument overrides itself, the command
//! line wins. Keys that are not flags of the chosen command are rejected.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgMatches, Command, CommandFactory, FromArgMatches};
use motion_attn::kv::KeyValues;

use crate::args::Cli;

fn command() -> Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Index of the subcommand token in `argv`, skipping a leading `--config`.
fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            i += 2;
        } else if a.starts_with("--config=") {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn file_args(sub: &Command, kv: &KeyValues) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (key, value) in kv.pairs() {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && a.get_id() != "config")
            .ok_or_else(|| format!("unknown config key {key:?} for command {}", sub.get_name()))?;
        if arg.get_action().takes_values() {
            out.push(format!("--{key}").into());
            out.push(value.into());
        } else {
            match value.as_str() {
                "true" => out.push(format!("--{key}").into()),
                "false" => {}
                other => return Err(format!("config key {key:?} expects true or false, got {other:?}")),
            }
        }
    }
    Ok(out)
}

pub enum ParseError {
    Clap(clap::Error),
    Config(String),
}

pub fn parse(argv: Vec<OsString>) -> Result<Cli, ParseError> {
    let cmd = command();
    let first: ArgMatches = cmd.clone().try_get_matches_from(&argv).map_err(ParseError::Clap)?;
    let Some(path) = first.get_one::<std::path::PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&first).map_err(ParseError::Clap);
    };
    let text = read_config(&path)?;
    let kv = KeyValues::parse(&text).map_err(|e| ParseError::Config(format!("{}: {e}", path.display())))?;
    let (name, _) = first.subcommand().expect("a subcommand is required");
    let sub = cmd.find_subcommand(name).expect("matched subcommand exists");
    let extra = file_args(sub, &kv).map_err(ParseError::Config)?;
    let at = subcommand_index(&argv).expect("a subcommand was matched") + 1;
    let mut merged = argv[..at].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[at..]);
    let matches = cmd.try_get_matches_from(merged).map_err(ParseError::Clap)?;
    Cli::from_arg_matches(&matches).map_err(ParseError::Clap)
}

fn read_config(path: &Path) -> Result<String, ParseError> {
    std::fs::read_to_string(path).map_err(|e| ParseError::Config(format!("cannot read config {}: {e}", path.display())))
}
