//! Optional `key = value` files supplying flag defaults. Keys are long flag
//! names; a repeated key gives a repeatable flag several values. Flags on
//! the command line replace every file value of the same key.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::CommandFactory;

use crate::args::Cli;
use crate::io::DataError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_config(text: &str, path: &Path) -> Result<Vec<Entry>, DataError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| DataError::at(path, idx + 1, "expected key = value"))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(DataError::at(path, idx + 1, "empty key"));
        }
        out.push(Entry {
            key,
            value: value.trim().to_string(),
            line: idx + 1,
        });
    }
    Ok(out)
}

/// Path given to `--config`, if any.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn given_on_command_line(argv: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_value = format!("{flag}=");
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&with_value)
    })
}

/// Index of the subcommand name in `argv`, skipping global flags.
fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut k = 1;
    while k < argv.len() {
        let a = argv[k].to_string_lossy();
        if a == "--config" || a == "--threads" {
            k += 2;
        } else if a.starts_with('-') {
            k += 1;
        } else {
            return Some(k);
        }
    }
    None
}

/// The argument vector with the config file's entries inserted right after
/// the subcommand name. Without `--config` it is returned unchanged; a
/// missing subcommand is left for the parser to report.
pub fn apply_config(argv: Vec<OsString>) -> Result<Vec<OsString>, DataError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let Some(sub_at) = subcommand_index(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| DataError::file(&path, e))?;
    let entries = parse_config(&text, &path)?;
    let cmd = Cli::command();
    let sub_name = argv[sub_at].to_string_lossy().to_string();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(argv);
    };
    let known: Vec<String> = sub
        .get_arguments()
        .chain(cmd.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "config" && l != "help" && l != "version")
        .collect();
    let mut injected = Vec::new();
    for e in entries {
        if !known.contains(&e.key) {
            return Err(DataError::at(&path, e.line, format!("unknown key {:?} for {sub_name}", e.key)));
        }
        if given_on_command_line(&argv, &e.key) {
            continue;
        }
        injected.push(OsString::from(format!("--{}", e.key)));
        injected.push(OsString::from(e.value));
    }
    let mut out = argv[..=sub_at].to_vec();
    out.extend(injected);
    out.extend(argv[sub_at + 1..].iter().cloned());
    Ok(out)
}
