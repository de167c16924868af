//! `--config` support: file entries become flags unless the command line
//! already sets them.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Command};

use crate::error::{Error, Result};

/// Keys of a `reproduce` config that are not flags; they override the preset.
pub type Overrides = toml::Table;

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(rest));
        }
    }
    None
}

fn scalar(key: &str, v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(Error::Configuration(format!("config key '{key}' has unsupported value {other}"))),
    }
}

/// Splices the config file's entries into `argv` right after the subcommand.
pub fn merge_config_args(cmd: &Command, argv: Vec<OsString>) -> Result<(Vec<OsString>, Overrides)> {
    let Some(path) = config_path(&argv) else {
        return Ok((argv, Overrides::new()));
    };
    let text = std::fs::read_to_string(&path)?;
    let table: toml::Table =
        text.parse().map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
    let Some((pos, sub)) = argv
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cmd.find_subcommand(a.to_string_lossy().as_ref()).map(|s| (i, s)))
    else {
        return Ok((argv, Overrides::new()));
    };
    let given = |flag: &str| {
        argv.iter().any(|a| {
            let s = a.to_string_lossy();
            s == format!("--{flag}") || s.starts_with(&format!("--{flag}="))
        })
    };
    let mut inserted: Vec<OsString> = Vec::new();
    let mut overrides = Overrides::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(flag.as_str())) else {
            if sub.get_name() == "reproduce" {
                overrides.insert(key.clone(), value.clone());
                continue;
            }
            return Err(Error::Configuration(format!("config key '{key}' is not a flag of {}", sub.get_name())));
        };
        if given(&flag) || flag == "config" {
            continue;
        }
        match (arg.get_action(), value) {
            (ArgAction::SetTrue, toml::Value::Boolean(b)) => {
                if *b {
                    inserted.push(format!("--{flag}").into());
                }
            }
            (ArgAction::Append, toml::Value::Array(items)) => {
                for item in items {
                    inserted.push(format!("--{flag}").into());
                    inserted.push(scalar(key, item)?.into());
                }
            }
            (_, toml::Value::Array(items)) => {
                let parts = items.iter().map(|i| scalar(key, i)).collect::<Result<Vec<_>>>()?;
                inserted.push(format!("--{flag}").into());
                inserted.push(parts.join(",").into());
            }
            (_, v) => {
                inserted.push(format!("--{flag}").into());
                inserted.push(scalar(key, v)?.into());
            }
        }
    }
    let mut out = argv;
    out.splice(pos + 1..pos + 1, inserted);
    Ok((out, overrides))
}

/// Recursively overlays `over` onto `base`.
pub fn deep_merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => deep_merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::args::Cli;
    use clap::CommandFactory;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn file_values_fill_in_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "method = \"snip\"\nsparsity = 0.5\nwidths = [4, 8, 2]\nper_layer = true\n").unwrap();
        let argv = os(&["gplab", "prune", "--sparsity", "0.7", "--out", "m.gpmk", "--config", cfg.to_str().unwrap()]);
        let (merged, rest) = merge_config_args(&Cli::command(), argv).unwrap();
        assert!(rest.is_empty());
        let merged: Vec<String> = merged.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert!(merged.windows(2).any(|w| w == ["--method", "snip"]));
        assert!(merged.windows(2).any(|w| w == ["--widths", "4,8,2"]));
        assert!(merged.contains(&"--per-layer".to_string()));
        assert!(!merged.contains(&"0.5".to_string()));
    }

    #[test]
    fn unknown_keys_are_configuration_errors_except_for_reproduce() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "trials = 3\n[data]\nsubset = 100\n").unwrap();
        let path = cfg.to_str().unwrap();
        let err = merge_config_args(&Cli::command(), os(&["gplab", "prune", "--config", path])).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
        let (_, rest) = merge_config_args(&Cli::command(), os(&["gplab", "reproduce", "--config", path])).unwrap();
        assert_eq!(rest.get("trials").and_then(|v| v.as_integer()), Some(3));
    }

    #[test]
    fn deep_merge_overlays_nested_tables() {
        let mut base: toml::Table = "a = 1\n[data]\nsubset = 5\nsource = \"auto\"\n".parse().unwrap();
        let over: toml::Table = "[data]\nsubset = 7\n".parse().unwrap();
        deep_merge(&mut base, &over);
        assert_eq!(base["data"]["subset"].as_integer(), Some(7));
        assert_eq!(base["data"]["source"].as_str(), Some("auto"));
    }
}
