//! Command-line front end. Flags are `--key value` pairs; `--key` maps to the
//! config key `key` with dashes turned into underscores, so every run-config
//! knob is reachable from the command line as well as from a config file.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::harness::commands::{
    cmd_eval, cmd_experiment, cmd_gen_data, cmd_gradcheck, cmd_train, cmd_train_switch,
};
use crate::harness::config::build_config;

pub const USAGE: &str = "\
usage: swiden <command> [--flag value ...]

commands:
  gen-data     --out FILE [--seed N] [--classes N] [--per-class N] [--resolution N]
  train        --data FILE --out DIR [--config FILE] [--arch baseline|swiden|grn|switch]
               [--k N] [--lambda X] [--selector oracle|predicted] [--switch-checkpoint FILE]
               [--lr X] [--momentum X] [--scheduler plateau|off] [--epochs N] [--batch N]
               [--seed N] [--rescale N] [--crop N] [--train-per-cell N] [--test-per-cell N]
               [--split-seed N] [--split-index N]
  train-switch same flags as train; forces --arch switch
  eval         --data FILE --checkpoint FILE [train flags...] [--out DIR]
  gradcheck    [--seed N]
  experiment   --data FILE --out DIR [--suite table1|table3] [--scale desk|paper]
               [--seed N] [--splits N]

exit codes: 0 ok, 1 invalid configuration, 2 data error, 3 gradient check failure
";

/// `--key value` pairs in order; keys keep their dashes here and are
/// normalized when consumed.
fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut flags = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::InvalidConfig(format!("expected --flag, got '{}'", arg)))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| Error::InvalidConfig(format!("flag --{} is missing a value", key)))?;
        flags.push((key.replace('-', "_"), value.clone()));
        i += 2;
    }
    Ok(flags)
}

fn take(flags: &mut Vec<(String, String)>, key: &str) -> Option<String> {
    let pos = flags.iter().position(|(k, _)| k == key)?;
    Some(flags.remove(pos).1)
}

fn take_parsed<T: std::str::FromStr>(flags: &mut Vec<(String, String)>, key: &str) -> Result<Option<T>> {
    match take(flags, key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("invalid value '{}' for --{}", v, key))),
    }
}

fn reject_leftovers(flags: &[(String, String)]) -> Result<()> {
    if let Some((k, _)) = flags.first() {
        return Err(Error::InvalidConfig(format!("unknown flag --{}", k.replace('_', "-"))));
    }
    Ok(())
}

fn run(args: &[String]) -> Result<()> {
    let Some(command) = args.first() else {
        return Err(Error::InvalidConfig(format!("missing command\n{}", USAGE)));
    };
    let mut flags = parse_flags(&args[1..])?;
    match command.as_str() {
        "gen-data" => {
            let seed = take_parsed::<u64>(&mut flags, "seed")?.unwrap_or(42);
            let classes = take_parsed::<usize>(&mut flags, "classes")?.unwrap_or(10);
            let per_class = take_parsed::<usize>(&mut flags, "per_class")?.unwrap_or(24);
            let resolution = take_parsed::<usize>(&mut flags, "resolution")?.unwrap_or(72);
            let out = take(&mut flags, "out")
                .ok_or_else(|| Error::InvalidConfig("gen-data requires --out".into()))?;
            reject_leftovers(&flags)?;
            cmd_gen_data(seed, classes, per_class, resolution, &PathBuf::from(out))
        }
        "train" | "train-switch" => {
            let config_file = take(&mut flags, "config").map(PathBuf::from);
            let mut cfg = build_config(config_file.as_deref(), &flags)?;
            if command == "train-switch" {
                cmd_train_switch(&mut cfg)
            } else {
                cmd_train(&cfg)
            }
        }
        "eval" => {
            let checkpoint = take(&mut flags, "checkpoint")
                .ok_or_else(|| Error::InvalidConfig("eval requires --checkpoint".into()))?;
            let config_file = take(&mut flags, "config").map(PathBuf::from);
            let cfg = build_config(config_file.as_deref(), &flags)?;
            cmd_eval(&cfg, &PathBuf::from(checkpoint))
        }
        "gradcheck" => {
            let seed = take_parsed::<u64>(&mut flags, "seed")?.unwrap_or(2024);
            reject_leftovers(&flags)?;
            cmd_gradcheck(seed)
        }
        "experiment" => {
            let suite = take(&mut flags, "suite").unwrap_or_else(|| "table1".into());
            let scale = take(&mut flags, "scale").unwrap_or_else(|| "desk".into());
            let seed = take_parsed::<u64>(&mut flags, "seed")?.unwrap_or(42);
            let splits = take_parsed::<usize>(&mut flags, "splits")?;
            let data = take(&mut flags, "data")
                .ok_or_else(|| Error::InvalidConfig("experiment requires --data".into()))?;
            let out = take(&mut flags, "out")
                .ok_or_else(|| Error::InvalidConfig("experiment requires --out".into()))?;
            reject_leftovers(&flags)?;
            cmd_experiment(&suite, &scale, seed, &PathBuf::from(data), &PathBuf::from(out), splits)
        }
        "help" | "--help" | "-h" => {
            print!("{}", USAGE);
            Ok(())
        }
        other => Err(Error::InvalidConfig(format!("unknown command '{}'\n{}", other, USAGE))),
    }
}

/// Entry point used by `main`; returns the process exit code.
pub fn main_entry(args: &[String]) -> i32 {
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}
