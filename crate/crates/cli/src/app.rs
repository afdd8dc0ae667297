//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::config::{read_config, ExperimentConfig, RawConfig, BOOL_KEYS, KEYS};
use crate::pipeline::{Experiment, Stage};
use crate::{plots, CliError, DEFAULT_OUTPUT, OUTPUT_ENV};

const STAGES: [(&str, &str); 8] = [
    ("generate", "solve (or load cached) training and test snapshots"),
    ("train-pod", "compute the POD basis"),
    ("train-dlrom", "train the monolithic DL-ROM"),
    ("train-mcrom", "train the classifier and one subnet per magnitude band"),
    ("evaluate", "error reports of every trained model on the test set"),
    ("bench", "online timing of FOM, POD and network queries"),
    ("run", "every stage of the experiment in order"),
    ("emit-plots", "plot-ready CSV and SVG files from a run's reports"),
];

fn common_args(mut cmd: Command) -> Command {
    cmd = cmd
        .arg(
            Arg::new("config").long("config").value_name("FILE").help("key = value config file with [section] headers"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("ROOT")
                .help(format!("output root (default ${OUTPUT_ENV} or `{DEFAULT_OUTPUT}`)")),
        );
    for (section, key, help) in KEYS {
        let mut arg = Arg::new(*key).long(*key).help(format!("[{section}] {help}")).action(ArgAction::Set);
        if BOOL_KEYS.contains(key) {
            arg = arg.value_name("BOOL").num_args(0..=1).default_missing_value("true");
        } else {
            arg = arg.value_name("VALUE").allow_hyphen_values(true);
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

pub fn command() -> Command {
    let mut cmd = Command::new("mcrom")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Reduced-order modeling experiments: POD, DL-ROM and MC-ROM")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in STAGES {
        let mut sub = common_args(Command::new(name).about(about));
        if name == "emit-plots" {
            sub = sub.arg(Arg::new("dir").value_name("ARTIFACT_DIR").help("run directory (default <root>/<name>)"));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn output_root(m: &ArgMatches) -> PathBuf {
    m.get_one::<String>("out")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

/// Config file keys, then flags on top.
pub fn user_config(m: &ArgMatches) -> Result<RawConfig, CliError> {
    let mut raw = match m.get_one::<String>("config") {
        Some(path) => read_config(path.as_ref())?,
        None => RawConfig::new(),
    };
    for (_, key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            raw.insert(key.to_string(), v.clone());
        }
    }
    Ok(raw)
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn execute<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(args).map_err(|e| {
        if e.use_stderr() {
            CliError::Config(e.to_string())
        } else {
            let _ = e.print();
            CliError::Config(String::new())
        }
    });
    let matches = match matches {
        Ok(m) => m,
        Err(CliError::Config(msg)) if msg.is_empty() => return Ok(()),
        Err(e) => return Err(e),
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cfg = ExperimentConfig::resolve(&user_config(sub)?)?;
    let root = output_root(sub);
    if name == "emit-plots" {
        let dir = sub.get_one::<String>("dir").map(PathBuf::from).unwrap_or_else(|| root.join(&cfg.name));
        if !dir.join("reports").is_dir() {
            return Err(CliError::Io(format!("{} has no reports directory", dir.display())));
        }
        let skipped = plots::emit_plots(&dir)?;
        if !skipped.is_empty() {
            eprintln!("skipped missing reports: {}", skipped.join(", "));
        }
        return Ok(());
    }
    let exp = Experiment::new(cfg, root)?;
    let stage = match name {
        "generate" => Stage::Generate,
        "train-pod" => Stage::TrainPod,
        "train-dlrom" => Stage::TrainDlRom,
        "train-mcrom" => Stage::TrainMcRom,
        "evaluate" => Stage::Evaluate,
        "bench" => Stage::Bench,
        "run" => return exp.run_all(),
        other => unreachable!("unknown subcommand {other}"),
    };
    exp.run_stage(stage)
}
