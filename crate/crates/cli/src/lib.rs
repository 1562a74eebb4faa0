//! The `sle-lab` command line: configuration, dispatch and reports.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{Config, UsageError};

type Runner = fn(&mut Config) -> anyhow::Result<report::Report>;

const SUBCOMMANDS: &[(&str, &str, &[&str], Runner)] = &[
    ("simulate-trace", "Sample a driver and write the trace as CSV", commands::SIMULATE_TRACE, commands::simulate_trace),
    ("check-martingale", "Monte Carlo checks of the reverse-flow and Green martingales", commands::CHECK_MARTINGALE, commands::check_martingale),
    ("diffusion-stats", "Statistics of the radial diffusion K", commands::DIFFUSION_STATS, commands::diffusion_stats),
    ("derivative-moments", "Time scaling of E|h_t'(i)|^lambda", commands::DERIVATIVE_MOMENTS, commands::derivative_moments),
    ("green-function", "One-point probabilities against the Green function", commands::GREEN_FUNCTION, commands::green_function),
    ("natural-param", "Derivative-sum parametrization and its competitors", commands::NATURAL_PARAM, commands::natural_param),
    ("estimate-dimension", "Box-counting, variation or Hölder fits on traces", commands::ESTIMATE_DIMENSION, commands::estimate_dimension),
];

pub fn cli() -> Command {
    let mut cmd = Command::new("sle-lab")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Numerical laboratory for chordal SLE")
        .subcommand_required(true)
        .arg(
            Arg::new("jobs")
                .long("jobs")
                .global(true)
                .env("SLE_LAB_JOBS")
                .value_parser(clap::value_parser!(usize))
                .help("Worker threads for ensembles (results do not depend on it)"),
        );
    for &(name, about, keys, _) in SUBCOMMANDS {
        let mut sub = Command::new(name)
            .about(about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value file; flags override it"));
        for &k in keys.iter().chain(commands::COMMON) {
            sub = sub.arg(Arg::new(k).long(k).value_name("VALUE").allow_hyphen_values(true).action(ArgAction::Set));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd.subcommand(
        Command::new("report-bundle")
            .about("Collect JSON reports in a directory into index.json and CSV tables")
            .arg(Arg::new("dir").required(true)),
    )
}

fn flags(m: &ArgMatches, keys: &[&str]) -> Vec<(String, String)> {
    keys.iter()
        .chain(commands::COMMON)
        .filter_map(|&k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

/// Parses `args`, runs the subcommand and returns the exit status:
/// 0 when every check passes, 1 on a statistical failure, 2 on bad usage.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let jobs = m.get_one::<usize>("jobs").copied().unwrap_or(0);
    let outcome = sle_core::ensemble::with_jobs(jobs, || dispatch(&m));
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        // bad keys, out-of-domain parameters and unreadable inputs alike
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(m: &ArgMatches) -> anyhow::Result<bool> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    if name == "report-bundle" {
        let dir = PathBuf::from(sub.get_one::<String>("dir").unwrap());
        if !dir.is_dir() {
            return Err(UsageError(format!("not a directory: {}", dir.display())).into());
        }
        let idx = report::bundle(&dir)?;
        println!("pass {} fail {} unreadable {}", idx.pass, idx.fail, idx.unreadable.len());
        return Ok(idx.fail == 0 && idx.unreadable.is_empty());
    }
    let &(_, _, keys, runner) = SUBCOMMANDS.iter().find(|s| s.0 == name).expect("known subcommand");
    let allowed: Vec<&str> = keys.iter().chain(commands::COMMON).copied().collect();
    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let mut cfg = Config::resolve(file.as_deref(), flags(sub, keys), &allowed)?;
    let rep = runner(&mut cfg)?;
    println!("{}: {}", rep.command, if rep.pass { "pass" } else { "FAIL" });
    Ok(rep.pass)
}
