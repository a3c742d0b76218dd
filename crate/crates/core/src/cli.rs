//! Command-line front end. `main.rs` only sets up logging and forwards here.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checks::{run_checks, CheckContext};
use crate::liegroup::{coad, Twist, Wrench};
use crate::model::{bundled, load_model, Config};
use crate::sim;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const SCHEMA_TEXT: &str = include_str!("../../../docs/SCHEMA.md");

#[derive(Parser, Debug)]
#[command(name = "amgc", version, about = "Modular geometric control of serial chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario and write trace.csv and summary.json.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Simulate several scenarios and write comparison.csv.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run the property suite.
    Check {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Swap in a deliberately broken implementation.
        #[arg(long, hide = true, value_parser = ["coad-sign"])]
        inject_fault: Option<String>,
    },
    /// Print the scenario schema, or a bundled scenario in canonical form.
    Schema {
        #[arg(long)]
        example: Option<String>,
    },
}

#[derive(clap::Args, Debug)]
struct RunOpts {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a scenario field, e.g. `--set controller=amgc`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    overrides: Vec<(String, String)>,
    /// Seed for the inertia perturbation.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_assignment(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { scenario, opts } => cmd_run(&scenario, &opts),
        Command::Compare { scenarios, opts } => cmd_compare(&scenarios, &opts),
        Command::Check { filter, inject_fault } => cmd_check(filter.as_deref(), inject_fault.is_some()),
        Command::Schema { example } => cmd_schema(example.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads a scenario from a file, falling back to the bundled set.
pub fn resolve_scenario(arg: &str) -> Result<Config> {
    let path = Path::new(arg);
    if path.exists() {
        return load_model(path);
    }
    let stem = arg.trim_end_matches(".json");
    if bundled::names().any(|n| n == stem) {
        return bundled::load(stem);
    }
    Err(Error::validation(
        "scenario",
        format!("`{arg}` is neither a readable file nor a bundled scenario"),
    ))
}

fn prepare(arg: &str, opts: &RunOpts) -> Result<Config> {
    let mut config = resolve_scenario(arg)?;
    for (k, v) in &opts.overrides {
        config.apply_override(k, v)?;
    }
    if let Some(seed) = opts.seed {
        config.apply_override("seed", &seed.to_string())?;
    }
    Ok(config)
}

fn cmd_run(arg: &str, opts: &RunOpts) -> Result<i32> {
    let config = prepare(arg, opts)?;
    let out = sim::run(&config)?;
    fs::create_dir_all(&opts.out)?;
    out.trace
        .write_csv(std::io::BufWriter::new(fs::File::create(opts.out.join("trace.csv"))?))?;
    let summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    fs::write(opts.out.join("summary.json"), format!("{summary}\n"))?;
    emit(&summary);
    Ok(EXIT_OK)
}

fn cmd_compare(args: &[String], opts: &RunOpts) -> Result<i32> {
    let configs = args.iter().map(|a| prepare(a, opts)).collect::<Result<Vec<_>>>()?;
    let rows = sim::compare(&configs)?;
    fs::create_dir_all(&opts.out)?;
    let path = opts.out.join("comparison.csv");
    sim::write_comparison_csv(&rows, std::io::BufWriter::new(fs::File::create(&path)?))?;
    let mut table = format!("{:<20} {:>14} {:>12} {:>12}", "label", "position_err", "decay_rate", "torque_rms");
    for r in &rows {
        table += &format!(
            "\n{:<20} {:>14.4e} {:>12.4} {:>12.2}",
            r.label, r.summary.final_position_error, r.summary.decay_rate, r.summary.torque_rms
        );
    }
    emit(&table);
    Ok(EXIT_OK)
}

/// Prints a block to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn flipped_coad(x: &Twist, f: &Wrench) -> Wrench {
    -coad(x, f)
}

fn cmd_check(filter: Option<&str>, inject: bool) -> Result<i32> {
    let ctx = if inject {
        CheckContext { coad: flipped_coad }
    } else {
        CheckContext::default()
    };
    let results = run_checks(&ctx, filter);
    if results.is_empty() {
        eprintln!("error: no check matches `{}`", filter.unwrap_or_default());
        return Ok(EXIT_USAGE);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let mut report = String::new();
    for r in &results {
        report += &format!("{} {:<36} {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    report += &format!("{} passed, {failed} failed", results.len() - failed);
    emit(&report);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VALIDATION })
}

fn cmd_schema(example: Option<&str>) -> Result<i32> {
    match example {
        Some(name) => emit(&resolve_scenario(name)?.to_json()),
        None => emit(SCHEMA_TEXT.trim_end()),
    }
    Ok(EXIT_OK)
}
