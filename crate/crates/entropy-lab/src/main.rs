//! `entropy-lab`: run bandit experiments, verify the update-rule predictions,
//! and render SVG reports.
//!
//! Exit codes: 0 success, 1 runtime failure (failed verification, aborted
//! run), 2 startup/config errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use entropy_lab::config::RunConfig;
use entropy_lab::report::render_report;
use entropy_lab::runner::run_experiment;
use entropy_lab::theory::{run_suites, SuiteKind, SuiteOptions};

#[derive(Parser)]
#[command(name = "entropy-lab", version, about = "Contextual-bandit policy-entropy workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured (agent x environment x seed) grid and write CSV
    /// metrics.
    Run {
        /// Path to the JSON run config.
        #[arg(long)]
        config: PathBuf,
        /// Shift every seed in the config by this offset.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Run the analytic update-rule verification suites and print a JSON
    /// report.
    Verify {
        /// Which suite to run: lemma1, thm1, thm2, or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Master seed for the random cases.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fault-injection hook for tests: flips the predicted update sign.
        #[arg(long, hide = true, default_value_t = false)]
        corrupt_omega_sign: bool,
    },
    /// Render SVG charts and a summary table from a run directory.
    Report {
        /// Directory a `run` wrote its outputs to.
        #[arg(long)]
        input: PathBuf,
        /// Where to put the charts.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed_offset } => run_cmd(&config, seed_offset),
        Command::Verify {
            suite,
            seed,
            out,
            corrupt_omega_sign,
        } => verify_cmd(&suite, seed, out.as_deref(), corrupt_omega_sign),
        Command::Report { input, out } => report_cmd(&input, &out),
    }
}

fn run_cmd(config_path: &std::path::Path, seed_offset: u64) -> ExitCode {
    let mut config = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if seed_offset != 0 {
        for seed in &mut config.seeds {
            *seed = seed.wrapping_add(seed_offset);
        }
    }
    match run_experiment(&config) {
        Ok(outcomes) => {
            let mut failed = false;
            for o in &outcomes {
                match &o.aborted {
                    Some(abort) => {
                        failed = true;
                        eprintln!(
                            "{} seed {}: ABORTED at step {} ({})",
                            o.label, o.seed, abort.step, abort.error
                        );
                    }
                    None => {
                        let last = o.records.last().expect("at least the baseline checkpoint");
                        println!(
                            "{} seed {}: {} checkpoints, final value {:.4}, final entropy {:.4}",
                            o.label,
                            o.seed,
                            o.records.len(),
                            last.value,
                            last.entropy_state
                        );
                    }
                }
            }
            if failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("run error: {e}");
            ExitCode::from(2)
        }
    }
}

fn verify_cmd(
    suite: &str,
    seed: u64,
    out: Option<&std::path::Path>,
    corrupt_omega_sign: bool,
) -> ExitCode {
    let kind: SuiteKind = match suite.parse() {
        Ok(k) => k,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let opts = SuiteOptions {
        seed,
        corrupt_omega_sign,
        ..SuiteOptions::default()
    };
    let reports = match run_suites(kind, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("verifier error: {e}");
            return ExitCode::from(2);
        }
    };
    let all_pass = reports.iter().all(|r| r.pass);
    let bundle = serde_json::json!({
        "pass": all_pass,
        "suites": reports,
    });
    let text = serde_json::to_string_pretty(&bundle).expect("report serializes");
    println!("{text}");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, &text) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    for r in &reports {
        eprintln!(
            "suite {}: {} ({}/{} cases)",
            r.suite,
            if r.pass { "PASS" } else { "FAIL" },
            r.passed,
            r.total
        );
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn report_cmd(input: &std::path::Path, out: &std::path::Path) -> ExitCode {
    match render_report(input, out) {
        Ok(summary) => {
            println!(
                "report for {} runs written to {}",
                summary.runs,
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("report error: {e}");
            ExitCode::from(2)
        }
    }
}
