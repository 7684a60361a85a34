//! `idrm`: run, compare and check iterative deep Ritz experiments.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for numerical
//! or I/O failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use idrm_core::report::{compare_methods, preset_names, run_checks, run_experiment, run_seed_sweep, ExperimentConfig};
use idrm_core::Error;

#[derive(Parser)]
#[command(version, about = "Iterative deep Ritz solver for monotone elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, or one per seed with --seeds.
    Run {
        /// Preset name or path to a TOML configuration.
        source: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated seeds, each written to <out>/seed-<s>.
        #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
        seeds: Option<Vec<u64>>,
        /// Worker threads for a seed sweep.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Replace a configuration key, e.g. `adam.max_steps=200`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare the configured methods over the configured seeds.
    Compare {
        source: String,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the gradient, loss and monotonicity self-checks.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print a preset as TOML.
    Show {
        preset: String,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List preset names.
    Presets,
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run {
            source,
            seed,
            seeds,
            threads,
            out,
            mut overrides,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("experiment.seed={s}"));
            }
            let cfg = match ExperimentConfig::resolve(&source, &overrides) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match seeds {
                None => match run_experiment(&cfg, Some(&out)) {
                    Ok(o) => {
                        let r = &o.report;
                        println!(
                            "{} ({}), seed {}: relative L2 error {:?} in {:.1} s; artifacts in {}",
                            r.problem,
                            r.method.name(),
                            r.seed,
                            r.final_metrics.relative_l2_error,
                            r.final_metrics.wallclock_seconds,
                            out.display()
                        );
                        if let Some(reason) = &r.aborted {
                            eprintln!("run aborted: {reason}");
                            return ExitCode::from(2);
                        }
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(e),
                },
                Some(list) => {
                    let mut code = ExitCode::SUCCESS;
                    for (s, r) in run_seed_sweep(&cfg, &list, threads, Some(&out)) {
                        match r {
                            Ok(o) => println!(
                                "seed {s}: relative L2 error {:?} in {:.1} s",
                                o.report.final_metrics.relative_l2_error, o.report.final_metrics.wallclock_seconds
                            ),
                            Err(e) => {
                                eprintln!("seed {s}: error: {e}");
                                code = ExitCode::from(e.exit_code() as u8);
                            }
                        }
                    }
                    code
                }
            }
        }
        Command::Compare {
            source,
            threads,
            out,
            overrides,
        } => {
            let cfg = match ExperimentConfig::resolve(&source, &overrides) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match compare_methods(&cfg, threads, Some(&out)) {
                Ok(cmp) => {
                    print!("{cmp}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Check { seed } => {
            let results = run_checks(seed);
            let mut ok = true;
            for c in &results {
                ok &= c.passed;
                println!(
                    "[{}] {} ({:.2} s): {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.seconds,
                    c.detail
                );
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Command::Show { preset, overrides } => match ExperimentConfig::resolve(&preset, &overrides)
            .and_then(|c| c.to_toml())
        {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Presets => {
            for n in preset_names() {
                println!("{n}");
            }
            ExitCode::SUCCESS
        }
    }
}
