//! Command line front end: run scenarios, sweep parameters, audit model
//! structure, and report spectra. Exit codes: 0 all checks pass, 1 input
//! error, 2 at least one check failed, 3 nothing failed but at least one
//! check was skipped.

use clap::{Args, Parser, Subcommand};
use passive_lab::error::Result;
use passive_lab::scenario::{
    config_base_dir, error_exit_code, load_json, run_audit, run_scenario, run_spectrum, run_sweep,
    status_label, ModelOnlyConfig, ScenarioConfig, SweepConfig,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "passive-lab",
    version,
    about = "Trajectory checks for impedance-passive systems under monotone feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario and verify the requested inequalities.
    Run(CommonArgs),
    /// Run one scenario per parameter value, concurrently.
    Sweep(CommonArgs),
    /// Structural audit of the model in a config.
    Audit(CommonArgs),
    /// Open- and closed-loop eigenvalues of the model in a config.
    Spectrum(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for data files, created if missing. Defaults to
    /// the config's out_dir, then the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress per-check output lines.
    #[arg(long)]
    quiet: bool,
}

impl CommonArgs {
    fn out_dir(&self, config_out: Option<&str>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config_out.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            error_exit_code(&err)
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run(args) => {
            let config: ScenarioConfig = load_json(&args.config)?;
            let base = config_base_dir(&args.config);
            let out = args.out_dir(config.out_dir.as_deref());
            let outcome = run_scenario(&config, &base, &out, args.seed)?;
            if !args.quiet {
                for report in &outcome.reports {
                    println!("{report}");
                }
            }
            Ok(outcome.exit_code)
        }
        Command::Sweep(args) => {
            let mut config: SweepConfig = load_json(&args.config)?;
            if let Some(seed) = args.seed {
                config.scenario.seed = Some(seed);
            }
            let base = config_base_dir(&args.config);
            let out = args.out_dir(config.scenario.out_dir.as_deref());
            let outcome = run_sweep(&config, &base, &out)?;
            if !args.quiet {
                for row in &outcome.rows {
                    let status = row
                        .reports
                        .iter()
                        .max_by_key(|r| if r.failed() { 2 } else if r.skipped() { 1 } else { 0 })
                        .map(status_label)
                        .unwrap_or("PASS");
                    let abscissa = row
                        .closed_loop_abscissa
                        .map(|a| format!(" abscissa={a:.6e}"))
                        .unwrap_or_default();
                    println!(
                        "{}={} {} final_norm={:.6e}{}",
                        config.parameter.name(),
                        row.value,
                        status,
                        row.final_norm,
                        abscissa
                    );
                }
            }
            Ok(outcome.exit_code)
        }
        Command::Audit(args) => {
            let config: ModelOnlyConfig = load_json(&args.config)?;
            let base = config_base_dir(&args.config);
            let out = args.out_dir(None);
            let outcome = run_audit(&config, &base, &out)?;
            if !args.quiet {
                print!("{}", outcome.text);
            }
            Ok(if outcome.passed { 0 } else { 2 })
        }
        Command::Spectrum(args) => {
            let config: ModelOnlyConfig = load_json(&args.config)?;
            let base = config_base_dir(&args.config);
            let out = args.out_dir(None);
            let outcome = run_spectrum(&config, &base, &out)?;
            if !args.quiet {
                print!("{}", outcome.text);
            }
            Ok(0)
        }
    }
}
