use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mceb_cli::config::{parse_config_with, LoadedConfig};
use mceb_cli::output::{emit_curve, read_curve_rows, OutputFormat};
use mceb_cli::validate::validate_scenario;
use mceb_cli::{CliError, CliResult};
use mceb_core::channel::load_snapshot;
use mceb_core::harness::{run_from_snapshot, run_sweep, theoretical_curve, BoundCurve, SnapshotRun};

/// Beam-domain MMSE channel-estimation bounds for massive-MIMO uplink.
#[derive(Parser)]
#[command(name = "mceb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form residuals over the SNR grid, no Monte Carlo.
    Bound(RunArgs),
    /// Closed-form residuals with Monte Carlo estimates.
    Sweep(RunArgs),
    /// Bounds from the channel snapshot named by the scenario's `snapshot` key.
    Ingest(RunArgs),
    /// Runs the invariant suite and writes a pass/fail report.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        /// Curve file (CSV or JSON) the sweep must reproduce.
        #[arg(long)]
        golden: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Output format; inferred from the `--out` extension when omitted, else CSV.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-key override, e.g. `channel.n_rx=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> CliResult<LoadedConfig> {
        parse_config_with(&self.config, &self.overrides, self.seed)
    }

    fn format(&self) -> OutputFormat {
        self.format
            .or_else(|| OutputFormat::from_path(&self.out))
            .unwrap_or(OutputFormat::Csv)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> CliResult<ExitCode> {
    match command {
        Command::Bound(args) => {
            let loaded = args.load()?;
            let curve = theoretical_curve(&loaded.scenario)?;
            finish(&curve, &args, &loaded.hash)
        }
        Command::Sweep(args) => {
            let loaded = args.load()?;
            let curve = run_sweep(&loaded.scenario)?;
            finish(&curve, &args, &loaded.hash)
        }
        Command::Ingest(args) => {
            let loaded = args.load()?;
            let path = loaded
                .snapshot
                .as_ref()
                .ok_or_else(|| CliError::Config("ingest requires a `snapshot` path in the scenario".into()))?;
            let snapshot = load_snapshot(path)?;
            let s = &loaded.scenario;
            let run = SnapshotRun {
                snr_grid_db: s.snr_grid_db.clone(),
                n_trials: s.n_trials,
                master_seed: s.master_seed,
                n_pilots: s.config.n_pilots,
                models: s.models.clone(),
                expected_config: Some(s.config),
            };
            let bounds = run_from_snapshot(&snapshot, &s.tap_set, &run)?;
            finish(&bounds.curve, &args, &loaded.hash)
        }
        Command::Validate { run, golden } => {
            let loaded = run.load()?;
            let golden = golden.as_deref().map(read_curve_rows).transpose()?;
            let report = validate_scenario(&loaded.scenario, golden.as_deref())?;
            let text = match run.format() {
                OutputFormat::Csv => report.to_csv(),
                OutputFormat::Json => report.to_json(),
            };
            write(&run.out, &text)?;
            for c in report.failures() {
                println!(
                    "FAIL {} measured={:e} expected={:e} {}",
                    c.check, c.measured, c.expected, c.detail
                );
            }
            println!(
                "{} checks: {} pass, {} underpowered, {} fail",
                report.checks.len(),
                report.count(mceb_cli::CheckStatus::Pass),
                report.count(mceb_cli::CheckStatus::Underpowered),
                report.count(mceb_cli::CheckStatus::Fail)
            );
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(mceb_cli::error::EXIT_VALIDATION)
            })
        }
    }
}

fn finish(curve: &BoundCurve, args: &RunArgs, hash: &str) -> CliResult<ExitCode> {
    emit_curve(curve, args.format(), &args.out, hash)?;
    print_summary(curve);
    Ok(ExitCode::SUCCESS)
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn print_summary(curve: &BoundCurve) {
    println!(
        "M={} N_RX={} n_pilots={} tr(C)={:.4} seed={}",
        curve.n_beams, curve.n_rx, curve.n_pilots, curve.signal_power, curve.master_seed
    );
    println!(
        "{:>8} {:>7} {:>13} {:>13} {:>10}",
        "snr_db", "model", "theoretical", "empirical", "eff_snr_db"
    );
    for p in &curve.points {
        for r in &p.results {
            let emp = r
                .empirical
                .map_or_else(|| "-".to_string(), |e| format!("{:.6e}", e.mean));
            println!(
                "{:>8.2} {:>7} {:>13.6e} {:>13} {:>10.3}",
                p.snr_db,
                r.model.name(),
                r.theoretical_residual,
                emp,
                r.effective_snr_db(curve.signal_power)
            );
        }
    }
}
