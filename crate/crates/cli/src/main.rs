use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vibrancy_cli::config::{RunConfig, DEFAULT_FILE};
use vibrancy_cli::pipeline::{self, Stage};
use vibrancy_cli::CliError;
use vibrancy_core::synth::SynthSpec;

/// Urban vibrancy and crime analysis pipeline.
///
/// Log verbosity follows the VIBRANCY_LOG environment variable
/// (error, warn, info, debug, trace; default warn).
#[derive(Debug, Parser)]
#[command(name = "vibrancy", version)]
struct Cli {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = DEFAULT_FILE)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set matching.radius_m=60`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, validate and deduplicate the input datasets.
    Ingest,
    /// Per-unit demographic and land-use metrics and consensus hours.
    Metrics,
    /// Robust excess-crime models and association tables.
    Regress,
    /// Within-unit matched-pairs studies.
    Match,
    /// Summarize all stage outputs.
    Report,
    /// Generate a synthetic city and a configuration that points at it.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML); defaults to the planted city.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Seed, overriding the spec file.
        #[arg(long)]
        seed: Option<u64>,
        /// Generate a city with no planted signal.
        #[arg(long, conflicts_with = "spec")]
        null: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let explicit = cli.config.as_os_str() != DEFAULT_FILE;
    RunConfig::load(&cli.config, &cli.overrides, explicit)
}

fn synth_spec(spec: &Option<PathBuf>, seed: Option<u64>, null: bool) -> Result<SynthSpec, CliError> {
    let mut s = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None if null => SynthSpec::null(1),
        None => SynthSpec::planted(1),
    };
    if let Some(seed) = seed {
        s.seed = seed;
    }
    s.validate().map_err(CliError::Usage)?;
    Ok(s)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Synth { out, spec, seed, null } = &cli.command {
        let spec = synth_spec(spec, *seed, *null)?;
        let path = pipeline::cmd_synth(&spec, out)?;
        println!("synth: seed {} written to {}; run with --config {}", spec.seed, out.display(), path.display());
        return Ok(());
    }
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Ingest => {
            let r = pipeline::cmd_ingest(&cfg)?;
            println!(
                "ingest: {} block groups ({} included), {} blocks ({} included), {} businesses from {} listings -> {}",
                r.block_groups,
                r.block_groups_included,
                r.blocks,
                r.blocks_included,
                r.businesses,
                r.listings,
                Stage::Ingest.dir(&cfg).display()
            );
        }
        Command::Metrics => {
            let m = pipeline::cmd_metrics(&cfg)?;
            println!("metrics: {} units -> {}", m.len(), Stage::Metrics.dir(&cfg).display());
        }
        Command::Regress => {
            let fits = pipeline::cmd_regress(&cfg)?;
            println!("regress: {} fits -> {}", fits.len(), Stage::Regress.dir(&cfg).display());
        }
        Command::Match => {
            let reports = pipeline::cmd_match(&cfg)?;
            let significant = reports.iter().filter(|r| r.significant).count();
            println!("match: {} cells, {} significant -> {}", reports.len(), significant, Stage::Match.dir(&cfg).display());
        }
        Command::Report => {
            pipeline::cmd_report(&cfg)?;
            println!("report: {}", Stage::Report.dir(&cfg).join("summary.md").display());
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VIBRANCY_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
