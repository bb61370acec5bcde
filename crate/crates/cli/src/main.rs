//! `bandbox`: run a scenario, print the verification report (JSON) or the
//! per-trial dump (CSV) on stdout, and exit 0 when every per-trial check
//! held, 1 when the box constraint or the message audit failed, 2 on usage
//! errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use bandbox::rubberband::{BandGeometry, TimingParams};
use bandbox::runner::{self, ReportFormat, RunConfig, RunSinks, Scenario};

#[derive(Parser, Debug)]
#[command(
    name = "bandbox",
    version,
    about = "Simulates a band-in-a-tube nonlocal box and verifies its statistics"
)]
struct Args {
    /// Scenario: rubberband | agents | ideal-pr | lhv:<0..15>
    #[arg(long, default_value = "rubberband", value_parser = parse_scenario)]
    scenario: Scenario,

    /// Trials per input setting (the run covers all four settings)
    #[arg(long, default_value_t = 100_000)]
    trials: u64,

    /// Master seed; every trial derives its own stream from it
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Stdout payload: json verification report or csv per-trial dump
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: ReportFormat,

    /// Write the message trace (agents scenario) to this file
    #[arg(long, value_name = "PATH")]
    dump_trace: Option<PathBuf>,

    /// Unstretched band length L
    #[arg(long = "L", default_value_t = 1.0)]
    band_len: f64,

    /// Tube span D (the Alice-Bob distance); at least L
    #[arg(long = "D", default_value_t = 1.0)]
    tube_span: f64,

    /// Tick duration of the count-to-three wait
    #[arg(long = "tick", default_value_t = 1.0)]
    tick: f64,

    /// Band retraction speed v
    #[arg(long = "v", default_value_t = 1.0)]
    retraction_speed: f64,

    /// Signal (photon) speed c; at least v
    #[arg(long = "c", default_value_t = 1.0)]
    signal_speed: f64,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: runner::ScenarioParseError| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn config_from(args: Args) -> Result<RunConfig, String> {
    let band = BandGeometry::new(args.band_len, args.tube_span).map_err(|e| e.to_string())?;
    let timing = TimingParams::new(args.tick, args.retraction_speed, args.signal_speed)
        .map_err(|e| e.to_string())?;
    let config = RunConfig {
        scenario: args.scenario,
        trials_per_setting: args.trials,
        master_seed: args.seed,
        format: args.format,
        dump_trace: args.dump_trace,
        band,
        timing,
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn execute(config: &RunConfig) -> Result<bool, runner::RunError> {
    match config.format {
        ReportFormat::Json => {
            let report = runner::run_sharded(config, 1)?;
            println!("{}", report.to_json());
            Ok(report.passed())
        }
        ReportFormat::Csv => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            let mut trace_file = match &config.dump_trace {
                Some(path) => Some(BufWriter::new(File::create(path)?)),
                None => None,
            };
            let sinks = RunSinks {
                trials_csv: Some(&mut out),
                trace: trace_file.as_mut().map(|f| f as &mut dyn Write),
            };
            let report = runner::run_with_sinks(config, 1, sinks)?;
            out.flush()?;
            if let Some(mut file) = trace_file {
                file.flush()?;
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match config_from(args) {
        Ok(config) => config,
        Err(message) => {
            let mut cmd = Args::command();
            cmd.error(ErrorKind::ValueValidation, message).exit();
        }
    };
    match execute(&config) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(error) => {
            eprintln!("bandbox: {error}");
            ExitCode::from(2)
        }
    }
}
