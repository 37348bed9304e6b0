//! Command-line front end. [`main_with_args`] returns the process exit code:
//! 0 on success, 1 on bad input, 2 on a usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::EmulatorConfig;
use crate::geometry::parse_range;
use crate::gnss::{stationary_rms, stationary_series, GnssConfig};
use crate::pipeline::{run, scenario_diagonal, sweep, WriterSink};
use crate::scenario::{
    generate_synthetic_scenario, load_buildings, load_trace, write_buildings, write_trace, Building, GridSpec,
    ScenarioStep,
};

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "v2x-emu", version, about = "Real-time V2X link emulator for a single ego vehicle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emulate a trace; writes messages.jsonl, metrics.csv, ego_fix.jsonl and
    /// effective_config.json into the output directory.
    Run(RunArgs),
    /// Run every (r_b, r_v) pair against the unculled reference; writes sweep.csv.
    Sweep(SweepArgs),
    /// Write a synthetic grid city (buildings.json, trace.jsonl).
    GenScenario(GenArgs),
    /// Print stationary statistics of the GNSS error process.
    GnssDiag(GnssDiagArgs),
    /// Check a trace and a building file without running; prints OK or the
    /// first violation.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mobility trace, one JSON step per line.
    #[arg(long)]
    pub trace: PathBuf,
    /// Building footprints, JSON array of polygons.
    #[arg(long)]
    pub buildings: PathBuf,
    /// Master seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads used for link classification.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Config override `dotted.key=value`, applied after the config file;
    /// repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl InputArgs {
    fn effective_config(&self) -> Result<EmulatorConfig> {
        let base = match &self.config {
            Some(p) => EmulatorConfig::load(p)?,
            None => EmulatorConfig::default(),
        };
        let mut sets = Vec::new();
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(w) = self.workers {
            sets.push(format!("workers={w}"));
        }
        sets.extend(self.overrides.iter().cloned());
        let config = base.with_overrides(&sets)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated building ranges in meters; `inf` and `diag` (scenario
    /// diagonal, which keeps every object) are accepted.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rb_list: Vec<String>,
    /// Comma-separated vehicle ranges, same syntax as --rb-list.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rv_list: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub blocks_x: usize,
    #[arg(long, default_value_t = 10)]
    pub blocks_y: usize,
    /// Block side, meters.
    #[arg(long, default_value_t = 150.0)]
    pub block_size: f64,
    /// Street width, meters.
    #[arg(long, default_value_t = 20.0)]
    pub street_width: f64,
    /// Buildings per block side.
    #[arg(long, default_value_t = 5)]
    pub lots_per_side: usize,
    /// Vehicle count including the ego.
    #[arg(long, default_value_t = 500)]
    pub vehicles: usize,
    /// Trace duration, seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Trace step, seconds.
    #[arg(long, default_value_t = 0.1)]
    pub step_period: f64,
}

#[derive(Debug, Args)]
pub struct GnssDiagArgs {
    /// Error magnitude standard deviation, meters.
    #[arg(long, default_value_t = GnssConfig::default().sigma)]
    pub sigma: f64,
    /// Correlation time, seconds.
    #[arg(long, default_value_t = GnssConfig::default().t_corr)]
    pub t_corr: f64,
    /// Simulated time, seconds.
    #[arg(long, default_value_t = 100_000.0)]
    pub duration: f64,
    /// Sampling step, seconds.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Window length for the peak statistic, seconds.
    #[arg(long, default_value_t = 600.0)]
    pub window: f64,
    /// Peak threshold, meters.
    #[arg(long, default_value_t = 5.0)]
    pub peak: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub buildings: PathBuf,
    /// Also check this configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parse `args` (including the program name) and execute. Output goes to
/// stdout, diagnostics to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<()> {
    match command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::GenScenario(a) => cmd_gen(&a, out),
        Command::GnssDiag(a) => cmd_gnss_diag(&a, out),
        Command::Validate(a) => cmd_validate(&a, out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_effective_config(dir: &Path, config: &EmulatorConfig) -> Result<()> {
    let mut f = create(dir, "effective_config.json")?;
    writeln!(f, "{}", config.to_json_pretty())?;
    f.flush()?;
    Ok(())
}

fn cmd_run<W: Write>(args: &RunArgs, out: &mut W) -> Result<()> {
    let config = args.input.effective_config()?;
    let buildings = load_buildings(&args.input.buildings)?;
    let trace = load_trace(&args.input.trace)?;
    prepare_out_dir(&args.out)?;
    write_effective_config(&args.out, &config)?;
    let mut sink = WriterSink::new(
        create(&args.out, "messages.jsonl")?,
        create(&args.out, "metrics.csv")?,
        Some(create(&args.out, "ego_fix.jsonl")?),
    )?;
    run(trace, &buildings, &config, &mut sink)?;
    sink.flush()?;
    writeln!(out, "{} steps, {} over budget", sink.steps, sink.over_budget_steps)?;
    Ok(())
}

fn load_steps(path: &Path) -> Result<Vec<ScenarioStep>> {
    Ok(load_trace(path)?.collect::<Result<Vec<_>, _>>()?)
}

fn parse_range_list(tokens: &[String], diagonal: f64) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            let t = t.trim();
            let r =
                if t.eq_ignore_ascii_case("diag") { diagonal } else { parse_range(t).map_err(anyhow::Error::msg)? };
            if !(r > 0.0) {
                bail!("range must be positive, got `{t}`");
            }
            Ok(r)
        })
        .collect()
}

fn cmd_sweep<W: Write>(args: &SweepArgs, out: &mut W) -> Result<()> {
    let config = args.input.effective_config()?;
    let buildings = load_buildings(&args.input.buildings)?;
    let steps = load_steps(&args.input.trace)?;
    let diagonal = scenario_diagonal(&buildings, &steps);
    let rb = parse_range_list(&args.rb_list, diagonal)?;
    let rv = parse_range_list(&args.rv_list, diagonal)?;
    prepare_out_dir(&args.out)?;
    write_effective_config(&args.out, &config)?;
    let report = sweep(&steps, &buildings, &config, &rb, &rv)?;
    report.write_csv(create(&args.out, "sweep.csv")?)?;
    writeln!(out, "{} sweep points written", report.rows.len())?;
    Ok(())
}

fn cmd_gen<W: Write>(args: &GenArgs, out: &mut W) -> Result<()> {
    let spec = GridSpec {
        blocks_x: args.blocks_x,
        blocks_y: args.blocks_y,
        block_size: args.block_size,
        street_width: args.street_width,
        lots_per_side: args.lots_per_side,
        vehicle_count: args.vehicles,
        duration: args.duration,
        step_period: args.step_period,
        seed: args.seed,
    };
    let city = generate_synthetic_scenario(&spec)?;
    prepare_out_dir(&args.out)?;
    let mut b = create(&args.out, "buildings.json")?;
    write_buildings(&mut b, &city.buildings)?;
    b.flush()?;
    write_trace(create(&args.out, "trace.jsonl")?, &city.steps)?;
    writeln!(out, "{} buildings, {} steps", city.buildings.len(), city.steps.len())?;
    Ok(())
}

fn cmd_gnss_diag<W: Write>(args: &GnssDiagArgs, out: &mut W) -> Result<()> {
    let cfg = GnssConfig { sigma: args.sigma, t_corr: args.t_corr };
    cfg.validate().map_err(anyhow::Error::msg)?;
    if !(args.step > 0.0 && args.duration >= args.step && args.window >= args.step) {
        bail!("need step > 0 and duration, window >= step");
    }
    let rms = stationary_rms(&cfg, args.duration, args.step, args.seed);
    let series = stationary_series(&cfg, args.duration, args.step, args.seed);
    let per_window = (args.window / args.step).round() as usize;
    let windows: Vec<&[f64]> = series.chunks_exact(per_window).collect();
    let with_peak = windows.iter().filter(|w| w.iter().any(|&e| e > args.peak)).count();
    writeln!(out, "samples {}", series.len())?;
    writeln!(out, "rms_radial_error {rms:.4}")?;
    writeln!(out, "analytic_rms {:.4}", cfg.sigma)?;
    writeln!(out, "max_radial_error {:.4}", series.iter().copied().fold(0.0, f64::max))?;
    writeln!(out, "windows_with_peak_above_{} {}/{}", args.peak, with_peak, windows.len())?;
    Ok(())
}

fn cmd_validate<W: Write>(args: &ValidateArgs, out: &mut W) -> Result<()> {
    if let Some(p) = &args.config {
        EmulatorConfig::load(p)?.validate()?;
    }
    let buildings: Vec<Building> = load_buildings(&args.buildings)?;
    let mut steps = 0usize;
    for step in load_trace(&args.trace)? {
        step?;
        steps += 1;
    }
    writeln!(out, "OK ({} buildings, {steps} steps)", buildings.len())?;
    Ok(())
}
