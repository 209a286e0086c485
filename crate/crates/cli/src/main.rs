mod commands;
mod ingest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fibercav::{Config, ErrorKind};

use crate::output::Output;

pub const DEFAULT_SEED: u64 = 20241016;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    /// Outputs were written but a fit did not converge.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) | CliError::NotConverged(_) => 3,
        }
    }
}

impl From<fibercav::Error> for CliError {
    fn from(e: fibercav::Error) -> Self {
        let msg = e.to_string();
        match e.kind() {
            ErrorKind::Usage => CliError::Usage(msg),
            ErrorKind::Data => CliError::Data(msg),
            ErrorKind::Numerical => CliError::Numerical(msg),
        }
    }
}

/// Fiber cavity simulation and measurement analysis.
///
/// Configuration is layered: the preset, then `--config`, then `--set`
/// overrides. Every command writes its outputs and a `report.json` manifest
/// into the output directory.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
/// (including a fit that did not converge).
#[derive(Debug, Parser)]
#[command(name = "fibercav", version)]
pub struct Cli {
    /// Built-in preset: SA, SB or bare.
    #[arg(long, global = true, default_value = "SB")]
    pub preset: String,
    /// TOML file merged over the preset.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `membrane.thickness_nm=2850`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory for outputs; created if its parent exists.
    #[arg(long, global = true, env = "FIBERCAV_OUTPUT_DIR", default_value = "fibercav-out")]
    pub output_dir: PathBuf,
    /// Seed for synthetic data.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads for grid scans (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mirror reflectance and transmittance over a wavelength grid.
    Stopband(StopbandArgs),
    /// Transmission-limited finesse against wavelength for both polarizations.
    FinesseSpectrum(FinesseArgs),
    /// Transmission map over gap and wavelength with resonance branches.
    Dispersion,
    /// Tag branch points as air-like, mixed or dielectric-like.
    Classify(ClassifyArgs),
    /// Fit membrane thickness and gap offset to a measured mode map.
    FitThickness(FitThicknessArgs),
    /// Mode volume and Purcell factors.
    Purcell(PurcellArgs),
    /// Lorentzian fits to cavity line scans.
    FitLine(FitLineArgs),
    /// Monoexponential fit to a lifetime histogram.
    FitLifetime(FitLifetimeArgs),
    /// Pulsed g2 fit with artifact exclusion windows.
    FitG2(FitG2Args),
    /// RMS cavity length noise from a side-of-fringe spectrum.
    Noise(NoiseArgs),
    /// Emitter ZPL distribution from a cavity detuning scan.
    ZplDist(ZplArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Stopband(_) => "stopband",
            Command::FinesseSpectrum(_) => "finesse-spectrum",
            Command::Dispersion => "dispersion",
            Command::Classify(_) => "classify",
            Command::FitThickness(_) => "fit-thickness",
            Command::Purcell(_) => "purcell",
            Command::FitLine(_) => "fit-line",
            Command::FitLifetime(_) => "fit-lifetime",
            Command::FitG2(_) => "fit-g2",
            Command::Noise(_) => "noise",
            Command::ZplDist(_) => "zpl-dist",
        }
    }
}

#[derive(Debug, Args)]
pub struct StopbandArgs {
    /// Lower end of the wavelength grid.
    #[arg(long, default_value_t = 700.0)]
    pub min_nm: f64,
    /// Upper end of the wavelength grid.
    #[arg(long, default_value_t = 1300.0)]
    pub max_nm: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.5)]
    pub step_nm: f64,
}

#[derive(Debug, Args)]
pub struct FinesseArgs {
    /// Measured finesse for a loss budget at `--at-nm`.
    #[arg(long)]
    pub measured_finesse: Option<f64>,
    /// Wavelength of the measured finesse.
    #[arg(long, default_value_t = 980.0)]
    pub at_nm: f64,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Branches JSON (as written by `dispersion`) instead of a simulated map.
    #[arg(long, value_name = "FILE")]
    pub branches: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitThicknessArgs {
    /// Spectrometer export with columns frame_index, wavelength_nm, counts.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["branches", "synthetic"])]
    pub spectrometer: Option<PathBuf>,
    /// Branches JSON (as written by `dispersion`).
    #[arg(long, value_name = "FILE", conflicts_with = "synthetic")]
    pub branches: Option<PathBuf>,
    /// Fit a map simulated from the configured membrane.
    /// Use generated data seeded by `--seed`.
    #[arg(long)]
    pub synthetic: bool,
    /// Initial thickness (default: fit.d_initial_nm).
    #[arg(long)]
    pub d_initial_nm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PurcellArgs {
    /// Quality factor (default: purcell.quality_factor).
    #[arg(long)]
    pub q: Option<f64>,
    /// Mode volume in λ³ (default: from the simulated contact mode).
    #[arg(long)]
    pub v_lambda3: Option<f64>,
    /// Host refractive index (default: membrane n_e at the ZPL).
    #[arg(long)]
    pub n: Option<f64>,
    /// Cavity lifetime for the measured enhancement (default: emitter.tau_cav_ns).
    #[arg(long)]
    pub tau_cav_ns: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitLineArgs {
    /// Transmission traces (time_s, V) or (frequency_ghz, V).
    pub traces: Vec<PathBuf>,
    /// Wavemeter trace (time_s, frequency_ghz) calibrating time traces.
    #[arg(long, value_name = "FILE")]
    pub wavemeter: Option<PathBuf>,
    /// Use generated data seeded by `--seed`.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Args)]
pub struct FitLifetimeArgs {
    /// Histogram (delay_ns, counts).
    pub histogram: Option<PathBuf>,
    /// Start of the fit window (default: lifetime.t_start_ns).
    #[arg(long)]
    pub t_start_ns: Option<f64>,
    /// Use generated data seeded by `--seed`.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Args)]
pub struct FitG2Args {
    /// Correlation histogram (delay_ns, counts).
    pub histogram: Option<PathBuf>,
    /// Excluded delay window `lo:hi` in ns; repeatable (default: g2.exclusions_ns).
    #[arg(long = "exclude", value_name = "LO:HI", allow_hyphen_values = true)]
    pub exclude: Vec<String>,
    /// Fit without any exclusion window.
    #[arg(long, conflicts_with = "exclude")]
    pub no_exclude: bool,
    /// Repetition period (default: g2.period_ns).
    #[arg(long)]
    pub period_ns: Option<f64>,
    /// Use generated data seeded by `--seed`.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Amplitude spectral density (frequency_hz, relative transmission per √Hz).
    pub spectrum: Option<PathBuf>,
    /// Cavity finesse at the probe wavelength (default: noise.finesse).
    #[arg(long)]
    pub finesse: Option<f64>,
    /// Probe wavelength (default: noise.wavelength_nm).
    #[arg(long)]
    pub wavelength_nm: Option<f64>,
    /// Upper integration limit (default: noise.f_max_hz).
    #[arg(long)]
    pub f_max_hz: Option<f64>,
    /// Use generated data seeded by `--seed`.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Args)]
pub struct ZplArgs {
    /// Spectra with columns step_index, wavelength_nm, counts.
    pub spectra: Option<PathBuf>,
    /// Local dispersion calibration (default: zpl.slope_ghz_per_step).
    #[arg(long)]
    pub slope_ghz_per_step: Option<f64>,
    /// Number of Lorentzians; 0 chooses automatically (default: zpl.peaks).
    #[arg(long)]
    pub peaks: Option<usize>,
    /// Use generated data seeded by `--seed`.
    #[arg(long)]
    pub synthetic: bool,
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let text = match &cli.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    Ok(Config::resolve(&cli.preset, text.as_deref(), &cli.overrides)?)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let config = load_config(cli)?;
    commands::check_inputs(&cli.command)?;
    let mut out = Output::create(&cli.output_dir)?;
    let config_text = if cli.config.is_none() && cli.overrides.is_empty() {
        fibercav::config::preset_text(&cli.preset)?.to_string()
    } else {
        config.to_toml_string()
    };
    out.write_bytes("config.toml", config_text.as_bytes())?;
    let status = commands::dispatch(cli, &config, &mut out);
    match status {
        Ok(()) => out.finish(cli.command.name(), &config_text, None),
        Err(CliError::NotConverged(msg)) => {
            out.finish(cli.command.name(), &config_text, Some(msg.clone()))?;
            Err(CliError::NotConverged(msg))
        }
        Err(e) => Err(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
