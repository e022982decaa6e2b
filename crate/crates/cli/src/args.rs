//! Command-line arguments. Per-command structs double as the manifest's
//! record of a run, so every field is serializable.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rti::channel::{CalibrationWindow, PathLossMode};
use rti::Strategy;

#[derive(Parser, Debug)]
#[command(name = "rti", version, about = "Outdoor radio tomographic imaging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic RSS trace and its ground truth.
    Simulate(Invocation<SimulateArgs>),
    /// Estimate calibration statistics, fit path loss and compute fade levels.
    FitPathloss(Invocation<FitArgs>),
    /// Select link-channel pairs and report the energy coefficient.
    Select(Invocation<SelectArgs>),
    /// Stream a trace through the imaging pipeline.
    Run(Invocation<RunArgs>),
    /// Compare strategies on a trace with ground truth.
    Eval(Invocation<EvalArgs>),
    /// Recover node positions from a length/bearing survey.
    LocateNodes(Invocation<LocateArgs>),
}

#[derive(Args, Debug, Clone)]
pub struct Invocation<A: Args> {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub args: A,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file overriding imaging parameters by key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay the run recorded in a manifest; only --out may be combined.
    #[arg(long, conflicts_with_all = ["seed", "config"])]
    pub manifest: Option<PathBuf>,
}

/// Inclusive-exclusive frame range written `START:END`.
pub fn parse_window(s: &str) -> Result<CalibrationWindow, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let start = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let end = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    CalibrationWindow::new(start, end).map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_str(s).map_err(|e| e.to_string())
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// One walker looping the area, no wind.
    Noiseless,
    /// Empty segment then one random walker, under constant wind.
    Windy,
    /// A walker standing still inside the area, under constant wind.
    Standing,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long, conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario on the field layout (or --deployment).
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Deployment JSON for presets.
    #[arg(long, requires = "preset")]
    pub deployment: Option<PathBuf>,
    /// Wind intensity in [0, 1] for windy presets.
    #[arg(long, requires = "preset")]
    pub wind: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub empty_frames: usize,
    #[arg(long, default_value_t = 500)]
    pub occupied_frames: usize,
    /// Standing time (s) for the standing preset.
    #[arg(long, default_value_t = 120.0)]
    pub stand_s: f64,
    /// Loops walked by the noiseless preset.
    #[arg(long, default_value_t = 1)]
    pub laps: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    #[default]
    NodeSpecific,
    Global,
}

impl From<FitMode> for PathLossMode {
    fn from(m: FitMode) -> Self {
        match m {
            FitMode::NodeSpecific => PathLossMode::NodeSpecific,
            FitMode::Global => PathLossMode::Global,
        }
    }
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub deployment: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Calibration frames `START:END`; the whole trace if omitted.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<CalibrationWindow>,
    #[arg(long, value_enum, default_value_t = FitMode::NodeSpecific)]
    pub mode: FitMode,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    #[arg(long)]
    pub deployment: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy, default_value = "OUT+")]
    pub strategy: Strategy,
    /// Statistics CSV (as written by fit-pathloss).
    #[arg(long, conflicts_with = "trace")]
    pub stats: Option<PathBuf>,
    /// Path-loss mode the fades in --stats came from; defaults to the
    /// strategy's own.
    #[arg(long, value_enum, requires = "stats")]
    pub fade_mode: Option<FitMode>,
    /// Trace to calibrate from instead of --stats.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_parser = parse_window, requires = "trace")]
    pub window: Option<CalibrationWindow>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// Freeze pairs near estimated people.
    #[default]
    Gated,
    /// Plain moving average.
    Ungated,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// Dual form when pixels outnumber links.
    #[default]
    Auto,
    Direct,
    Dual,
}

/// Pipeline settings shared by `run` and `eval`.
#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineArgs {
    /// Calibration frames `START:END`.
    #[arg(long, value_parser = parse_window, default_value = "0:300")]
    pub calibration: CalibrationWindow,
    /// Repeat calibration every this many frames.
    #[arg(long)]
    pub reselect_every: Option<usize>,
    #[arg(long, value_enum, default_value_t = Reference::Gated)]
    pub reference: Reference,
    /// Disable background subtraction.
    #[arg(long)]
    pub no_subtraction: bool,
    /// Tracker settings JSON.
    #[arg(long)]
    pub tracker: Option<PathBuf>,
    /// Blob floor as the attenuation (dB) of an idealized person.
    #[arg(long, default_value_t = rti::eval::DEFAULT_DETECTION_FLOOR_DB)]
    pub detection_floor_db: f64,
    #[arg(long, value_enum, default_value_t = Solver::Auto)]
    pub solver: Solver,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageFormat {
    #[default]
    None,
    Csv,
    Pgm,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    #[arg(long)]
    pub deployment: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy, default_value = "OUT+")]
    pub strategy: Strategy,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Per-frame image files.
    #[arg(long, value_enum, default_value_t = ImageFormat::None)]
    pub images: ImageFormat,
    /// Write every n-th frame's image.
    #[arg(long, default_value_t = 1)]
    pub image_every: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub deployment: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy, value_delimiter = ',', default_value = "OUT+,FLB_U,RFL+,COM+")]
    pub strategies: Vec<Strategy>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Also run every strategy without background subtraction.
    #[arg(long)]
    pub ablation: bool,
    /// OUT+ sensitivity over these λ values.
    #[arg(long, value_delimiter = ',')]
    pub sweep_lambda: Vec<f64>,
    /// OUT+ sensitivity over these T_w = T_b values.
    #[arg(long, value_delimiter = ',')]
    pub sweep_window: Vec<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocateArgs {
    /// Survey CSV (tx,rx,length_m,angle_deg).
    #[arg(long, conflicts_with = "deployment")]
    pub survey: Option<PathBuf>,
    /// Simulate a survey of this deployment instead.
    #[arg(long)]
    pub deployment: Option<PathBuf>,
    /// Length noise of the simulated survey (m).
    #[arg(long, default_value_t = 0.5, requires = "deployment")]
    pub length_std: f64,
    /// Bearing noise of the simulated survey (deg).
    #[arg(long, default_value_t = 5.0, requires = "deployment")]
    pub angle_std: f64,
    /// Length variance assumed by the solver (m²).
    #[arg(long, default_value_t = 0.5)]
    pub var_length: f64,
    /// Bearing variance assumed by the solver (deg²).
    #[arg(long, default_value_t = 5.0)]
    pub var_angle: f64,
    /// Node placed at the origin.
    #[arg(long, default_value_t = 1)]
    pub reference_node: u16,
}
