//! Run manifests: everything needed to repeat a run bit for bit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rti::io::read_json;
use rti::{Deployment, RtiConfig, ScenarioConfig};

use crate::args::{Common, EvalArgs, FitArgs, LocateArgs, Preset, RunArgs, SelectArgs, SimulateArgs};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Wind of the windy preset unless given.
pub const DEFAULT_WIND: f64 = 0.8;
/// Wind of the standing preset unless given.
pub const DEFAULT_STANDING_WIND: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub seed: u64,
    /// Fully resolved imaging parameters.
    pub config: RtiConfig,
    pub out: PathBuf,
    pub job: Job,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Job {
    Simulate(SimulateArgs),
    FitPathloss(FitArgs),
    Select(SelectArgs),
    Run(RunArgs),
    Eval(EvalArgs),
    LocateNodes(LocateArgs),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Simulate(_) => "simulate",
            Job::FitPathloss(_) => "fit-pathloss",
            Job::Select(_) => "select",
            Job::Run(_) => "run",
            Job::Eval(_) => "eval",
            Job::LocateNodes(_) => "locate-nodes",
        }
    }
}

pub fn tool_version() -> String {
    format!("rti {}", env!("CARGO_PKG_VERSION"))
}

/// Absolute path of an input that must exist.
fn existing(path: &Option<PathBuf>, flag: &str) -> Result<Option<PathBuf>> {
    path.as_ref()
        .map(|p| std::fs::canonicalize(p).with_context(|| format!("{flag} {}", p.display())))
        .transpose()
}

fn required(path: &Option<PathBuf>, flag: &str, command: &str) -> Result<PathBuf> {
    match existing(path, flag)? {
        Some(p) => Ok(p),
        None => bail!("{command} needs {flag}"),
    }
}

pub fn load_deployment(path: &Path) -> Result<Deployment> {
    let d: Deployment = read_json(path)?;
    d.validate()?;
    Ok(d)
}

/// Table defaults, overridden key by key from `file`. A config without `p`
/// takes the pixel width from the deployment when there is one.
pub fn resolve_config(file: Option<&Path>, pixel_width: Option<f64>) -> Result<RtiConfig> {
    let mut config = RtiConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("--config {}", path.display()))?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("--config {}", path.display()))?;
        config = serde_json::from_value(raw.clone()).with_context(|| format!("--config {}", path.display()))?;
        if raw.get("p").is_none() {
            if let Some(p) = pixel_width {
                config.p = p;
            }
        }
    } else if let Some(p) = pixel_width {
        config.p = p;
    }
    config.validate()?;
    Ok(config)
}

/// Turns parsed arguments into a manifest: inputs must exist and are made
/// absolute, the seed and config are fixed.
pub fn resolve(job: Job, common: &Common) -> Result<RunManifest> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut seed = common.seed;
    let (job, pixel) = match job {
        Job::Simulate(mut a) => {
            a.scenario = existing(&a.scenario, "--scenario")?;
            a.deployment = existing(&a.deployment, "--deployment")?;
            let pixel = match (&a.scenario, a.preset) {
                (Some(path), _) => {
                    let s: ScenarioConfig = read_json(path)?;
                    seed = seed.or(Some(s.seed));
                    Some(s.deployment.pixel_width)
                }
                (None, Some(_)) => match &a.deployment {
                    Some(path) => Some(load_deployment(path)?.pixel_width),
                    None => None,
                },
                (None, None) => bail!("simulate needs --scenario or --preset"),
            };
            match a.preset {
                Some(Preset::Noiseless) if a.wind.is_some() => bail!("--wind does not apply to the noiseless preset"),
                Some(Preset::Windy) => a.wind = a.wind.or(Some(DEFAULT_WIND)),
                Some(Preset::Standing) => a.wind = a.wind.or(Some(DEFAULT_STANDING_WIND)),
                _ => {}
            }
            (Job::Simulate(a), pixel)
        }
        Job::FitPathloss(mut a) => {
            let d = required(&a.deployment, "--deployment", "fit-pathloss")?;
            a.trace = Some(required(&a.trace, "--trace", "fit-pathloss")?);
            let pixel = load_deployment(&d)?.pixel_width;
            a.deployment = Some(d);
            (Job::FitPathloss(a), Some(pixel))
        }
        Job::Select(mut a) => {
            let d = required(&a.deployment, "--deployment", "select")?;
            a.stats = existing(&a.stats, "--stats")?;
            a.trace = existing(&a.trace, "--trace")?;
            if a.stats.is_none() && a.trace.is_none() {
                bail!("select needs --stats or --trace");
            }
            let pixel = load_deployment(&d)?.pixel_width;
            a.deployment = Some(d);
            (Job::Select(a), Some(pixel))
        }
        Job::Run(mut a) => {
            let d = required(&a.deployment, "--deployment", "run")?;
            a.trace = Some(required(&a.trace, "--trace", "run")?);
            a.pipeline.tracker = existing(&a.pipeline.tracker, "--tracker")?;
            if a.image_every == 0 {
                bail!("--image-every must be positive");
            }
            let pixel = load_deployment(&d)?.pixel_width;
            a.deployment = Some(d);
            (Job::Run(a), Some(pixel))
        }
        Job::Eval(mut a) => {
            let d = required(&a.deployment, "--deployment", "eval")?;
            a.trace = Some(required(&a.trace, "--trace", "eval")?);
            a.truth = Some(required(&a.truth, "--truth", "eval")?);
            a.pipeline.tracker = existing(&a.pipeline.tracker, "--tracker")?;
            if a.strategies.is_empty() {
                bail!("eval needs at least one strategy");
            }
            let pixel = load_deployment(&d)?.pixel_width;
            a.deployment = Some(d);
            (Job::Eval(a), Some(pixel))
        }
        Job::LocateNodes(mut a) => {
            a.survey = existing(&a.survey, "--survey")?;
            a.deployment = existing(&a.deployment, "--deployment")?;
            let pixel = match &a.deployment {
                Some(path) => Some(load_deployment(path)?.pixel_width),
                None if a.survey.is_some() => None,
                None => bail!("locate-nodes needs --survey or --deployment"),
            };
            (Job::LocateNodes(a), pixel)
        }
    };
    let config = resolve_config(common.config.as_deref(), pixel)?;
    Ok(RunManifest { tool: tool_version(), seed: seed.unwrap_or(0), config, out, job })
}
