//! Detection and localization metrics and the strategy comparison harness.

use nalgebra::Point2;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{estimate_stats, fade_levels_partial, fit_path_loss_partial, CalibrationWindow};
use crate::config::RtiConfig;
use crate::error::{Result, RtiError};
use crate::imaging::{AreaMode, ProjectionSolver, ReferenceMode};
use crate::pipeline::{FrameOutput, ImagingModel, Pipeline, PipelineOptions};
use crate::scalar::Scalar;
use crate::scene::Deployment;
use crate::selection::{energy_coefficient, select, SelectionSet, SelectionStrategy, Strategy};
use crate::trace::{Frame, RssTrace, TruthTrace};
use crate::track::{TrackEstimate, TrackerConfig};

/// A run of consecutive frames whose estimated and true head counts differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Episode {
    pub start_frame: usize,
    pub frames: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalseAlarmReport {
    /// Percentage of all frames with a count mismatch.
    pub rate_percent: f64,
    /// Same, restricted to frames whose truth is empty.
    pub empty_rate_percent: Option<f64>,
    pub mismatched_frames: usize,
    pub frames: usize,
    pub episodes: Vec<Episode>,
}

impl FalseAlarmReport {
    pub fn alarm_duration_s(&self) -> f64 {
        self.episodes.iter().map(|e| e.duration_s).sum()
    }
}

/// Percentage of frames where `|P̂(k)| ≠ |P(k)|`, with contiguous mismatch
/// episodes timed at `sample_interval_s` per frame.
pub fn false_alarm_rate<T: Scalar>(
    estimate_counts: &[usize],
    truth: &TruthTrace<T>,
    sample_interval_s: f64,
) -> Result<FalseAlarmReport> {
    if estimate_counts.len() != truth.len() {
        return Err(RtiError::Misaligned(format!(
            "{} estimate frames vs {} truth frames",
            estimate_counts.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(RtiError::Misaligned("no frames".into()));
    }
    let mismatch: Vec<bool> = estimate_counts
        .iter()
        .zip(&truth.frames)
        .map(|(&n, f)| n != f.people.len())
        .collect();
    let mut episodes = Vec::new();
    let mut k = 0;
    while k < mismatch.len() {
        if mismatch[k] {
            let start = k;
            while k < mismatch.len() && mismatch[k] {
                k += 1;
            }
            let frames = k - start;
            episodes.push(Episode {
                start_frame: truth.frames[start].index,
                frames,
                duration_s: frames as f64 * sample_interval_s,
            });
        } else {
            k += 1;
        }
    }
    let mismatched = mismatch.iter().filter(|&&m| m).count();
    let empty: Vec<bool> = truth.frames.iter().map(|f| f.people.is_empty()).collect();
    let empty_total = empty.iter().filter(|&&e| e).count();
    let empty_bad = mismatch.iter().zip(&empty).filter(|(&m, &e)| m && e).count();
    Ok(FalseAlarmReport {
        rate_percent: 100.0 * mismatched as f64 / mismatch.len() as f64,
        empty_rate_percent: (empty_total > 0).then(|| 100.0 * empty_bad as f64 / empty_total as f64),
        mismatched_frames: mismatched,
        frames: mismatch.len(),
        episodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmseReport<T> {
    pub moving: Option<T>,
    pub standing: Option<T>,
    pub moving_frames: usize,
    pub standing_frames: usize,
    pub max_error: T,
}

impl<T: Scalar> RmseReport<T> {
    /// RMSE over all contributing frames regardless of motion.
    pub fn overall(&self) -> T {
        let sq = |e: Option<T>, n: usize| e.map_or(T::zero(), |e| e * e * T::of_usize(n));
        let n = self.moving_frames + self.standing_frames;
        ((sq(self.moving, self.moving_frames) + sq(self.standing, self.standing_frames)) / T::of_usize(n)).sqrt()
    }
}

/// Localization RMSE over frames with exactly one true and one estimated
/// person, split by the truth's motion flag.
pub fn rmse<T: Scalar>(estimates: &[Vec<Point2<T>>], truth: &TruthTrace<T>) -> Result<RmseReport<T>> {
    if estimates.len() != truth.len() {
        return Err(RtiError::Misaligned(format!(
            "{} estimate frames vs {} truth frames",
            estimates.len(),
            truth.len()
        )));
    }
    let (mut sm, mut nm, mut ss, mut ns) = (T::zero(), 0usize, T::zero(), 0usize);
    let mut max_error = T::zero();
    for (est, f) in estimates.iter().zip(&truth.frames) {
        if est.len() != 1 || f.people.len() != 1 {
            continue;
        }
        let e2 = (est[0] - f.people[0].position).norm_squared();
        max_error = max_error.max(e2.sqrt());
        if f.people[0].moving {
            sm += e2;
            nm += 1;
        } else {
            ss += e2;
            ns += 1;
        }
    }
    if nm + ns == 0 {
        return Err(RtiError::NoRmseFrames);
    }
    let root = |s: T, n: usize| (n > 0).then(|| (s / T::of_usize(n)).sqrt());
    Ok(RmseReport {
        moving: root(sm, nm),
        standing: root(ss, ns),
        moving_frames: nm,
        standing_frames: ns,
        max_error,
    })
}

/// Motion flags from a position track: standing when the displacement over
/// the trailing `window_s` is below `speed_threshold` times the window.
pub fn motion_flags_from_speed<T: Scalar>(
    positions: &[Point2<T>],
    sample_interval_s: T,
    window_s: T,
    speed_threshold: T,
) -> Vec<bool> {
    let lag = ((window_s / sample_interval_s).round().as_f64() as usize).max(1);
    (0..positions.len())
        .map(|k| {
            let j = k.saturating_sub(lag);
            if j == k {
                return false;
            }
            let span = T::of_usize(k - j) * sample_interval_s;
            nalgebra::distance(&positions[k], &positions[j]) / span >= speed_threshold
        })
        .collect()
}

/// Reselection schedule: the selection computed from window `i` is used from
/// the window's end until the next window's end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub windows: Vec<CalibrationWindow>,
}

impl Schedule {
    /// One calibration window of `calibration` frames every `period` frames,
    /// starting at frame 0, over a trace of `frames` frames.
    pub fn periodic(frames: usize, period: usize, calibration: usize) -> Result<Self> {
        if period == 0 || calibration == 0 || calibration > period {
            return Err(RtiError::InvalidParameter(
                "schedule needs 0 < calibration <= period".into(),
            ));
        }
        let windows = (0..frames)
            .step_by(period)
            .filter(|&s| s + calibration <= frames)
            .map(|s| CalibrationWindow::new(s, s + calibration))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { windows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions<T> {
    pub reference_mode: ReferenceMode,
    pub background_subtraction: bool,
    pub tracker: TrackerConfig<T>,
    /// Absolute blob floor, given as the attenuation (dB) of an idealized
    /// person whose image response sets the floor.
    pub detection_floor_db: T,
    pub area_mode: AreaMode,
    pub solver: ProjectionSolver,
}

impl<T: Scalar> Default for ExperimentOptions<T> {
    fn default() -> Self {
        Self {
            reference_mode: ReferenceMode::Gated,
            background_subtraction: true,
            tracker: TrackerConfig::default(),
            detection_floor_db: T::of(DEFAULT_DETECTION_FLOOR_DB),
            area_mode: AreaMode::Analytic,
            solver: ProjectionSolver::Direct,
        }
    }
}

pub const DEFAULT_DETECTION_FLOOR_DB: f64 = 1.25;

impl<T: Scalar> ExperimentOptions<T> {
    pub fn pipeline_options(&self, model: &ImagingModel<T>) -> PipelineOptions<T> {
        let mut tracker = self.tracker;
        tracker.intensity_floor = tracker.intensity_floor.max(model.shadow_response(self.detection_floor_db));
        PipelineOptions {
            reference_mode: self.reference_mode,
            background_subtraction: self.background_subtraction,
            tracker,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrategyRun<T: Scalar> {
    pub strategy: Strategy,
    pub selections: Vec<SelectionSet<T>>,
    /// Mean ϑ_e over reselections.
    pub energy: T,
    pub estimates: Vec<Vec<TrackEstimate<T>>>,
    pub false_alarm: FalseAlarmReport,
    pub rmse: Option<RmseReport<T>>,
}

impl<T: Scalar> StrategyRun<T> {
    pub fn positions(&self) -> Vec<Vec<Point2<T>>> {
        self.estimates
            .iter()
            .map(|e| crate::track::confirmed_positions(e))
            .collect()
    }

    pub fn detection_counts(&self) -> Vec<usize> {
        self.estimates
            .iter()
            .map(|e| e.iter().filter(|t| t.confirmed).count())
            .collect()
    }
}

/// Selection for one calibration window under `strategy`.
pub fn calibrate<T: Scalar>(
    deployment: &Deployment<T>,
    trace: &RssTrace<T>,
    window: CalibrationWindow,
    strategy: &SelectionStrategy<T>,
) -> Result<SelectionSet<T>> {
    let table = deployment.pair_table();
    let stats = estimate_stats(trace, &table, window);
    let stats = match strategy.strategy.path_loss_mode() {
        Some(mode) => {
            let (model, failed) = fit_path_loss_partial(&stats, deployment, mode);
            if model.nodes.is_empty() {
                return Err(RtiError::StrategyUnavailable {
                    strategy: strategy.strategy.label().into(),
                    reason: format!("path-loss fit failed for every transmitter {failed:?}"),
                });
            }
            if !failed.is_empty() {
                log::warn!("{:?} fit underdetermined for transmitters {failed:?}", mode);
            }
            fade_levels_partial(&stats, &model, deployment)
        }
        None => stats,
    };
    select(&stats, strategy)
}

/// Feeds every frame through a pipeline for `strategy`, switching to each
/// window's selection once the window has closed. `on_frame` sees every
/// frame's output. Returns the selections in schedule order.
pub fn stream_strategy<T: Scalar>(
    model: &ImagingModel<T>,
    deployment: &Deployment<T>,
    trace: &RssTrace<T>,
    strategy: Strategy,
    schedule: &Schedule,
    options: &ExperimentOptions<T>,
    mut on_frame: impl FnMut(&Frame<T>, &FrameOutput<T>) -> Result<()>,
) -> Result<Vec<SelectionSet<T>>> {
    let sel_strategy = SelectionStrategy::new(strategy, model.config.upsilon_r)?;
    let selections = schedule
        .windows
        .iter()
        .map(|&w| calibrate(deployment, trace, w, &sel_strategy))
        .collect::<Result<Vec<_>>>()?;
    let mut pending: Vec<(usize, usize)> = schedule.windows.iter().map(|w| w.end).enumerate().map(|(i, e)| (e, i)).collect();
    pending.sort();
    let mut pending = pending.into_iter().peekable();

    let mut pipeline = Pipeline::new(model, options.pipeline_options(model));
    for frame in &trace.frames {
        while let Some(&(start, i)) = pending.peek() {
            if start > frame.index {
                break;
            }
            pipeline.set_selection(selections[i].clone());
            pending.next();
        }
        let out = pipeline.step(frame)?;
        on_frame(frame, &out)?;
    }
    Ok(selections)
}

/// Streams the whole trace through one strategy, reselecting on schedule.
pub fn run_strategy<T: Scalar>(
    model: &ImagingModel<T>,
    deployment: &Deployment<T>,
    trace: &RssTrace<T>,
    truth: &TruthTrace<T>,
    strategy: Strategy,
    schedule: &Schedule,
    options: &ExperimentOptions<T>,
) -> Result<StrategyRun<T>> {
    let mut estimates = Vec::with_capacity(trace.len());
    let selections = stream_strategy(model, deployment, trace, strategy, schedule, options, |_, out| {
        estimates.push(out.estimates.clone());
        Ok(())
    })?;

    let n = deployment.node_count();
    let c = deployment.channels.len();
    let energy = if selections.is_empty() {
        T::one()
    } else {
        selections
            .iter()
            .map(|s| energy_coefficient::<T>(s.len(), n, c))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(T::zero(), |a, b| a + b)
            / T::of_usize(selections.len())
    };
    let counts: Vec<usize> = estimates.iter().map(|e| e.iter().filter(|t| t.confirmed).count()).collect();
    let false_alarm = false_alarm_rate(&counts, truth, model.config.t_s.as_f64())?;
    let positions: Vec<Vec<Point2<T>>> = estimates.iter().map(|e| crate::track::confirmed_positions(e)).collect();
    let rmse = match rmse(&positions, truth) {
        Ok(r) => Some(r),
        Err(RtiError::NoRmseFrames) => None,
        Err(e) => return Err(e),
    };
    Ok(StrategyRun { strategy, selections, energy, estimates, false_alarm, rmse })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub background_subtraction: bool,
    pub energy_coefficient: f64,
    pub false_alarm_percent: f64,
    pub false_alarm_empty_percent: Option<f64>,
    pub e_m: Option<f64>,
    pub e_s: Option<f64>,
    pub rmse_frames: usize,
    pub frames: usize,
    pub alarm_episodes: usize,
    pub alarm_duration_s: f64,
    pub max_error_m: Option<f64>,
}

impl ReportRow {
    pub fn from_run<T: Scalar>(run: &StrategyRun<T>, subtraction: bool) -> Self {
        Self {
            method: run.strategy.label().to_string(),
            background_subtraction: subtraction,
            energy_coefficient: run.energy.as_f64(),
            false_alarm_percent: run.false_alarm.rate_percent,
            false_alarm_empty_percent: run.false_alarm.empty_rate_percent,
            e_m: run.rmse.and_then(|r| r.moving).map(Scalar::as_f64),
            e_s: run.rmse.and_then(|r| r.standing).map(Scalar::as_f64),
            rmse_frames: run.rmse.map_or(0, |r| r.moving_frames + r.standing_frames),
            frames: run.false_alarm.frames,
            alarm_episodes: run.false_alarm.episodes.len(),
            alarm_duration_s: run.false_alarm.alarm_duration_s(),
            max_error_m: run.rmse.map(|r| r.max_error.as_f64()),
        }
    }
}

/// Parameter swept in a sensitivity study. `Window` sets `T_w = T_b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Sweep<T> {
    Lambda(Vec<T>),
    Window(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub method: String,
    pub e_m: Option<f64>,
    pub e_s: Option<f64>,
    pub false_alarm_percent: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentPlan<T> {
    pub strategies: Vec<Strategy>,
    /// Also run every strategy with background subtraction disabled.
    pub ablation: bool,
    pub sweeps: Vec<Sweep<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub sweeps: Vec<SweepRow>,
}

/// Runs every planned strategy (and optional ablation and sweeps) on the same
/// trace. Strategies are evaluated in parallel.
pub fn run_experiment<T: Scalar>(
    deployment: &Deployment<T>,
    trace: &RssTrace<T>,
    truth: &TruthTrace<T>,
    config: &RtiConfig<T>,
    schedule: &Schedule,
    options: &ExperimentOptions<T>,
    plan: &ExperimentPlan<T>,
) -> Result<EvalReport> {
    let model = ImagingModel::new(deployment, config, options.area_mode, options.solver)?;
    let mut variants = vec![true];
    if plan.ablation {
        variants.push(false);
    }
    let jobs: Vec<(Strategy, bool)> = variants
        .iter()
        .flat_map(|&sub| plan.strategies.iter().map(move |&s| (s, sub)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(strategy, sub)| {
            let opts = ExperimentOptions { background_subtraction: sub, ..*options };
            run_strategy(&model, deployment, trace, truth, strategy, schedule, &opts)
                .map(|run| ReportRow::from_run(&run, sub))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sweeps = Vec::new();
    for sweep in &plan.sweeps {
        let (name, configs): (&str, Vec<(T, RtiConfig<T>)>) = match sweep {
            Sweep::Lambda(values) => (
                "lambda",
                values.iter().map(|&v| (v, RtiConfig { lambda: v, ..*config })).collect(),
            ),
            Sweep::Window(values) => (
                "t_w=t_b",
                values.iter().map(|&v| (v, RtiConfig { t_w: v, t_b: v, ..*config })).collect(),
            ),
        };
        let rows = configs
            .par_iter()
            .map(|(value, cfg)| {
                let model = ImagingModel::new(deployment, cfg, options.area_mode, options.solver)?;
                let run = run_strategy(&model, deployment, trace, truth, Strategy::OutPlus, schedule, options)?;
                Ok(SweepRow {
                    parameter: name.to_string(),
                    value: value.as_f64(),
                    method: Strategy::OutPlus.label().to_string(),
                    e_m: run.rmse.and_then(|r| r.moving).map(Scalar::as_f64),
                    e_s: run.rmse.and_then(|r| r.standing).map(Scalar::as_f64),
                    false_alarm_percent: run.false_alarm.rate_percent,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sweeps.extend(rows);
    }
    Ok(EvalReport { rows, sweeps })
}
