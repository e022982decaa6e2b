//! Command bodies. Each takes a resolved manifest and writes its artifacts
//! into the manifest's output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rti::channel::{estimate_stats, fade_levels_partial, fit_path_loss_partial, CalibrationWindow, PathLossMode};
use rti::eval::{run_experiment, stream_strategy, ExperimentPlan, Schedule, Sweep};
use rti::imaging::{AreaMode, ProjectionSolver, ReferenceMode};
use rti::io::{self, Positions};
use rti::scene::{estimate_node_positions, SolverOptions, SurveyNoiseConfig};
use rti::selection::{energy_coefficient, select, SelectionStrategy};
use rti::simulate::generate_trace;
use rti::{presets, Deployment, ExperimentOptions, ImagingModel, RtiConfig, ScenarioConfig, TrackerConfig};

use crate::args::{
    EvalArgs, FitArgs, ImageFormat, LocateArgs, PipelineArgs, Preset, Reference, RunArgs, SelectArgs, SimulateArgs,
    Solver,
};
use crate::manifest::{load_deployment, Job, RunManifest, DEFAULT_STANDING_WIND, DEFAULT_WIND};

/// Runs the manifest's job. Returns the lines to print on success.
pub fn execute(m: &RunManifest) -> Result<String> {
    std::fs::create_dir_all(&m.out).with_context(|| format!("--out {}", m.out.display()))?;
    match &m.job {
        Job::Simulate(a) => simulate(a, m.seed, &m.config, &m.out),
        Job::FitPathloss(a) => fit_pathloss(a, &m.out),
        Job::Select(a) => select_pairs(a, &m.config, &m.out),
        Job::Run(a) => run(a, &m.config, &m.out),
        Job::Eval(a) => eval(a, &m.config, &m.out),
        Job::LocateNodes(a) => locate(a, m.seed, &m.out),
    }
}

fn path(p: &Option<PathBuf>) -> &Path {
    p.as_deref().expect("resolved before execution")
}

pub fn build_scenario(a: &SimulateArgs, seed: u64, config: &RtiConfig) -> Result<ScenarioConfig> {
    let mut s = match (&a.scenario, a.preset) {
        (Some(file), _) => io::read_json::<ScenarioConfig>(file)?,
        (None, Some(preset)) => {
            let d = match &a.deployment {
                Some(file) => load_deployment(file)?,
                None => presets::field_deployment(config.p),
            };
            match preset {
                Preset::Noiseless => presets::noiseless_walk(d, seed, a.laps),
                Preset::Windy => presets::windy_scenario(d, seed, a.wind.unwrap_or(DEFAULT_WIND), a.empty_frames, a.occupied_frames),
                Preset::Standing => presets::standing_scenario(d, seed, a.wind.unwrap_or(DEFAULT_STANDING_WIND), a.stand_s),
            }
        }
        (None, None) => bail!("simulate needs --scenario or --preset"),
    };
    s.seed = seed;
    if s.sample_interval_s != config.t_s {
        bail!("scenario sample interval {} s disagrees with t_s = {} s", s.sample_interval_s, config.t_s);
    }
    s.validate()?;
    Ok(s)
}

fn simulate(a: &SimulateArgs, seed: u64, config: &RtiConfig, out: &Path) -> Result<String> {
    let scenario = build_scenario(a, seed, config)?;
    let (trace, truth) = generate_trace(&scenario)?;
    io::write_trace(&out.join("trace.csv"), &trace)?;
    io::write_truth(&out.join("truth.csv"), &truth)?;
    io::write_json(&out.join("scenario.json"), &scenario)?;
    io::write_json(&out.join("deployment.json"), &scenario.deployment)?;
    let occupied = truth.frames.iter().filter(|f| !f.people.is_empty()).count();
    Ok(format!(
        "frames {}\nsamples {}\noccupied_frames {}",
        trace.len(),
        trace.sample_count(),
        occupied
    ))
}

fn whole(window: Option<CalibrationWindow>, frames: usize) -> Result<CalibrationWindow> {
    match window {
        Some(w) => Ok(w),
        None => Ok(CalibrationWindow::new(0, frames.max(1))?),
    }
}

fn fit_pathloss(a: &FitArgs, out: &Path) -> Result<String> {
    let d = load_deployment(path(&a.deployment))?;
    let trace = io::read_trace(path(&a.trace))?;
    let stats = estimate_stats(&trace, &d.pair_table(), whole(a.window, trace.len())?);
    let (model, failed) = fit_path_loss_partial(&stats, &d, a.mode.into());
    if model.nodes.is_empty() {
        bail!("path-loss fit failed for every transmitter");
    }
    let stats = fade_levels_partial(&stats, &model, &d);
    io::write_json(&out.join("model.json"), &model)?;
    io::write_stats(&out.join("stats.csv"), &stats)?;
    let mut text = format!("measured_pairs {}\nfitted_transmitters {}", stats.measured_count(), model.nodes.len());
    if !failed.is_empty() {
        write!(text, "\nunderdetermined_transmitters {failed:?}")?;
    }
    Ok(text)
}

#[derive(Serialize)]
struct SelectionSummary {
    strategy: String,
    selected_pairs: usize,
    total_pairs: usize,
    energy_coefficient: f64,
}

fn select_pairs(a: &SelectArgs, config: &RtiConfig, out: &Path) -> Result<String> {
    let d = load_deployment(path(&a.deployment))?;
    let table = d.pair_table();
    let strategy = SelectionStrategy::new(a.strategy, config.upsilon_r)?;
    let selection = match (&a.stats, &a.trace) {
        (Some(file), _) => {
            let mut stats = io::read_stats(file, &table)?;
            let needed = a.strategy.path_loss_mode();
            let given: Option<PathLossMode> = a.fade_mode.map(Into::into).or(needed);
            if given != needed {
                bail!("{} needs {:?} fade levels, --fade-mode says {:?}", a.strategy, needed, given);
            }
            stats.fade_mode = needed;
            select(&stats, &strategy)?
        }
        (None, Some(file)) => {
            let trace = io::read_trace(file)?;
            rti::eval::calibrate(&d, &trace, whole(a.window, trace.len())?, &strategy)?
        }
        (None, None) => bail!("select needs --stats or --trace"),
    };
    let energy: f64 = energy_coefficient(selection.len(), d.node_count(), d.channels.len())?;
    io::write_selection(&out.join("selection.csv"), &selection, &table)?;
    let summary = SelectionSummary {
        strategy: a.strategy.label().into(),
        selected_pairs: selection.len(),
        total_pairs: table.len(),
        energy_coefficient: energy,
    };
    io::write_json(&out.join("selection.json"), &summary)?;
    Ok(format!(
        "strategy {}\nselected_pairs {}/{}\nenergy_coefficient {}",
        summary.strategy, summary.selected_pairs, summary.total_pairs, energy
    ))
}

fn schedule(p: &PipelineArgs, frames: usize) -> Result<Schedule> {
    let first = p.calibration;
    if first.end > frames {
        bail!("calibration window {}:{} runs past the trace ({frames} frames)", first.start, first.end);
    }
    let mut windows = vec![first];
    if let Some(every) = p.reselect_every {
        if every < first.len() {
            bail!("--reselect-every must be at least the calibration length {}", first.len());
        }
        let mut start = first.start + every;
        while start + first.len() <= frames {
            windows.push(CalibrationWindow::new(start, start + first.len())?);
            start += every;
        }
    }
    Ok(Schedule { windows })
}

fn options(p: &PipelineArgs) -> Result<ExperimentOptions> {
    let tracker: TrackerConfig = match &p.tracker {
        Some(file) => io::read_json(file)?,
        None => TrackerConfig::default(),
    };
    Ok(ExperimentOptions {
        reference_mode: match p.reference {
            Reference::Gated => ReferenceMode::Gated,
            Reference::Ungated => ReferenceMode::Ungated,
        },
        background_subtraction: !p.no_subtraction,
        tracker,
        detection_floor_db: p.detection_floor_db,
        area_mode: AreaMode::Analytic,
        solver: ProjectionSolver::Direct,
    })
}

fn solver(choice: Solver, d: &Deployment, config: &RtiConfig) -> ProjectionSolver {
    match choice {
        Solver::Direct => ProjectionSolver::Direct,
        Solver::Dual => ProjectionSolver::Dual,
        Solver::Auto => {
            let pixels = rti::PixelGrid::covering(&d.area, config.p).len();
            let n = d.node_count();
            if pixels > n * (n - 1) {
                ProjectionSolver::Dual
            } else {
                ProjectionSolver::Direct
            }
        }
    }
}

fn run(a: &RunArgs, config: &RtiConfig, out: &Path) -> Result<String> {
    let d = load_deployment(path(&a.deployment))?;
    let trace = io::read_trace(path(&a.trace))?;
    let plan = schedule(&a.pipeline, trace.len())?;
    let mut opts = options(&a.pipeline)?;
    opts.solver = solver(a.pipeline.solver, &d, config);
    let model = ImagingModel::new(&d, config, opts.area_mode, opts.solver)?;

    let images = out.join("images");
    if a.images != ImageFormat::None {
        std::fs::create_dir_all(&images)?;
    }
    let mut estimates = Vec::with_capacity(trace.len());
    let mut detections = 0usize;
    let selections = stream_strategy(&model, &d, &trace, a.strategy, &plan, &opts, |frame, output| {
        detections += usize::from(!output.positions().is_empty());
        estimates.push((frame.index, frame.t, output.estimates.clone()));
        if frame.index % a.image_every == 0 {
            let values = output.subtracted.as_slice();
            match a.images {
                ImageFormat::None => {}
                ImageFormat::Csv => {
                    io::write_image_csv(&images.join(format!("frame_{:06}.csv", frame.index)), values, &model.grid)?
                }
                ImageFormat::Pgm => {
                    io::write_image_pgm(&images.join(format!("frame_{:06}.pgm", frame.index)), values, &model.grid)?
                }
            }
        }
        Ok(())
    })?;
    io::write_estimates(&out.join("estimates.csv"), &estimates)?;
    for (i, s) in selections.iter().enumerate() {
        io::write_selection(&out.join(format!("selection_{i:03}.csv")), s, &model.table)?;
    }
    Ok(format!(
        "frames {}\nframes_with_detections {}\nreselections {}",
        trace.len(),
        detections,
        selections.len()
    ))
}

fn eval(a: &EvalArgs, config: &RtiConfig, out: &Path) -> Result<String> {
    let d = load_deployment(path(&a.deployment))?;
    let trace = io::read_trace(path(&a.trace))?;
    let truth = io::read_truth(path(&a.truth))?;
    let plan = schedule(&a.pipeline, trace.len())?;
    let mut opts = options(&a.pipeline)?;
    opts.solver = solver(a.pipeline.solver, &d, config);
    let mut sweeps = Vec::new();
    if !a.sweep_lambda.is_empty() {
        sweeps.push(Sweep::Lambda(a.sweep_lambda.clone()));
    }
    if !a.sweep_window.is_empty() {
        sweeps.push(Sweep::Window(a.sweep_window.clone()));
    }
    let experiment = ExperimentPlan { strategies: a.strategies.clone(), ablation: a.ablation, sweeps };
    let report = run_experiment(&d, &trace, &truth, config, &plan, &opts, &experiment)?;
    io::write_table(&out.join("report.csv"), &report.rows)?;
    if !report.sweeps.is_empty() {
        io::write_table(&out.join("sweeps.csv"), &report.sweeps)?;
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    let mut text = String::from("method subtraction energy false_alarm_% e_m e_s");
    for r in &report.rows {
        write!(
            text,
            "\n{} {} {:.4} {:.3} {} {}",
            r.method,
            r.background_subtraction,
            r.energy_coefficient,
            r.false_alarm_percent,
            fmt(r.e_m),
            fmt(r.e_s)
        )?;
    }
    Ok(text)
}

fn locate(a: &LocateArgs, seed: u64, out: &Path) -> Result<String> {
    let (survey, truth) = match (&a.survey, &a.deployment) {
        (Some(file), _) => (io::read_survey(file)?, None),
        (None, Some(file)) => {
            let d = load_deployment(file)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let survey = presets::simulate_survey(&d, &presets::survey_links(&d), a.length_std, a.angle_std, &mut rng)?;
            io::write_survey(&out.join("survey.csv"), &survey)?;
            (survey, Some(d))
        }
        (None, None) => bail!("locate-nodes needs --survey or --deployment"),
    };
    let noise = SurveyNoiseConfig { var_length: a.var_length, var_angle: a.var_angle };
    let result = estimate_node_positions(&survey, &noise, a.reference_node, &SolverOptions::default())?;
    let positions = Positions {
        nodes: result.nodes.clone(),
        objective: result.objective(),
        iterations: result.objective_history.len().saturating_sub(1),
    };
    io::write_json(&out.join("positions.json"), &positions)?;
    let mut text = format!("nodes {}\nobjective {:.6e}", positions.nodes.len(), positions.objective);
    if let Some(d) = truth {
        let origin = d
            .position(a.reference_node)
            .with_context(|| format!("reference node {} is not in the deployment", a.reference_node))?;
        let errors: Vec<f64> = d
            .nodes
            .iter()
            .filter_map(|n| result.position(n.id).map(|p| (p - (n.position() - origin.coords)).norm()))
            .collect();
        let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
        write!(text, "\nmean_error_m {mean:.4}")?;
    }
    Ok(text)
}
