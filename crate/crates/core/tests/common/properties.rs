//! Invariant checks driven by proptest's runner. Each check takes the case
//! count so the acceptance run and the property suite share one definition.

use std::collections::HashSet;
use std::fmt::Debug;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Point2};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rti::background::BackgroundModel;
use rti::channel::{
    estimate_stats, fade_level, fade_levels, fit_path_loss, fit_path_loss_partial, CalibrationWindow,
    LinkChannelStats, PairStats, PathLossMode,
};
use rti::config::RtiConfig;
use rti::eval::{false_alarm_rate, rmse, run_experiment, run_strategy, ExperimentOptions, ExperimentPlan, Schedule};
use rti::imaging::{
    build_projection, build_weight_matrix, covariance_matrix, estimate_image, AreaMode, ProjectionMatrix,
    ProjectionSolver, ReferenceMode, ReferenceState,
};
use rti::pipeline::ImagingModel;
use rti::presets::{perimeter_deployment, simulate_survey, survey_links};
use rti::scene::{
    enumerate_links, estimate_node_positions, link_ellipse_contains, links_between, Area, Deployment, LinkGeometry, PairTable,
    PixelGrid, SolverOptions, SurveyNoiseConfig,
};
use rti::selection::{energy_coefficient, relative_fade_levels, select, SelectionStrategy};
use rti::simulate::{generate_trace, walker_state, wind_noise_sample, NoiseLaw, NoiseModel, Waypoint};
use rti::trace::{PersonState, TruthFrame, TruthTrace};
use rti::track::{confirmed_positions, Tracker, TrackerConfig};
use rti::{LinkKey, Strategy as Method};

use super::fixtures::{deployment, ring, tiny_scenario};
use super::Check;

pub struct Property {
    pub name: &'static str,
    pub run: fn(u32) -> Check,
}

pub fn all() -> Vec<Property> {
    macro_rules! list {
        ($($f:ident),* $(,)?) => { vec![$(Property { name: stringify!($f), run: $f }),*] };
    }
    list![
        link_enumeration_is_complete,
        ellipse_symmetric_and_monotone,
        survey_objective_never_increases,
        noiseless_survey_recovers_layout,
        simulation_is_deterministic,
        distant_walker_leaves_trace_unchanged,
        noise_variance_follows_law,
        standing_flag_matches_waypoints,
        regression_translation_invariance,
        fade_level_antisymmetry,
        noiseless_fades_vanish,
        stats_ignore_frame_order,
        relative_fade_translation_invariance,
        argmax_invariance,
        heaviest_channel_within_candidates,
        uniform_selects_all_measured,
        lower_threshold_never_shrinks_connected_set,
        fifo_gating_immutability,
        prior_and_normal_matrix_spd,
        image_linearity,
        weight_support_matches_ellipse,
        noiseless_argmax_near_person,
        foreground_buffers_untouched,
        background_drift_bounded,
        tracker_is_deterministic,
        single_frame_blob_single_estimate,
        metrics_are_pure,
        rmse_translation_invariance,
        experiment_is_reproducible,
        subtraction_never_adds_spurious_frames,
    ]
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S: Strategy,
    S::Value: Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn point(lo: f64, hi: f64) -> impl Strategy<Value = (f64, f64)> {
    (lo..hi, lo..hi)
}

fn link_enumeration_is_complete(cases: u32) -> Check {
    check(cases, (prop::collection::hash_set(1u16..500, 2..12), 3usize..=8), |(ids, n)| {
        let ids: Vec<u16> = ids.into_iter().collect();
        let links = links_between(&ids);
        prop_assert_eq!(links.len(), ids.len() * (ids.len() - 1));
        let unique: HashSet<_> = links.iter().collect();
        prop_assert_eq!(unique.len(), links.len());
        prop_assert!(links.iter().all(|l| l.tx != l.rx));
        prop_assert!(links.windows(2).all(|w| (w[0].tx, w[0].rx) < (w[1].tx, w[1].rx)));
        prop_assert_eq!(enumerate_links(&ring(n, 10.0, &[11], 1.0)).len(), n * (n - 1));
        Ok(())
    })
}

fn ellipse_symmetric_and_monotone(cases: u32) -> Check {
    let s = (point(-20.0, 20.0), point(-20.0, 20.0), point(-25.0, 25.0), 0.01f64..10.0, 0.0f64..10.0);
    check(cases, s, |(a, b, q, lambda, extra)| {
        let (a, b, q) = (Point2::new(a.0, a.1), Point2::new(b.0, b.1), Point2::new(q.0, q.1));
        prop_assume!(a != b);
        let ab = link_ellipse_contains(&a, &b, &q, lambda).map_err(fail)?;
        let ba = link_ellipse_contains(&b, &a, &q, lambda).map_err(fail)?;
        prop_assert_eq!(ab, ba);
        if ab {
            prop_assert!(link_ellipse_contains(&a, &b, &q, lambda + extra).map_err(fail)?);
        }
        Ok(())
    })
}

fn survey_layout(n: usize, w: f64, h: f64) -> Deployment<f64> {
    perimeter_deployment(n, w, h, &[11], 1.0).expect("valid layout")
}

fn survey_objective_never_increases(cases: u32) -> Check {
    check(cases, (4usize..=8, 10.0f64..60.0, 10.0f64..60.0, any::<u64>()), |(n, w, h, seed)| {
        let d = survey_layout(n, w, h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let survey = simulate_survey(&d, &survey_links(&d), 0.5, 5.0, &mut rng).map_err(fail)?;
        let noise = SurveyNoiseConfig { var_length: 0.25, var_angle: 25.0 };
        let out = estimate_node_positions(&survey, &noise, 1, &SolverOptions::default()).map_err(fail)?;
        for pair in out.objective_history.windows(2) {
            prop_assert!(pair[1] <= pair[0], "objective rose {} → {}", pair[0], pair[1]);
        }
        Ok(())
    })
}

fn noiseless_survey_recovers_layout(cases: u32) -> Check {
    check(cases, (3usize..=8, 5.0f64..80.0, 5.0f64..80.0), |(n, w, h)| {
        let d = survey_layout(n, w, h);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let survey = simulate_survey(&d, &survey_links(&d), 0.0, 0.0, &mut rng).map_err(fail)?;
        let out = estimate_node_positions(&survey, &SurveyNoiseConfig::default(), 1, &SolverOptions::default())
            .map_err(fail)?;
        let origin = d.position(1).unwrap();
        for node in &d.nodes {
            let want = node.position() - origin.coords;
            let got = out.position(node.id).unwrap();
            prop_assert!((got - want).norm() < 1e-6, "node {} off by {}", node.id, (got - want).norm());
        }
        Ok(())
    })
}

fn simulation_is_deterministic(cases: u32) -> Check {
    check(cases, (any::<u64>(), 2usize..20, 0.0f64..=1.0, point(1.0, 7.0)), |(seed, frames, wind, at)| {
        let mut cfg = tiny_scenario(seed, frames, wind);
        cfg.missing = Some(Default::default());
        cfg.walkers = vec![vec![Waypoint::new(0.0, at.0, at.1), Waypoint::new(3.0, 4.0, 4.0)]];
        let a = generate_trace(&cfg).map_err(fail)?;
        let b = generate_trace(&cfg).map_err(fail)?;
        prop_assert!(a == b);
        let bits = |t: &rti::trace::RssTrace<f64>| -> Vec<u64> {
            t.frames.iter().flat_map(|f| f.samples.iter().map(|s| s.rss.to_bits())).collect()
        };
        prop_assert_eq!(bits(&a.0), bits(&b.0));
        Ok(())
    })
}

fn distant_walker_leaves_trace_unchanged(cases: u32) -> Check {
    let nodes = [(1.0, 1.0), (6.0, 1.0), (3.0, 5.0)];
    let area = Area { xmin: 0.0, ymin: 0.0, xmax: 20.0, ymax: 20.0 };
    check(cases, (any::<u64>(), point(0.0, 20.0), point(0.0, 20.0), 0.0f64..=1.0), move |(seed, a, b, wind)| {
        let d = deployment(&nodes, &[11, 26], area, 1.0);
        let mut cfg = rti::simulate::ScenarioConfig::quiet(d, 12.0 * 0.34, seed);
        cfg.wind = vec![rti::simulate::WindSegment { start_s: 0.0, intensity: wind }];
        cfg.static_offsets = rti::simulate::StaticOffsets::Uniform { lo: -10.0, hi: 6.0 };
        let (base, _) = generate_trace(&cfg).map_err(fail)?;
        cfg.walkers = vec![vec![Waypoint::new(0.0, a.0, a.1), Waypoint::new(3.0, b.0, b.1)]];
        let (walked, truth) = generate_trace(&cfg).map_err(fail)?;
        let links = cfg.deployment.link_geometry().map_err(fail)?;
        for (k, f) in truth.frames.iter().enumerate() {
            let outside = f
                .people
                .iter()
                .all(|p| links.iter().all(|g| !g.ellipse_contains(&p.position, cfg.shadow_lambda_m)));
            if outside {
                prop_assert!(base.frames[k] == walked.frames[k], "frame {} differs", k);
            }
        }
        Ok(())
    })
}

fn noise_variance_follows_law(cases: u32) -> Check {
    check(cases, (-15.0f64..15.0, 0.05f64..=1.0, any::<u64>()), |(fade, wind, seed)| {
        let law = NoiseModel::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| wind_noise_sample(&law, fade, wind, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = law.sigma(fade, wind).powi(2);
        prop_assert!((var / want - 1.0).abs() <= 0.10, "variance {} vs {}", var, want);
        Ok(())
    })
}

fn standing_flag_matches_waypoints(cases: u32) -> Check {
    let legs = prop::collection::vec((point(0.0, 10.0), any::<bool>(), 0.1f64..5.0), 1..8);
    check(cases, (point(0.0, 10.0), legs, 0.0f64..=1.0), |(start, legs, u)| {
        let mut walker = vec![Waypoint::new(0.0, start.0, start.1)];
        for (next, stay, dt) in legs {
            let last = *walker.last().unwrap();
            let (x, y) = if stay { (last.x, last.y) } else { next };
            walker.push(Waypoint::new(last.t + dt, x, y));
        }
        let end = walker.last().unwrap().t;
        let t = u * end;
        let seg = walker.windows(2).position(|w| t >= w[0].t && t < w[1].t).unwrap_or(walker.len() - 2);
        let coincide = walker[seg].x == walker[seg + 1].x && walker[seg].y == walker[seg + 1].y;
        let state = walker_state(&walker, t).ok_or_else(|| fail("time outside trajectory"))?;
        prop_assert_eq!(state.moving, !coincide);
        Ok(())
    })
}

/// Transmitter 1 at the origin with receivers at `points`; means from
/// `p0 - 10 η log10 d` plus per-link `offsets`.
fn one_transmitter_stats(points: &[(f64, f64)], eta: f64, p0: f64, offsets: &[f64]) -> (Deployment<f64>, LinkChannelStats<f64>) {
    let mut all = vec![(0.0, 0.0)];
    all.extend_from_slice(points);
    let d = deployment(&all, &[11], Area { xmin: -60.0, ymin: -60.0, xmax: 60.0, ymax: 60.0 }, 10.0);
    let table = d.pair_table();
    let mut stats = LinkChannelStats::empty(table.clone());
    for (i, slot) in stats.pairs.iter_mut().enumerate() {
        let (link, _) = table.pair(i);
        if link.tx != 1 {
            continue;
        }
        let r = &points[link.rx as usize - 2];
        let dist = (r.0 * r.0 + r.1 * r.1).sqrt();
        let mean = p0 - 10.0 * eta * dist.log10() + offsets[link.rx as usize - 2];
        *slot = Some(PairStats { mean, variance: 1.0, count: 20, fade: None });
    }
    (d, stats)
}

fn receivers() -> impl Strategy<Value = Vec<((f64, f64), f64)>> {
    prop::collection::vec(((1.0f64..50.0, 0.0f64..std::f64::consts::TAU), -6.0f64..6.0), 3..7).prop_map(|v| {
        v.into_iter()
            .map(|((r, a), off)| ((r * a.cos(), r * a.sin()), off))
            .collect()
    })
}

fn regression_translation_invariance(cases: u32) -> Check {
    check(cases, (receivers(), 1.5f64..4.0, -50.0f64..-30.0, -20.0f64..20.0), |(rx, eta, p0, shift)| {
        let pts: Vec<(f64, f64)> = rx.iter().map(|r| r.0).collect();
        let offs: Vec<f64> = rx.iter().map(|r| r.1).collect();
        let (d, stats) = one_transmitter_stats(&pts, eta, p0, &offs);
        let mut shifted = stats.clone();
        for s in shifted.pairs.iter_mut().flatten() {
            s.mean += shift;
        }
        let (a, _) = fit_path_loss_partial(&stats, &d, PathLossMode::NodeSpecific);
        let (b, _) = fit_path_loss_partial(&shifted, &d, PathLossMode::NodeSpecific);
        let (a, b) = (a.params(1).ok_or_else(|| fail("no fit"))?, b.params(1).ok_or_else(|| fail("no fit"))?);
        prop_assert!((b.p0_dbm - a.p0_dbm - shift).abs() < 1e-9, "P0 {} → {}", a.p0_dbm, b.p0_dbm);
        prop_assert!((b.eta - a.eta).abs() < 1e-9, "η {} → {}", a.eta, b.eta);
        Ok(())
    })
}

fn fade_level_antisymmetry(cases: u32) -> Check {
    check(cases, (-110.0f64..10.0, -110.0f64..10.0), |(a, b)| {
        prop_assert_eq!(fade_level(a, b), -fade_level(b, a));
        Ok(())
    })
}

fn noiseless_fades_vanish(cases: u32) -> Check {
    check(cases, (any::<u64>(), 6.0f64..40.0), |(seed, side)| {
        let d = ring(4, side, &[11, 26], side / 4.0);
        let mut cfg = rti::simulate::ScenarioConfig::quiet(d.clone(), 3.0 * 0.34 + 0.01, seed);
        cfg.path_loss = rti::presets::field_path_loss();
        let (trace, _) = generate_trace(&cfg).map_err(fail)?;
        let stats = estimate_stats(&trace, &d.pair_table(), CalibrationWindow::new(0, trace.len()).map_err(fail)?);
        let model = fit_path_loss(&stats, &d, PathLossMode::NodeSpecific).map_err(fail)?;
        let faded = fade_levels(&stats, &model, &d).map_err(fail)?;
        for p in faded.pairs.iter().flatten() {
            let f = p.fade.unwrap();
            prop_assert!(f.abs() < 1e-9, "fade {}", f);
        }
        Ok(())
    })
}

fn stats_ignore_frame_order(cases: u32) -> Check {
    check(cases, (any::<u64>(), 2usize..30, 0.1f64..=1.0, any::<u64>()), |(seed, frames, wind, shuffle)| {
        let cfg = tiny_scenario(seed, frames, wind);
        let (trace, _) = generate_trace(&cfg).map_err(fail)?;
        let table = cfg.deployment.pair_table();
        let window = CalibrationWindow::new(0, frames).map_err(fail)?;
        let a = estimate_stats(&trace, &table, window);
        let mut permuted = trace.clone();
        permuted.frames.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let b = estimate_stats(&permuted, &table, window);
        for (x, y) in a.pairs.iter().zip(&b.pairs) {
            match (x, y) {
                (Some(x), Some(y)) => {
                    prop_assert_eq!(x.count, y.count);
                    prop_assert!((x.mean - y.mean).abs() <= 1e-9 * x.mean.abs().max(1.0));
                    prop_assert!((x.variance - y.variance).abs() <= 1e-9 * x.variance.abs().max(1.0));
                }
                (None, None) => {}
                _ => prop_assert!(false, "presence differs"),
            }
        }
        Ok(())
    })
}

fn three_node_table() -> PairTable {
    deployment(
        &[(0.0, 0.0), (10.0, 0.0), (5.0, 8.0)],
        &[11, 16, 21, 26],
        Area { xmin: 0.0, ymin: 0.0, xmax: 10.0, ymax: 8.0 },
        1.0,
    )
    .pair_table()
}

/// Random calibration statistics over the 3-node, 4-channel table; about
/// one pair in eight unmeasured.
fn random_stats(mode: Option<PathLossMode>) -> impl Strategy<Value = LinkChannelStats<f64>> {
    let pair = (0u8..8, -100.0f64..-55.0, 0.1f64..10.0, -6.0f64..6.0);
    prop::collection::vec(pair, 24).prop_map(move |v| {
        let mut s = LinkChannelStats::empty(three_node_table());
        for (i, (gap, mean, variance, fade)) in v.into_iter().enumerate() {
            if gap > 0 {
                s.pairs[i] = Some(PairStats { mean, variance, count: 50, fade: Some(fade) });
            }
        }
        s.fade_mode = mode;
        s
    })
}

fn out(strategy: Method) -> SelectionStrategy<f64> {
    SelectionStrategy::new(strategy, -90.0).unwrap()
}

fn relative_fade_translation_invariance(cases: u32) -> Check {
    check(cases, (random_stats(None), 0usize..6, -30.0f64..30.0), |(stats, link, shift)| {
        let mut moved = stats.clone();
        for i in stats.table.pairs_of_link(link) {
            if let Some(p) = moved.pairs[i].as_mut() {
                p.mean += shift;
            }
        }
        let a = relative_fade_levels(&stats);
        let b = relative_fade_levels(&moved);
        for (x, y) in a.iter().zip(&b) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y),
                (None, None) => {}
                _ => prop_assert!(false, "presence differs"),
            }
        }
        Ok(())
    })
}

fn argmax_invariance(cases: u32) -> Check {
    let scales = prop::collection::vec((0.2f64..5.0, 0.2f64..5.0), 6);
    check(cases, (random_stats(Some(PathLossMode::NodeSpecific)), scales), |(stats, scales)| {
        // ρ = F/σ² becomes ρ·a/b on each link: a strictly increasing map.
        let mut scaled = stats.clone();
        for (link, &(a, b)) in scales.iter().enumerate() {
            for i in stats.table.pairs_of_link(link) {
                if let Some(p) = scaled.pairs[i].as_mut() {
                    p.fade = p.fade.map(|f| f * a);
                    p.variance *= b;
                }
            }
        }
        let x = select(&stats, &out(Method::OutPlus)).map_err(fail)?;
        let y = select(&scaled, &out(Method::OutPlus)).map_err(fail)?;
        prop_assert_eq!(x.selected, y.selected);
        Ok(())
    })
}

fn heaviest_channel_within_candidates(cases: u32) -> Check {
    check(cases, random_stats(Some(PathLossMode::NodeSpecific)), |stats| {
        let plus = select(&stats, &out(Method::OutPlus)).map_err(fail)?;
        let weighted = select(&stats, &out(Method::OutWeighted)).map_err(fail)?;
        prop_assert!(plus.selected.iter().all(|i| weighted.candidates.contains(i)));
        prop_assert!(plus.selected.len() <= stats.table.link_count());
        Ok(())
    })
}

fn uniform_selects_all_measured(cases: u32) -> Check {
    check(cases, random_stats(Some(PathLossMode::Global)), |stats| {
        let sel = select(&stats, &out(Method::FlbAll)).map_err(fail)?;
        let measured: Vec<usize> = (0..stats.pairs.len()).filter(|&i| stats.pairs[i].is_some()).collect();
        prop_assert_eq!(&sel.selected, &measured);
        if measured.len() == stats.table.len() {
            let e: f64 = energy_coefficient(sel.len(), stats.table.node_count(), stats.table.channel_count())
                .map_err(fail)?;
            prop_assert_eq!(e, 0.0);
        }
        Ok(())
    })
}

fn lower_threshold_never_shrinks_connected_set(cases: u32) -> Check {
    check(cases, (random_stats(Some(PathLossMode::NodeSpecific)), -110.0f64..-80.0, 0.0f64..20.0), |(stats, hi, gap)| {
        let strict = select(&stats, &SelectionStrategy::new(Method::OutPlus, hi).unwrap()).map_err(fail)?;
        let loose = select(&stats, &SelectionStrategy::new(Method::OutPlus, hi - gap).unwrap()).map_err(fail)?;
        prop_assert!(strict.connected.iter().all(|i| loose.connected.contains(i)));
        Ok(())
    })
}

fn fifo_gating_immutability(cases: u32) -> Check {
    let history = prop::collection::vec(-95.0f64..-50.0, 1..20);
    let blocked = prop::collection::vec((-95.0f64..-50.0, -0.4f64..0.4, -0.4f64..0.4), 1..30);
    check(cases, (1usize..15, history, blocked), |(capacity, history, blocked)| {
        let link = vec![LinkGeometry::new(LinkKey::new(1, 2), Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)).unwrap()];
        let mut s = ReferenceState::new(1, 1, capacity, &[0], ReferenceMode::Gated);
        for v in history {
            s.update(&[Some(v)], &[], &link, 2.0);
        }
        let before = s.reference(0).map(f64::to_bits);
        let buffer: Vec<u64> = s.buffer(0).unwrap().iter().map(|v| v.to_bits()).collect();
        for (v, dx, dy) in blocked {
            s.update(&[Some(v)], &[Point2::new(5.0 + dx, dy)], &link, 2.0);
        }
        prop_assert_eq!(s.reference(0).map(f64::to_bits), before);
        let after: Vec<u64> = s.buffer(0).unwrap().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(after, buffer);
        Ok(())
    })
}

fn positive_definite(m: &DMatrix<f64>) -> bool {
    let sym = (m - m.transpose()).amax() <= 1e-12 * m.amax();
    sym && m.clone().symmetric_eigen().eigenvalues.iter().all(|&e| e > 0.0)
}

fn prior_and_normal_matrix_spd(cases: u32) -> Check {
    let s = (2usize..6, 2usize..6, 0.5f64..2.0, 1e-4f64..1.0, 0.5f64..5.0, 0.01f64..1.0);
    check(cases, s, |(cols, rows, pw, sigma2, delta, alpha)| {
        let area = Area { xmin: 0.0, ymin: 0.0, xmax: cols as f64 * pw, ymax: rows as f64 * pw };
        let grid = PixelGrid::covering(&area, pw);
        let c = covariance_matrix(&grid, sigma2, delta);
        prop_assert!(positive_definite(&c), "C not SPD");
        let d = deployment(&[(0.0, 0.0), (area.xmax, 0.0), (area.xmax, area.ymax), (0.0, area.ymax)], &[11], area, pw);
        let links = d.link_geometry().map_err(fail)?;
        let w = build_weight_matrix(&links, &grid, 0.5 * pw, AreaMode::Analytic).map_err(fail)?.to_dense();
        let cinv = c.clone().cholesky().ok_or_else(|| fail("cholesky"))?.inverse();
        let normal = w.transpose() * &w + cinv * alpha;
        let normal = (&normal + normal.transpose()) * 0.5;
        prop_assert!(positive_definite(&normal), "normal matrix not SPD");
        Ok(())
    })
}

fn ring_projection() -> &'static (ProjectionMatrix<f64>, usize) {
    static CELL: OnceLock<(ProjectionMatrix<f64>, usize)> = OnceLock::new();
    CELL.get_or_init(|| {
        let d = ring(8, 12.0, &[11], 1.0);
        let config = RtiConfig { p: 1.0, ..Default::default() };
        let grid = PixelGrid::covering(&d.area, 1.0);
        let links = d.link_geometry().unwrap();
        let w = build_weight_matrix(&links, &grid, config.lambda, AreaMode::Analytic).unwrap();
        (build_projection(&w, &config, &grid, ProjectionSolver::Direct).unwrap(), links.len())
    })
}

fn image_linearity(cases: u32) -> Check {
    let (pi, l) = ring_projection();
    let l = *l;
    let y = || prop::collection::vec(0.0f64..20.0, l);
    check(cases, (y(), y(), -5.0f64..5.0), |(a, b, k)| {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let img = |y: &DVector<f64>| estimate_image(pi, y, 0).map(|i| i.values).map_err(fail);
        let add = (img(&(&a + &b))? - (img(&a)? + img(&b)?)).amax();
        let hom = (img(&(&a * k))? - img(&a)? * k).amax();
        prop_assert!(add <= 1e-12, "additivity gap {}", add);
        prop_assert!(hom <= 1e-12, "homogeneity gap {}", hom);
        Ok(())
    })
}

fn weight_support_matches_ellipse(cases: u32) -> Check {
    let s = (prop::collection::vec(point(0.0, 10.0), 3..6), 0.25f64..2.0, 0.1f64..4.0);
    check(cases, s, |(pts, pw, lambda)| {
        let area = Area { xmin: 0.0, ymin: 0.0, xmax: 10.0, ymax: 10.0 };
        let distinct: HashSet<(u64, u64)> = pts.iter().map(|p| (p.0.to_bits(), p.1.to_bits())).collect();
        prop_assume!(distinct.len() == pts.len());
        let d = deployment(&pts, &[11], area, pw);
        let links = d.link_geometry().map_err(fail)?;
        let grid = PixelGrid::covering(&area, pw);
        let w = build_weight_matrix(&links, &grid, lambda, AreaMode::Analytic).map_err(fail)?;
        for (l, g) in links.iter().enumerate() {
            let want: Vec<usize> = (0..grid.len())
                .filter(|&q| link_ellipse_contains(&g.tx, &g.rx, &grid.center(q), lambda).unwrap())
                .collect();
            prop_assert_eq!(&w.support[l], &want);
        }
        Ok(())
    })
}

struct DenseInstance {
    grid: PixelGrid<f64>,
    links: Vec<LinkGeometry<f64>>,
    projection: ProjectionMatrix<f64>,
    lambda: f64,
}

fn dense_instance() -> &'static DenseInstance {
    static CELL: OnceLock<DenseInstance> = OnceLock::new();
    CELL.get_or_init(|| {
        let d = ring(16, 10.0, &[11], 0.5);
        let config = RtiConfig { p: 0.5, lambda: 1.0, ..Default::default() };
        let grid = PixelGrid::covering(&d.area, 0.5);
        let links = d.link_geometry().unwrap();
        let w = build_weight_matrix(&links, &grid, config.lambda, AreaMode::Analytic).unwrap();
        let projection = build_projection(&w, &config, &grid, ProjectionSolver::Direct).unwrap();
        DenseInstance { grid, links, projection, lambda: config.lambda }
    })
}

fn noiseless_argmax_near_person(cases: u32) -> Check {
    let inst = dense_instance();
    check(cases, point(2.0, 8.0), |(x, y)| {
        let person = Point2::new(x, y);
        let change = DVector::from_iterator(
            inst.links.len(),
            inst.links.iter().map(|g| if g.ellipse_contains(&person, inst.lambda) { 12.0 } else { 0.0 }),
        );
        let img = estimate_image(&inst.projection, &change, 0).map_err(fail)?.values;
        let best = img.argmax().0;
        let c = inst.grid.center(best);
        let cells = ((c.x - x).abs().max((c.y - y).abs()) / inst.grid.pixel_width).floor();
        prop_assert!(cells <= 2.0, "argmax {:?} vs person {:?}", c, person);
        Ok(())
    })
}

fn foreground_buffers_untouched(cases: u32) -> Check {
    let frames = prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2..30);
    check(cases, (1usize..10, frames, 0.2f64..3.0), |(capacity, frames, kb)| {
        let mut m = BackgroundModel::new(6, capacity);
        for f in frames {
            let before: Vec<Vec<f64>> = (0..6).map(|q| m.buffer(q).iter().copied().collect()).collect();
            let mask = m.update(&DVector::from_vec(f), kb);
            for q in 0..6 {
                if !mask[q] {
                    let now: Vec<f64> = m.buffer(q).iter().copied().collect();
                    prop_assert_eq!(&now, &before[q]);
                }
            }
        }
        Ok(())
    })
}

fn background_drift_bounded(cases: u32) -> Check {
    let frames = prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..30);
    check(cases, (1usize..10, frames, 0.2f64..3.0), |(capacity, frames, kb)| {
        let mut m = BackgroundModel::new(4, capacity);
        for k in 0..capacity {
            m.update(&DVector::from_element(4, (k % 3) as f64), kb);
        }
        for f in frames {
            let old = m.background().clone();
            let span: Vec<f64> = (0..4)
                .map(|q| {
                    let b = m.buffer(q);
                    let lo = b.iter().copied().fold(f[q], f64::min);
                    let hi = b.iter().copied().fold(f[q], f64::max);
                    hi - lo
                })
                .collect();
            m.update(&DVector::from_vec(f), kb);
            for q in 0..4 {
                let step = (m.background()[q] - old[q]).abs();
                prop_assert!(step <= span[q] / capacity as f64 + 1e-12, "pixel {} moved {}", q, step);
            }
        }
        Ok(())
    })
}

fn bump(grid: &PixelGrid<f64>, at: (f64, f64), height: f64) -> DVector<f64> {
    DVector::from_fn(grid.len(), |q, _| {
        let c = grid.center(q);
        height * (-((c.x - at.0).powi(2) + (c.y - at.1).powi(2)) / 4.0).exp()
    })
}

fn tracker_is_deterministic(cases: u32) -> Check {
    let frames = prop::collection::vec(prop::collection::vec((point(0.0, 20.0), 0.0f64..3.0), 0..3), 1..12);
    check(cases, frames, |frames| {
        let grid = PixelGrid::covering(&Area { xmin: 0.0, ymin: 0.0, xmax: 20.0, ymax: 20.0 }, 1.0);
        let config = TrackerConfig { intensity_floor: 0.2, ..Default::default() };
        let (mut a, mut b) = (Tracker::new(config), Tracker::new(config));
        for (k, blobs) in frames.iter().enumerate() {
            let img = blobs.iter().fold(DVector::zeros(grid.len()), |acc, &(at, h)| acc + bump(&grid, at, h));
            prop_assert_eq!(a.step(&img, &grid, k), b.step(&img, &grid, k));
        }
        Ok(())
    })
}

fn single_frame_blob_single_estimate(cases: u32) -> Check {
    check(cases, (point(4.0, 16.0), 0usize..6, 0.5f64..5.0), |(at, on, height)| {
        let grid = PixelGrid::covering(&Area { xmin: 0.0, ymin: 0.0, xmax: 20.0, ymax: 20.0 }, 1.0);
        let config = TrackerConfig { confirm_hits: 1, max_misses: 0, intensity_floor: 0.1, ..Default::default() };
        let mut t = Tracker::new(config);
        for k in 0..6 {
            let img = if k == on { bump(&grid, at, height) } else { DVector::zeros(grid.len()) };
            let n = confirmed_positions(&t.step(&img, &grid, k)).len();
            prop_assert_eq!(n, usize::from(k == on), "frame {}", k);
        }
        Ok(())
    })
}

fn truth_strategy() -> impl Strategy<Value = (Vec<Vec<Point2<f64>>>, TruthTrace<f64>)> {
    let frame = (prop::option::weighted(0.8, (point(0.0, 30.0), any::<bool>())), prop::collection::vec(point(0.0, 30.0), 0..3));
    prop::collection::vec(frame, 1..40).prop_map(|frames| {
        let mut est = Vec::new();
        let mut truth = TruthTrace::default();
        for (k, (person, guesses)) in frames.into_iter().enumerate() {
            est.push(guesses.into_iter().map(|g| Point2::new(g.0, g.1)).collect());
            truth.frames.push(TruthFrame {
                index: k,
                t: k as f64 * 0.34,
                people: person
                    .into_iter()
                    .map(|(p, moving)| PersonState { position: Point2::new(p.0, p.1), moving })
                    .collect(),
            });
        }
        (est, truth)
    })
}

fn metrics_are_pure(cases: u32) -> Check {
    check(cases, truth_strategy(), |(est, truth)| {
        let counts: Vec<usize> = est.iter().map(Vec::len).collect();
        prop_assert_eq!(false_alarm_rate(&counts, &truth, 0.34).ok(), false_alarm_rate(&counts, &truth, 0.34).ok());
        let a = rmse(&est, &truth).ok();
        let b = rmse(&est, &truth).ok();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

fn rmse_translation_invariance(cases: u32) -> Check {
    check(cases, (truth_strategy(), point(-100.0, 100.0)), |((est, truth), (dx, dy))| {
        let v = nalgebra::Vector2::new(dx, dy);
        let moved_est: Vec<Vec<Point2<f64>>> = est.iter().map(|f| f.iter().map(|p| p + v).collect()).collect();
        let mut moved_truth = truth.clone();
        for f in &mut moved_truth.frames {
            for p in &mut f.people {
                p.position += v;
            }
        }
        match (rmse(&est, &truth), rmse(&moved_est, &moved_truth)) {
            (Ok(a), Ok(b)) => {
                let near = |x: Option<f64>, y: Option<f64>| match (x, y) {
                    (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.max(1.0),
                    (None, None) => true,
                    _ => false,
                };
                prop_assert!(near(a.moving, b.moving) && near(a.standing, b.standing), "{:?} vs {:?}", a, b);
                prop_assert_eq!((a.moving_frames, a.standing_frames), (b.moving_frames, b.standing_frames));
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
        Ok(())
    })
}

fn experiment_is_reproducible(cases: u32) -> Check {
    check(cases, (any::<u64>(), 0.0f64..=1.0, point(1.0, 7.0)), |(seed, wind, at)| {
        let mut cfg = tiny_scenario(seed, 40, wind);
        cfg.walkers = vec![vec![Waypoint::new(6.0, at.0, at.1), Waypoint::new(12.0, 4.0, 4.0)]];
        let (trace, truth) = generate_trace(&cfg).map_err(fail)?;
        let config = RtiConfig { p: 1.0, ..Default::default() };
        let schedule = Schedule { windows: vec![CalibrationWindow::new(0, 15).unwrap()] };
        let plan = ExperimentPlan { strategies: vec![Method::OutPlus, Method::FlbAll], ablation: true, sweeps: vec![] };
        let opts = ExperimentOptions::default();
        let a = run_experiment(&cfg.deployment, &trace, &truth, &config, &schedule, &opts, &plan).map_err(fail)?;
        let b = run_experiment(&cfg.deployment, &trace, &truth, &config, &schedule, &opts, &plan).map_err(fail)?;
        prop_assert_eq!(a, b);
        Ok(())
    })
}

fn empty_model() -> &'static (Deployment<f64>, ImagingModel<f64>) {
    static CELL: OnceLock<(Deployment<f64>, ImagingModel<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let d = ring(8, 12.0, &[11, 16, 21, 26], 1.0);
        let config = RtiConfig { p: 1.0, ..Default::default() };
        let model = ImagingModel::new(&d, &config, AreaMode::Analytic, ProjectionSolver::Direct).unwrap();
        (d, model)
    })
}

fn subtraction_never_adds_spurious_frames(cases: u32) -> Check {
    let (d, model) = empty_model();
    check(cases, (any::<u64>(), 0.2f64..=1.0), |(seed, wind)| {
        let mut cfg = rti::simulate::ScenarioConfig::quiet(d.clone(), 120.0 * 0.34 + 0.01, seed);
        cfg.path_loss = rti::presets::field_path_loss();
        cfg.static_offsets = rti::presets::field_offsets();
        cfg.wind = vec![rti::simulate::WindSegment { start_s: 0.0, intensity: wind }];
        let (trace, truth) = generate_trace(&cfg).map_err(fail)?;
        let schedule = Schedule { windows: vec![CalibrationWindow::new(0, 30).unwrap()] };
        let spurious = |sub: bool| -> Result<usize, TestCaseError> {
            let opts = ExperimentOptions { background_subtraction: sub, ..Default::default() };
            let run = run_strategy(model, d, &trace, &truth, Method::OutPlus, &schedule, &opts).map_err(fail)?;
            Ok(run.detection_counts().iter().filter(|&&c| c > 0).count())
        };
        let (with, without) = (spurious(true)?, spurious(false)?);
        prop_assert!(without >= with, "{} spurious frames without subtraction, {} with", without, with);
        Ok(())
    })
}
