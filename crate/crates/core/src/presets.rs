//! Ready-made deployments, surveys, trajectories and scenarios at the scale of
//! a 20-node, 35 × 60 m field installation.

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, RtiError};
use crate::scalar::Scalar;
use crate::scene::{bearing_deg, Area, Channel, Deployment, LinkKey, NodeRecord, SurveyMeasurement};
use crate::simulate::{MissingModel, PlantedPathLoss, ScenarioConfig, StaticOffsets, Waypoint, WindSegment};

pub const FIELD_WIDTH_M: f64 = 35.0;
pub const FIELD_HEIGHT_M: f64 = 60.0;
pub const FIELD_NODES: usize = 20;
pub const FIELD_CHANNELS: [Channel; 4] = [11, 16, 21, 26];
pub const WALKING_SPEED_MPS: f64 = 1.0;
/// Width of the region around the line of sight where a person attenuates a
/// link in the field scenarios. Narrower than the imaging ellipse.
pub const FIELD_SHADOW_LAMBDA_M: f64 = 0.5;

/// `n` nodes evenly spaced along the boundary of `[0, width] × [0, height]`,
/// counter-clockwise from the origin, with ids `1..=n`.
pub fn perimeter_deployment<T: Scalar>(
    n: usize,
    width: T,
    height: T,
    channels: &[Channel],
    pixel_width: T,
) -> Result<Deployment<T>> {
    if n < 3 || n > u16::MAX as usize {
        return Err(RtiError::InvalidParameter(format!("cannot place {n} nodes")));
    }
    let perimeter = (width + height) * T::of(2.0);
    let step = perimeter / T::of_usize(n);
    let nodes = (0..n)
        .map(|i| {
            let s = step * T::of_usize(i);
            let p = perimeter_point(s, width, height);
            NodeRecord::new(i as u16 + 1, p.x, p.y)
        })
        .collect();
    Deployment::new(
        nodes,
        channels.to_vec(),
        Area { xmin: T::zero(), ymin: T::zero(), xmax: width, ymax: height },
        pixel_width,
    )
}

fn perimeter_point<T: Scalar>(s: T, w: T, h: T) -> Point2<T> {
    if s <= w {
        Point2::new(s, T::zero())
    } else if s <= w + h {
        Point2::new(w, s - w)
    } else if s <= w + w + h {
        Point2::new(w - (s - w - h), h)
    } else {
        Point2::new(T::zero(), h - (s - w - w - h))
    }
}

/// The 20-node, four-channel, 35 × 60 m layout.
pub fn field_deployment<T: Scalar>(pixel_width: T) -> Deployment<T> {
    perimeter_deployment(
        FIELD_NODES,
        T::of(FIELD_WIDTH_M),
        T::of(FIELD_HEIGHT_M),
        &FIELD_CHANNELS,
        pixel_width,
    )
    .expect("field layout is valid")
}

/// Survey plan: every node to its next two neighbours around the ring plus a
/// chord across the area, each measured once.
pub fn survey_links<T: Scalar>(deployment: &Deployment<T>) -> Vec<LinkKey> {
    let mut ids: Vec<_> = deployment.nodes.iter().map(|n| n.id).collect();
    ids.sort_unstable();
    let n = ids.len();
    let mut links = Vec::new();
    for i in 0..n {
        for hop in [1, 2, n / 2] {
            let j = (i + hop) % n;
            if hop == n / 2 && i >= j {
                continue;
            }
            if i != j {
                links.push(LinkKey::new(ids[i], ids[j]));
            }
        }
    }
    links.sort_unstable();
    links.dedup();
    links
}

/// Length and bearing measurements of `links` with Gaussian errors of the
/// given standard deviations (m, degrees).
pub fn simulate_survey<T: Scalar, R: Rng + ?Sized>(
    deployment: &Deployment<T>,
    links: &[LinkKey],
    length_std: T,
    angle_std_deg: T,
    rng: &mut R,
) -> Result<Vec<SurveyMeasurement<T>>> {
    let pos = deployment.positions();
    let normal = |sd: T| {
        Normal::new(0.0, sd.as_f64()).map_err(|e| RtiError::InvalidParameter(format!("noise std: {e}")))
    };
    let (dl, da) = (normal(length_std)?, normal(angle_std_deg)?);
    links
        .iter()
        .map(|&link| {
            let (a, b) = match (pos.get(&link.tx), pos.get(&link.rx)) {
                (Some(a), Some(b)) => (*a, *b),
                _ => return Err(RtiError::UnknownNode(if pos.contains_key(&link.tx) { link.rx } else { link.tx })),
            };
            let length = nalgebra::distance(&a, &b) + T::of(dl.sample(rng));
            let angle = bearing_deg(&a, &b) + T::of(da.sample(rng));
            SurveyMeasurement::new(link, length.max(T::of(1e-3)), angle)
        })
        .collect()
}

/// Waypoints visiting `points` in order at constant `speed`, starting at `t0`.
pub fn path<T: Scalar>(points: &[Point2<T>], t0: T, speed: T) -> Vec<Waypoint<T>> {
    let mut t = t0;
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            t += nalgebra::distance(&points[i - 1], p) / speed;
        }
        out.push(Waypoint::new(t, p.x, p.y));
    }
    out
}

/// A rectangular loop `inset` meters inside the area, repeated `laps` times.
pub fn loop_walk<T: Scalar>(area: &Area<T>, inset: T, laps: usize, t0: T, speed: T) -> Vec<Waypoint<T>> {
    let (x0, y0, x1, y1) = (area.xmin + inset, area.ymin + inset, area.xmax - inset, area.ymax - inset);
    let corners = [Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)];
    let mut points = vec![corners[0]];
    for _ in 0..laps {
        points.extend_from_slice(&corners[1..]);
        points.push(corners[0]);
    }
    path(&points, t0, speed)
}

/// Random waypoint walk inside the area, `inset` meters from the boundary,
/// lasting at least `duration` seconds.
pub fn random_walk<T: Scalar, R: Rng + ?Sized>(
    area: &Area<T>,
    inset: T,
    t0: T,
    duration: T,
    speed: T,
    rng: &mut R,
) -> Vec<Waypoint<T>> {
    let mut draw = || {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        Point2::new(
            area.xmin + inset + (area.width() - inset * T::of(2.0)) * T::of(u),
            area.ymin + inset + (area.height() - inset * T::of(2.0)) * T::of(v),
        )
    };
    let mut points = vec![draw()];
    let mut length = T::zero();
    while length / speed < duration {
        let next = draw();
        length += nalgebra::distance(points.last().expect("non-empty"), &next);
        points.push(next);
    }
    path(&points, t0, speed)
}

/// Walks from `from` to `spot`, stands there for `stand` seconds, then walks
/// back.
pub fn stand_at<T: Scalar>(from: Point2<T>, spot: Point2<T>, t0: T, stand: T, speed: T) -> Vec<Waypoint<T>> {
    let mut w = path(&[from, spot], t0, speed);
    let arrive = w.last().expect("two points").t;
    w.push(Waypoint::new(arrive + stand, spot.x, spot.y));
    let leave = path(&[spot, from], arrive + stand, speed);
    w.extend(leave.into_iter().skip(1));
    w
}

/// Site realism shared by the field scenarios: per-transmitter path loss and
/// per-pair multipath offsets.
pub fn field_path_loss<T: Scalar>() -> PlantedPathLoss<T> {
    PlantedPathLoss::Random {
        eta: (T::of(2.0), T::of(3.4)),
        p0_dbm: (T::of(-42.0), T::of(-30.0)),
    }
}

pub fn field_offsets<T: Scalar>() -> StaticOffsets<T> {
    StaticOffsets::Uniform { lo: T::of(-10.0), hi: T::of(6.0) }
}

/// Windless scenario with one walker looping inside the area.
pub fn noiseless_walk<T: Scalar>(deployment: Deployment<T>, seed: u64, laps: usize) -> ScenarioConfig<T> {
    let lead = T::of(30.0);
    let walker = loop_walk(&deployment.area, T::of(6.0), laps, lead, T::of(WALKING_SPEED_MPS));
    let duration = walker.last().expect("loop").t + T::of(5.0);
    ScenarioConfig {
        path_loss: field_path_loss(),
        static_offsets: field_offsets(),
        walkers: vec![walker],
        shadow_lambda_m: T::of(FIELD_SHADOW_LAMBDA_M),
        ..ScenarioConfig::quiet(deployment, duration, seed)
    }
}

/// Windy trace: `empty_frames` frames with nobody present, then
/// `occupied_frames` frames with one random walker.
pub fn windy_scenario<T: Scalar>(
    deployment: Deployment<T>,
    seed: u64,
    wind: T,
    empty_frames: usize,
    occupied_frames: usize,
) -> ScenarioConfig<T> {
    let ts = T::of(0.34);
    let start = T::of_usize(empty_frames) * ts;
    let duration = T::of_usize(empty_frames + occupied_frames) * ts;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let walkers = if occupied_frames > 0 {
        vec![random_walk(&deployment.area, T::of(4.0), start, duration - start, T::of(WALKING_SPEED_MPS), &mut rng)]
    } else {
        Vec::new()
    };
    ScenarioConfig {
        path_loss: field_path_loss(),
        static_offsets: field_offsets(),
        walkers,
        wind: vec![WindSegment { start_s: T::zero(), intensity: wind }],
        missing: Some(MissingModel::default()),
        shadow_lambda_m: T::of(FIELD_SHADOW_LAMBDA_M),
        ..ScenarioConfig::quiet(deployment, duration, seed)
    }
}

/// A person walks in from the lower edge, stands still for `stand_s` seconds
/// at a spot inside the area, then walks back out, under constant wind.
pub fn standing_scenario<T: Scalar>(deployment: Deployment<T>, seed: u64, wind: T, stand_s: T) -> ScenarioConfig<T> {
    let area = deployment.area;
    let lead = T::of(60.0);
    let spot = Point2::new(area.xmin + area.width() * T::of(0.4), area.ymin + area.height() * T::of(0.45));
    let entry = Point2::new(spot.x, area.ymin + T::of(1.0));
    let walker = stand_at(entry, spot, lead, stand_s, T::of(WALKING_SPEED_MPS));
    let duration = walker.last().expect("stand").t + T::of(5.0);
    ScenarioConfig {
        path_loss: field_path_loss(),
        static_offsets: field_offsets(),
        walkers: vec![walker],
        wind: vec![WindSegment { start_s: T::zero(), intensity: wind }],
        missing: Some(MissingModel::default()),
        shadow_lambda_m: T::of(FIELD_SHADOW_LAMBDA_M),
        ..ScenarioConfig::quiet(deployment, duration, seed)
    }
}
