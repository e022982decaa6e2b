//! Forward-model RSS generator: node-specific path loss, static multipath
//! offsets, binary human shadowing and wind-driven environmental noise.

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::channel::{PathLossMode, PathLossModel, PathLossParams, REFERENCE_DISTANCE_M};
use crate::error::{Result, RtiError};
use crate::scalar::Scalar;
use crate::scene::Deployment;
use crate::trace::{Frame, PersonState, RssSample, RssTrace, TruthFrame, TruthTrace};

pub const RSS_MIN_DBM: f64 = -110.0;
pub const RSS_MAX_DBM: f64 = 10.0;

/// Standard deviation of environmental noise as a function of the pair's fade
/// level and the wind intensity.
pub trait NoiseLaw<T>: Send + Sync {
    fn sigma(&self, fade: T, wind: T) -> T;
}

/// `σ(F, w) = w · σ_max · clamp(1 − F/F₀, g_min, g_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseLinearNoise<T> {
    pub sigma_max_db: T,
    pub f0_db: T,
    pub g_min: T,
    pub g_max: T,
}

impl<T: Scalar> Default for PiecewiseLinearNoise<T> {
    fn default() -> Self {
        Self {
            sigma_max_db: T::of(3.0),
            f0_db: T::of(10.0),
            g_min: T::of(0.1),
            g_max: T::of(3.0),
        }
    }
}

impl<T: Scalar> PiecewiseLinearNoise<T> {
    pub fn shape(&self, fade: T) -> T {
        (T::one() - fade / self.f0_db).clamp(self.g_min, self.g_max)
    }
}

impl<T: Scalar> NoiseLaw<T> for PiecewiseLinearNoise<T> {
    fn sigma(&self, fade: T, wind: T) -> T {
        wind * self.sigma_max_db * self.shape(fade)
    }
}

/// Serializable choice of noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NoiseModel<T> {
    PiecewiseLinear(PiecewiseLinearNoise<T>),
}

impl<T: Scalar> Default for NoiseModel<T> {
    fn default() -> Self {
        Self::PiecewiseLinear(PiecewiseLinearNoise::default())
    }
}

impl<T: Scalar> NoiseLaw<T> for NoiseModel<T> {
    fn sigma(&self, fade: T, wind: T) -> T {
        match self {
            Self::PiecewiseLinear(law) => law.sigma(fade, wind),
        }
    }
}

/// One zero-mean environmental-noise draw in dB.
pub fn wind_noise_sample<T: Scalar, R: Rng + ?Sized>(
    law: &dyn NoiseLaw<T>,
    fade: T,
    wind: T,
    rng: &mut R,
) -> T {
    let z: f64 = StandardNormal.sample(rng);
    law.sigma(fade, wind) * T::of(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint<T> {
    pub t: T,
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Waypoint<T> {
    pub fn new(t: T, x: T, y: T) -> Self {
        Self { t, x, y }
    }

    fn point(&self) -> Point2<T> {
        Point2::new(self.x, self.y)
    }
}

/// Wind intensity `w ∈ [0, 1]` from `start_s` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSegment<T> {
    pub start_s: T,
    pub intensity: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantedPathLoss<T> {
    /// Per-transmitter exponent and reference power drawn uniformly.
    Random { eta: (T, T), p0_dbm: (T, T) },
    /// The same parameters for every transmitter.
    Uniform { eta: T, p0_dbm: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StaticOffsets<T> {
    Zero,
    /// Independent per `(link, channel)` offset drawn uniformly in `[lo, hi]` dB.
    Uniform { lo: T, hi: T },
}

/// Grey-region packet loss: samples below `sensitivity_dbm` are dropped with
/// probability rising linearly to one at `floor_dbm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingModel<T> {
    pub sensitivity_dbm: T,
    pub floor_dbm: T,
}

impl<T: Scalar> Default for MissingModel<T> {
    fn default() -> Self {
        Self {
            sensitivity_dbm: T::of(-97.0),
            floor_dbm: T::of(RSS_MIN_DBM),
        }
    }
}

impl<T: Scalar> MissingModel<T> {
    pub fn drop_probability(&self, rss: T) -> T {
        if rss >= self.sensitivity_dbm {
            return T::zero();
        }
        ((self.sensitivity_dbm - rss) / (self.sensitivity_dbm - self.floor_dbm)).min(T::one())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
pub struct ScenarioConfig<T: Scalar> {
    pub deployment: Deployment<T>,
    pub duration_s: T,
    #[serde(default = "default_sample_interval")]
    pub sample_interval_s: T,
    pub path_loss: PlantedPathLoss<T>,
    pub static_offsets: StaticOffsets<T>,
    #[serde(default)]
    pub walkers: Vec<Vec<Waypoint<T>>>,
    #[serde(default = "default_attenuation")]
    pub human_attenuation_db: T,
    #[serde(default = "default_shadow_lambda")]
    pub shadow_lambda_m: T,
    #[serde(default)]
    pub wind: Vec<WindSegment<T>>,
    #[serde(default)]
    pub noise: NoiseModel<T>,
    #[serde(default)]
    pub missing: Option<MissingModel<T>>,
    pub seed: u64,
}

fn default_sample_interval<T: Scalar>() -> T {
    T::of(0.34)
}

fn default_attenuation<T: Scalar>() -> T {
    T::of(12.0)
}

fn default_shadow_lambda<T: Scalar>() -> T {
    T::of(2.0)
}

impl<T: Scalar> ScenarioConfig<T> {
    /// Empty, windless scenario with zero offsets and uniform path loss.
    pub fn quiet(deployment: Deployment<T>, duration_s: T, seed: u64) -> Self {
        Self {
            deployment,
            duration_s,
            sample_interval_s: default_sample_interval(),
            path_loss: PlantedPathLoss::Uniform {
                eta: T::of(2.5),
                p0_dbm: T::of(-40.0),
            },
            static_offsets: StaticOffsets::Zero,
            walkers: Vec::new(),
            human_attenuation_db: default_attenuation(),
            shadow_lambda_m: default_shadow_lambda(),
            wind: Vec::new(),
            noise: NoiseModel::default(),
            missing: None,
            seed,
        }
    }

    pub fn frame_count(&self) -> usize {
        crate::config::floor_ratio(self.duration_s, self.sample_interval_s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RtiError::InvalidScenario(m));
        self.deployment.validate()?;
        if !(self.sample_interval_s > T::zero()) {
            return bad("sample interval must be positive".into());
        }
        if !(self.duration_s > T::zero()) {
            return bad("duration must be positive".into());
        }
        if self.human_attenuation_db < T::zero() {
            return bad("human attenuation must be non-negative".into());
        }
        if !(self.shadow_lambda_m > T::zero()) {
            return bad("shadowing ellipse width must be positive".into());
        }
        for seg in &self.wind {
            if seg.intensity < T::zero() || seg.intensity > T::one() {
                return bad(format!("wind intensity {} outside [0, 1]", seg.intensity));
            }
        }
        if self.wind.windows(2).any(|w| w[1].start_s < w[0].start_s) {
            return bad("wind segments must be ordered by start time".into());
        }
        if let StaticOffsets::Uniform { lo, hi } = self.static_offsets {
            if lo > hi {
                return bad("static offset range is inverted".into());
            }
        }
        for (i, walker) in self.walkers.iter().enumerate() {
            if walker.is_empty() {
                return bad(format!("walker {i} has no waypoints"));
            }
            if walker.windows(2).any(|w| !(w[1].t > w[0].t)) {
                return bad(format!("walker {i} waypoint times are not increasing"));
            }
            if let Some(w) = walker.iter().find(|w| !self.deployment.area.contains(&w.point())) {
                return bad(format!(
                    "walker {i} leaves the area at ({}, {})",
                    w.x, w.y
                ));
            }
        }
        Ok(())
    }

    pub fn wind_at(&self, t: T) -> T {
        self.wind
            .iter()
            .rev()
            .find(|s| s.start_s <= t)
            .map_or(T::zero(), |s| s.intensity)
    }
}

fn segment_at<T: Scalar>(walker: &[Waypoint<T>], t: T) -> usize {
    walker
        .windows(2)
        .position(|w| t >= w[0].t && t < w[1].t)
        .unwrap_or(walker.len() - 2)
}

fn position_at<T: Scalar>(walker: &[Waypoint<T>], t: T) -> Point2<T> {
    if walker.len() == 1 {
        return walker[0].point();
    }
    let seg = segment_at(walker, t);
    let (a, b) = (walker[seg], walker[seg + 1]);
    let s = ((t - a.t) / (b.t - a.t)).clamp(T::zero(), T::one());
    a.point() + (b.point() - a.point()) * s
}

/// Position and motion of a walker at time `t`, if the trajectory covers it.
/// Standing exactly when the waypoints bounding the current segment coincide.
pub fn walker_state<T: Scalar>(walker: &[Waypoint<T>], t: T) -> Option<PersonState<T>> {
    let first = walker.first()?;
    let last = walker.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let position = position_at(walker, t);
    let moving = walker.len() > 1 && {
        let seg = segment_at(walker, t);
        walker[seg].point() != walker[seg + 1].point()
    };
    Some(PersonState { position, moving })
}

/// Deterministic quantities drawn once per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedScene<T> {
    pub model: PathLossModel<T>,
    /// Static multipath offset per pair index; also the pair's true fade level.
    pub offsets: Vec<T>,
}

impl<T: Scalar> PlantedScene<T> {
    pub fn draw(config: &ScenarioConfig<T>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let d0 = T::of(REFERENCE_DISTANCE_M);
        let mut ids: Vec<_> = config.deployment.nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        let nodes: BTreeMap<_, _> = ids
            .iter()
            .map(|&id| {
                let params = match config.path_loss {
                    PlantedPathLoss::Uniform { eta, p0_dbm } => PathLossParams { eta, p0_dbm, d0_m: d0 },
                    PlantedPathLoss::Random { eta, p0_dbm } => PathLossParams {
                        eta: uniform(&mut rng, eta.0, eta.1),
                        p0_dbm: uniform(&mut rng, p0_dbm.0, p0_dbm.1),
                        d0_m: d0,
                    },
                };
                (id, params)
            })
            .collect();
        let n_pairs = config.deployment.pair_table().len();
        let offsets = (0..n_pairs)
            .map(|_| match config.static_offsets {
                StaticOffsets::Zero => T::zero(),
                StaticOffsets::Uniform { lo, hi } => uniform(&mut rng, lo, hi),
            })
            .collect();
        Self {
            model: PathLossModel { mode: PathLossMode::NodeSpecific, nodes },
            offsets,
        }
    }
}

fn uniform<T: Scalar, R: Rng>(rng: &mut R, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::of(u)
}

/// Generates the RSS trace and its ground truth.
///
/// Random draws are consumed in a fixed order per frame and pair regardless of
/// walkers, so a walker that touches no ellipse leaves the trace unchanged.
pub fn generate_trace<T: Scalar>(config: &ScenarioConfig<T>) -> Result<(RssTrace<T>, TruthTrace<T>)> {
    config.validate()?;
    let planted = PlantedScene::draw(config);
    let table = config.deployment.pair_table();
    let geometry = config.deployment.link_geometry()?;
    let n_channels = table.channel_count();
    let baseline: Vec<T> = geometry
        .iter()
        .map(|g| planted.model.predict(g.key.tx, g.length).expect("planted model covers all nodes"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let (lo, hi) = (T::of(RSS_MIN_DBM), T::of(RSS_MAX_DBM));
    let frames = config.frame_count();
    let mut trace = RssTrace { frames: Vec::with_capacity(frames) };
    let mut truth = TruthTrace { frames: Vec::with_capacity(frames) };

    for k in 0..frames {
        let t = T::of_usize(k) * config.sample_interval_s;
        let wind = config.wind_at(t);
        let people: Vec<PersonState<T>> = config
            .walkers
            .iter()
            .filter_map(|w| walker_state(w, t))
            .collect();
        let mut samples = Vec::with_capacity(table.len());
        for (li, g) in geometry.iter().enumerate() {
            let shadowed = people
                .iter()
                .any(|p| g.ellipse_contains(&p.position, config.shadow_lambda_m));
            let attenuation = if shadowed { config.human_attenuation_db } else { T::zero() };
            for ci in 0..n_channels {
                let pair = li * n_channels + ci;
                let fade = planted.offsets[pair];
                let noise = wind_noise_sample(&config.noise, fade, wind, &mut rng);
                let u: f64 = rng.random();
                let rss = (baseline[li] + fade - attenuation + noise).clamp(lo, hi);
                if let Some(missing) = &config.missing {
                    if T::of(u) < missing.drop_probability(rss) {
                        continue;
                    }
                }
                samples.push(RssSample::at(g.key, table.channels()[ci], rss));
            }
        }
        trace.frames.push(Frame { index: k, t, samples });
        truth.frames.push(TruthFrame { index: k, t, people });
    }
    Ok((trace, truth))
}
