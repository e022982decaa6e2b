//! Calibration statistics, log-distance path-loss fitting and fade levels.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Result, RtiError};
use crate::scalar::Scalar;
use crate::scene::{Deployment, NodeId, PairTable};
use crate::trace::RssTrace;

/// Frame interval `[start, end)` recorded with nobody in the area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationWindow {
    pub start: usize,
    pub end: usize,
}

impl CalibrationWindow {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end <= start {
            return Err(RtiError::InvalidParameter(format!(
                "calibration window end {end} must exceed start {start}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats<T> {
    pub mean: T,
    /// Unbiased sample variance (zero for a single sample).
    pub variance: T,
    pub count: usize,
    pub fade: Option<T>,
}

/// Per `(link, channel)` calibration statistics indexed by [`PairTable`].
/// `None` marks pairs that received no packet during calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannelStats<T> {
    pub table: PairTable,
    pub pairs: Vec<Option<PairStats<T>>>,
    /// Model mode that produced the fade levels, once filled.
    pub fade_mode: Option<PathLossMode>,
}

impl<T: Scalar> LinkChannelStats<T> {
    pub fn empty(table: PairTable) -> Self {
        let n = table.len();
        Self {
            table,
            pairs: vec![None; n],
            fade_mode: None,
        }
    }

    pub fn get(&self, index: usize) -> Option<&PairStats<T>> {
        self.pairs[index].as_ref()
    }

    pub fn measured_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_some()).count()
    }
}

/// Per-pair sample mean and unbiased variance over the window's frames.
pub fn estimate_stats<T: Scalar>(
    trace: &RssTrace<T>,
    table: &PairTable,
    window: CalibrationWindow,
) -> LinkChannelStats<T> {
    // Welford accumulators: (count, mean, m2).
    let mut acc = vec![(0usize, T::zero(), T::zero()); table.len()];
    for frame in trace.window(window.start, window.end) {
        for s in &frame.samples {
            let Some(i) = table.index(s.link, s.channel) else {
                continue;
            };
            let (n, mean, m2) = &mut acc[i];
            *n += 1;
            let delta = s.rss - *mean;
            *mean += delta / T::of_usize(*n);
            *m2 += delta * (s.rss - *mean);
        }
    }
    let pairs = acc
        .into_iter()
        .map(|(count, mean, m2)| {
            (count > 0).then(|| PairStats {
                mean,
                variance: if count > 1 {
                    m2 / T::of_usize(count - 1)
                } else {
                    T::zero()
                },
                count,
                fade: None,
            })
        })
        .collect();
    LinkChannelStats {
        table: table.clone(),
        pairs,
        fade_mode: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossMode {
    NodeSpecific,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams<T> {
    pub eta: T,
    pub p0_dbm: T,
    pub d0_m: T,
}

impl<T: Scalar> PathLossParams<T> {
    /// Predicted RSS in dBm at `distance` meters.
    pub fn predict(&self, distance: T) -> T {
        self.p0_dbm - T::of(10.0) * self.eta * (distance / self.d0_m).log10()
    }
}

/// Log-distance model, either one entry per transmitter or a single global
/// entry shared by all transmitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel<T> {
    pub mode: PathLossMode,
    pub nodes: BTreeMap<NodeId, PathLossParams<T>>,
}

impl<T: Scalar> PathLossModel<T> {
    pub fn global(params: PathLossParams<T>, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            mode: PathLossMode::Global,
            nodes: nodes.into_iter().map(|n| (n, params)).collect(),
        }
    }

    pub fn params(&self, tx: NodeId) -> Option<&PathLossParams<T>> {
        self.nodes.get(&tx)
    }

    pub fn predict(&self, tx: NodeId, distance: T) -> Option<T> {
        self.params(tx).map(|p| p.predict(distance))
    }
}

/// Reference distance used for every fit. `P0` and `d0` trade off exactly, so
/// only one of them is estimated.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// Ordinary least squares of mean RSS against `-10 log10(d / d0)`.
fn regress<T: Scalar>(points: &[(T, T)]) -> Option<PathLossParams<T>> {
    let d0 = T::of(REFERENCE_DISTANCE_M);
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<T> = points
        .iter()
        .map(|&(d, _)| -T::of(10.0) * (d / d0).log10())
        .collect();
    let n = T::of_usize(points.len());
    let xbar = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let ybar = points.iter().fold(T::zero(), |a, &(_, y)| a + y) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &(_, y)) in xs.iter().zip(points) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
    }
    // Distances must not all coincide.
    if !(sxx > T::default_epsilon().sqrt()) {
        return None;
    }
    let eta = sxy / sxx;
    Some(PathLossParams {
        eta,
        p0_dbm: ybar - eta * xbar,
        d0_m: d0,
    })
}

fn fit_points<T: Scalar>(
    stats: &LinkChannelStats<T>,
    deployment: &Deployment<T>,
) -> BTreeMap<NodeId, Vec<(T, T)>> {
    let pos = deployment.positions();
    let mut by_tx: BTreeMap<NodeId, Vec<(T, T)>> =
        deployment.nodes.iter().map(|n| (n.id, Vec::new())).collect();
    for (i, s) in stats.pairs.iter().enumerate() {
        let Some(s) = s else { continue };
        let (link, _) = stats.table.pair(i);
        let d = nalgebra::distance(&pos[&link.tx], &pos[&link.rx]);
        by_tx.entry(link.tx).or_default().push((d, s.mean));
    }
    by_tx
}

/// Fits the model and lists transmitters whose fit was underdetermined
/// (fewer than two links at distinct distances). Those get no model entry.
pub fn fit_path_loss_partial<T: Scalar>(
    stats: &LinkChannelStats<T>,
    deployment: &Deployment<T>,
    mode: PathLossMode,
) -> (PathLossModel<T>, Vec<NodeId>) {
    let by_tx = fit_points(stats, deployment);
    match mode {
        PathLossMode::NodeSpecific => {
            let mut nodes = BTreeMap::new();
            let mut failed = Vec::new();
            for (tx, pts) in by_tx {
                match regress(&pts) {
                    Some(p) => {
                        nodes.insert(tx, p);
                    }
                    None => failed.push(tx),
                }
            }
            (PathLossModel { mode, nodes }, failed)
        }
        PathLossMode::Global => {
            let ids: Vec<NodeId> = by_tx.keys().copied().collect();
            let all: Vec<(T, T)> = by_tx.into_values().flatten().collect();
            match regress(&all) {
                Some(p) => (PathLossModel::global(p, ids), Vec::new()),
                None => (
                    PathLossModel {
                        mode,
                        nodes: BTreeMap::new(),
                    },
                    ids,
                ),
            }
        }
    }
}

/// Fits the model, failing if any transmitter is underdetermined.
pub fn fit_path_loss<T: Scalar>(
    stats: &LinkChannelStats<T>,
    deployment: &Deployment<T>,
    mode: PathLossMode,
) -> Result<PathLossModel<T>> {
    let (model, failed) = fit_path_loss_partial(stats, deployment, mode);
    if failed.is_empty() {
        Ok(model)
    } else {
        Err(RtiError::Underdetermined(failed))
    }
}

/// Fade level of one pair: measured mean minus model prediction.
pub fn fade_level<T: Scalar>(mean: T, predicted: T) -> T {
    mean - predicted
}

/// Fills `F = r̄ - P(d)` for every measured pair using its transmitter's entry.
pub fn fade_levels<T: Scalar>(
    stats: &LinkChannelStats<T>,
    model: &PathLossModel<T>,
    deployment: &Deployment<T>,
) -> Result<LinkChannelStats<T>> {
    let pos = deployment.positions();
    let mut out = stats.clone();
    for (i, s) in out.pairs.iter_mut().enumerate() {
        let Some(s) = s else { continue };
        let (link, _) = stats.table.pair(i);
        let d = nalgebra::distance(&pos[&link.tx], &pos[&link.rx]);
        let predicted = model
            .predict(link.tx, d)
            .ok_or(RtiError::MissingModelEntry(link.tx))?;
        s.fade = Some(fade_level(s.mean, predicted));
    }
    out.fade_mode = Some(model.mode);
    Ok(out)
}

/// As [`fade_levels`], leaving pairs of unmodelled transmitters without a
/// fade level instead of failing.
pub fn fade_levels_partial<T: Scalar>(
    stats: &LinkChannelStats<T>,
    model: &PathLossModel<T>,
    deployment: &Deployment<T>,
) -> LinkChannelStats<T> {
    let pos = deployment.positions();
    let mut out = stats.clone();
    for (i, s) in out.pairs.iter_mut().enumerate() {
        let Some(s) = s else { continue };
        let (link, _) = stats.table.pair(i);
        let d = nalgebra::distance(&pos[&link.tx], &pos[&link.rx]);
        s.fade = model.predict(link.tx, d).map(|p| fade_level(s.mean, p));
    }
    out.fade_mode = Some(model.mode);
    out
}
