//! Deployment geometry: nodes, directed links, channels, the pixel grid and
//! the elliptical sensitivity-area test.

mod survey;

pub use survey::{
    bearing_deg, chain_initial_positions, estimate_node_positions, normalize_degrees,
    survey_objective, wrap_difference, LocateResult, SolverOptions, SurveyMeasurement,
    SurveyNoiseConfig,
};

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

use crate::error::{Result, RtiError};
use crate::scalar::Scalar;

pub type NodeId = u16;
pub type Channel = u8;

/// Lowest and highest 802.15.4 channel numbers in the 2.4 GHz band.
pub const MIN_CHANNEL: Channel = 11;
pub const MAX_CHANNEL: Channel = 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord<T> {
    pub id: NodeId,
    pub x: T,
    pub y: T,
}

impl<T: Scalar> NodeRecord<T> {
    pub fn new(id: NodeId, x: T, y: T) -> Self {
        Self { id, x, y }
    }

    pub fn position(&self) -> Point2<T> {
        Point2::new(self.x, self.y)
    }
}

/// Axis-aligned monitored area in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area<T> {
    pub xmin: T,
    pub ymin: T,
    pub xmax: T,
    pub ymax: T,
}

impl<T: Scalar> Area<T> {
    pub fn width(&self) -> T {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> T {
        self.ymax - self.ymin
    }

    pub fn contains(&self, p: &Point2<T>) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn clamp(&self, p: Point2<T>) -> Point2<T> {
        Point2::new(
            p.x.clamp(self.xmin, self.xmax),
            p.y.clamp(self.ymin, self.ymax),
        )
    }
}

/// Directed transmitter → receiver pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkKey {
    pub tx: NodeId,
    pub rx: NodeId,
}

impl LinkKey {
    pub fn new(tx: NodeId, rx: NodeId) -> Self {
        Self { tx, rx }
    }
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.tx, self.rx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deployment<T> {
    pub nodes: Vec<NodeRecord<T>>,
    pub channels: Vec<Channel>,
    pub area: Area<T>,
    pub pixel_width: T,
}

impl<T: Scalar> Deployment<T> {
    pub fn new(
        nodes: Vec<NodeRecord<T>>,
        channels: Vec<Channel>,
        area: Area<T>,
        pixel_width: T,
    ) -> Result<Self> {
        let d = Self {
            nodes,
            channels,
            area,
            pixel_width,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RtiError::InvalidDeployment(m.to_string()));
        if self.nodes.len() < 3 {
            return bad("at least 3 nodes are required");
        }
        let mut ids: Vec<_> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("node ids must be unique");
        }
        if self
            .nodes
            .iter()
            .any(|n| !n.x.is_finite_value() || !n.y.is_finite_value())
        {
            return bad("node coordinates must be finite");
        }
        if self.channels.is_empty() {
            return bad("channel set is empty");
        }
        for &c in &self.channels {
            channel_center_frequency(c as i64)?;
        }
        let mut ch = self.channels.clone();
        ch.sort_unstable();
        ch.dedup();
        if ch.len() != self.channels.len() {
            return bad("duplicate channels");
        }
        if !(self.area.width() > T::zero() && self.area.height() > T::zero()) {
            return bad("area must have positive extent");
        }
        if !(self.pixel_width > T::zero()) {
            return bad("pixel width must be positive");
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, id: NodeId) -> Option<Point2<T>> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.position())
    }

    pub fn positions(&self) -> HashMap<NodeId, Point2<T>> {
        self.nodes.iter().map(|n| (n.id, n.position())).collect()
    }

    pub fn grid(&self) -> PixelGrid<T> {
        PixelGrid::covering(&self.area, self.pixel_width)
    }

    pub fn pair_table(&self) -> PairTable {
        PairTable::new(self)
    }

    /// Link geometry in canonical link order.
    pub fn link_geometry(&self) -> Result<Vec<LinkGeometry<T>>> {
        let pos = self.positions();
        enumerate_links(self)
            .into_iter()
            .map(|key| {
                let tx = pos[&key.tx];
                let rx = pos[&key.rx];
                LinkGeometry::new(key, tx, rx)
            })
            .collect()
    }
}

/// Canonical link ordering: ascending `(tx, rx)` with `tx != rx`.
pub fn enumerate_links<T: Scalar>(deployment: &Deployment<T>) -> Vec<LinkKey> {
    let ids: Vec<NodeId> = deployment.nodes.iter().map(|n| n.id).collect();
    links_between(&ids)
}

/// Every ordered pair of distinct ids, sorted by (tx, rx). Works for any
/// node count, including the two-node case a deployment rejects.
pub fn links_between(ids: &[NodeId]) -> Vec<LinkKey> {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut links = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1));
    for &tx in &ids {
        for &rx in &ids {
            if tx != rx {
                links.push(LinkKey::new(tx, rx));
            }
        }
    }
    links
}

/// Center frequency in MHz of an IEEE 802.15.4 channel in the 2.4 GHz band.
pub fn channel_center_frequency(channel: i64) -> Result<u32> {
    if !(MIN_CHANNEL as i64..=MAX_CHANNEL as i64).contains(&channel) {
        return Err(RtiError::ChannelOutOfRange(channel));
    }
    Ok((2400 + 5 * (channel - 10)) as u32)
}

/// Whether `point` lies strictly inside the ellipse with foci at the link
/// endpoints whose focal-distance sum is `d_l + lambda`.
pub fn link_ellipse_contains<T: Scalar>(
    tx: &Point2<T>,
    rx: &Point2<T>,
    point: &Point2<T>,
    lambda: T,
) -> Result<bool> {
    if !(lambda > T::zero()) {
        return Err(RtiError::InvalidParameter("lambda must be positive".into()));
    }
    let d = nalgebra::distance(tx, rx);
    if d == T::zero() {
        return Err(RtiError::InvalidParameter(
            "coincident link endpoints".into(),
        ));
    }
    Ok(nalgebra::distance(point, tx) + nalgebra::distance(point, rx) < d + lambda)
}

/// Precomputed endpoints and length of one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry<T: Scalar> {
    pub key: LinkKey,
    pub tx: Point2<T>,
    pub rx: Point2<T>,
    pub length: T,
}

impl<T: Scalar> LinkGeometry<T> {
    pub fn new(key: LinkKey, tx: Point2<T>, rx: Point2<T>) -> Result<Self> {
        let length = nalgebra::distance(&tx, &rx);
        if length == T::zero() {
            return Err(RtiError::DegenerateLink(key));
        }
        Ok(Self { key, tx, rx, length })
    }

    pub fn ellipse_contains(&self, point: &Point2<T>, lambda: T) -> bool {
        nalgebra::distance(point, &self.tx) + nalgebra::distance(point, &self.rx)
            < self.length + lambda
    }

    pub fn midpoint(&self) -> Point2<T> {
        nalgebra::center(&self.tx, &self.rx)
    }

    /// Analytic area of the sensitivity ellipse: semi-major `(d + λ)/2`,
    /// semi-minor from the focal half-distance `d/2`.
    pub fn ellipse_area(&self, lambda: T) -> T {
        let two = T::of(2.0);
        let a = (self.length + lambda) / two;
        let c = self.length / two;
        let b = (a * a - c * c).sqrt();
        T::pi() * a * b
    }
}

/// Regular grid of square pixels covering the monitored area, row-major from
/// `(xmin, ymin)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGrid<T: Scalar> {
    pub origin: Point2<T>,
    pub pixel_width: T,
    pub cols: usize,
    pub rows: usize,
}

impl<T: Scalar> PixelGrid<T> {
    pub fn covering(area: &Area<T>, pixel_width: T) -> Self {
        let cols = (area.width() / pixel_width).ceil().as_f64().max(1.0) as usize;
        let rows = (area.height() / pixel_width).ceil().as_f64().max(1.0) as usize;
        Self {
            origin: Point2::new(area.xmin, area.ymin),
            pixel_width,
            cols,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, index: usize) -> Point2<T> {
        let (col, row) = (index % self.cols, index / self.cols);
        let half = T::of(0.5);
        Point2::new(
            self.origin.x + (T::of_usize(col) + half) * self.pixel_width,
            self.origin.y + (T::of_usize(row) + half) * self.pixel_width,
        )
    }

    pub fn centers(&self) -> Vec<Point2<T>> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Pixel containing `p`, if inside the grid.
    pub fn index_of(&self, p: &Point2<T>) -> Option<usize> {
        let fx = ((p.x - self.origin.x) / self.pixel_width).floor().as_f64();
        let fy = ((p.y - self.origin.y) / self.pixel_width).floor().as_f64();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (col, row) = (fx as usize, fy as usize);
        (col < self.cols && row < self.rows).then_some(row * self.cols + col)
    }

    /// 4-connected neighbours of a pixel.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (col, row) = (index % self.cols, index / self.cols);
        let mut out = [None; 4];
        if col > 0 {
            out[0] = Some(index - 1);
        }
        if col + 1 < self.cols {
            out[1] = Some(index + 1);
        }
        if row > 0 {
            out[2] = Some(index - self.cols);
        }
        if row + 1 < self.rows {
            out[3] = Some(index + self.cols);
        }
        out.into_iter().flatten()
    }
}

/// Dense indexing of `(link, channel)` pairs: `link_index * |C| + channel_index`,
/// with links in canonical order and channels in deployment order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    links: Vec<LinkKey>,
    channels: Vec<Channel>,
    node_ordinal: HashMap<NodeId, usize>,
}

impl PairTable {
    pub fn new<T: Scalar>(deployment: &Deployment<T>) -> Self {
        let links = enumerate_links(deployment);
        let mut ids: Vec<NodeId> = deployment.nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        let node_ordinal = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Self {
            links,
            channels: deployment.channels.clone(),
            node_ordinal,
        }
    }

    pub fn links(&self) -> &[LinkKey] {
        &self.links
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn node_count(&self) -> usize {
        self.node_ordinal.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.links.len() * self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn link_index(&self, link: LinkKey) -> Option<usize> {
        let n = self.node_ordinal.len();
        let t = *self.node_ordinal.get(&link.tx)?;
        let r = *self.node_ordinal.get(&link.rx)?;
        if t == r {
            return None;
        }
        Some(t * (n - 1) + if r > t { r - 1 } else { r })
    }

    pub fn channel_index(&self, channel: Channel) -> Option<usize> {
        self.channels.iter().position(|&c| c == channel)
    }

    pub fn index(&self, link: LinkKey, channel: Channel) -> Option<usize> {
        Some(self.link_index(link)? * self.channels.len() + self.channel_index(channel)?)
    }

    pub fn pair(&self, index: usize) -> (LinkKey, Channel) {
        let c = self.channels.len();
        (self.links[index / c], self.channels[index % c])
    }

    pub fn link_of(&self, index: usize) -> usize {
        index / self.channels.len()
    }

    /// Pair indices belonging to one link, in channel order.
    pub fn pairs_of_link(&self, link_index: usize) -> std::ops::Range<usize> {
        let c = self.channels.len();
        link_index * c..(link_index + 1) * c
    }
}
