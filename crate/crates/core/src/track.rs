//! Blob detection on background-subtracted images and a greedy
//! nearest-neighbour tracker.

use nalgebra::{DVector, Point2};
use serde::{Deserialize, Serialize};

use crate::scalar::{median, Scalar};
use crate::scene::PixelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig<T> {
    /// Blob threshold as a multiple of the image's median absolute deviation.
    pub mad_multiplier: T,
    /// Absolute lower bound on the blob threshold.
    pub intensity_floor: T,
    /// Lower bound on the blob threshold as a fraction of the image maximum.
    pub peak_fraction: T,
    pub min_blob_pixels: usize,
    /// Association gate radius (m).
    pub gate_radius_m: T,
    /// Consecutive hits before a tentative track is confirmed.
    pub confirm_hits: usize,
    /// Consecutive misses after which a confirmed track is dropped.
    pub max_misses: usize,
    /// Weight of the new centroid in the exponential position smoother.
    pub smoothing: T,
}

impl<T: Scalar> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            mad_multiplier: T::of(3.0),
            intensity_floor: T::zero(),
            peak_fraction: T::of(0.5),
            min_blob_pixels: 3,
            gate_radius_m: T::of(5.0),
            confirm_hits: 3,
            max_misses: 9,
            smoothing: T::of(0.6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob<T: Scalar> {
    pub centroid: Point2<T>,
    pub pixels: usize,
    pub mass: T,
    pub peak: T,
}

/// `max(k · MAD(x), floor, f · max(x))`.
pub fn blob_threshold<T: Scalar>(image: &DVector<T>, config: &TrackerConfig<T>) -> T {
    let values: Vec<T> = image.iter().copied().collect();
    let mad = median(&values)
        .map(|m| {
            let dev: Vec<T> = values.iter().map(|&v| (v - m).abs()).collect();
            median(&dev).unwrap_or_else(T::zero)
        })
        .unwrap_or_else(T::zero);
    let peak = values.iter().fold(T::zero(), |a, &v| a.max(v));
    (config.mad_multiplier * mad)
        .max(config.intensity_floor)
        .max(config.peak_fraction * peak)
}

/// 4-connected components of pixels strictly above `threshold` with at least
/// `min_pixels` members, each summarised by its intensity-weighted centroid.
pub fn detect_blobs<T: Scalar>(
    image: &DVector<T>,
    grid: &PixelGrid<T>,
    threshold: T,
    min_pixels: usize,
) -> Vec<Blob<T>> {
    let above: Vec<bool> = image.iter().map(|&v| v > threshold).collect();
    let mut seen = vec![false; image.len()];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..image.len() {
        if !above[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut members, mut mass, mut peak) = (0usize, T::zero(), T::zero());
        let (mut sx, mut sy) = (T::zero(), T::zero());
        while let Some(q) = stack.pop() {
            let v = image[q];
            let c = grid.center(q);
            members += 1;
            mass += v;
            peak = peak.max(v);
            sx += v * c.x;
            sy += v * c.y;
            for nb in grid.neighbors(q) {
                if above[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        if members >= min_pixels && mass > T::zero() {
            blobs.push(Blob {
                centroid: Point2::new(sx / mass, sy / mass),
                pixels: members,
                mass,
                peak,
            });
        }
    }
    blobs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track<T: Scalar> {
    pub id: u64,
    pub position: Point2<T>,
    pub hits: usize,
    pub misses: usize,
    pub confirmed: bool,
    pub last_seen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackEstimate<T: Scalar> {
    pub track_id: u64,
    pub position: Point2<T>,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker<T: Scalar> {
    config: TrackerConfig<T>,
    tracks: Vec<Track<T>>,
    next_id: u64,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(config: TrackerConfig<T>) -> Self {
        Self { config, tracks: Vec::new(), next_id: 1 }
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.config
    }

    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    /// Positions of all live tracks, tentative ones included.
    pub fn live_positions(&self) -> Vec<Point2<T>> {
        self.tracks.iter().map(|t| t.position).collect()
    }

    /// Detects blobs in `image` and updates the tracks. Returns every track
    /// matched or born this frame; the confirmed ones form the position
    /// estimates.
    pub fn step(&mut self, image: &DVector<T>, grid: &PixelGrid<T>, frame: usize) -> Vec<TrackEstimate<T>> {
        let threshold = blob_threshold(image, &self.config);
        let blobs = detect_blobs(image, grid, threshold, self.config.min_blob_pixels);
        self.associate(&blobs, frame)
    }

    /// Greedy nearest-neighbour association of blobs to tracks.
    pub fn associate(&mut self, blobs: &[Blob<T>], frame: usize) -> Vec<TrackEstimate<T>> {
        let gate = self.config.gate_radius_m;
        let mut candidates: Vec<(T, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            for (bi, b) in blobs.iter().enumerate() {
                let d = nalgebra::distance(&t.position, &b.centroid);
                if d <= gate {
                    candidates.push((d, ti, bi));
                }
            }
        }
        candidates.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut track_used = vec![false; self.tracks.len()];
        let mut blob_used = vec![false; blobs.len()];
        let alpha = self.config.smoothing;
        for (_, ti, bi) in candidates {
            if track_used[ti] || blob_used[bi] {
                continue;
            }
            track_used[ti] = true;
            blob_used[bi] = true;
            let t = &mut self.tracks[ti];
            t.position = t.position + (blobs[bi].centroid - t.position) * alpha;
            t.hits += 1;
            t.misses = 0;
            t.last_seen = frame;
            if t.hits >= self.config.confirm_hits {
                t.confirmed = true;
            }
        }
        let max_misses = self.config.max_misses.max(1);
        let mut kept = Vec::with_capacity(self.tracks.len());
        for (t, used) in self.tracks.drain(..).zip(track_used) {
            let mut t = t;
            if !used {
                t.misses += 1;
                t.hits = 0;
                // Tentative tracks need consecutive hits; drop them on a miss.
                if !t.confirmed || t.misses >= max_misses {
                    continue;
                }
            }
            kept.push(t);
        }
        self.tracks = kept;
        for (b, used) in blobs.iter().zip(blob_used) {
            if used {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                id,
                position: b.centroid,
                hits: 1,
                misses: 0,
                confirmed: self.config.confirm_hits <= 1,
                last_seen: frame,
            });
        }
        self.tracks
            .iter()
            .filter(|t| t.last_seen == frame && t.misses == 0)
            .map(|t| TrackEstimate { track_id: t.id, position: t.position, confirmed: t.confirmed })
            .collect()
    }
}

/// Confirmed positions among a frame's estimates.
pub fn confirmed_positions<T: Scalar>(estimates: &[TrackEstimate<T>]) -> Vec<Point2<T>> {
    estimates.iter().filter(|e| e.confirmed).map(|e| e.position).collect()
}
