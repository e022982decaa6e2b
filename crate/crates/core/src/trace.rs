//! RSS and ground-truth traces, one entry per full multi-channel TDMA cycle.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::scene::{Channel, LinkKey, PairTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssSample<T> {
    pub link: LinkKey,
    pub channel: Channel,
    pub rss: T,
}

impl<T> RssSample<T> {
    pub fn at(link: LinkKey, channel: Channel, rss: T) -> Self {
        Self { link, channel, rss }
    }
}

/// Samples received during one TDMA cycle. Missing samples are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub index: usize,
    pub t: T,
    pub samples: Vec<RssSample<T>>,
}

impl<T: Scalar> Frame<T> {
    /// Samples scattered into pair-index order; unknown pairs are ignored.
    pub fn dense(&self, table: &PairTable) -> Vec<Option<T>> {
        let mut out = vec![None; table.len()];
        self.fill_dense(table, &mut out);
        out
    }

    pub fn fill_dense(&self, table: &PairTable, out: &mut [Option<T>]) {
        out.iter_mut().for_each(|v| *v = None);
        for s in &self.samples {
            if let Some(i) = table.index(s.link, s.channel) {
                out[i] = Some(s.rss);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RssTrace<T> {
    pub frames: Vec<Frame<T>>,
}

impl<T: Scalar> RssTrace<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.frames.iter().map(|f| f.samples.len()).sum()
    }

    /// Frames whose index lies in `[start, end)`.
    pub fn window(&self, start: usize, end: usize) -> impl Iterator<Item = &Frame<T>> {
        self.frames
            .iter()
            .filter(move |f| f.index >= start && f.index < end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PersonState<T: Scalar> {
    pub position: Point2<T>,
    pub moving: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthFrame<T: Scalar> {
    pub index: usize,
    pub t: T,
    pub people: Vec<PersonState<T>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthTrace<T: Scalar> {
    pub frames: Vec<TruthFrame<T>>,
}

impl<T: Scalar> TruthTrace<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.people.len()).collect()
    }
}
