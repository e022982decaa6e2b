use nalgebra::Point2;
use std::collections::VecDeque;

use crate::scalar::Scalar;
use crate::scene::LinkGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    /// Buffers of pairs whose ellipse holds an estimated position are frozen.
    #[default]
    Gated,
    /// Every sample enters the buffer: a plain moving-average low-pass filter.
    Ungated,
}

/// FIFO-mean reference RSS for the tracked pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState<T> {
    capacity: usize,
    channels: usize,
    mode: ReferenceMode,
    buffers: Vec<Option<VecDeque<T>>>,
}

impl<T: Scalar> ReferenceState<T> {
    /// State over `n_pairs` pair slots, tracking `pairs`, with FIFOs of
    /// `capacity` samples. `channels` maps a pair index to its link.
    pub fn new(n_pairs: usize, channels: usize, capacity: usize, pairs: &[usize], mode: ReferenceMode) -> Self {
        let mut s = Self {
            capacity: capacity.max(1),
            channels: channels.max(1),
            mode,
            buffers: vec![None; n_pairs],
        };
        s.track(pairs);
        s
    }

    /// Switches to a new set of tracked pairs, keeping history for pairs that
    /// stay tracked.
    pub fn track(&mut self, pairs: &[usize]) {
        let mut keep = vec![false; self.buffers.len()];
        for &i in pairs {
            keep[i] = true;
        }
        for (i, b) in self.buffers.iter_mut().enumerate() {
            if !keep[i] {
                *b = None;
            } else if b.is_none() {
                *b = Some(VecDeque::with_capacity(self.capacity));
            }
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mode(&self) -> ReferenceMode {
        self.mode
    }

    pub fn buffer(&self, pair: usize) -> Option<&VecDeque<T>> {
        self.buffers.get(pair)?.as_ref()
    }

    /// Mean of the pair's buffer; `None` when untracked or empty.
    pub fn reference(&self, pair: usize) -> Option<T> {
        let b = self.buffer(pair)?;
        crate::scalar::mean(b.iter().copied())
    }

    /// Pushes this frame's samples into the buffers of tracked pairs whose
    /// link ellipse contains none of `estimates` (the previous frame's
    /// position estimates).
    pub fn update(
        &mut self,
        samples: &[Option<T>],
        estimates: &[Point2<T>],
        links: &[LinkGeometry<T>],
        lambda: T,
    ) {
        let mut gate_cache: Vec<Option<bool>> = vec![None; links.len()];
        let channels = self.channels;
        let gated = self.mode == ReferenceMode::Gated && !estimates.is_empty();
        for (i, buffer) in self.buffers.iter_mut().enumerate() {
            let Some(buffer) = buffer else { continue };
            let Some(sample) = samples.get(i).copied().flatten() else {
                continue;
            };
            if gated {
                let link = i / channels;
                let blocked = *gate_cache[link].get_or_insert_with(|| {
                    estimates.iter().any(|p| links[link].ellipse_contains(p, lambda))
                });
                if blocked {
                    continue;
                }
            }
            if buffer.len() == self.capacity {
                buffer.pop_front();
            }
            buffer.push_back(sample);
        }
    }
}
