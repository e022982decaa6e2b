//! Per-pixel single-Gaussian background model and subtraction.

use nalgebra::DVector;
use std::collections::VecDeque;

use crate::scalar::Scalar;

/// Lower bound on a pixel's standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Per-pixel FIFO of recent background intensities with its mean `μ` and
/// standard deviation `σ`. The vector of means is the background image `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel<T: Scalar> {
    capacity: usize,
    sigma_floor: T,
    buffers: Vec<VecDeque<T>>,
    mean: DVector<T>,
    sigma: DVector<T>,
    frames: usize,
}

impl<T: Scalar> BackgroundModel<T> {
    pub fn new(pixels: usize, capacity: usize) -> Self {
        let sigma_floor = T::of(SIGMA_FLOOR);
        Self {
            capacity: capacity.max(1),
            sigma_floor,
            buffers: vec![VecDeque::with_capacity(capacity.max(1)); pixels],
            mean: DVector::zeros(pixels),
            sigma: DVector::from_element(pixels, sigma_floor),
            frames: 0,
        }
    }

    pub fn pixels(&self) -> usize {
        self.buffers.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Background image `M(k)`.
    pub fn background(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn sigma(&self) -> &DVector<T> {
        &self.sigma
    }

    pub fn buffer(&self, pixel: usize) -> &VecDeque<T> {
        &self.buffers[pixel]
    }

    /// Whether `capacity` frames have been seen, after which foreground
    /// classification is applied.
    pub fn is_trained(&self) -> bool {
        self.frames >= self.capacity
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.pixels(), self.capacity);
    }

    /// Classifies each pixel against the previous frame's Gaussian and pushes
    /// the intensity of background pixels only. Returns the background mask.
    /// During training every pixel counts as background.
    pub fn update(&mut self, image: &DVector<T>, k_b: T) -> Vec<bool> {
        assert_eq!(image.len(), self.pixels(), "image does not match the background grid");
        let trained = self.is_trained();
        let mut mask = vec![true; self.pixels()];
        for (q, &x) in image.iter().enumerate() {
            if trained && (x - self.mean[q]).abs() / self.sigma[q] > k_b {
                mask[q] = false;
                continue;
            }
            let buffer = &mut self.buffers[q];
            if buffer.len() == self.capacity {
                buffer.pop_front();
            }
            buffer.push_back(x);
            let (mu, sd) = gaussian(buffer);
            self.mean[q] = mu;
            self.sigma[q] = sd.max(self.sigma_floor);
        }
        self.frames += 1;
        mask
    }
}

fn gaussian<T: Scalar>(values: &VecDeque<T>) -> (T, T) {
    let n = T::of_usize(values.len());
    let mu = values.iter().fold(T::zero(), |a, &b| a + b) / n;
    let var = values.iter().fold(T::zero(), |a, &b| a + (b - mu) * (b - mu)) / n;
    (mu, var.sqrt())
}

/// `x̂_b = x̂ - M`.
pub fn subtract<T: Scalar>(image: &DVector<T>, model: &BackgroundModel<T>) -> DVector<T> {
    image - model.background()
}
