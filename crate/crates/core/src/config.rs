//! Imaging parameters with their deployment defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtiError};
use crate::scalar::Scalar;

/// Imaging configuration. Keys mirror the usual parameter symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RtiConfig<T> {
    /// Link connectivity threshold Υ_r (dBm).
    pub upsilon_r: T,
    /// Reference RSS FIFO window T_w (s).
    pub t_w: T,
    /// Sensitivity ellipse width λ (m).
    pub lambda: T,
    /// Background training period T_b (s).
    pub t_b: T,
    /// Background/foreground threshold K_b.
    pub k_b: T,
    /// Regularization parameter α_r.
    pub alpha_r: T,
    /// Pixel intensity variance σ²_x.
    pub sigma2_x: T,
    /// Pixel correlation distance δ_c (m).
    pub delta_c: T,
    /// Pixel width p (m).
    pub p: T,
    /// Sampling interval T_s (s): one full multi-channel TDMA cycle.
    pub t_s: T,
}

impl<T: Scalar> Default for RtiConfig<T> {
    fn default() -> Self {
        Self {
            upsilon_r: T::of(-90.0),
            t_w: T::of(5.0),
            lambda: T::of(2.0),
            t_b: T::of(5.0),
            k_b: T::of(1.0),
            alpha_r: T::of(0.1),
            sigma2_x: T::of(0.001),
            delta_c: T::of(1.0),
            p: T::of(0.65),
            t_s: T::of(0.34),
        }
    }
}

impl<T: Scalar> RtiConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_w", self.t_w),
            ("lambda", self.lambda),
            ("t_b", self.t_b),
            ("k_b", self.k_b),
            ("alpha_r", self.alpha_r),
            ("sigma2_x", self.sigma2_x),
            ("delta_c", self.delta_c),
            ("p", self.p),
            ("t_s", self.t_s),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite_value() {
                return Err(RtiError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.upsilon_r.is_finite_value() {
            return Err(RtiError::InvalidParameter("upsilon_r must be finite".into()));
        }
        if self.n_w() == 0 || self.n_b() == 0 {
            return Err(RtiError::InvalidParameter(
                "t_w and t_b must each span at least one sample interval".into(),
            ));
        }
        Ok(())
    }

    /// Reference FIFO length `⌊T_w / T_s⌋`.
    pub fn n_w(&self) -> usize {
        floor_ratio(self.t_w, self.t_s)
    }

    /// Background FIFO length `⌊T_b / T_s⌋`.
    pub fn n_b(&self) -> usize {
        floor_ratio(self.t_b, self.t_s)
    }
}

pub(crate) fn floor_ratio<T: Scalar>(a: T, b: T) -> usize {
    // Nudge by a relative epsilon so 5.1 / 0.34 lands on 15, not 14.999...
    let r = (a / b).as_f64();
    (r * (1.0 + 1e-12)).floor().max(0.0) as usize
}
