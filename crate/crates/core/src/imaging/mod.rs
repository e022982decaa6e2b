//! Tomographic imaging: adaptive reference RSS, RSS-change vectors, the
//! ellipse weight model and the regularized projection.

mod projection;
mod reference;
mod weights;

pub use projection::{
    build_projection, covariance_matrix, ProjectionMatrix, ProjectionSolver,
};
pub use reference::{ReferenceMode, ReferenceState};
pub use weights::{build_weight_matrix, AreaMode, WeightMatrix};

use nalgebra::DVector;

use crate::error::{Result, RtiError};
use crate::scalar::Scalar;
use crate::selection::{Combining, SelectionSet};

/// Image intensities on the pixel grid for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T: Scalar> {
    pub frame: usize,
    pub values: DVector<T>,
}

/// Per-link RSS change `y` in canonical link order.
///
/// Single-channel strategies use `|r - r̄|` of the link's selected channel;
/// weighted strategies average `|r - r̄|` over the link's selected channels
/// with weights `ρ`, renormalized over channels available this frame. Links
/// without a selected pair, a sample or a defined reference get zero.
pub fn rss_change<T: Scalar>(
    samples: &[Option<T>],
    reference: &ReferenceState<T>,
    selection: &SelectionSet<T>,
) -> DVector<T> {
    let mut y = DVector::zeros(selection.per_link.len());
    let delta = |i: usize| -> Option<T> {
        let r = samples.get(i).copied().flatten()?;
        let rbar = reference.reference(i)?;
        Some((r - rbar).abs())
    };
    for (link, chosen) in selection.per_link.iter().enumerate() {
        y[link] = match selection.combining() {
            Combining::SingleChannel => chosen.first().and_then(|&(i, _)| delta(i)).unwrap_or_else(T::zero),
            Combining::WeightedAverage => {
                let mut num = T::zero();
                let mut den = T::zero();
                for &(i, w) in chosen {
                    if let Some(d) = delta(i) {
                        num += w * d;
                        den += w;
                    }
                }
                if den > T::zero() {
                    num / den
                } else {
                    T::zero()
                }
            }
        };
    }
    y
}

/// `x̂ = Π y`, skipping zero entries of `y`.
pub fn estimate_image<T: Scalar>(
    projection: &ProjectionMatrix<T>,
    y: &DVector<T>,
    frame: usize,
) -> Result<Image<T>> {
    let pi = &projection.matrix;
    if y.len() != pi.ncols() {
        return Err(RtiError::DimensionMismatch { expected: pi.ncols(), actual: y.len() });
    }
    let mut values = DVector::zeros(pi.nrows());
    for (l, &v) in y.iter().enumerate() {
        if v != T::zero() {
            values.axpy(v, &pi.column(l), T::one());
        }
    }
    Ok(Image { frame, values })
}
