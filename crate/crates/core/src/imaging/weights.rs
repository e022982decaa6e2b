use nalgebra::DMatrix;

use crate::error::{Result, RtiError};
use crate::scalar::Scalar;
use crate::scene::{LinkGeometry, PixelGrid};

/// How the sensitivity-ellipse area `A_l` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AreaMode {
    /// `π a b` of the ellipse; independent of the grid.
    #[default]
    Analytic,
    /// Number of covered pixels times the pixel area.
    PixelCount,
}

/// Sparse ellipse weight model: row `l` equals `1/A_l` on the pixels inside
/// link `l`'s ellipse and zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    pub support: Vec<Vec<usize>>,
    pub areas: Vec<T>,
    pub pixels: usize,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn links(&self) -> usize {
        self.support.len()
    }

    /// The single non-zero value of row `l`.
    pub fn row_value(&self, link: usize) -> T {
        let a = self.areas[link];
        if a > T::zero() {
            T::one() / a
        } else {
            T::zero()
        }
    }

    pub fn get(&self, link: usize, pixel: usize) -> T {
        if self.support[link].binary_search(&pixel).is_ok() {
            self.row_value(link)
        } else {
            T::zero()
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut w = DMatrix::zeros(self.links(), self.pixels);
        for (l, row) in self.support.iter().enumerate() {
            let v = self.row_value(l);
            for &q in row {
                w[(l, q)] = v;
            }
        }
        w
    }
}

pub fn build_weight_matrix<T: Scalar>(
    links: &[LinkGeometry<T>],
    grid: &PixelGrid<T>,
    lambda: T,
    mode: AreaMode,
) -> Result<WeightMatrix<T>> {
    if !(lambda > T::zero()) {
        return Err(RtiError::InvalidParameter("lambda must be positive".into()));
    }
    let centers = grid.centers();
    let pixel_area = grid.pixel_width * grid.pixel_width;
    let mut support = Vec::with_capacity(links.len());
    let mut areas = Vec::with_capacity(links.len());
    for g in links {
        if g.length == T::zero() {
            return Err(RtiError::DegenerateLink(g.key));
        }
        let row: Vec<usize> = centers
            .iter()
            .enumerate()
            .filter(|(_, c)| g.ellipse_contains(c, lambda))
            .map(|(q, _)| q)
            .collect();
        areas.push(match mode {
            AreaMode::Analytic => g.ellipse_area(lambda),
            AreaMode::PixelCount => T::of_usize(row.len()) * pixel_area,
        });
        support.push(row);
    }
    Ok(WeightMatrix { support, areas, pixels: grid.len() })
}
