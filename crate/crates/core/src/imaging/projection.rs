use nalgebra::{Cholesky, DMatrix, Dyn};

use super::WeightMatrix;
use crate::config::RtiConfig;
use crate::error::{Result, RtiError};
use crate::scalar::Scalar;
use crate::scene::PixelGrid;

/// Route used to form `Π = (WᵀW + α C⁻¹)⁻¹ Wᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionSolver {
    /// Factor `C`, form `C⁻¹`, then factor the `P × P` normal matrix.
    #[default]
    Direct,
    /// Equivalent link-space form `C Wᵀ (W C Wᵀ + α I)⁻¹`, which only
    /// factors an `L × L` matrix. Preferable for fine grids.
    Dual,
}

/// Regularized inverse mapping link RSS changes to pixel intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T: Scalar> {
    /// `P × L` matrix.
    pub matrix: DMatrix<T>,
    pub grid: PixelGrid<T>,
}

/// Exponential-decay prior covariance `C[i,j] = σ²_x exp(-d_ij / δ_c)`.
pub fn covariance_matrix<T: Scalar>(grid: &PixelGrid<T>, sigma2_x: T, delta_c: T) -> DMatrix<T> {
    let centers = grid.centers();
    let n = centers.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = nalgebra::distance(&centers[i], &centers[j]);
        sigma2_x * (-d / delta_c).exp()
    })
}

fn factor<T: Scalar>(m: DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    let diag = m.diagonal();
    let diag_max = diag.iter().fold(f64::NEG_INFINITY, |a, b| a.max(b.as_f64()));
    let diag_min = diag.iter().fold(f64::INFINITY, |a, b| a.min(b.as_f64()));
    m.cholesky().ok_or_else(|| {
        RtiError::Factorization(format!(
            "{what} is not positive definite (diagonal range {diag_min:e}..{diag_max:e})"
        ))
    })
}

pub fn build_projection<T: Scalar>(
    weights: &WeightMatrix<T>,
    config: &RtiConfig<T>,
    grid: &PixelGrid<T>,
    solver: ProjectionSolver,
) -> Result<ProjectionMatrix<T>> {
    config.validate()?;
    if weights.pixels != grid.len() {
        return Err(RtiError::DimensionMismatch { expected: grid.len(), actual: weights.pixels });
    }
    let w = weights.to_dense();
    let cov = covariance_matrix(grid, config.sigma2_x, config.delta_c);
    let matrix = match solver {
        ProjectionSolver::Direct => {
            let cov_inv = factor(cov, "prior covariance")?.inverse();
            let normal = w.transpose() * &w + cov_inv * config.alpha_r;
            factor(normal, "regularized normal matrix")?.solve(&w.transpose())
        }
        ProjectionSolver::Dual => {
            let wc = &w * &cov;
            let mut kernel = &wc * w.transpose();
            for i in 0..kernel.nrows() {
                kernel[(i, i)] += config.alpha_r;
            }
            factor(kernel, "link-space kernel")?.solve(&wc).transpose()
        }
    };
    Ok(ProjectionMatrix { matrix, grid: *grid })
}

impl<T: Scalar> ProjectionMatrix<T> {
    /// `max |(WᵀW + α C⁻¹) Π - Wᵀ|`, with `C⁻¹` from a Cholesky factorization.
    pub fn residual(&self, weights: &WeightMatrix<T>, config: &RtiConfig<T>) -> Result<T> {
        let w = weights.to_dense();
        let cov = covariance_matrix(&self.grid, config.sigma2_x, config.delta_c);
        let cov_inv = factor(cov, "prior covariance")?.inverse();
        let normal = w.transpose() * &w + cov_inv * config.alpha_r;
        let r = normal * &self.matrix - w.transpose();
        Ok(r.iter().fold(T::zero(), |a, &b| a.max(b.abs())))
    }

    pub fn pixels(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn links(&self) -> usize {
        self.matrix.ncols()
    }
}
