//! Sampled fields on the fiber grids, with differentiation, quadrature and
//! Poisson inversion.

mod grid;
mod line;

pub use grid::{Deriv, DiffMode, PeriodicGrid2};
pub use line::{gauss_legendre, LineGrid};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("right-hand side has mean {0:e}; Poisson inversion needs mean zero")]
    NonzeroMean(f64),
    #[error("sample count {got} does not match grid size {expected}")]
    WrongLength { got: usize, expected: usize },
}

/// Real samples on a [`PeriodicGrid2`].
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: PeriodicGrid2,
    data: Vec<f64>,
}

impl RealField {
    pub fn new(grid: PeriodicGrid2, data: Vec<f64>) -> Result<Self, FieldError> {
        if data.len() != grid.len() {
            return Err(FieldError::WrongLength { got: data.len(), expected: grid.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(RealField { grid, data })
    }

    pub fn from_fn(grid: &PeriodicGrid2, f: impl Fn(f64, f64) -> f64) -> Result<Self, FieldError> {
        let data = grid.sample(f);
        Self::new(grid.clone(), data)
    }

    pub fn constant(grid: &PeriodicGrid2, c: f64) -> Self {
        RealField { grid: grid.clone(), data: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &PeriodicGrid2 {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Partial derivative of a periodic field.
pub fn diff2(field: &RealField, which: Deriv, mode: DiffMode) -> Result<RealField, FieldError> {
    if let Some(i) = field.data.iter().position(|v| !v.is_finite()) {
        return Err(FieldError::NonFinite(i));
    }
    let data = field.grid.derivative(&field.data, which, mode);
    Ok(RealField { grid: field.grid.clone(), data })
}

/// `Σ f·ρ·hx·hy`, the periodic trapezoidal rule.
pub fn integrate(field: &RealField, density: &RealField) -> Result<f64, FieldError> {
    if field.grid != density.grid {
        return Err(FieldError::GridMismatch);
    }
    let h = field.grid.hx() * field.grid.hy();
    Ok(field.data.iter().zip(&density.data).map(|(f, r)| f * r).sum::<f64>() * h)
}

/// Mean-zero solution of `Δu = rhs` for the flat Laplacian `∂xx + ∂yy` of the unit square.
pub fn poisson_solve(rhs: &RealField) -> Result<RealField, FieldError> {
    let mean = rhs.mean();
    if mean.abs() > 1e-10 {
        return Err(FieldError::NonzeroMean(mean));
    }
    let tp2 = (2.0 * std::f64::consts::PI).powi(2);
    let data = rhs.grid.apply_multiplier(&rhs.data, |kx, ky, _, _| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            0.0
        } else {
            -1.0 / (tp2 * k2)
        }
    });
    Ok(RealField { grid: rhs.grid.clone(), data })
}

/// Flat Laplacian `∂xx + ∂yy`, spectral.
pub fn laplacian(field: &RealField) -> RealField {
    let tp2 = (2.0 * std::f64::consts::PI).powi(2);
    let data = field
        .grid
        .apply_multiplier(&field.data, |kx, ky, _, _| -tp2 * (kx * kx + ky * ky));
    RealField { grid: field.grid.clone(), data }
}
