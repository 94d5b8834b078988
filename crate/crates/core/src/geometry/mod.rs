//! Model geometries, weights and their Monge–Ampère measures.
//!
//! All densities are taken against the unit-mass reference area element of the
//! fiber: `dx dy` on the unit square for an elliptic curve, `dp` on `(0, 1)` for
//! the sphere. With `dd^c = (i/2π)∂∂̄` a weight on the degree-`d` bundle has
//! Monge–Ampère mass `d`.

mod sections;
mod serial;

pub use sections::{SectionBasis, SectionError};
pub use serial::{GeometryDescriptor, WeightRecord};

use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::field_core::{FieldError, LineGrid, PeriodicGrid2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("Im τ = {0} is not admissible")]
    BadTau(f64),
    #[error("a weight needs a fiber geometry, not a family")]
    NotAFiber,
    #[error("weight has {got} samples, fiber grid has {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error("non-finite weight sample at index {0}")]
    NonFinite(usize),
    #[error("malformed weight record: {0}")]
    Record(String),
}

/// `τ(s) = Σ c_i s^i` on a disc in the base.
#[derive(Clone, Debug, PartialEq)]
pub struct TauPolynomial {
    coeffs: Vec<Complex64>,
}

impl TauPolynomial {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "empty τ polynomial");
        TauPolynomial { coeffs }
    }

    pub fn constant(tau: Complex64) -> Self {
        TauPolynomial { coeffs: vec![tau] }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c)
    }

    pub fn derivative(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (i, c)| acc * s + c * i as f64)
    }

    pub fn second_derivative(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (i, c)| acc * s + c * (i * (i - 1)) as f64)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().skip(1).all(|c| c.norm() == 0.0)
    }
}

/// A one-parameter family of elliptic curves over a square lattice in the `s`-disc.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticFamily {
    pub tau: TauPolynomial,
    pub degree: usize,
    /// Fiber grid, tagged with `τ(0)`.
    pub grid: PeriodicGrid2,
    /// Lattice half-width `M`: nodes `s = h(a + ib)` with `|a|, |b| ≤ M`.
    pub half_width: usize,
    pub spacing: f64,
}

impl EllipticFamily {
    pub fn s_node(&self, a: isize, b: isize) -> Complex64 {
        Complex64::new(a as f64 * self.spacing, b as f64 * self.spacing)
    }

    /// Elliptic-curve geometry of the fiber over `s`.
    pub fn fiber(&self, s: Complex64) -> Result<ModelGeometry, GeometryError> {
        let tau = self.tau.eval(s);
        ModelGeometry::elliptic(tau, self.degree, self.grid.nx(), self.grid.ny())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelGeometry {
    EllipticCurve { tau: Complex64, degree: usize, grid: PeriodicGrid2 },
    P1Symmetric { degree: usize, grid: LineGrid },
    EllipticFamily(EllipticFamily),
}

impl ModelGeometry {
    pub fn elliptic(tau: Complex64, degree: usize, nx: usize, ny: usize) -> Result<Self, GeometryError> {
        if degree == 0 {
            return Err(GeometryError::ZeroDegree);
        }
        if !(tau.im > 0.0) || !tau.re.is_finite() {
            return Err(GeometryError::BadTau(tau.im));
        }
        let grid = PeriodicGrid2::with_tau(nx, ny, tau)?;
        Ok(ModelGeometry::EllipticCurve { tau, degree, grid })
    }

    pub fn p1(degree: usize, n: usize) -> Result<Self, GeometryError> {
        if degree == 0 {
            return Err(GeometryError::ZeroDegree);
        }
        Ok(ModelGeometry::P1Symmetric { degree, grid: LineGrid::new(n)? })
    }

    pub fn family(
        tau: TauPolynomial,
        degree: usize,
        nx: usize,
        ny: usize,
        half_width: usize,
        spacing: f64,
    ) -> Result<Self, GeometryError> {
        if degree == 0 {
            return Err(GeometryError::ZeroDegree);
        }
        let m = half_width as isize;
        for a in -m..=m {
            for b in -m..=m {
                let s = Complex64::new(a as f64 * spacing, b as f64 * spacing);
                let t = tau.eval(s);
                if !(t.im > 0.1) {
                    return Err(GeometryError::BadTau(t.im));
                }
            }
        }
        let grid = PeriodicGrid2::with_tau(nx, ny, tau.eval(Complex64::new(0.0, 0.0)))?;
        Ok(ModelGeometry::EllipticFamily(EllipticFamily { tau, degree, grid, half_width, spacing }))
    }

    pub fn degree(&self) -> usize {
        match self {
            ModelGeometry::EllipticCurve { degree, .. } | ModelGeometry::P1Symmetric { degree, .. } => *degree,
            ModelGeometry::EllipticFamily(f) => f.degree,
        }
    }

    /// Total Monge–Ampère mass `V = d`.
    pub fn volume(&self) -> f64 {
        self.degree() as f64
    }

    pub fn is_fiber(&self) -> bool {
        !matches!(self, ModelGeometry::EllipticFamily(_))
    }

    /// Geometry of the central fiber for families, `self` otherwise.
    pub fn central_fiber(&self) -> ModelGeometry {
        match self {
            ModelGeometry::EllipticFamily(f) => f.fiber(Complex64::new(0.0, 0.0)).expect("validated family"),
            g => g.clone(),
        }
    }

    pub fn torus_grid(&self) -> Option<&PeriodicGrid2> {
        match self {
            ModelGeometry::EllipticCurve { grid, .. } => Some(grid),
            ModelGeometry::EllipticFamily(f) => Some(&f.grid),
            ModelGeometry::P1Symmetric { .. } => None,
        }
    }

    pub fn line_grid(&self) -> Option<&LineGrid> {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => Some(grid),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => grid.len(),
            g => g.torus_grid().unwrap().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of node `i` for the unit reference area.
    pub fn quad_weight(&self, i: usize) -> f64 {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => grid.weights()[i],
            g => 1.0 / g.len() as f64,
        }
    }

    pub fn quad_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.quad_weight(i)).collect()
    }

    /// `∫ f` against the reference area.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => f.iter().zip(grid.weights()).map(|(a, w)| a * w).sum(),
            _ => f.iter().sum::<f64>() / f.len() as f64,
        }
    }

    /// `∫ f g` against the reference area.
    pub fn integrate_product(&self, f: &[f64], g: &[f64]) -> f64 {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => {
                f.iter().zip(g).zip(grid.weights()).map(|((a, b), w)| a * b * w).sum()
            }
            _ => f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64,
        }
    }

    /// Density of `dd^c u` against the reference area.
    pub fn ddc(&self, u: &[f64]) -> Vec<f64> {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => grid.ddc(u),
            g => g.torus_grid().unwrap().ddc(u),
        }
    }

    /// Solve `(a − c·dd^c) x = b`.
    pub fn solve_shifted(&self, b: &[f64], a: f64, c: f64) -> Vec<f64> {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => grid.solve_shifted(b, a, c),
            g => g.torus_grid().unwrap().solve_shifted(b, a, c),
        }
    }

    pub fn ddc_spectral_radius(&self) -> f64 {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => grid.ddc_spectral_radius(),
            g => g.torus_grid().unwrap().ddc_spectral_radius(),
        }
    }

    /// Largest stable explicit time step for a flow whose MA density is bounded below by `min_ma`.
    pub fn explicit_dt_bound(&self, min_ma: f64) -> f64 {
        let spectral = min_ma / self.ddc_spectral_radius();
        match self {
            ModelGeometry::P1Symmetric { .. } => spectral,
            g => {
                let grid = g.torus_grid().unwrap();
                let h = grid.hx().min(grid.hy());
                (0.2 * h * h * min_ma).min(spectral)
            }
        }
    }

    /// Reference weight `φ₀` at node `i` in the trivialization used by the sections.
    ///
    /// On the elliptic curve this is `2πd (Im z)² / Im τ`, which is not periodic;
    /// on the sphere it is `d log(1 + |z|²) = −d log(1 − p)`.
    pub fn reference_value(&self, i: usize) -> f64 {
        let d = self.volume();
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => -d * (1.0 - grid.p(i)).ln(),
            ModelGeometry::EllipticCurve { tau, grid, .. } => {
                let y = grid.y(i / grid.nx());
                2.0 * std::f64::consts::PI * d * tau.im * y * y
            }
            ModelGeometry::EllipticFamily(f) => {
                let y = f.grid.y(i / f.grid.nx());
                2.0 * std::f64::consts::PI * d * f.grid.tau().im * y * y
            }
        }
    }

    /// Sample a function of the fiber coordinates: `(x, y)` on the torus, `(p, 0)` on the sphere.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => grid.sample(|p| f(p, 0.0)),
            g => g.torus_grid().unwrap().sample(f),
        }
    }

    /// Move samples to another geometry of the same kind by spectral interpolation.
    pub fn resample(&self, u: &[f64], target: &ModelGeometry) -> Vec<f64> {
        match (self, target) {
            (ModelGeometry::P1Symmetric { grid: a, .. }, ModelGeometry::P1Symmetric { grid: b, .. }) => {
                a.resample(u, b)
            }
            (a, b) if a.torus_grid().is_some() && b.torus_grid().is_some() => {
                a.torus_grid().unwrap().resample(u, b.torus_grid().unwrap())
            }
            _ => panic!("cannot resample between sphere and torus samples"),
        }
    }

    /// Same geometry with a different fiber resolution.
    pub fn with_resolution(&self, n: usize) -> Result<Self, GeometryError> {
        match self {
            ModelGeometry::EllipticCurve { tau, degree, .. } => Self::elliptic(*tau, *degree, n, n),
            ModelGeometry::P1Symmetric { degree, .. } => Self::p1(*degree, n),
            ModelGeometry::EllipticFamily(f) => {
                Self::family(f.tau.clone(), f.degree, n, n, f.half_width, f.spacing)
            }
        }
    }

    pub fn resolution(&self) -> usize {
        match self {
            ModelGeometry::P1Symmetric { grid, .. } => grid.len(),
            g => g.torus_grid().unwrap().nx(),
        }
    }
}

/// A weight `φ = φ₀ + u` on the degree-`d` bundle over a fiber.
#[derive(Clone, Debug)]
pub struct Weight {
    geom: ModelGeometry,
    level: usize,
    u: Vec<f64>,
    margin: OnceLock<f64>,
}

impl PartialEq for Weight {
    fn eq(&self, other: &Self) -> bool {
        self.geom == other.geom && self.level == other.level && self.u == other.u
    }
}

impl Weight {
    pub fn new(geom: ModelGeometry, u: Vec<f64>) -> Result<Self, GeometryError> {
        if !geom.is_fiber() {
            return Err(GeometryError::NotAFiber);
        }
        if u.len() != geom.len() {
            return Err(GeometryError::WrongLength { got: u.len(), expected: geom.len() });
        }
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Weight { geom, level: 1, u, margin: OnceLock::new() })
    }

    pub fn from_fn(geom: ModelGeometry, f: impl Fn(f64, f64) -> f64) -> Result<Self, GeometryError> {
        let u = geom.sample(f);
        Self::new(geom, u)
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geom
    }

    /// Power of the base bundle the weight lives on; always 1 for weights built here.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn into_u(self) -> Vec<f64> {
        self.u
    }

    pub fn with_u(&self, u: Vec<f64>) -> Result<Self, GeometryError> {
        Self::new(self.geom.clone(), u)
    }

    pub fn shifted(&self, c: f64) -> Self {
        Weight {
            geom: self.geom.clone(),
            level: self.level,
            u: self.u.iter().map(|v| v + c).collect(),
            margin: self.margin.clone(),
        }
    }

    pub fn sup_distance(&self, other: &Weight) -> f64 {
        sup_distance(&self.u, &other.u)
    }

    /// Minimum of the Monge–Ampère density, computed once.
    pub fn fiber_margin(&self) -> f64 {
        *self.margin.get_or_init(|| ma_measure(self).min())
    }

    /// Same weight on a different fiber resolution.
    pub fn resampled(&self, n: usize) -> Result<Self, GeometryError> {
        let target = self.geom.with_resolution(n)?;
        let u = self.geom.resample(&self.u, &target);
        Self::new(target, u)
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Values of a measure against the reference area element.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub values: Vec<f64>,
    pub mass: f64,
}

impl Density {
    pub fn new(geom: &ModelGeometry, values: Vec<f64>) -> Self {
        let mass = geom.integrate(&values);
        Density { values, mass }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn normalized(mut self) -> Self {
        let m = self.mass;
        for v in &mut self.values {
            *v /= m;
        }
        self.mass = 1.0;
        self
    }
}

/// The weight `φ₀` itself: flat on the elliptic curve, Fubini–Study on the sphere.
pub fn reference_weight(geom: &ModelGeometry) -> Result<Weight, GeometryError> {
    Weight::new(geom.clone(), vec![0.0; geom.len()])
}

/// `MA(φ) = d + dd^c u` against the reference area.
pub fn ma_measure(w: &Weight) -> Density {
    let d = w.geom.volume();
    let values: Vec<f64> = w.geom.ddc(&w.u).into_iter().map(|l| d + l).collect();
    Density::new(&w.geom, values)
}

/// Whether the curvature density is positive everywhere, with its minimum.
pub fn is_fiber_positive(w: &Weight) -> (bool, f64) {
    let m = w.fiber_margin();
    (m > 0.0, m)
}

#[cfg(test)]
mod tests;
