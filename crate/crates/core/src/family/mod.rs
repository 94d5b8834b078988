//! Families of elliptic curves over a small disc in the base: the geodesic-curvature function
//! `c(φ)`, Kodaira–Spencer forms, Weil–Petersson densities, heat-equation residuals and
//! positivity monitors.
//!
//! A family weight is `φ(s, z) = φ₀(s, z) + u(s, x, y)` where `z = x + τ(s) y`, `φ₀ = 2πd (Im z)² / Im τ(s)`
//! and `u` is sampled on the fixed `(x, y)` grid over a square lattice of base points.
//! A family with constant `τ` is the trivial family.

mod evolve;
mod jets;

pub use evolve::{
    direct_image_psh_check, family_bergman_step, family_flow_step, heat_residual, positivity_bergman,
    positivity_flow, HeatResidual, PshCheck,
};
pub use jets::{c_function, deligne_curvature, diagnostics, kodaira_spencer_a, wp_form, FamilyDiagnostics, Jets, WpComparison};

use num_complex::Complex64;
use thiserror::Error;

use crate::flow::FlowError;
use crate::functionals::{FunctionalError, MeasureFamily};
use crate::geometry::{EllipticFamily, GeometryError, ModelGeometry, Weight};
use crate::quantization::QuantError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("expected an elliptic family geometry")]
    NotAFamily,
    #[error("the base lattice needs at least a 5×5 stencil (half-width ≥ 2), got half-width {0}")]
    TooFewNodes(usize),
    #[error("expected {expected} samples, got {got}")]
    WrongLength { got: usize, expected: usize },
    #[error("non-finite sample in fiber {0}")]
    NonFinite(usize),
    #[error("fiber over s = {s} degenerates: min φ_zz̄ = {min:e}")]
    FiberDegenerate { s: Complex64, min: f64 },
    #[error("snapshots belong to different families")]
    SnapshotMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Which relative flow or iteration drives the fibers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilySetting {
    /// Normalized flat measure on each fiber.
    CalabiYau,
    /// `μ_φ = e^{u} dx dy` (optionally normalized), the reference-twisted `+K` analog.
    Twisted { normalized: bool },
}

impl FamilySetting {
    pub fn measure(&self, fiber: &ModelGeometry) -> Result<MeasureFamily, FamilyError> {
        Ok(match self {
            FamilySetting::CalabiYau => MeasureFamily::flat(fiber),
            FamilySetting::Twisted { normalized } => {
                MeasureFamily::twisted(fiber, vec![1.0; fiber.len()], *normalized)?
            }
        })
    }
}

/// Fiber samples of `u` over every lattice point of the base.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyWeight {
    geom: ModelGeometry,
    fibers: Vec<Vec<f64>>,
}

impl FamilyWeight {
    /// `fibers[b * side + a]` holds `u` over `s = h(a − M) + i h(b − M)`.
    pub fn new(geom: ModelGeometry, fibers: Vec<Vec<f64>>) -> Result<Self, FamilyError> {
        let fam = match &geom {
            ModelGeometry::EllipticFamily(f) => f,
            _ => return Err(FamilyError::NotAFamily),
        };
        if fam.half_width < 2 {
            return Err(FamilyError::TooFewNodes(fam.half_width));
        }
        let side = 2 * fam.half_width + 1;
        if fibers.len() != side * side {
            return Err(FamilyError::WrongLength { got: fibers.len(), expected: side * side });
        }
        let n = fam.grid.len();
        for (i, f) in fibers.iter().enumerate() {
            if f.len() != n {
                return Err(FamilyError::WrongLength { got: f.len(), expected: n });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(FamilyError::NonFinite(i));
            }
        }
        Ok(FamilyWeight { geom, fibers })
    }

    pub fn from_fn(geom: ModelGeometry, f: impl Fn(Complex64, f64, f64) -> f64) -> Result<Self, FamilyError> {
        let ModelGeometry::EllipticFamily(fam) = &geom else {
            return Err(FamilyError::NotAFamily);
        };
        let side = 2 * fam.half_width + 1;
        let fibers = (0..side * side)
            .map(|n| {
                let s = node_s(fam, n);
                fam.grid.sample(|x, y| f(s, x, y))
            })
            .collect();
        FamilyWeight::new(geom, fibers)
    }

    /// The fiberwise-flat weight `φ₀`.
    pub fn flat(geom: ModelGeometry) -> Result<Self, FamilyError> {
        FamilyWeight::from_fn(geom, |_, _, _| 0.0)
    }

    /// Fiberwise-flat weight shifted by `−(1/d) log(2 Im τ(s))`, the logarithm of the Hodge norm
    /// `∫ i dz ∧ dz̄`; its Deligne curvature is the Weil–Petersson form.
    pub fn hodge_normalized(geom: ModelGeometry) -> Result<Self, FamilyError> {
        let ModelGeometry::EllipticFamily(fam) = &geom else {
            return Err(FamilyError::NotAFamily);
        };
        let (tau, d) = (fam.tau.clone(), fam.degree as f64);
        FamilyWeight::from_fn(geom, move |s, _, _| -(2.0 * tau.eval(s).im).ln() / d)
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geom
    }

    pub fn family(&self) -> &EllipticFamily {
        match &self.geom {
            ModelGeometry::EllipticFamily(f) => f,
            _ => unreachable!("checked in the constructor"),
        }
    }

    pub fn fibers(&self) -> &[Vec<f64>] {
        &self.fibers
    }

    pub fn side(&self) -> usize {
        2 * self.family().half_width + 1
    }

    pub fn node_s(&self, n: usize) -> Complex64 {
        node_s(self.family(), n)
    }

    /// Index of the base point `s = 0`.
    pub fn center(&self) -> usize {
        let m = self.family().half_width;
        m * self.side() + m
    }

    /// Lattice points with all eight neighbours present.
    pub fn interior(&self) -> Vec<usize> {
        let side = self.side();
        (1..side - 1).flat_map(|b| (1..side - 1).map(move |a| b * side + a)).collect()
    }

    pub fn fiber_geometry(&self, n: usize) -> Result<ModelGeometry, FamilyError> {
        Ok(self.family().fiber(self.node_s(n))?)
    }

    pub fn fiber_weight(&self, n: usize) -> Result<Weight, FamilyError> {
        Ok(Weight::new(self.fiber_geometry(n)?, self.fibers[n].clone())?)
    }

    pub fn with_fibers(&self, fibers: Vec<Vec<f64>>) -> Result<Self, FamilyError> {
        FamilyWeight::new(self.geom.clone(), fibers)
    }

    /// Add the pull-back of a base function.
    pub fn add_base(&self, f: impl Fn(Complex64) -> f64) -> Self {
        let fibers = self
            .fibers
            .iter()
            .enumerate()
            .map(|(n, u)| {
                let c = f(self.node_s(n));
                u.iter().map(|v| v + c).collect()
            })
            .collect();
        FamilyWeight { geom: self.geom.clone(), fibers }
    }

    /// Add `κ|s|²` so that the minimum of `c` over the diagnosed nodes becomes `target`.
    ///
    /// `c` shifts by exactly `κ`, so `target = 0` yields a semi-positive weight touching zero.
    pub fn with_min_curvature(&self, target: f64) -> Result<Self, FamilyError> {
        let min = c_function(self)?.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v));
        let kappa = target - min;
        Ok(self.add_base(|s| kappa * s.norm_sqr()))
    }
}

fn node_s(fam: &EllipticFamily, n: usize) -> Complex64 {
    let side = 2 * fam.half_width + 1;
    let m = fam.half_width as isize;
    fam.s_node((n % side) as isize - m, (n / side) as isize - m)
}
