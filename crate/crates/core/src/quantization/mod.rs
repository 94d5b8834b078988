//! Quantization at level `k`: the maps `Hilb` and `FS`, Bergman functions,
//! the Bergman iteration and its functionals.

mod assembly;
mod asymptotics;
mod iteration;

pub use asymptotics::{bouche_tian_errors, bouche_tian_slope, double_scaling, BoucheTian, DoubleScalingRow};
pub use iteration::{
    constant_dynamics_error, contraction_bound, iterate, solve_balanced, BalancedResult, IterationOptions,
    IterationRecord, IterationTrace, BALANCED_TOL, CONFIRM_WINDOW,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::{i_functional, i_reference, mu_of, FunctionalError, MeasureFamily};
use crate::geometry::{Density, GeometryDescriptor, GeometryError, ModelGeometry, SectionBasis, SectionError, Weight};
use assembly::Sections;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("Gram matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("Hermitian form on the sphere must be diagonal to define a circle-invariant weight")]
    NotInvariant,
    #[error("form belongs to a different basis")]
    BasisMismatch,
    #[error("Bergman iteration did not settle within {0} steps")]
    NotBalanced(usize),
    #[error("reference flow failed: {0}")]
    Flow(String),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Section(#[from] SectionError),
}

/// A positive Hermitian form on the section space, in the fixed basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianForm {
    k: usize,
    geometry: ModelGeometry,
    matrix: DMatrix<Complex64>,
}

impl HermitianForm {
    pub fn new(k: usize, geometry: ModelGeometry, matrix: DMatrix<Complex64>) -> Result<Self, QuantError> {
        let h = HermitianForm { k, geometry, matrix };
        h.cholesky()?;
        Ok(h)
    }

    pub fn level(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geometry
    }

    pub fn scaled(&self, factor: f64) -> Self {
        HermitianForm { k: self.k, geometry: self.geometry.clone(), matrix: &self.matrix * Complex64::new(factor, 0.0) }
    }

    /// Largest `|H − H†|` entry relative to the largest entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.matrix.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let d = &self.matrix - self.matrix.adjoint();
        d.iter().fold(0.0f64, |m, c| m.max(c.norm())) / scale
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().collect()
    }

    pub fn condition_number(&self) -> f64 {
        let e = self.eigenvalues();
        let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Lower-triangular `L` with `H = L L†`.
    fn cholesky(&self) -> Result<DMatrix<Complex64>, QuantError> {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        // The complex factorization takes square roots of negative pivots instead of failing.
        let l = h.clone().cholesky().map(|c| c.l());
        match l {
            Some(l) if (0..l.nrows()).all(|i| l[(i, i)].re > 0.0 && l[(i, i)].im.abs() <= 1e-12 * l[(i, i)].re) => Ok(l),
            _ => {
                let min_eigenvalue = h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
                Err(QuantError::NotPositiveDefinite { min_eigenvalue })
            }
        }
    }

    pub fn log_det(&self) -> Result<f64, QuantError> {
        let l = self.cholesky()?;
        Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
    }

    /// Change of basis `U† H U`.
    pub fn conjugated(&self, u: &DMatrix<Complex64>) -> Self {
        HermitianForm { k: self.k, geometry: self.geometry.clone(), matrix: u.adjoint() * &self.matrix * u }
    }

    pub fn basis_hash(&self) -> u64 {
        basis_hash(&self.geometry, self.k)
    }

    pub fn to_record(&self) -> HermitianRecord {
        HermitianRecord {
            level: self.k,
            dim: self.dim(),
            basis_hash: self.basis_hash(),
            geometry: GeometryDescriptor::of(&self.geometry),
            entries: (0..self.dim())
                .flat_map(|i| (0..self.dim()).map(move |j| (i, j)))
                .map(|(i, j)| [self.matrix[(i, j)].re, self.matrix[(i, j)].im])
                .collect(),
        }
    }

    pub fn from_record(rec: &HermitianRecord) -> Result<Self, QuantError> {
        let geometry = rec.geometry.build()?;
        if basis_hash(&geometry, rec.level) != rec.basis_hash || rec.entries.len() != rec.dim * rec.dim {
            return Err(QuantError::BasisMismatch);
        }
        let m = DMatrix::from_row_iterator(rec.dim, rec.dim, rec.entries.iter().map(|c| Complex64::new(c[0], c[1])));
        HermitianForm::new(rec.level, geometry, m)
    }
}

/// Row-major serialized form with the hash of the basis it refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermitianRecord {
    pub level: usize,
    pub dim: usize,
    pub basis_hash: u64,
    pub geometry: GeometryDescriptor,
    pub entries: Vec<[f64; 2]>,
}

fn basis_hash(geom: &ModelGeometry, k: usize) -> u64 {
    let desc = serde_json::to_string(&GeometryDescriptor::of(geom)).expect("descriptor serializes");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in desc.bytes().chain(k.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Fiber resolution used for quadrature at level `k`: at least `8kd` samples per period, capped at 512.
pub fn quadrature_resolution(geom: &ModelGeometry, k: usize) -> usize {
    match geom {
        ModelGeometry::P1Symmetric { grid, .. } => grid.len(),
        g => {
            let want = (8 * k * g.degree()).min(512);
            let want = want + want % 2;
            g.resolution().max(want)
        }
    }
}

/// Everything needed to apply `Hilb` and `FS` repeatedly at one level.
pub struct Quantizer {
    k: usize,
    geom: ModelGeometry,
    family: MeasureFamily,
    quad: ModelGeometry,
    quad_family: MeasureFamily,
    /// Normalized counterpart, used for the scale-invariant monotone quantity.
    quad_family_norm: MeasureFamily,
    quad_sections: Sections,
    out_sections: Option<Sections>,
    log_det_ref: f64,
    /// `log det` of the reference form `Hilb(φ₀)` built with the flat measure.
    log_det_flat: f64,
    i_ref_fs0: f64,
}

impl Quantizer {
    pub fn new(geom: &ModelGeometry, family: &MeasureFamily, k: usize) -> Result<Self, QuantError> {
        let nq = quadrature_resolution(geom, k);
        let quad = if nq == geom.resolution() { geom.clone() } else { geom.with_resolution(nq)? };
        let quad_family = if nq == geom.resolution() { family.clone() } else { family.resampled(geom, &quad) };
        let quad_sections = Sections::new(SectionBasis::new(&quad, k)?);
        let out_sections =
            if nq == geom.resolution() { None } else { Some(Sections::new(SectionBasis::new(geom, k)?)) };
        let quad_family_norm = quad_family.as_normalized();
        let mut q = Quantizer {
            k,
            geom: geom.clone(),
            family: family.clone(),
            quad,
            quad_family,
            quad_family_norm,
            quad_sections,
            out_sections,
            log_det_ref: 0.0,
            log_det_flat: 0.0,
            i_ref_fs0: 0.0,
        };
        let phi0 = Weight::new(geom.clone(), vec![0.0; geom.len()])?;
        q.log_det_ref = q.hilb(&phi0)?.log_det()?;
        let h_flat = q.hilb_with(&phi0, &MeasureFamily::flat(&q.quad))?;
        q.log_det_flat = h_flat.log_det()?;
        q.i_ref_fs0 = i_reference(&q.fs(&h_flat)?);
        Ok(q)
    }

    pub fn level(&self) -> usize {
        self.k
    }

    /// `N_k`.
    pub fn dim(&self) -> usize {
        self.quad_sections.len()
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geom
    }

    pub fn family(&self) -> &MeasureFamily {
        &self.family
    }

    pub fn quadrature_geometry(&self) -> &ModelGeometry {
        &self.quad
    }

    fn on_quad(&self, w: &Weight) -> Result<Weight, QuantError> {
        if self.quad == self.geom {
            Ok(w.clone())
        } else {
            Ok(Weight::new(self.quad.clone(), self.geom.resample(w.u(), &self.quad))?)
        }
    }

    /// `Hilb(φ)_{ij} = ∫ s_i s̄_j e^{−kφ} dμ_φ`.
    pub fn hilb(&self, w: &Weight) -> Result<HermitianForm, QuantError> {
        self.hilb_with(w, &self.quad_family)
    }

    /// `Hilb` for the normalized version of the family.
    pub fn hilb_normalized(&self, w: &Weight) -> Result<HermitianForm, QuantError> {
        self.hilb_with(w, &self.quad_family_norm)
    }

    fn hilb_with(&self, w: &Weight, fam: &MeasureFamily) -> Result<HermitianForm, QuantError> {
        let wq = self.on_quad(w)?;
        let mu = mu_of(&wq, fam)?;
        let k = self.k as f64;
        let q: Vec<f64> = wq
            .u()
            .iter()
            .zip(&mu.values)
            .enumerate()
            .map(|(i, (u, m))| (-k * u).exp() * m * self.quad.quad_weight(i))
            .collect();
        HermitianForm::new(self.k, self.geom.clone(), self.quad_sections.gram(&q))
    }

    /// `FS(H) = φ₀ + (1/k) log((1/N) Σ |g_a|²)` for an `H`-orthonormal basis `g`.
    pub fn fs(&self, h: &HermitianForm) -> Result<Weight, QuantError> {
        if h.dim() != self.dim() || h.level() != self.k {
            return Err(QuantError::BasisMismatch);
        }
        let sections = self.out_sections.as_ref().unwrap_or(&self.quad_sections);
        let linv = self.inverse_factor(h)?;
        let k = self.k as f64;
        let u = sections.log_bergman_sum(&linv).into_iter().map(|v| v / k).collect();
        Ok(Weight::new(self.geom.clone(), u)?)
    }

    fn inverse_factor(&self, h: &HermitianForm) -> Result<DMatrix<Complex64>, QuantError> {
        if matches!(self.geom, ModelGeometry::P1Symmetric { .. }) {
            let m = h.matrix();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if i != j && m[(i, j)].norm() > 1e-12 * (m[(i, i)].re * m[(j, j)].re).sqrt() {
                        return Err(QuantError::NotInvariant);
                    }
                }
            }
        }
        let l = h.cholesky()?;
        let n = l.nrows();
        Ok(l.solve_lower_triangular(&DMatrix::identity(n, n)).expect("Cholesky factor has a positive diagonal"))
    }

    /// One Bergman step `φ ↦ FS(Hilb(φ)) = φ + (1/k) log ρ(φ)`.
    pub fn bergman_step(&self, w: &Weight) -> Result<Weight, QuantError> {
        self.fs(&self.hilb(w)?)
    }

    /// Bergman function `ρ(φ) = (1/N) Σ |g_a|² e^{−kφ}` on the fiber grid.
    pub fn bergman_function(&self, w: &Weight) -> Result<Density, QuantError> {
        let next = self.bergman_step(w)?;
        let k = self.k as f64;
        let vals = next.u().iter().zip(w.u()).map(|(a, b)| (k * (a - b)).exp()).collect();
        Ok(Density::new(&self.geom, vals))
    }

    /// `∫ ρ μ_φ` by the quadrature rule, which should be exactly one.
    pub fn bergman_mass(&self, w: &Weight) -> Result<f64, QuantError> {
        let wq = self.on_quad(w)?;
        let h = self.hilb(w)?;
        let linv = self.inverse_factor(&h)?;
        let lsum = self.quad_sections.log_bergman_sum(&linv);
        let mu = mu_of(&wq, &self.quad_family)?;
        let k = self.k as f64;
        let rho: Vec<f64> = lsum.iter().zip(wq.u()).map(|(l, u)| (l - k * u).exp()).collect();
        Ok(self.quad.integrate_product(&rho, &mu.values))
    }

    /// `log det H − log det Hilb(φ₀)`.
    pub fn log_det_rel(&self, h: &HermitianForm) -> Result<f64, QuantError> {
        Ok(h.log_det()? - self.log_det_ref)
    }

    /// `L(φ) = −(1/(N k)) log det_rel Hilb(φ)`.
    pub fn l_functional(&self, w: &Weight) -> Result<f64, QuantError> {
        self.l_of_form(&self.hilb(w)?)
    }

    /// `−(1/(N k)) log det_rel H`.
    pub fn l_of_form(&self, h: &HermitianForm) -> Result<f64, QuantError> {
        Ok(-self.log_det_rel(h)? / (self.dim() as f64 * self.k as f64))
    }

    /// `F(H) = −(1/(N k)) log det_rel H − I_μ(FS H)`.
    pub fn f_functional(&self, h: &HermitianForm) -> Result<f64, QuantError> {
        let fs = self.fs(h)?;
        Ok(self.l_of_form(h)? - i_functional(&fs, &self.family)?)
    }

    /// `J(H) = I_{μ₀}(FS H) + (1/(k N)) log(det H / det H₀) − I_{μ₀}(FS H₀)` with `H₀ = Hilb_{μ₀}(φ₀)`
    /// for the flat measure `μ₀`; `H₀` is balanced, so `J ≥ 0` with equality there.
    pub fn j_functional(&self, h: &HermitianForm) -> Result<f64, QuantError> {
        self.j_given_fs(h, &self.fs(h)?)
    }

    pub(crate) fn j_given_fs(&self, h: &HermitianForm, fs: &Weight) -> Result<f64, QuantError> {
        let n = self.dim() as f64 * self.k as f64;
        Ok(i_reference(fs) + (h.log_det()? - self.log_det_flat) / n - self.i_ref_fs0)
    }
}

/// `L^{(k)}`, `F^{(k)}` and `J^{(k)}` at a form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizedFunctionals {
    pub l: f64,
    pub f: f64,
    pub j: f64,
}

/// Quantized functionals at `Hilb(φ)`; `l` is `L^{(k)}(φ)`.
pub fn quantized_functionals(phi: &Weight, fam: &MeasureFamily, k: usize) -> Result<QuantizedFunctionals, QuantError> {
    let q = Quantizer::new(phi.geometry(), fam, k)?;
    let h = q.hilb(phi)?;
    Ok(QuantizedFunctionals { l: q.l_functional(phi)?, f: q.f_functional(&h)?, j: q.j_functional(&h)? })
}

pub fn hilb(phi: &Weight, fam: &MeasureFamily, k: usize) -> Result<HermitianForm, QuantError> {
    Quantizer::new(phi.geometry(), fam, k)?.hilb(phi)
}

/// `FS` of a form, on the fiber grid the form was built for.
pub fn fs(h: &HermitianForm) -> Result<Weight, QuantError> {
    let fam = MeasureFamily::flat(h.geometry());
    Quantizer::new(h.geometry(), &fam, h.level())?.fs(h)
}

pub fn bergman_function(phi: &Weight, fam: &MeasureFamily, k: usize) -> Result<Density, QuantError> {
    Quantizer::new(phi.geometry(), fam, k)?.bergman_function(phi)
}

pub fn bergman_step(phi: &Weight, fam: &MeasureFamily, k: usize) -> Result<Weight, QuantError> {
    Quantizer::new(phi.geometry(), fam, k)?.bergman_step(phi)
}

#[cfg(test)]
mod tests;
