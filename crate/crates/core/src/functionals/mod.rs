//! Measure families `φ ↦ μ_φ` and the energy functionals built from them.
//!
//! With the Monge–Ampère mass `V = d` carried explicitly:
//! `E(φ) = d∫u + ½∫u dd^c u` (so `dE = MA`, `E(φ₀) = 0`, `E(φ + c) = E(φ) + cd`),
//! `F_μ = E/V − I_μ`, and `J = I_{μ₀} − E/V` with `μ₀ = MA(φ₀)/V`.

use thiserror::Error;

use crate::geometry::{ma_measure, Density, ModelGeometry, Weight};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("measure density has {got} samples, fiber has {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error("fixed measure must be strictly positive (min {0:e})")]
    NonPositive(f64),
    #[error("the anticanonical family lives on the degree-2 sphere")]
    AntiCanonicalGeometry,
    #[error("exponential of the weight overflowed")]
    Overflow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureFamily {
    /// A `φ`-independent probability measure.
    FixedMu(Density),
    /// `e^{φ − φ₀} μ₀`, the canonically polarized analog on an elliptic fiber.
    CanonicalPlusTwisted { normalized: bool, mu0: Density },
    /// `e^{−φ}` on the sphere with `L = −K`, i.e. `e^{−u} dp`.
    AntiCanonical { normalized: bool },
}

impl MeasureFamily {
    /// Fixed measure proportional to `density`, rescaled to unit mass.
    pub fn fixed(geom: &ModelGeometry, density: Vec<f64>) -> Result<Self, FunctionalError> {
        check_density(geom, &density)?;
        Ok(MeasureFamily::FixedMu(Density::new(geom, density).normalized()))
    }

    /// The reference-area probability measure `MA(φ₀)/V`.
    pub fn flat(geom: &ModelGeometry) -> Self {
        MeasureFamily::FixedMu(Density::new(geom, vec![1.0; geom.len()]))
    }

    pub fn twisted(geom: &ModelGeometry, mu0: Vec<f64>, normalized: bool) -> Result<Self, FunctionalError> {
        check_density(geom, &mu0)?;
        Ok(MeasureFamily::CanonicalPlusTwisted { normalized, mu0: Density::new(geom, mu0).normalized() })
    }

    pub fn anticanonical(geom: &ModelGeometry, normalized: bool) -> Result<Self, FunctionalError> {
        match geom {
            ModelGeometry::P1Symmetric { degree: 2, .. } => Ok(MeasureFamily::AntiCanonical { normalized }),
            _ => Err(FunctionalError::AntiCanonicalGeometry),
        }
    }

    pub fn is_normalized(&self) -> bool {
        match self {
            MeasureFamily::FixedMu(_) => true,
            MeasureFamily::CanonicalPlusTwisted { normalized, .. } | MeasureFamily::AntiCanonical { normalized } => {
                *normalized
            }
        }
    }

    /// `+1` for the twisted family, `−1` for the anticanonical one, `0` for a fixed measure.
    pub fn sign(&self) -> f64 {
        match self {
            MeasureFamily::FixedMu(_) => 0.0,
            MeasureFamily::CanonicalPlusTwisted { .. } => 1.0,
            MeasureFamily::AntiCanonical { .. } => -1.0,
        }
    }

    /// The same family with the normalization switched on.
    pub fn as_normalized(&self) -> Self {
        match self {
            MeasureFamily::FixedMu(d) => MeasureFamily::FixedMu(d.clone()),
            MeasureFamily::CanonicalPlusTwisted { mu0, .. } => {
                MeasureFamily::CanonicalPlusTwisted { normalized: true, mu0: mu0.clone() }
            }
            MeasureFamily::AntiCanonical { .. } => MeasureFamily::AntiCanonical { normalized: true },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureFamily::FixedMu(_) => "fixed",
            MeasureFamily::CanonicalPlusTwisted { normalized: true, .. } => "twisted-normalized",
            MeasureFamily::CanonicalPlusTwisted { normalized: false, .. } => "twisted",
            MeasureFamily::AntiCanonical { normalized: true } => "anticanonical-normalized",
            MeasureFamily::AntiCanonical { normalized: false } => "anticanonical",
        }
    }

    /// Base density `μ₀` of the family (`dp` for the anticanonical family).
    pub fn base_density(&self, geom: &ModelGeometry) -> Vec<f64> {
        match self {
            MeasureFamily::FixedMu(d) => d.values.clone(),
            MeasureFamily::CanonicalPlusTwisted { mu0, .. } => mu0.values.clone(),
            MeasureFamily::AntiCanonical { .. } => vec![1.0; geom.len()],
        }
    }

    /// Move sampled data to another resolution of the same fiber.
    pub fn resampled(&self, from: &ModelGeometry, to: &ModelGeometry) -> Self {
        let move_density = |d: &Density| Density::new(to, from.resample(&d.values, to)).normalized();
        match self {
            MeasureFamily::FixedMu(d) => MeasureFamily::FixedMu(move_density(d)),
            MeasureFamily::CanonicalPlusTwisted { normalized, mu0 } => {
                MeasureFamily::CanonicalPlusTwisted { normalized: *normalized, mu0: move_density(mu0) }
            }
            a => a.clone(),
        }
    }
}

fn check_density(geom: &ModelGeometry, density: &[f64]) -> Result<(), FunctionalError> {
    if density.len() != geom.len() {
        return Err(FunctionalError::WrongLength { got: density.len(), expected: geom.len() });
    }
    let min = density.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(FunctionalError::NonPositive(min));
    }
    Ok(())
}

fn check_len(phi: &Weight, fam: &MeasureFamily) -> Result<(), FunctionalError> {
    let n = phi.geometry().len();
    let got = match fam {
        MeasureFamily::FixedMu(d) => d.values.len(),
        MeasureFamily::CanonicalPlusTwisted { mu0, .. } => mu0.values.len(),
        MeasureFamily::AntiCanonical { .. } => {
            if !matches!(phi.geometry(), ModelGeometry::P1Symmetric { degree: 2, .. }) {
                return Err(FunctionalError::AntiCanonicalGeometry);
            }
            n
        }
    };
    if got != n {
        return Err(FunctionalError::WrongLength { got, expected: n });
    }
    Ok(())
}

/// `log ∫ e^{σu} ρ` evaluated with the maximum of `σu` factored out.
fn log_integral_exp(geom: &ModelGeometry, u: &[f64], sigma: f64, rho: &[f64]) -> f64 {
    let shift = u.iter().map(|v| sigma * v).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().zip(rho).map(|(v, r)| (sigma * v - shift).exp() * r).collect();
    shift + geom.integrate(&e).ln()
}

/// The measure `μ_φ` as a density against the reference area.
pub fn mu_of(phi: &Weight, fam: &MeasureFamily) -> Result<Density, FunctionalError> {
    check_len(phi, fam)?;
    let geom = phi.geometry();
    let u = phi.u();
    let (sigma, base) = match fam {
        MeasureFamily::FixedMu(d) => return Ok(d.clone()),
        MeasureFamily::CanonicalPlusTwisted { mu0, .. } => (1.0, mu0.values.clone()),
        MeasureFamily::AntiCanonical { .. } => (-1.0, vec![1.0; u.len()]),
    };
    if fam.is_normalized() {
        let shift = u.iter().map(|v| sigma * v).fold(f64::NEG_INFINITY, f64::max);
        let vals = u.iter().zip(&base).map(|(v, b)| (sigma * v - shift).exp() * b).collect();
        Ok(Density::new(geom, vals).normalized())
    } else {
        let vals: Vec<f64> = u.iter().zip(&base).map(|(v, b)| (sigma * v).exp() * b).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FunctionalError::Overflow);
        }
        Ok(Density::new(geom, vals))
    }
}

/// Aubin–Mabuchi energy `E(φ) = d∫u + ½∫u dd^c u`.
pub fn energy_e(phi: &Weight) -> f64 {
    let geom = phi.geometry();
    let u = phi.u();
    let lu = geom.ddc(u);
    geom.volume() * geom.integrate(u) + 0.5 * geom.integrate_product(u, &lu)
}

/// Primitive `I_μ` of the family, vanishing at `φ₀` for the fixed and normalized families.
pub fn i_functional(phi: &Weight, fam: &MeasureFamily) -> Result<f64, FunctionalError> {
    check_len(phi, fam)?;
    let geom = phi.geometry();
    let u = phi.u();
    let v = match fam {
        MeasureFamily::FixedMu(d) => geom.integrate_product(u, &d.values),
        MeasureFamily::CanonicalPlusTwisted { normalized: true, mu0 } => log_integral_exp(geom, u, 1.0, &mu0.values),
        MeasureFamily::CanonicalPlusTwisted { normalized: false, mu0 } => {
            let e: Vec<f64> = u.iter().map(|v| v.exp()).collect();
            geom.integrate_product(&e, &mu0.values)
        }
        MeasureFamily::AntiCanonical { normalized: true } => {
            -log_integral_exp(geom, u, -1.0, &vec![1.0; u.len()])
        }
        MeasureFamily::AntiCanonical { normalized: false } => {
            let e: Vec<f64> = u.iter().map(|v| (-v).exp()).collect();
            -geom.integrate(&e)
        }
    };
    if !v.is_finite() {
        return Err(FunctionalError::Overflow);
    }
    Ok(v)
}

/// `I` of the reference probability measure `MA(φ₀)/V`, i.e. `∫u`.
pub fn i_reference(phi: &Weight) -> f64 {
    phi.geometry().integrate(phi.u())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FJ {
    pub f: f64,
    pub j: f64,
}

/// `F_μ = E/V − I_μ` and `J = I_{μ₀} − E/V`.
pub fn f_j_functionals(phi: &Weight, fam: &MeasureFamily) -> Result<FJ, FunctionalError> {
    let v = phi.geometry().volume();
    let e = energy_e(phi) / v;
    Ok(FJ { f: e - i_functional(phi, fam)?, j: i_reference(phi) - e })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FunctionalName {
    E,
    IMu,
    IMu0,
    IPlus,
    IMinus,
    FMu,
    J,
    Lk,
    Fk,
    Jk,
}

impl FunctionalName {
    pub fn as_str(self) -> &'static str {
        match self {
            FunctionalName::E => "E",
            FunctionalName::IMu => "I_mu",
            FunctionalName::IMu0 => "I_mu0",
            FunctionalName::IPlus => "I_plus",
            FunctionalName::IMinus => "I_minus",
            FunctionalName::FMu => "F_mu",
            FunctionalName::J => "J",
            FunctionalName::Lk => "L_k",
            FunctionalName::Fk => "F_k",
            FunctionalName::Jk => "J_k",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalValue {
    pub name: FunctionalName,
    pub value: f64,
    pub snapshot: u64,
}

/// Deterministic FNV-1a fingerprint of a weight's samples.
pub fn snapshot_id(phi: &Weight) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in phi.u() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Evaluate one of the continuous functionals at `phi`.
pub fn evaluate(phi: &Weight, fam: &MeasureFamily, name: FunctionalName) -> Result<FunctionalValue, FunctionalError> {
    let value = match name {
        FunctionalName::E => energy_e(phi),
        FunctionalName::IMu | FunctionalName::IPlus | FunctionalName::IMinus => i_functional(phi, fam)?,
        FunctionalName::IMu0 => i_reference(phi),
        FunctionalName::FMu => f_j_functionals(phi, fam)?.f,
        FunctionalName::J => f_j_functionals(phi, fam)?.j,
        other => panic!("{} needs a level; use the quantization module", other.as_str()),
    };
    Ok(FunctionalValue { name, value, snapshot: snapshot_id(phi) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    E,
    I,
}

/// Central-difference check of `dE = MA` and `dI_μ = μ_φ` in direction `v`.
///
/// Returns the larger of the two errors `|fd − exact| / max(|exact|, 1)`.
pub fn energy_derivative_check(
    phi: &Weight,
    v: &[f64],
    fam: &MeasureFamily,
    h: f64,
) -> Result<f64, FunctionalError> {
    Ok(derivative_error(phi, v, fam, h, Primitive::E)?.max(derivative_error(phi, v, fam, h, Primitive::I)?))
}

/// Same as [`energy_derivative_check`] for a single primitive.
pub fn derivative_error(
    phi: &Weight,
    v: &[f64],
    fam: &MeasureFamily,
    h: f64,
    which: Primitive,
) -> Result<f64, FunctionalError> {
    let geom = phi.geometry();
    let step = |s: f64| {
        let u: Vec<f64> = phi.u().iter().zip(v).map(|(a, b)| a + s * b).collect();
        phi.with_u(u).expect("finite perturbation")
    };
    let (plus, minus) = (step(h), step(-h));
    let (fd, exact) = match which {
        Primitive::E => {
            ((energy_e(&plus) - energy_e(&minus)) / (2.0 * h), geom.integrate_product(v, &ma_measure(phi).values))
        }
        Primitive::I => (
            (i_functional(&plus, fam)? - i_functional(&minus, fam)?) / (2.0 * h),
            geom.integrate_product(v, &mu_of(phi, fam)?.values),
        ),
    };
    Ok((fd - exact).abs() / exact.abs().max(1.0))
}

#[cfg(test)]
mod tests;
