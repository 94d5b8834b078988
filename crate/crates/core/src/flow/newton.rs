//! Damped Newton iteration for `MA(φ) = V μ_φ`.
//!
//! The unknown is always solved in its non-normalized form: for the canonical
//! families the solution of `MA/V = μ′_±(φ)` automatically satisfies `I_± = 0`,
//! which is the normalization of the normalized variants.

use nalgebra::{DMatrix, DVector};

use super::{residual, FlowError};
use crate::functionals::{i_functional, MeasureFamily};
use crate::geometry::{ma_measure, ModelGeometry, Weight};

const MAX_ITER: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointResult {
    pub weight: Weight,
    pub residual: f64,
    pub iterations: usize,
}

/// Residual of the non-normalized equation.
fn raw_residual(w: &Weight, fam: &MeasureFamily) -> Result<Vec<f64>, FlowError> {
    let ma = ma_measure(w);
    let min = ma.min();
    if !(min > 0.0) {
        return Err(FlowError::PositivityLoss { margin: min });
    }
    let v = w.geometry().volume();
    let base = fam.base_density(w.geometry());
    let sigma = fam.sign();
    Ok(ma
        .values
        .iter()
        .zip(&base)
        .zip(w.u())
        .map(|((a, b), u)| (a / v).ln() - (b.ln() + sigma * u))
        .collect())
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton direction for the current iterate.
fn direction(w: &Weight, fam: &MeasureFamily, g: &[f64]) -> Vec<f64> {
    let geom = w.geometry();
    let ma = ma_measure(w).values;
    match fam {
        MeasureFamily::FixedMu(_) => {
            // dd^c δ = MA (c − G), with c making the right side mean zero
            let c = geom.integrate_product(g, &ma) / geom.integrate(&ma);
            let b: Vec<f64> = ma.iter().zip(g).map(|(m, g)| m * (c - g)).collect();
            geom.solve_shifted(&b, 0.0, -1.0)
        }
        MeasureFamily::CanonicalPlusTwisted { .. } => {
            let b: Vec<f64> = ma.iter().zip(g).map(|(m, g)| m * g).collect();
            pcg_shifted(geom, &ma, &b)
        }
        MeasureFamily::AntiCanonical { .. } => {
            let ModelGeometry::P1Symmetric { grid, .. } = geom else { unreachable!() };
            // (dd^c + MA) δ = −MA G; the odd projection lifts the l = 1 kernel,
            // which the symmetric iterates never excite
            let n = grid.len();
            let mut a = grid.operator_matrix(|l| {
                let odd = if l % 2 == 1 { 1.0 } else { 0.0 };
                crate::field_core::LineGrid::ddc_eigen(l) + odd
            });
            for i in 0..n {
                a[i * n + i] += ma[i];
            }
            let a = DMatrix::from_row_slice(n, n, &a);
            let b = DVector::from_iterator(n, ma.iter().zip(g).map(|(m, g)| -m * g));
            let x = a.lu().solve(&b).expect("regularized Jacobian is invertible");
            x.iter().copied().collect()
        }
    }
}

/// Preconditioned conjugate gradients for `(a − dd^c) x = b` with a positive
/// coefficient field `a`, preconditioned by `(min a − dd^c)^{-1}`.
pub(crate) fn pcg_shifted(geom: &ModelGeometry, ma: &[f64], b: &[f64]) -> Vec<f64> {
    let m = ma.iter().cloned().fold(f64::INFINITY, f64::min);
    let apply = |x: &[f64]| -> Vec<f64> {
        let l = geom.ddc(x);
        x.iter().zip(ma).zip(&l).map(|((x, a), l)| a * x - l).collect()
    };
    let dot = |a: &[f64], b: &[f64]| geom.integrate_product(a, b);
    let precond = |r: &[f64]| geom.solve_shifted(r, m, 1.0);
    let mut x = precond(b);
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let bnorm = dot(b, b).sqrt().max(1e-300);
    for _ in 0..200 {
        if dot(&r, &r).sqrt() <= 1e-15 * bnorm {
            break;
        }
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Damped Newton on `G(u) = log(MA/(V μ))` until `sup|G| ≤ tol`.
///
/// In the fixed-measure setting the output is normalized by `∫u μ = 0`.
pub fn solve_fixed_point(fam: &MeasureFamily, init: &Weight, tol: f64) -> Result<FixedPointResult, FlowError> {
    let geom = init.geometry().clone();
    let sym = matches!(geom, ModelGeometry::P1Symmetric { .. });
    let mut w = init.clone();
    if sym {
        let mut u = w.u().to_vec();
        geom.line_grid().unwrap().symmetrize(&mut u);
        w = w.with_u(u)?;
    }
    let mut g = raw_residual(&w, fam)?;
    let mut r = sup(&g);
    let mut iterations = 0;
    while r > tol {
        if iterations == MAX_ITER {
            return Err(FlowError::NonConvergence { iterations, residual: r });
        }
        let delta = direction(&w, fam, &g);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-4 {
            let mut u: Vec<f64> = w.u().iter().zip(&delta).map(|(u, d)| u + alpha * d).collect();
            if sym {
                geom.line_grid().unwrap().symmetrize(&mut u);
            }
            let cand = w.with_u(u)?;
            if let Ok(gc) = raw_residual(&cand, fam) {
                let rc = sup(&gc);
                if rc < r || (alpha == 1.0 && rc < 10.0 * tol) {
                    accepted = Some((cand, gc, rc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, gc, rc)) => {
                w = cand;
                g = gc;
                r = rc;
            }
            None => return Err(FlowError::NonConvergence { iterations, residual: r }),
        }
    }
    if let MeasureFamily::FixedMu(_) = fam {
        let shift = i_functional(&w, fam)?;
        w = w.shifted(-shift);
    }
    let residual = residual(&w, fam)?;
    Ok(FixedPointResult { weight: w, residual, iterations })
}
