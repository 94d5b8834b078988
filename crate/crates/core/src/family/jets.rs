//! Total-space derivatives of a family weight in the holomorphic coordinates `(s, z)`.
//!
//! `s`-derivatives at fixed `(x, y)` come from centred differences on the base lattice,
//! fiber derivatives are spectral, and the change of variables `(s, z) ↦ (s, x, y)` is
//! differentiated exactly from the `τ` polynomial.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{FamilyError, FamilyWeight};
use crate::field_core::PeriodicGrid2;
use crate::geometry::{ModelGeometry, TauPolynomial};

/// `τ` and its derivatives at one base point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TauJet {
    pub tau: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
}

impl TauJet {
    pub fn at(p: &TauPolynomial, s: Complex64) -> Self {
        TauJet { tau: p.eval(s), d1: p.derivative(s), d2: p.second_derivative(s) }
    }

    pub fn v(&self) -> f64 {
        self.tau.im
    }

    /// `‖A‖²` of the harmonic Kodaira–Spencer representative, `|τ'|² / (4 Im²τ)`.
    pub fn harmonic_norm2(&self) -> f64 {
        self.d1.norm_sqr() / (4.0 * self.v() * self.v())
    }

    /// Coefficients of `∂_z̄ = x_z̄ ∂_x + y_z̄ ∂_y` on the fiber.
    pub fn dzbar(&self) -> (Complex64, Complex64) {
        let den = Complex64::new(0.0, 2.0 * self.v());
        (self.tau / den, -1.0 / den)
    }

    /// `f_{zz̄}` from the square-coordinate second derivatives.
    pub fn zzbar(&self, fxx: f64, fxy: f64, fyy: f64) -> f64 {
        let v = self.v();
        (self.tau.norm_sqr() * fxx - 2.0 * self.tau.re * fxy + fyy) / (4.0 * v * v)
    }
}

/// Complex Hessian entries of `φ` at every point of one fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct Jets {
    pub phi_zz: Vec<f64>,
    /// `φ_{s z̄}`.
    pub phi_sz: Vec<Complex64>,
    pub phi_ss: Vec<f64>,
}

impl Jets {
    /// `c = φ_{ss̄} − |φ_{sz̄}|² / φ_{zz̄}`.
    pub fn c(&self) -> Vec<f64> {
        (0..self.phi_zz.len()).map(|i| self.phi_ss[i] - self.phi_sz[i].norm_sqr() / self.phi_zz[i]).collect()
    }

    /// Determinant of the 2×2 complex Hessian.
    pub fn hessian_det(&self) -> Vec<f64> {
        (0..self.phi_zz.len()).map(|i| self.phi_ss[i] * self.phi_zz[i] - self.phi_sz[i].norm_sqr()).collect()
    }

    /// Horizontal Laplacian `f_{ss̄} − 2 Re(f_{sz̄} conj φ_{sz̄}) / φ_{zz̄} + |φ_{sz̄}|² f_{zz̄} / φ_{zz̄}²`.
    pub fn horizontal(&self, f: &Jets) -> Vec<f64> {
        (0..self.phi_zz.len())
            .map(|i| {
                let (g, a) = (self.phi_zz[i], self.phi_sz[i]);
                f.phi_ss[i] - 2.0 * (f.phi_sz[i] * a.conj()).re / g + a.norm_sqr() * f.phi_zz[i] / (g * g)
            })
            .collect()
    }
}

struct FiberDerivs {
    ux: Vec<f64>,
    uy: Vec<f64>,
}

fn derivs(grid: &PeriodicGrid2, u: &[f64]) -> FiberDerivs {
    FiberDerivs { ux: grid.spectral_partial(u, 1, 0), uy: grid.spectral_partial(u, 0, 1) }
}

/// Exact complex Hessian of `φ₀ = 2πd (Im z)² / Im τ(s)` at height `y`.
pub(crate) fn reference_jets(t: &TauJet, d: f64, ys: impl Iterator<Item = f64>) -> Jets {
    let v = t.v();
    let (mut zz, mut sz, mut ss) = (vec![], vec![], vec![]);
    for y in ys {
        zz.push(PI * d / v);
        sz.push(-t.d1 * (PI * d * y / v));
        ss.push(PI * d * y * y * t.d1.norm_sqr() / v);
    }
    Jets { phi_zz: zz, phi_sz: sz, phi_ss: ss }
}

/// Jets of `φ₀ + u` at an interior lattice node.
pub(crate) fn node_jets(fw: &FamilyWeight, n: usize, include_reference: bool) -> Result<Jets, FamilyError> {
    let fam = fw.family();
    let grid = &fam.grid;
    let side = fw.side();
    let h = fam.spacing;
    let u = &fw.fibers()[n];
    let nb = |da: isize, db: isize| (n as isize + da + db * side as isize) as usize;
    let fd = |e: isize, f: isize| derivs(grid, &fw.fibers()[nb(e, f)]);
    let (xp, xm, yp, ym) = (fd(1, 0), fd(-1, 0), fd(0, 1), fd(0, -1));
    let own = derivs(grid, u);
    let (uxx, uxy, uyy) = (grid.spectral_partial(u, 2, 0), grid.spectral_partial(u, 1, 1), grid.spectral_partial(u, 0, 2));
    let fib = |da, db| &fw.fibers()[nb(da, db)];
    let (up, um, vp, vm) = (fib(1, 0), fib(-1, 0), fib(0, 1), fib(0, -1));
    let (pp, pm, mp, mm) = (fib(1, 1), fib(1, -1), fib(-1, 1), fib(-1, -1));

    let s = fw.node_s(n);
    let t = TauJet::at(&fam.tau, s);
    let v = t.v();
    // a = Re s, b = Im s; derivatives of v = Im τ and r = Re τ.
    let (va, vb) = (t.d1.im, t.d1.re);
    let (vaa, vab, vbb) = (t.d2.im, t.d2.re, -t.d2.im);
    let (ra, rb) = (t.d1.re, -t.d1.im);
    let (raa, rab, rbb) = (t.d2.re, -t.d2.im, -t.d2.re);
    let w = 1.0 / v;
    let (wa, wb) = (-va / (v * v), -vb / (v * v));
    let waa = -vaa / (v * v) + 2.0 * va * va / (v * v * v);
    let wab = -vab / (v * v) + 2.0 * va * vb / (v * v * v);
    let wbb = -vbb / (v * v) + 2.0 * vb * vb / (v * v * v);
    let rho = t.tau.re * w;
    let (rhoa, rhob) = (ra * w + t.tau.re * wa, rb * w + t.tau.re * wb);
    let rhoaa = raa * w + 2.0 * ra * wa + t.tau.re * waa;
    let rhoab = rab * w + ra * wb + rb * wa + t.tau.re * wab;
    let rhobb = rbb * w + 2.0 * rb * wb + t.tau.re * wbb;

    let nx = grid.nx();
    let d = fam.degree as f64;
    let mut out = Jets { phi_zz: vec![], phi_sz: vec![], phi_ss: vec![] };
    for i in 0..grid.len() {
        let y = grid.y(i / nx);
        let yy = v * y;
        // Hessian of u in (a, b, x, y).
        let mut hu = [[0.0f64; 4]; 4];
        hu[0][0] = (up[i] - 2.0 * u[i] + um[i]) / (h * h);
        hu[1][1] = (vp[i] - 2.0 * u[i] + vm[i]) / (h * h);
        hu[0][1] = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
        hu[0][2] = (xp.ux[i] - xm.ux[i]) / (2.0 * h);
        hu[0][3] = (xp.uy[i] - xm.uy[i]) / (2.0 * h);
        hu[1][2] = (yp.ux[i] - ym.ux[i]) / (2.0 * h);
        hu[1][3] = (yp.uy[i] - ym.uy[i]) / (2.0 * h);
        hu[2][2] = uxx[i];
        hu[2][3] = uxy[i];
        hu[3][3] = uyy[i];
        for p in 0..4 {
            for q in 0..p {
                hu[p][q] = hu[q][p];
            }
        }
        let (gx, gy) = (own.ux[i], own.uy[i]);
        // Jacobian of (a, b, x, y) with respect to (a, b, X, Y), X + iY = z.
        let jac = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [-yy * rhoa, -yy * rhob, 1.0, -rho],
            [yy * wa, yy * wb, 0.0, w],
        ];
        let mut x2 = [[0.0f64; 4]; 4];
        let mut y2 = [[0.0f64; 4]; 4];
        x2[0][0] = -yy * rhoaa;
        x2[0][1] = -yy * rhoab;
        x2[1][1] = -yy * rhobb;
        x2[0][3] = -rhoa;
        x2[1][3] = -rhob;
        y2[0][0] = yy * waa;
        y2[0][1] = yy * wab;
        y2[1][1] = yy * wbb;
        y2[0][3] = wa;
        y2[1][3] = wb;
        for m in [&mut x2, &mut y2] {
            for p in 0..4 {
                for q in 0..p {
                    m[p][q] = m[q][p];
                }
            }
        }
        let hh = |p: usize, q: usize| -> f64 {
            let mut acc = gx * x2[p][q] + gy * y2[p][q];
            for k in 0..4 {
                for l in 0..4 {
                    acc += jac[k][p] * jac[l][q] * hu[k][l];
                }
            }
            acc
        };
        let zz = 0.25 * (hh(2, 2) + hh(3, 3));
        let ss = 0.25 * (hh(0, 0) + hh(1, 1));
        let sz = Complex64::new(0.25 * (hh(0, 2) + hh(1, 3)), 0.25 * (hh(0, 3) - hh(1, 2)));
        out.phi_zz.push(zz);
        out.phi_sz.push(sz);
        out.phi_ss.push(ss);
    }
    if include_reference {
        let r = reference_jets(&t, d, (0..grid.len()).map(|i| grid.y(i / nx)));
        for i in 0..grid.len() {
            out.phi_zz[i] += r.phi_zz[i];
            out.phi_sz[i] += r.phi_sz[i];
            out.phi_ss[i] += r.phi_ss[i];
        }
        let min = out.phi_zz.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(FamilyError::FiberDegenerate { s, min });
        }
    }
    Ok(out)
}

/// Fiberwise diagnostics at every interior lattice node.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyDiagnostics {
    pub nodes: Vec<usize>,
    pub s: Vec<Complex64>,
    pub jets: Vec<Jets>,
    pub c: Vec<Vec<f64>>,
    /// Coefficient of `A = a dz̄ ⊗ ∂_z`.
    pub a_field: Vec<Vec<Complex64>>,
    /// Pointwise `|A|²_ω`.
    pub a_norm2: Vec<Vec<f64>>,
    /// Monge–Ampère density `(Im τ/π) φ_{zz̄}` against `dx dy`; mass `d`.
    pub ma: Vec<Vec<f64>>,
    /// `(1/d) ∫ |A|² ω_φ`.
    pub wp_phi: Vec<f64>,
    /// Deligne curvature `∫ c(φ) ω_φ`.
    pub theta: Vec<f64>,
    /// `|τ'|² / (4 Im²τ)` at each node.
    pub wp_harmonic: Vec<f64>,
}

impl FamilyDiagnostics {
    pub fn min_c(&self) -> f64 {
        self.c.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn position(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

pub fn diagnostics(fw: &FamilyWeight) -> Result<FamilyDiagnostics, FamilyError> {
    let fam = fw.family();
    let grid = &fam.grid;
    let d = fam.degree as f64;
    let nx = grid.nx();
    let nodes = fw.interior();
    let mut out = FamilyDiagnostics {
        nodes: nodes.clone(),
        s: vec![],
        jets: vec![],
        c: vec![],
        a_field: vec![],
        a_norm2: vec![],
        ma: vec![],
        wp_phi: vec![],
        theta: vec![],
        wp_harmonic: vec![],
    };
    for &n in &nodes {
        let s = fw.node_s(n);
        let t = TauJet::at(&fam.tau, s);
        let j = node_jets(fw, n, true)?;
        let c = j.c();
        // V + τ' y is periodic; its ∂_z̄ differs from that of V by the constant τ' y_z̄.
        let vt: Vec<Complex64> =
            (0..grid.len()).map(|i| j.phi_sz[i] / j.phi_zz[i] + t.d1 * grid.y(i / nx)).collect();
        let re: Vec<f64> = vt.iter().map(|z| z.re).collect();
        let im: Vec<f64> = vt.iter().map(|z| z.im).collect();
        let (cx, cy) = t.dzbar();
        let (rx, ry, ix, iy) = (
            grid.spectral_partial(&re, 1, 0),
            grid.spectral_partial(&re, 0, 1),
            grid.spectral_partial(&im, 1, 0),
            grid.spectral_partial(&im, 0, 1),
        );
        let shift = Complex64::new(0.0, 1.0) * t.d1 / (2.0 * t.v());
        let a: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let fx = Complex64::new(rx[i], ix[i]);
                let fy = Complex64::new(ry[i], iy[i]);
                -(cx * fx + cy * fy) + shift
            })
            .collect();
        let a2: Vec<f64> = a.iter().map(|z| z.norm_sqr()).collect();
        let ma: Vec<f64> = j.phi_zz.iter().map(|g| t.v() / PI * g).collect();
        out.wp_phi.push(mean(a2.iter().zip(&ma).map(|(x, m)| x * m), ma.len()) / d);
        out.theta.push(mean(c.iter().zip(&ma).map(|(x, m)| x * m), ma.len()));
        out.wp_harmonic.push(t.harmonic_norm2());
        out.s.push(s);
        out.c.push(c);
        out.a_field.push(a);
        out.a_norm2.push(a2);
        out.ma.push(ma);
        out.jets.push(j);
    }
    Ok(out)
}

/// `c(φ)` over the interior lattice nodes, in the order of [`FamilyWeight::interior`].
pub fn c_function(fw: &FamilyWeight) -> Result<Vec<Vec<f64>>, FamilyError> {
    fw.interior().into_iter().map(|n| Ok(node_jets(fw, n, true)?.c())).collect()
}

/// Kodaira–Spencer fields `A_φ` and the densities of `ω_{WP_φ}`.
pub fn kodaira_spencer_a(fw: &FamilyWeight) -> Result<FamilyDiagnostics, FamilyError> {
    diagnostics(fw)
}

/// Deligne curvature `Θ_φ(∂_s, ∂_s̄) = ∫ c(φ) ω_φ` at the interior nodes.
pub fn deligne_curvature(fw: &FamilyWeight) -> Result<Vec<f64>, FamilyError> {
    Ok(diagnostics(fw)?.theta)
}

/// Two evaluations of the Weil–Petersson density on the interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct WpComparison {
    pub s: Vec<Complex64>,
    /// `−∂_s∂_s̄ log(2 Im τ(s))` by second differences.
    pub hodge: Vec<f64>,
    /// `(1/d) ∫ |A|² ω` for the fiberwise-flat weight.
    pub kodaira_spencer: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Richardson-extrapolated five-point `∂_s∂_s̄` of a function of the base point.
pub(crate) fn ddbar_base(f: impl Fn(Complex64) -> f64, s: Complex64, h: f64) -> f64 {
    let lap = |h: f64| {
        let e = [Complex64::new(h, 0.0), Complex64::new(-h, 0.0), Complex64::new(0.0, h), Complex64::new(0.0, -h)];
        (e.iter().map(|d| f(s + d)).sum::<f64>() - 4.0 * f(s)) / (h * h)
    };
    0.25 * (4.0 * lap(h / 2.0) - lap(h)) / 3.0
}

pub fn wp_form(geom: &ModelGeometry) -> Result<WpComparison, FamilyError> {
    let flat = FamilyWeight::flat(geom.clone())?;
    let diag = diagnostics(&flat)?;
    let tau = flat.family().tau.clone();
    // ∂∂̄ log(2 Im τ) = −|τ'|²/(4 Im²τ) ≤ 0, so the Weil–Petersson density is its negative.
    let hodge: Vec<f64> =
        diag.s.iter().map(|&s| -ddbar_base(|s| (2.0 * tau.eval(s).im).ln(), s, 2e-3)).collect();
    let max_discrepancy =
        hodge.iter().zip(&diag.wp_phi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(WpComparison { s: diag.s, hodge, kodaira_spencer: diag.wp_phi, max_discrepancy })
}
