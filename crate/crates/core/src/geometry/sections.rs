//! Bases of holomorphic sections of `kL`, multiplied by `e^{−kφ₀/2}`.
//!
//! On the elliptic curve these are theta functions with characteristics
//! `j/N`, `N = kd`, written in the square coordinates so that every product
//! `s_i s̄_j` is doubly periodic. On the sphere they are the monomials `z^j`,
//! `j = 0..=kd`, whose moduli depend on the moment coordinate only.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use super::ModelGeometry;

/// Terms below `e^{−CUTOFF}` relative to the leading one are dropped.
const CUTOFF: f64 = 45.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SectionError {
    #[error("sections need a fiber geometry")]
    NotAFiber,
    #[error("level must be at least 1")]
    ZeroLevel,
    #[error("theta window of {needed} terms exceeds the truncation bound {bound}")]
    Truncation { needed: usize, bound: usize },
}

#[derive(Clone, Debug)]
pub struct SectionBasis {
    geom: ModelGeometry,
    k: usize,
    n: usize,
    /// Half-width of the theta window in `m + y`.
    window: f64,
    /// `e^{2πi q / nx}` for the fiber grid.
    roots: Vec<Complex64>,
}

impl SectionBasis {
    pub fn new(geom: &ModelGeometry, k: usize) -> Result<Self, SectionError> {
        if k == 0 {
            return Err(SectionError::ZeroLevel);
        }
        let d = geom.degree();
        match geom {
            ModelGeometry::EllipticCurve { tau, grid, .. } => {
                let n = k * d;
                let window = (CUTOFF / (PI * n as f64 * tau.im)).sqrt();
                let bound = 8 + (6.0 / (PI * k as f64 * tau.im).sqrt()).ceil() as usize;
                let needed = window.ceil() as usize + 1;
                if needed > bound {
                    return Err(SectionError::Truncation { needed, bound });
                }
                let nx = grid.nx();
                let roots = (0..nx)
                    .map(|q| Complex64::from_polar(1.0, 2.0 * PI * q as f64 / nx as f64))
                    .collect();
                Ok(SectionBasis { geom: geom.clone(), k, n, window, roots })
            }
            ModelGeometry::P1Symmetric { .. } => {
                Ok(SectionBasis { geom: geom.clone(), k, n: k * d + 1, window: 0.0, roots: vec![] })
            }
            ModelGeometry::EllipticFamily(_) => Err(SectionError::NotAFiber),
        }
    }

    /// `N_k`.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn level(&self) -> usize {
        self.k
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geom
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.geom, ModelGeometry::P1Symmetric { .. })
    }

    /// Range of `n` whose Gaussian factor at `y` survives the cutoff, for characteristic `j`.
    fn theta_range(&self, j: usize, y: f64) -> (i64, i64) {
        let c = j as f64 / self.n as f64 + y;
        ((-c - self.window).ceil() as i64, (-c + self.window).floor() as i64)
    }

    /// Coefficient of `e^{2πi(Nn + j)x}` in `s_j` along the row at height `y`.
    fn theta_coeff(&self, tau: Complex64, j: usize, n: i64, y: f64) -> Complex64 {
        let nn = self.n as f64;
        let m = n as f64 + j as f64 / nn;
        let amp = (-PI * nn * tau.im * (m + y) * (m + y)).exp();
        let phase = PI * nn * tau.re * m * m + 2.0 * PI * nn * m * tau.re * y;
        Complex64::from_polar(amp, phase)
    }

    /// All sections at an arbitrary point: `(x, y)` on the torus, `(p, 0)` on the sphere.
    ///
    /// Sphere values are the real moduli `√(p^j (1 − p)^{kd−j})`, i.e. the
    /// sections on the ray `arg z = 0`.
    pub fn eval_point(&self, x: f64, y: f64) -> Vec<Complex64> {
        match &self.geom {
            ModelGeometry::EllipticCurve { tau, .. } => (0..self.n)
                .map(|j| {
                    let (lo, hi) = self.theta_range(j, y);
                    (lo..=hi)
                        .map(|n| {
                            let f = (self.n as i64 * n + j as i64) as f64;
                            self.theta_coeff(*tau, j, n, y) * Complex64::from_polar(1.0, 2.0 * PI * f * x)
                        })
                        .sum()
                })
                .collect(),
            _ => self
                .log_moduli_at(x)
                .into_iter()
                .map(|l| Complex64::new((0.5 * l).exp(), 0.0))
                .collect(),
        }
    }

    /// All sections at grid node `node`.
    pub fn basis_eval(&self, node: usize) -> Vec<Complex64> {
        match &self.geom {
            ModelGeometry::EllipticCurve { grid, .. } => {
                let (ix, iy) = (node % grid.nx(), node / grid.nx());
                self.eval_point(grid.x(ix), grid.y(iy))
            }
            ModelGeometry::P1Symmetric { grid, .. } => self.eval_point(grid.p(node), 0.0),
            ModelGeometry::EllipticFamily(_) => unreachable!(),
        }
    }

    /// Sections along grid row `iy`, laid out as `out[j * nx + ix]`.
    pub(crate) fn torus_row(&self, iy: usize, out: &mut Vec<Complex64>) {
        let ModelGeometry::EllipticCurve { tau, grid, .. } = &self.geom else {
            panic!("torus_row on a sphere basis");
        };
        let nx = grid.nx();
        let y = grid.y(iy);
        out.clear();
        out.resize(self.n * nx, Complex64::new(0.0, 0.0));
        for j in 0..self.n {
            let (lo, hi) = self.theta_range(j, y);
            let row = &mut out[j * nx..(j + 1) * nx];
            for n in lo..=hi {
                let c = self.theta_coeff(*tau, j, n, y);
                let f = (self.n as i64 * n + j as i64).rem_euclid(nx as i64) as usize;
                for (ix, v) in row.iter_mut().enumerate() {
                    *v += c * self.roots[(f * ix) % nx];
                }
            }
        }
    }

    /// `log(|z^j|² e^{−kφ₀}) = j log p + (kd − j) log(1 − p)` for `j = 0..=kd`.
    pub(crate) fn log_moduli_at(&self, p: f64) -> Vec<f64> {
        let kd = self.n - 1;
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        (0..=kd).map(|j| j as f64 * lp + (kd - j) as f64 * lq).collect()
    }
}
