//! One-dimensional grid for circle-invariant data on the Riemann sphere.
//!
//! Samples are indexed by the moment coordinate `p = e^t / (1 + e^t)` with
//! `t = log|z|²`, placed at Gauss–Legendre nodes of `(0, 1)`. The two poles are
//! never sampled, yet every polynomial in `p` of degree below `2n` is integrated
//! exactly, so quadrature does not suffer from truncating the `t` axis.

use std::fmt;
use std::sync::Arc;

use super::FieldError;

struct Tables {
    /// `legendre[l * n + i] = P_l(x_i)`
    legendre: Vec<f64>,
    /// `dlegendre[l * n + i] = P_l'(x_i)`
    dlegendre: Vec<f64>,
}

#[derive(Clone)]
pub struct LineGrid {
    n: usize,
    x: Arc<Vec<f64>>,
    w: Arc<Vec<f64>>,
    tables: Arc<Tables>,
    decay_tol: f64,
}

impl fmt::Debug for LineGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LineGrid").field("n", &self.n).field("t_max", &self.t_max()).finish()
    }
}

impl PartialEq for LineGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

/// Gauss–Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pair(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_pair(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for l in 1..n {
        let lf = l as f64;
        let p2 = ((2.0 * lf + 1.0) * z * p1 - lf * p0) / (lf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

impl LineGrid {
    pub fn new(n: usize) -> Result<Self, FieldError> {
        if n < 16 || n % 2 != 0 {
            return Err(FieldError::BadGrid(format!("line grid needs an even n >= 16, got {n}")));
        }
        let (x, w) = gauss_legendre(n);
        let mut legendre = vec![0.0; n * n];
        let mut dlegendre = vec![0.0; n * n];
        for i in 0..n {
            let z = x[i];
            legendre[i] = 1.0;
            dlegendre[i] = 0.0;
            if n > 1 {
                legendre[n + i] = z;
                dlegendre[n + i] = 1.0;
            }
            for l in 1..n - 1 {
                let lf = l as f64;
                let p = ((2.0 * lf + 1.0) * z * legendre[l * n + i] - lf * legendre[(l - 1) * n + i])
                    / (lf + 1.0);
                legendre[(l + 1) * n + i] = p;
                dlegendre[(l + 1) * n + i] =
                    dlegendre[(l - 1) * n + i] + (2.0 * lf + 1.0) * legendre[l * n + i];
            }
        }
        let w: Vec<f64> = w.iter().map(|v| 0.5 * v).collect();
        let grid = LineGrid {
            n,
            x: Arc::new(x),
            w: Arc::new(w),
            tables: Arc::new(Tables { legendre, dlegendre }),
            decay_tol: 1e-4,
        };
        if grid.t_max() < 8.0 {
            return Err(FieldError::BadGrid(format!(
                "line grid reaches only |t| = {:.2}; need at least 8",
                grid.t_max()
            )));
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node in the Legendre variable `x = 2p - 1`.
    pub fn xnode(&self, i: usize) -> f64 {
        self.x[i]
    }

    /// Node in the moment coordinate.
    pub fn p(&self, i: usize) -> f64 {
        0.5 * (1.0 + self.x[i])
    }

    /// Node in `t = log|z|²`.
    pub fn t(&self, i: usize) -> f64 {
        2.0 * self.x[i].atanh()
    }

    /// Outermost sampled `|t|`.
    pub fn t_max(&self) -> f64 {
        self.t(self.n - 1)
    }

    pub fn decay_tolerance(&self) -> f64 {
        self.decay_tol
    }

    /// Quadrature weights for `dp` on (0, 1); they sum to one.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.p(i))).collect()
    }

    /// Legendre coefficients `c_l` with `f = Σ c_l P_l(2p - 1)`.
    pub fn to_legendre(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        let tab = &self.tables.legendre;
        (0..n)
            .map(|l| {
                let row = &tab[l * n..(l + 1) * n];
                let s: f64 = row.iter().zip(f).zip(self.w.iter()).map(|((p, v), w)| p * v * w).sum();
                // weights here are for dp, i.e. half the Gauss weights
                (2.0 * l as f64 + 1.0) * s
            })
            .collect()
    }

    pub fn from_legendre(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        let tab = &self.tables.legendre;
        let mut out = vec![0.0; n];
        for (l, &cl) in c.iter().enumerate() {
            if cl == 0.0 {
                continue;
            }
            let row = &tab[l * n..(l + 1) * n];
            for (o, p) in out.iter_mut().zip(row) {
                *o += cl * p;
            }
        }
        out
    }

    /// Eigenvalue `-l(l+1)` of the dd^c density operator on `P_l`.
    pub fn ddc_eigen(l: usize) -> f64 {
        -((l * (l + 1)) as f64)
    }

    pub fn ddc_spectral_radius(&self) -> f64 {
        Self::ddc_eigen(self.n - 1).abs()
    }

    /// dd^c density operator `d/dp (p(1-p) d/dp)` against `dp`.
    pub fn ddc(&self, u: &[f64]) -> Vec<f64> {
        let mut c = self.to_legendre(u);
        for (l, cl) in c.iter_mut().enumerate() {
            *cl *= Self::ddc_eigen(l);
        }
        self.from_legendre(&c)
    }

    /// `du/dp` at the nodes.
    pub fn dp(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = self.to_legendre(u);
        let tab = &self.tables.dlegendre;
        let mut out = vec![0.0; n];
        for (l, &cl) in c.iter().enumerate() {
            let row = &tab[l * n..(l + 1) * n];
            for (o, d) in out.iter_mut().zip(row) {
                *o += 2.0 * cl * d;
            }
        }
        out
    }

    /// Solve `(a - c·ddc) x = b`; with `a == 0` the constant mode is dropped.
    pub fn solve_shifted(&self, b: &[f64], a: f64, c: f64) -> Vec<f64> {
        let mut coef = self.to_legendre(b);
        for (l, cl) in coef.iter_mut().enumerate() {
            let d = a - c * Self::ddc_eigen(l);
            *cl = if d == 0.0 { 0.0 } else { *cl / d };
        }
        self.from_legendre(&coef)
    }

    /// Average with the reflection `p ↦ 1 - p` (the inversion `z ↦ 1/z`).
    pub fn symmetrize(&self, u: &mut [f64]) {
        let n = self.n;
        for i in 0..n / 2 {
            let m = 0.5 * (u[i] + u[n - 1 - i]);
            u[i] = m;
            u[n - 1 - i] = m;
        }
    }

    /// Evaluate a sampled function at an arbitrary `p` by its Legendre series.
    pub fn interpolate(&self, u: &[f64], p: f64) -> f64 {
        let c = self.to_legendre(u);
        let z = 2.0 * p - 1.0;
        let (mut p0, mut p1) = (1.0, z);
        let mut s = c[0];
        if c.len() > 1 {
            s += c[1] * z;
        }
        for (l, &cl) in c.iter().enumerate().skip(2) {
            let lf = (l - 1) as f64;
            let p2 = ((2.0 * lf + 1.0) * z * p1 - lf * p0) / (lf + 1.0);
            s += cl * p2;
            p0 = p1;
            p1 = p2;
        }
        s
    }

    /// Resample onto another line grid through the Legendre series.
    pub fn resample(&self, u: &[f64], target: &LineGrid) -> Vec<f64> {
        if target.n == self.n {
            return u.to_vec();
        }
        let c = self.to_legendre(u);
        let keep = c.len().min(target.n);
        let mut padded = vec![0.0; target.n];
        padded[..keep].copy_from_slice(&c[..keep]);
        target.from_legendre(&padded)
    }

    /// Whether `u` has flattened out at both ends of the sampled `t` range.
    pub fn decays_at_ends(&self, u: &[f64]) -> bool {
        let n = self.n;
        (u[0] - u[1]).abs() < self.decay_tol && (u[n - 1] - u[n - 2]).abs() < self.decay_tol
    }
}

impl LineGrid {
    /// Row-major nodal matrix of the operator acting as `symbol(l)` on `P_l`.
    pub fn operator_matrix(&self, symbol: impl Fn(usize) -> f64) -> Vec<f64> {
        let n = self.n;
        let tab = &self.tables.legendre;
        let mut m = vec![0.0; n * n];
        for l in 0..n {
            let s = symbol(l) * (2.0 * l as f64 + 1.0);
            if s == 0.0 {
                continue;
            }
            let row = &tab[l * n..(l + 1) * n];
            for i in 0..n {
                let a = s * row[i];
                let out = &mut m[i * n..(i + 1) * n];
                for j in 0..n {
                    out[j] += a * row[j] * self.w[j];
                }
            }
        }
        m
    }
}
