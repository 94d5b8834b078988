//! Periodic sampling of the unit square and Fourier calculus on it.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::FieldError;

struct Plans {
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

/// Uniform grid on R²/Z² with an optional complex-structure tag `tau`.
///
/// Nodes sit at `(ix/nx, iy/ny)`; samples are stored row-major with `iy` as the
/// slow index.
#[derive(Clone)]
pub struct PeriodicGrid2 {
    nx: usize,
    ny: usize,
    tau: Complex64,
    plans: Arc<Plans>,
}

impl fmt::Debug for PeriodicGrid2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid2")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("tau", &self.tau)
            .finish()
    }
}

impl PartialEq for PeriodicGrid2 {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.tau == other.tau
    }
}

/// Derivative selector for [`diff2`](super::diff2).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deriv {
    X,
    Y,
    XX,
    YY,
    XY,
}

impl Deriv {
    fn orders(self) -> (u32, u32) {
        match self {
            Deriv::X => (1, 0),
            Deriv::Y => (0, 1),
            Deriv::XX => (2, 0),
            Deriv::YY => (0, 2),
            Deriv::XY => (1, 1),
        }
    }
}

/// Differentiation backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiffMode {
    #[default]
    Spectral,
    /// Second-order centered differences; kept as an independent check.
    FiniteDifference,
}

impl PeriodicGrid2 {
    pub fn new(nx: usize, ny: usize) -> Result<Self, FieldError> {
        Self::with_tau(nx, ny, Complex64::new(0.0, 1.0))
    }

    pub fn with_tau(nx: usize, ny: usize, tau: Complex64) -> Result<Self, FieldError> {
        if nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(FieldError::BadGrid(format!(
                "grid sizes must be even and at least 8, got {nx}x{ny}"
            )));
        }
        if !(tau.im > 0.0) || !tau.re.is_finite() {
            return Err(FieldError::BadGrid(format!("Im tau must be positive, got {tau}")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            fx: planner.plan_fft_forward(nx),
            ix: planner.plan_fft_inverse(nx),
            fy: planner.plan_fft_forward(ny),
            iy: planner.plan_fft_inverse(ny),
        };
        Ok(PeriodicGrid2 { nx, ny, tau, plans: Arc::new(plans) })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    /// Same sampling with a different complex-structure tag.
    pub fn retag(&self, tau: Complex64) -> Result<Self, FieldError> {
        if !(tau.im > 0.0) {
            return Err(FieldError::BadGrid(format!("Im tau must be positive, got {tau}")));
        }
        Ok(PeriodicGrid2 { tau, ..self.clone() })
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 / self.nx as f64
    }

    pub fn y(&self, iy: usize) -> f64 {
        iy as f64 / self.ny as f64
    }

    /// Evaluate `f(x, y)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.ny {
            let y = self.y(iy);
            for ix in 0..self.nx {
                out.push(f(self.x(ix), y));
            }
        }
        out
    }

    /// Signed wavenumber for FFT index `i` of an `n`-point transform.
    fn wavenumber(i: usize, n: usize) -> (f64, bool) {
        let half = n / 2;
        if i == half {
            (half as f64, true)
        } else if i < half {
            (i as f64, false)
        } else {
            (i as f64 - n as f64, false)
        }
    }

    pub(crate) fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, true);
        buf
    }

    pub(crate) fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.fft2(&mut spec, false);
        let scale = 1.0 / self.len() as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }

    fn fft2(&self, buf: &mut [Complex64], forward: bool) {
        let (nx, ny) = (self.nx, self.ny);
        let (px, py) = if forward {
            (&self.plans.fx, &self.plans.fy)
        } else {
            (&self.plans.ix, &self.plans.iy)
        };
        px.process(buf);
        let mut t = vec![Complex64::new(0.0, 0.0); nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                t[ix * ny + iy] = buf[iy * nx + ix];
            }
        }
        py.process(&mut t);
        for ix in 0..nx {
            for iy in 0..ny {
                buf[iy * nx + ix] = t[ix * ny + iy];
            }
        }
    }

    /// Apply a real Fourier multiplier `m(kx, ky, nyquist_x, nyquist_y)` where
    /// `kx, ky` are signed integer wavenumbers.
    pub(crate) fn apply_multiplier(
        &self,
        data: &[f64],
        m: impl Fn(f64, f64, bool, bool) -> f64,
    ) -> Vec<f64> {
        let mut spec = self.forward(data);
        self.scale_spectrum(&mut spec, |kx, ky, nqx, nqy| Complex64::new(m(kx, ky, nqx, nqy), 0.0));
        self.inverse_real(spec)
    }

    pub(crate) fn scale_spectrum(
        &self,
        spec: &mut [Complex64],
        m: impl Fn(f64, f64, bool, bool) -> Complex64,
    ) {
        for iy in 0..self.ny {
            let (ky, nqy) = Self::wavenumber(iy, self.ny);
            for ix in 0..self.nx {
                let (kx, nqx) = Self::wavenumber(ix, self.nx);
                spec[iy * self.nx + ix] *= m(kx, ky, nqx, nqy);
            }
        }
    }

    /// Fourier multiplier of `∂x^a ∂y^b`; odd-order factors vanish on Nyquist modes.
    pub(crate) fn deriv_symbol(a: u32, b: u32) -> impl Fn(f64, f64, bool, bool) -> Complex64 {
        move |kx, ky, nqx, nqy| {
            let tp = 2.0 * std::f64::consts::PI;
            if (a % 2 == 1 && nqx) || (b % 2 == 1 && nqy) {
                return Complex64::new(0.0, 0.0);
            }
            let fx = Complex64::new(0.0, tp * kx).powu(a);
            let fy = Complex64::new(0.0, tp * ky).powu(b);
            fx * fy
        }
    }

    /// Eigenvalue of the dd^c density operator `(Im τ / 4π) Δ_τ` on mode `(kx, ky)`.
    ///
    /// `Δ_τ` is the Euclidean Laplacian of the flat metric in `z = x + τ y`,
    /// written in the square coordinates.
    pub(crate) fn ddc_eigen(&self, kx: f64, ky: f64, nqx: bool, nqy: bool) -> f64 {
        let (u, v) = (self.tau.re, self.tau.im);
        let cross = if nqx || nqy { 0.0 } else { -2.0 * u * kx * ky };
        let q = kx * kx * (1.0 + u * u / (v * v)) + (ky * ky + cross) / (v * v);
        -std::f64::consts::PI * v * q
    }

    /// Largest magnitude of the dd^c density operator on this grid.
    pub fn ddc_spectral_radius(&self) -> f64 {
        let kx = (self.nx / 2) as f64;
        let ky = (self.ny / 2) as f64;
        self.ddc_eigen(kx, ky, true, true).abs()
    }

    /// Derivative of a sampled function by the selected backend.
    pub fn derivative(&self, data: &[f64], which: Deriv, mode: DiffMode) -> Vec<f64> {
        let (a, b) = which.orders();
        match mode {
            DiffMode::Spectral => {
                let mut spec = self.forward(data);
                self.scale_spectrum(&mut spec, Self::deriv_symbol(a, b));
                self.inverse_real(spec)
            }
            DiffMode::FiniteDifference => self.fd_derivative(data, which),
        }
    }

    /// Spectral derivative `∂x^a ∂y^b` of arbitrary order.
    pub fn spectral_partial(&self, data: &[f64], a: u32, b: u32) -> Vec<f64> {
        let mut spec = self.forward(data);
        self.scale_spectrum(&mut spec, Self::deriv_symbol(a, b));
        self.inverse_real(spec)
    }

    fn fd_derivative(&self, f: &[f64], which: Deriv) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let (hx, hy) = (self.hx(), self.hy());
        let at = |ix: isize, iy: isize| -> f64 {
            let i = ix.rem_euclid(nx as isize) as usize;
            let j = iy.rem_euclid(ny as isize) as usize;
            f[j * nx + i]
        };
        let mut out = vec![0.0; nx * ny];
        for iy in 0..ny as isize {
            for ix in 0..nx as isize {
                let v = match which {
                    Deriv::X => (at(ix + 1, iy) - at(ix - 1, iy)) / (2.0 * hx),
                    Deriv::Y => (at(ix, iy + 1) - at(ix, iy - 1)) / (2.0 * hy),
                    Deriv::XX => {
                        (at(ix + 1, iy) - 2.0 * at(ix, iy) + at(ix - 1, iy)) / (hx * hx)
                    }
                    Deriv::YY => {
                        (at(ix, iy + 1) - 2.0 * at(ix, iy) + at(ix, iy - 1)) / (hy * hy)
                    }
                    Deriv::XY => {
                        (at(ix + 1, iy + 1) - at(ix + 1, iy - 1) - at(ix - 1, iy + 1)
                            + at(ix - 1, iy - 1))
                            / (4.0 * hx * hy)
                    }
                };
                out[iy as usize * nx + ix as usize] = v;
            }
        }
        out
    }

    /// dd^c density operator `(Im τ / 4π) Δ_τ` applied spectrally.
    pub fn ddc(&self, u: &[f64]) -> Vec<f64> {
        self.apply_multiplier(u, |kx, ky, a, b| self.ddc_eigen(kx, ky, a, b))
    }

    /// Same operator from centered differences.
    pub fn ddc_fd(&self, u: &[f64]) -> Vec<f64> {
        let (re, im) = (self.tau.re, self.tau.im);
        let uxx = self.fd_derivative(u, Deriv::XX);
        let uyy = self.fd_derivative(u, Deriv::YY);
        let uxy = self.fd_derivative(u, Deriv::XY);
        let c = im / (4.0 * std::f64::consts::PI);
        (0..u.len())
            .map(|i| {
                let lap = uxx[i] + (uyy[i] - 2.0 * re * uxy[i] + re * re * uxx[i]) / (im * im);
                c * lap
            })
            .collect()
    }

    /// Solve `(a - c·ddc) x = b`. With `a == 0` the mean of `b` must vanish and
    /// the mean-zero solution is returned.
    pub fn solve_shifted(&self, b: &[f64], a: f64, c: f64) -> Vec<f64> {
        let mut spec = self.forward(b);
        self.scale_spectrum(&mut spec, |kx, ky, nqx, nqy| {
            let d = a - c * self.ddc_eigen(kx, ky, nqx, nqy);
            if d == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0 / d, 0.0)
            }
        });
        self.inverse_real(spec)
    }

    /// Trigonometric interpolation onto another grid (zero-padding or truncation).
    pub fn resample(&self, data: &[f64], target: &PeriodicGrid2) -> Vec<f64> {
        if target.nx == self.nx && target.ny == self.ny {
            return data.to_vec();
        }
        let spec = self.forward(data);
        let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
        let kmx = (self.nx.min(target.nx) / 2) as i64;
        let kmy = (self.ny.min(target.ny) / 2) as i64;
        let idx = |k: i64, n: usize| -> usize { k.rem_euclid(n as i64) as usize };
        for ky in -kmy..=kmy {
            for kx in -kmx..=kmx {
                let mut v = spec[idx(ky, self.ny) * self.nx + idx(kx, self.nx)];
                // Split Nyquist content evenly between the two aliases.
                if kx.abs() == kmx {
                    v *= 0.5;
                }
                if ky.abs() == kmy {
                    v *= 0.5;
                }
                out[idx(ky, target.ny) * target.nx + idx(kx, target.nx)] += v;
            }
        }
        let scale = target.len() as f64 / self.len() as f64;
        for c in out.iter_mut() {
            *c *= scale;
        }
        target.inverse_real(out)
    }
}
