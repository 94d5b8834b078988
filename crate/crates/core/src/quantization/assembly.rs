//! Gram assembly and Bergman sums over a fixed set of nodes.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::geometry::{ModelGeometry, SectionBasis};

/// Cache section samples while they take at most this many complex entries.
const CACHE_LIMIT: usize = 1 << 22;

pub(crate) enum Sections {
    Torus { basis: SectionBasis, nx: usize, ny: usize, cache: Option<Vec<Complex64>> },
    /// `log |s_j|² e^{−kφ₀}` laid out as `logmod[j * n + i]`.
    Sphere { n: usize, sections: usize, logmod: Vec<f64> },
}

impl Sections {
    pub(crate) fn new(basis: SectionBasis) -> Self {
        match basis.geometry() {
            ModelGeometry::EllipticCurve { grid, .. } => {
                let (nx, ny) = (grid.nx(), grid.ny());
                let n = basis.len();
                let cache = (n * nx * ny <= CACHE_LIMIT).then(|| {
                    let mut all = vec![Complex64::new(0.0, 0.0); n * nx * ny];
                    let mut row = Vec::new();
                    for iy in 0..ny {
                        basis.torus_row(iy, &mut row);
                        for j in 0..n {
                            let dst = j * nx * ny + iy * nx;
                            all[dst..dst + nx].copy_from_slice(&row[j * nx..(j + 1) * nx]);
                        }
                    }
                    all
                });
                Sections::Torus { basis, nx, ny, cache }
            }
            ModelGeometry::P1Symmetric { grid, .. } => {
                let n = grid.len();
                let sections = basis.len();
                let mut logmod = vec![0.0; sections * n];
                for i in 0..n {
                    for (j, l) in basis.log_moduli_at(grid.p(i)).into_iter().enumerate() {
                        logmod[j * n + i] = l;
                    }
                }
                Sections::Sphere { n, sections, logmod }
            }
            ModelGeometry::EllipticFamily(_) => unreachable!("bases are built on fibers"),
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            Sections::Torus { basis, .. } => basis.len(),
            Sections::Sphere { sections, .. } => *sections,
        }
    }

    /// Visit the section values row by row: `f(iy, values)` with `values[j * nx + ix]`.
    fn for_rows(&self, mut f: impl FnMut(usize, &[Complex64])) {
        let Sections::Torus { basis, nx, ny, cache } = self else { unreachable!() };
        let n = basis.len();
        match cache {
            Some(all) => {
                let mut row = vec![Complex64::new(0.0, 0.0); n * nx];
                for iy in 0..*ny {
                    for j in 0..n {
                        let src = j * nx * ny + iy * nx;
                        row[j * nx..(j + 1) * nx].copy_from_slice(&all[src..src + nx]);
                    }
                    f(iy, &row);
                }
            }
            None => {
                let mut row = Vec::new();
                for iy in 0..*ny {
                    basis.torus_row(iy, &mut row);
                    f(iy, &row);
                }
            }
        }
    }

    /// `G_ij = Σ_nodes s_i s̄_j q` for nodal weights `q`.
    pub(crate) fn gram(&self, q: &[f64]) -> DMatrix<Complex64> {
        let n = self.len();
        let mut g = DMatrix::<Complex64>::zeros(n, n);
        match self {
            Sections::Torus { nx, .. } => {
                let nx = *nx;
                let mut tq = vec![Complex64::new(0.0, 0.0); n * nx];
                self.for_rows(|iy, row| {
                    let qr = &q[iy * nx..(iy + 1) * nx];
                    for i in 0..n {
                        for ix in 0..nx {
                            tq[i * nx + ix] = row[i * nx + ix] * qr[ix];
                        }
                    }
                    for i in 0..n {
                        let a = &tq[i * nx..(i + 1) * nx];
                        for j in i..n {
                            let b = &row[j * nx..(j + 1) * nx];
                            let mut re = 0.0;
                            let mut im = 0.0;
                            for (x, y) in a.iter().zip(b) {
                                re += x.re * y.re + x.im * y.im;
                                im += x.im * y.re - x.re * y.im;
                            }
                            g[(i, j)] += Complex64::new(re, im);
                        }
                    }
                });
                for i in 0..n {
                    for j in 0..i {
                        g[(i, j)] = g[(j, i)].conj();
                    }
                    g[(i, i)].im = 0.0;
                }
            }
            Sections::Sphere { n: m, logmod, .. } => {
                for j in 0..n {
                    let row = &logmod[j * m..(j + 1) * m];
                    let s: f64 = row.iter().zip(q).map(|(l, q)| l.exp() * q).sum();
                    g[(j, j)] = Complex64::new(s, 0.0);
                }
            }
        }
        g
    }

    /// `log((1/N) Σ_a |g_a|²)` at every node, with `g = L^{-1} s` and `H = L L†`.
    ///
    /// On the sphere `H` must be diagonal.
    pub(crate) fn log_bergman_sum(&self, linv: &DMatrix<Complex64>) -> Vec<f64> {
        let n = self.len();
        let ln_n = (n as f64).ln();
        match self {
            Sections::Torus { nx, ny, .. } => {
                let nx = *nx;
                let mut out = vec![0.0; nx * ny];
                let mut acc = vec![0.0; nx];
                let mut ga = vec![Complex64::new(0.0, 0.0); nx];
                self.for_rows(|iy, row| {
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    for a in 0..n {
                        ga.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                        for i in 0..=a {
                            let c = linv[(a, i)];
                            if c.norm_sqr() == 0.0 {
                                continue;
                            }
                            let s = &row[i * nx..(i + 1) * nx];
                            for (g, s) in ga.iter_mut().zip(s) {
                                *g += c * s;
                            }
                        }
                        for (acc, g) in acc.iter_mut().zip(&ga) {
                            *acc += g.norm_sqr();
                        }
                    }
                    for (o, a) in out[iy * nx..(iy + 1) * nx].iter_mut().zip(&acc) {
                        *o = a.ln() - ln_n;
                    }
                });
                out
            }
            Sections::Sphere { n: m, logmod, .. } => {
                // diagonal H: |g_j|² = |s_j|² / H_jj
                let lh: Vec<f64> = (0..n).map(|j| -2.0 * linv[(j, j)].re.ln()).collect();
                (0..*m)
                    .map(|i| {
                        let terms = (0..n).map(|j| logmod[j * m + i] - lh[j]);
                        let top = terms.clone().fold(f64::NEG_INFINITY, f64::max);
                        top + terms.map(|t| (t - top).exp()).sum::<f64>().ln() - ln_n
                    })
                    .collect()
            }
        }
    }
}
