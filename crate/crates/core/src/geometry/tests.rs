use super::*;
use proptest::prelude::*;
use std::f64::consts::PI;

fn torus(tau: Complex64, d: usize, n: usize) -> ModelGeometry {
    ModelGeometry::elliptic(tau, d, n, n).unwrap()
}

fn i1() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

#[test]
fn reference_densities() {
    let w = reference_weight(&torus(i1(), 1, 16)).unwrap();
    let ma = ma_measure(&w);
    assert!(ma.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    assert!((ma.mass - 1.0).abs() < 1e-14);

    let w = reference_weight(&ModelGeometry::p1(1, 128).unwrap()).unwrap();
    assert!((ma_measure(&w).mass - 1.0).abs() < 1e-14);

    let w = reference_weight(&torus(Complex64::new(0.0, 2.0), 3, 16)).unwrap();
    let ma = ma_measure(&w);
    assert!(ma.values.iter().all(|v| (v - 3.0).abs() < 1e-14));
    assert!((ma.mass - 3.0).abs() < 1e-13);
}

#[test]
fn ma_of_small_cosine_matches_fd_oracle() {
    let eps = 0.01;
    let g = torus(i1(), 1, 64);
    let w = Weight::from_fn(g.clone(), |x, _| eps * (2.0 * PI * x).cos()).unwrap();
    let ma = ma_measure(&w);
    // Richardson-extrapolated finite differences on refined grids, read back at the coarse nodes
    let fd_at = |n: usize| {
        let fine = PeriodicGrid2::with_tau(n, n, i1()).unwrap();
        let u = fine.sample(|x, _| eps * (2.0 * PI * x).cos());
        let l = fine.ddc_fd(&u);
        let r = n / 64;
        (0..64 * 64).map(|i| 1.0 + l[(i / 64) * r * n + (i % 64) * r]).collect::<Vec<_>>()
    };
    let (a, b) = (fd_at(512), fd_at(1024));
    let oracle: Vec<f64> = a.iter().zip(&b).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    assert!(sup_distance(&ma.values, &oracle) < 1e-8);
}

#[test]
fn constants_do_not_change_ma() {
    let g = torus(Complex64::new(0.3, 1.1), 2, 32);
    let w = Weight::from_fn(g, |x, y| 0.05 * (2.0 * PI * (x + 2.0 * y)).sin()).unwrap();
    let a = ma_measure(&w);
    let b = ma_measure(&w.shifted(0.75));
    assert!(sup_distance(&a.values, &b.values) < 1e-13);
}

#[test]
fn positivity_predicate() {
    let g = torus(i1(), 1, 64);
    let (ok, margin) = is_fiber_positive(&reference_weight(&g).unwrap());
    assert!(ok && (margin - 1.0).abs() < 1e-14);

    // amplitude that the finite-difference operator says gives min density −0.1
    let grid = g.torus_grid().unwrap();
    let c = grid.sample(|x, _| (2.0 * PI * x).cos());
    let peak = grid.ddc_fd(&c).iter().cloned().fold(0.0, f64::min).abs();
    let a = 1.1 / peak;
    let w = Weight::from_fn(g, |x, _| a * (2.0 * PI * x).cos()).unwrap();
    let (ok, margin) = is_fiber_positive(&w);
    assert!(!ok);
    assert!((margin + 0.1).abs() < 2e-3, "{margin}");

    let fs = reference_weight(&ModelGeometry::p1(2, 128).unwrap()).unwrap();
    assert!(is_fiber_positive(&fs).0);
}

#[test]
fn theta_moduli_are_doubly_periodic() {
    let g = torus(i1(), 1, 16);
    let b = SectionBasis::new(&g, 1).unwrap();
    let f = |x: f64, y: f64| b.eval_point(x, y)[0].norm_sqr();
    for &(x, y) in &[(0.1, 0.2), (0.7, 0.45), (0.33, 0.9)] {
        let v = f(x, y);
        assert!((f(x + 1.0, y) - v).abs() < 1e-11);
        assert!((f(x, y + 1.0) - v).abs() < 1e-11);
    }
}

#[test]
fn theta_products_are_doubly_periodic() {
    let g = torus(Complex64::new(0.4, 0.9), 2, 16);
    let b = SectionBasis::new(&g, 2).unwrap();
    let (x, y) = (0.37, 0.61);
    let a = b.eval_point(x, y);
    for (dx, dy) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 2.0)] {
        let c = b.eval_point(x + dx, y + dy);
        for i in 0..b.len() {
            for j in 0..b.len() {
                let p = a[i] * a[j].conj();
                let q = c[i] * c[j].conj();
                assert!((p - q).norm() < 1e-11);
            }
        }
    }
}

#[test]
fn theta_truncation_is_negligible() {
    let tau = Complex64::new(0.2, 0.8);
    let g = torus(tau, 1, 16);
    let k = 3;
    let b = SectionBasis::new(&g, k).unwrap();
    let nn = 3.0;
    let (x, y) = (0.23, 0.71);
    let vals = b.eval_point(x, y);
    for (j, v) in vals.iter().enumerate() {
        let brute: Complex64 = (-40..=40)
            .map(|n| {
                let m = n as f64 + j as f64 / nn;
                let amp = (-PI * nn * tau.im * (m + y).powi(2)).exp();
                let ph = PI * nn * tau.re * m * m + 2.0 * PI * nn * m * tau.re * y
                    + 2.0 * PI * (nn * n as f64 + j as f64) * x;
                Complex64::from_polar(amp, ph)
            })
            .sum();
        assert!((brute - v).norm() < 1e-14);
    }
}

#[test]
fn row_evaluation_matches_points() {
    let g = torus(Complex64::new(0.1, 1.2), 1, 16);
    let b = SectionBasis::new(&g, 2).unwrap();
    let mut row = Vec::new();
    b.torus_row(5, &mut row);
    for ix in [0, 3, 11] {
        let p = b.basis_eval(5 * 16 + ix);
        for j in 0..2 {
            assert!((row[j * 16 + ix] - p[j]).norm() < 1e-13);
        }
    }
}

#[test]
fn sphere_basis_at_unit_circle() {
    let g = ModelGeometry::p1(2, 128).unwrap();
    let b = SectionBasis::new(&g, 1).unwrap();
    assert_eq!(b.len(), 3);
    // |z| = 1: |z^j|² / (1 + |z|²)^2 = 1/4
    let v = b.eval_point(0.5, 0.0);
    for s in v {
        assert!((s.norm() - 0.5).abs() < 1e-15);
    }
}

#[test]
fn level_two_gram_is_positive_definite() {
    let g = torus(i1(), 1, 32);
    let b = SectionBasis::new(&g, 2).unwrap();
    let n = b.len();
    assert_eq!(n, 2);
    let mut gram = nalgebra::DMatrix::<Complex64>::zeros(n, n);
    for node in 0..g.len() {
        let s = b.basis_eval(node);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] += s[i] * s[j].conj() / g.len() as f64;
            }
        }
    }
    let eig = gram.map(|c| c.re).symmetric_eigenvalues();
    assert!(eig.iter().all(|&e| e > 0.1), "{eig}");
}

#[test]
fn geometry_validation() {
    assert_eq!(ModelGeometry::elliptic(i1(), 0, 8, 8), Err(GeometryError::ZeroDegree));
    assert!(matches!(ModelGeometry::elliptic(Complex64::new(0.0, -1.0), 1, 8, 8), Err(GeometryError::BadTau(_))));
    let low = TauPolynomial::new(vec![Complex64::new(0.0, 0.15), Complex64::new(0.0, 1.0)]);
    assert!(ModelGeometry::family(low, 1, 8, 8, 2, 0.05).is_err());
    let fam = ModelGeometry::family(TauPolynomial::constant(i1()), 1, 8, 8, 2, 0.05).unwrap();
    assert_eq!(Weight::new(fam, vec![0.0; 64]), Err(GeometryError::NotAFiber));
}

#[test]
fn tau_polynomial_derivative() {
    let p = TauPolynomial::new(vec![i1(), Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.25)]);
    let s = Complex64::new(0.1, -0.2);
    let h = 1e-6;
    let num = (p.eval(s + h) - p.eval(s - h)) / (2.0 * h);
    assert!((num - p.derivative(s)).norm() < 1e-9);
}

#[test]
fn weight_json_round_trip() {
    let g = torus(Complex64::new(0.25, 1.5), 2, 16);
    let w = Weight::from_fn(g, |x, y| (2.0 * PI * x).sin() / 3.0 + y.cos() * 1e-17).unwrap();
    let back = Weight::from_json(&w.to_json()).unwrap();
    assert_eq!(back, w);
    let p = Weight::from_fn(ModelGeometry::p1(2, 96).unwrap(), |p, _| (p * 7.0).sin() * 0.1).unwrap();
    assert_eq!(Weight::from_json(&p.to_json()).unwrap(), p);
    assert!(Weight::from_json("{\"format\":\"other\"}").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn degree_is_conserved(a in -0.3f64..0.3, b in -0.3f64..0.3, kx in 0usize..4, ky in 0usize..4, d in 1usize..4) {
        let g = torus(Complex64::new(0.3, 1.2), d, 32);
        let w = Weight::from_fn(g, |x, y| a * (2.0 * PI * (kx as f64 * x + ky as f64 * y)).cos()
            + b * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()).unwrap();
        prop_assert!((ma_measure(&w).mass - d as f64).abs() < 1e-8);
    }

    #[test]
    fn sphere_degree_is_conserved(a in -0.2f64..0.2, b in -0.2f64..0.2, d in 1usize..4) {
        let g = ModelGeometry::p1(d, 128).unwrap();
        let w = Weight::from_fn(g, |p, _| a * (p * (1.0 - p)).powi(2) * 10.0 + b * (3.0 * p).cos()).unwrap();
        prop_assert!((ma_measure(&w).mass - d as f64).abs() < 1e-8);
    }

    #[test]
    fn legendre_slope_is_increasing(a in -0.15f64..0.15) {
        // symmetric fiber-positive weight; ψ'(t) = d p + p(1-p) u_p
        let d = 2usize;
        let g = ModelGeometry::p1(d, 128).unwrap();
        let w = Weight::from_fn(g.clone(), |p, _| a * (2.0 * PI * p).cos()).unwrap();
        prop_assume!(is_fiber_positive(&w).0);
        let grid = g.line_grid().unwrap();
        let up = grid.dp(w.u());
        let slope: Vec<f64> = (0..grid.len()).map(|i| {
            let p = grid.p(i);
            d as f64 * p + p * (1.0 - p) * up[i]
        }).collect();
        prop_assert!(slope.windows(2).all(|s| s[1] > s[0]));
        prop_assert!(slope[0] > 0.0 && slope[0] < 1e-3);
        prop_assert!(slope[slope.len() - 1] < d as f64 && slope[slope.len() - 1] > d as f64 - 1e-3);
    }

    #[test]
    fn json_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e3f64..1e3, 64)) {
        let g = torus(Complex64::new(-0.2, 0.7), 1, 8);
        let w = Weight::new(g, vals).unwrap();
        let back = Weight::from_json(&w.to_json()).unwrap();
        prop_assert!(back.u().iter().zip(w.u()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
