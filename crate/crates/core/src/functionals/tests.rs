use super::*;
use crate::field_core::gauss_legendre;
use crate::geometry::reference_weight;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn torus(n: usize) -> ModelGeometry {
    ModelGeometry::elliptic(Complex64::new(0.0, 1.0), 1, n, n).unwrap()
}

fn sphere() -> ModelGeometry {
    ModelGeometry::p1(2, 128).unwrap()
}

fn bumpy(geom: &ModelGeometry) -> Vec<f64> {
    geom.sample(|x, _| 1.0 + 0.3 * (2.0 * PI * x).cos())
}

fn families_for(geom: &ModelGeometry) -> Vec<MeasureFamily> {
    match geom {
        ModelGeometry::P1Symmetric { .. } => vec![
            MeasureFamily::fixed(geom, geom.sample(|p, _| 1.0 + 0.5 * p)).unwrap(),
            MeasureFamily::anticanonical(geom, true).unwrap(),
            MeasureFamily::anticanonical(geom, false).unwrap(),
        ],
        _ => vec![
            MeasureFamily::fixed(geom, bumpy(geom)).unwrap(),
            MeasureFamily::twisted(geom, bumpy(geom), true).unwrap(),
            MeasureFamily::twisted(geom, bumpy(geom), false).unwrap(),
        ],
    }
}

#[test]
fn fixed_measure_ignores_the_weight() {
    let g = torus(16);
    let fam = MeasureFamily::flat(&g);
    let w = Weight::from_fn(g.clone(), |x, y| (2.0 * PI * x).sin() + y).unwrap();
    let mu = mu_of(&w, &fam).unwrap();
    assert!((mu.mass - 1.0).abs() < 1e-15);
    assert_eq!(mu, mu_of(&reference_weight(&g).unwrap(), &fam).unwrap());
}

#[test]
fn anticanonical_fs_volume() {
    // e^{−φ_FS} on O(2) in the t variable: e^t/(1+e^t)² dt, mass by a wide trapezoid
    let n = 200_000;
    let h = 80.0 / n as f64;
    let oracle: f64 = (0..=n)
        .map(|i| {
            let t = -40.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * h * t.exp() / (1.0 + t.exp()).powi(2)
        })
        .sum();
    let g = sphere();
    let mu = mu_of(&reference_weight(&g).unwrap(), &MeasureFamily::anticanonical(&g, true).unwrap()).unwrap();
    assert!((mu.mass - oracle).abs() < 1e-10);
    assert!(mu.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn twisted_at_reference_is_mu0() {
    let g = torus(16);
    let fam = MeasureFamily::twisted(&g, bumpy(&g), false).unwrap();
    let mu = mu_of(&reference_weight(&g).unwrap(), &fam).unwrap();
    assert!((mu.mass - 1.0).abs() < 1e-14);
    assert_eq!(&mu.values, &fam.base_density(&g));
}

#[test]
fn anticanonical_needs_degree_two_sphere() {
    assert!(MeasureFamily::anticanonical(&torus(8), true).is_err());
    assert!(MeasureFamily::anticanonical(&ModelGeometry::p1(1, 128).unwrap(), true).is_err());
}

#[test]
fn energy_normalization_and_scaling() {
    for g in [torus(16), ModelGeometry::elliptic(Complex64::new(0.3, 2.0), 3, 16, 16).unwrap(), sphere()] {
        let w = reference_weight(&g).unwrap();
        assert_eq!(energy_e(&w), 0.0);
        let d = g.volume();
        assert!((energy_e(&w.shifted(0.7)) - 0.7 * d).abs() < 1e-13);
    }
}

#[test]
fn energy_matches_path_integral() {
    // E(φ₀ + u) = ∫₀¹ ∫ u MA(φ₀ + s u) ds, 64-point Gauss rule in s
    let g = torus(32);
    let w = Weight::from_fn(g.clone(), |x, _| 0.05 * (2.0 * PI * x).cos()).unwrap();
    let (s, ws) = gauss_legendre(64);
    let oracle: f64 = s
        .iter()
        .zip(&ws)
        .map(|(s, wt)| {
            let t = 0.5 * (s + 1.0);
            let ut: Vec<f64> = w.u().iter().map(|v| t * v).collect();
            let ma = ma_measure(&w.with_u(ut).unwrap());
            0.5 * wt * g.integrate_product(w.u(), &ma.values)
        })
        .sum();
    assert!((energy_e(&w) - oracle).abs() < 1e-9);
}

#[test]
fn i_functional_basics() {
    let g = torus(16);
    let flat = MeasureFamily::flat(&g);
    assert_eq!(i_functional(&reference_weight(&g).unwrap(), &flat).unwrap(), 0.0);
    let c = Weight::from_fn(g.clone(), |x, _| (2.0 * PI * x).cos()).unwrap();
    assert!(i_functional(&c, &flat).unwrap().abs() < 1e-14);
}

#[test]
fn normalized_equivariance() {
    for g in [torus(16), sphere()] {
        let w = Weight::from_fn(g.clone(), |x, _| 0.1 * (2.0 * PI * x).sin() + 0.05 * x * (1.0 - x)).unwrap();
        for fam in families_for(&g).into_iter().filter(|f| f.is_normalized()) {
            let a = i_functional(&w, &fam).unwrap();
            let b = i_functional(&w.shifted(1.3), &fam).unwrap();
            assert!((b - a - 1.3).abs() < 1e-12, "{}", fam.name());
            let fa = f_j_functionals(&w, &fam).unwrap().f;
            let fb = f_j_functionals(&w.shifted(1.3), &fam).unwrap().f;
            assert!((fa - fb).abs() < 1e-10);
        }
    }
}

#[test]
fn f_and_j_at_reference_and_positive_j() {
    let g = torus(32);
    let w0 = reference_weight(&g).unwrap();
    for fam in families_for(&g).into_iter().filter(|f| f.is_normalized()) {
        let fj = f_j_functionals(&w0, &fam).unwrap();
        assert!(fj.f.abs() < 1e-15 && fj.j.abs() < 1e-15);
    }
    let fam = MeasureFamily::flat(&g);
    for eps in [1e-3, -0.05, 0.2] {
        let w = Weight::from_fn(g.clone(), |x, _| eps * (2.0 * PI * x).cos()).unwrap();
        assert!(f_j_functionals(&w, &fam).unwrap().j > 0.0);
    }
}

#[test]
fn derivative_examples() {
    let g = torus(32);
    let fam = MeasureFamily::flat(&g);
    let w0 = reference_weight(&g).unwrap();
    let one = vec![1.0; g.len()];
    assert!(derivative_error(&w0, &one, &fam, 1e-3, Primitive::E).unwrap() < 1e-9);
    let cos = g.sample(|x, _| (2.0 * PI * x).cos());
    let plus = w0.with_u(cos.iter().map(|c| 1e-3 * c).collect()).unwrap();
    let minus = w0.with_u(cos.iter().map(|c| -1e-3 * c).collect()).unwrap();
    assert!(((energy_e(&plus) - energy_e(&minus)) / 2e-3).abs() < 1e-9);

    let s = sphere();
    let w = Weight::from_fn(s.clone(), |p, _| 0.1 * (3.0 * p).sin()).unwrap();
    let v = s.sample(|p, _| (5.0 * p).cos() * p);
    let anti = MeasureFamily::anticanonical(&s, true).unwrap();
    assert!(derivative_error(&w, &v, &anti, 1e-4, Primitive::I).unwrap() < 1e-7);
}

#[test]
fn snapshot_ids_distinguish_weights() {
    let g = torus(8);
    let a = reference_weight(&g).unwrap();
    assert_eq!(snapshot_id(&a), snapshot_id(&a.clone()));
    assert_ne!(snapshot_id(&a), snapshot_id(&a.shifted(1e-12)));
    let v = evaluate(&a, &MeasureFamily::flat(&g), FunctionalName::J).unwrap();
    assert_eq!(v.snapshot, snapshot_id(&a));
}

fn smooth_field(geom: &ModelGeometry, c: &[f64; 6]) -> Vec<f64> {
    geom.sample(|x, y| {
        c[0] * (2.0 * PI * x).cos()
            + c[1] * (2.0 * PI * y).sin()
            + c[2] * (2.0 * PI * (x + y)).cos()
            + c[3] * (4.0 * PI * x).sin() * (2.0 * PI * y).cos()
            + c[4] * x * (1.0 - x)
            + c[5]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn one_forms_are_exact(w in proptest::array::uniform6(-0.1f64..0.1), v in proptest::array::uniform6(-1.0f64..1.0), on_sphere in any::<bool>()) {
        let g = if on_sphere { sphere() } else { torus(32) };
        let phi = Weight::new(g.clone(), smooth_field(&g, &w)).unwrap();
        let dir = smooth_field(&g, &v);
        for fam in families_for(&g) {
            let err = energy_derivative_check(&phi, &dir, &fam, 1e-4).unwrap();
            prop_assert!(err <= 1e-6, "{} {err}", fam.name());
        }
    }

    #[test]
    fn j_is_nonnegative(w in proptest::array::uniform6(-0.2f64..0.2), c in -5.0f64..5.0) {
        for g in [torus(32), sphere()] {
            let phi = Weight::new(g.clone(), smooth_field(&g, &w)).unwrap();
            let fam = MeasureFamily::flat(&g);
            prop_assert!(f_j_functionals(&phi, &fam).unwrap().j >= -1e-12);
            let k = reference_weight(&g).unwrap().shifted(c);
            prop_assert!(f_j_functionals(&k, &fam).unwrap().j.abs() <= 1e-12);
            let e0 = energy_e(&phi);
            prop_assert!((energy_e(&phi.shifted(c)) - e0 - c * g.volume()).abs() <= 1e-10 * (1.0 + e0.abs()));
        }
    }
}
