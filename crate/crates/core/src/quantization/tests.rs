use super::*;
use crate::geometry::reference_weight;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

fn torus(n: usize) -> ModelGeometry {
    ModelGeometry::elliptic(Complex64::new(0.0, 1.0), 1, n, n).unwrap()
}

fn bumpy(g: &ModelGeometry) -> Weight {
    Weight::from_fn(g.clone(), |x, y| 0.05 * (2.0 * PI * x).cos() + 0.03 * (2.0 * PI * (x + y)).sin()).unwrap()
}

fn mu0(g: &ModelGeometry) -> Vec<f64> {
    g.sample(|x, _| 1.0 + 0.3 * (2.0 * PI * x).cos())
}

fn sphere_bump(g: &ModelGeometry, a: f64) -> Weight {
    Weight::from_fn(g.clone(), |p, _| a * p * (1.0 - p)).unwrap()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

#[test]
fn sphere_gram_matches_beta_integrals() {
    let g = ModelGeometry::p1(1, 128).unwrap();
    let k = 6;
    let h = hilb(&reference_weight(&g).unwrap(), &MeasureFamily::flat(&g), k).unwrap();
    let n = k + 1;
    assert_eq!(h.dim(), n);
    for i in 0..n {
        for j in 0..n {
            let v = h.matrix()[(i, j)];
            if i == j {
                let beta = (ln_factorial(j) + ln_factorial(k - j) - ln_factorial(k + 1)).exp();
                assert!((v.re - beta).abs() <= 1e-12 * beta && v.im == 0.0, "H[{j}] = {v} vs {beta}");
            } else {
                assert_eq!(v.norm(), 0.0);
            }
        }
    }
}

#[test]
fn elliptic_gram_is_stable_under_refinement() {
    let a = torus(32);
    let b = torus(64);
    let fam = |g: &ModelGeometry| MeasureFamily::flat(g);
    let ha = hilb(&bumpy(&a), &fam(&a), 1).unwrap();
    let hb = hilb(&bumpy(&b), &fam(&b), 1).unwrap();
    assert_eq!(ha.dim(), 1);
    let (x, y) = (ha.matrix()[(0, 0)], hb.matrix()[(0, 0)]);
    assert!(x.re > 0.0);
    assert!((x - y).norm() <= 1e-10 * x.norm(), "{x} vs {y}");
}

#[test]
fn hilb_scales_under_constant_shifts() {
    let g = torus(32);
    let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
    let (k, c) = (3, 0.37);
    let w = bumpy(&g);
    let a = hilb(&w, &fam, k).unwrap();
    let b = hilb(&w.shifted(c), &fam, k).unwrap();
    let scale = (-(k as f64) * c).exp();
    let diff = (b.matrix() - a.matrix() * Complex64::new(scale, 0.0)).norm();
    assert!(diff <= 1e-12 * b.matrix().norm());
}

#[test]
fn fs_is_equivariant_under_scaling() {
    let g = torus(32);
    let k = 3;
    let h = hilb(&bumpy(&g), &MeasureFamily::flat(&g), k).unwrap();
    let c = -0.21;
    let a = fs(&h).unwrap();
    let b = fs(&h.scaled((-(k as f64) * c).exp())).unwrap();
    let dev = a.u().iter().zip(b.u()).fold(0.0f64, |m, (x, y)| m.max((y - x - c).abs()));
    assert!(dev <= 1e-12, "{dev}");
}

fn random_unitary(n: usize, seed: u64) -> DMatrix<Complex64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    m.qr().q()
}

/// `s† G⁻¹ s` in a rotated basis `f = U s` with `G' = U G U†`, by LU.
#[test]
fn fs_matches_an_independent_rotated_kernel() {
    let g = torus(32);
    let k = 4;
    let h = hilb(&bumpy(&g), &MeasureFamily::flat(&g), k).unwrap();
    let out = fs(&h).unwrap();
    let u = random_unitary(h.dim(), 7);
    let g_rot = &u * h.matrix() * u.adjoint();
    let g_inv = g_rot.lu().try_inverse().unwrap();
    let basis = SectionBasis::new(&g, k).unwrap();
    for node in [0usize, 17, 300, 1023] {
        let s = DMatrix::from_column_slice(h.dim(), 1, &basis.basis_eval(node));
        let f = &u * s;
        let val = (f.adjoint() * &g_inv * &f)[(0, 0)].re / h.dim() as f64;
        let expect = val.ln() / k as f64;
        assert!((out.u()[node] - expect).abs() <= 1e-12, "node {node}: {} vs {expect}", out.u()[node]);
    }
}

#[test]
fn sphere_fs_of_reference_gram_is_constant() {
    let g = ModelGeometry::p1(2, 128).unwrap();
    let w = reference_weight(&g).unwrap();
    for k in [1, 3, 7] {
        let out = fs(&hilb(&w, &MeasureFamily::flat(&g), k).unwrap()).unwrap();
        let c = out.u()[0];
        assert!(out.u().iter().all(|v| (v - c).abs() <= 1e-10));
        let rho = bergman_function(&w, &MeasureFamily::flat(&g), k).unwrap();
        assert!(rho.values.iter().all(|r| (r - 1.0).abs() <= 1e-10));
    }
}

/// On the square flat torus the leading Poisson terms give `sup|ρ − 1| ≈ 4 e^{−πN/2}`.
#[test]
fn flat_torus_bergman_function_matches_theta_oracle() {
    let g = torus(64);
    let w = reference_weight(&g).unwrap();
    let mut prev = f64::INFINITY;
    for k in [4, 8] {
        let rho = bergman_function(&w, &MeasureFamily::flat(&g), k).unwrap();
        let dev = rho.values.iter().fold(0.0f64, |m, r| m.max((r - 1.0).abs()));
        let oracle = 4.0 * (-PI * k as f64 / 2.0).exp();
        assert!((dev - oracle).abs() <= 0.01 * oracle, "k={k}: {dev} vs {oracle}");
        assert!(dev < prev);
        if k == 8 {
            assert!(dev <= 1e-3);
        }
        prev = dev;
    }
}

#[test]
fn bergman_measure_has_unit_mass() {
    let g = torus(32);
    let fams = [
        MeasureFamily::flat(&g),
        MeasureFamily::twisted(&g, mu0(&g), false).unwrap(),
        MeasureFamily::twisted(&g, mu0(&g), true).unwrap(),
    ];
    for fam in &fams {
        let q = Quantizer::new(&g, fam, 3).unwrap();
        let mass = q.bergman_mass(&bumpy(&g)).unwrap();
        assert!((mass - 1.0).abs() <= 1e-9, "{}: {mass}", fam.name());
        let rho = q.bergman_function(&bumpy(&g)).unwrap();
        assert!(rho.min() > 0.0);
    }
}

#[test]
fn step_equals_fs_of_hilb() {
    let g = torus(32);
    let fam = MeasureFamily::twisted(&g, mu0(&g), false).unwrap();
    let w = bumpy(&g);
    let a = bergman_step(&w, &fam, 3).unwrap();
    let q = Quantizer::new(&g, &fam, 3).unwrap();
    let b = q.fs(&q.hilb(&w).unwrap()).unwrap();
    assert!(a.sup_distance(&b) <= 1e-12);
}

#[test]
fn fubini_study_is_balanced_for_the_anticanonical_family() {
    let g = ModelGeometry::p1(2, 128).unwrap();
    let w = reference_weight(&g).unwrap();
    let fam = MeasureFamily::anticanonical(&g, true).unwrap();
    let next = bergman_step(&w, &fam, 5).unwrap();
    assert!(next.sup_distance(&w) <= 1e-10);
}

#[test]
fn fixed_measure_step_passes_constants_through() {
    let g = torus(32);
    let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
    let q = Quantizer::new(&g, &fam, 3).unwrap();
    let w = bumpy(&g);
    let a = q.bergman_step(&w).unwrap();
    let b = q.bergman_step(&w.shifted(0.8)).unwrap();
    let dev = a.u().iter().zip(b.u()).fold(0.0f64, |m, (x, y)| m.max((y - x - 0.8).abs()));
    assert!(dev <= 1e-12, "{dev}");
}

#[test]
fn l_shifts_by_constants_and_j_vanishes_at_reference() {
    let g = torus(32);
    let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
    let q = Quantizer::new(&g, &fam, 3).unwrap();
    let w = bumpy(&g);
    let d = q.l_functional(&w.shifted(1.0)).unwrap() - q.l_functional(&w).unwrap();
    assert!((d - 1.0).abs() <= 1e-10, "{d}");
    let flat = Quantizer::new(&g, &MeasureFamily::flat(&g), 3).unwrap();
    let h0 = flat.hilb(&reference_weight(&g).unwrap()).unwrap();
    assert!(q.j_functional(&h0).unwrap().abs() <= 1e-14);
    assert!(q.l_functional(&reference_weight(&g).unwrap()).unwrap().abs() <= 1e-14);
    let qf = quantized_functionals(&w, &fam, 3).unwrap();
    assert!(qf.j >= 0.0);
}

#[test]
fn balanced_form_is_critical_for_f() {
    let g = torus(32);
    let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
    let k = 2;
    let res = solve_balanced(&fam, k, &reference_weight(&g).unwrap(), 1e-12, 400).unwrap();
    let q = Quantizer::new(&g, &fam, k).unwrap();
    let h = q.hilb(&res.weight).unwrap();
    let h_next = q.hilb(&q.fs(&h).unwrap()).unwrap();
    let df = q.f_functional(&h_next).unwrap() - q.f_functional(&h).unwrap();
    assert!(df.abs() <= 1e-12, "{df}");
}

#[test]
fn anticanonical_iteration_converges_from_a_perturbed_start() {
    let g = ModelGeometry::p1(2, 128).unwrap();
    let fam = MeasureFamily::anticanonical(&g, true).unwrap();
    let q = Quantizer::new(&g, &fam, 5).unwrap();
    let (trace, w) = iterate(&q, &sphere_bump(&g, 0.4), IterationOptions::default()).unwrap();
    assert!(trace.passed(), "{:?}", trace.report.assertions);
    assert!(trace.balanced_at().is_some());
    assert!(trace.last_change() < 1e-10);
    let next = q.bergman_step(&w).unwrap();
    assert!(next.sup_distance(&w) < 1e-10);
}

#[test]
fn twisted_iteration_contracts_by_one_minus_one_over_k() {
    let g = torus(32);
    let fam = MeasureFamily::twisted(&g, mu0(&g), false).unwrap();
    let q = Quantizer::new(&g, &fam, 4).unwrap();
    let (trace, _) = iterate(&q, &bumpy(&g).shifted(0.5), IterationOptions::default()).unwrap();
    assert!(trace.passed(), "{:?}", trace.report.assertions);
    let worst = trace.records.iter().filter(|r| r.ratio.is_finite()).map(|r| r.ratio).fold(0.0, f64::max);
    assert!(worst <= 0.75 + 1e-6, "{worst}");
    assert!(worst > 0.7, "{worst}");
}

#[test]
fn fixed_measure_l_increases_until_stationary() {
    let g = torus(32);
    let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
    let q = Quantizer::new(&g, &fam, 3).unwrap();
    let (trace, _) = iterate(&q, &bumpy(&g), IterationOptions::default()).unwrap();
    assert!(trace.passed(), "{:?}", trace.report.assertions);
    for w in trace.records.windows(2) {
        if w[0].sup_change > 1e-6 {
            assert!(w[1].l > w[0].l, "step {}", w[1].m);
        }
    }
    let balanced = trace.balanced_at().unwrap();
    assert!(trace.records[balanced..].iter().all(|r| r.sup_change <= BALANCED_TOL));
}

#[test]
fn balanced_sphere_weight_is_unique() {
    let g = ModelGeometry::p1(2, 128).unwrap();
    let fam = MeasureFamily::anticanonical(&g, true).unwrap();
    let a = solve_balanced(&fam, 5, &sphere_bump(&g, 0.4), 1e-11, 500).unwrap();
    let b = solve_balanced(&fam, 5, &sphere_bump(&g, -0.3).shifted(2.0), 1e-11, 500).unwrap();
    assert!(a.residual <= 2e-11 && b.residual <= 2e-11);
    assert!(a.weight.sup_distance(&b.weight) <= 1e-8);
    assert!(crate::functionals::i_functional(&a.weight, &fam).unwrap().abs() <= 1e-12);
}

#[test]
fn fixed_measure_balanced_weight_exists() {
    let g = torus(32);
    let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
    let tol = 1e-10;
    let res = solve_balanced(&fam, 2, &bumpy(&g), tol, 400).unwrap();
    assert!(res.residual <= tol);
}

#[test]
fn non_normalized_twisted_limit_is_normalized() {
    let g = torus(32);
    let fam = MeasureFamily::twisted(&g, mu0(&g), false).unwrap();
    let res = solve_balanced(&fam, 4, &bumpy(&g).shifted(-1.0), 1e-11, 500).unwrap();
    let i = crate::functionals::i_functional(&res.weight, &fam.as_normalized()).unwrap();
    assert!(i.abs() <= 1e-8, "{i}");
}

#[test]
fn non_normalized_anticanonical_balanced_via_normalized_iteration() {
    let g = ModelGeometry::p1(2, 128).unwrap();
    let fam = MeasureFamily::anticanonical(&g, false).unwrap();
    let res = solve_balanced(&fam, 5, &sphere_bump(&g, 0.4), 1e-11, 500).unwrap();
    assert!(res.residual <= 2e-11);
}

#[test]
fn constants_follow_the_difference_equation() {
    let g = torus(32);
    let twisted = MeasureFamily::twisted(&g, mu0(&g), false).unwrap();
    let (err, spread) = constant_dynamics_error(&twisted, 3, &bumpy(&g).shifted(0.4), 8).unwrap();
    assert!(err <= 1e-10 && spread <= 1e-10, "{err} {spread}");
    let s = ModelGeometry::p1(2, 128).unwrap();
    let anti = MeasureFamily::anticanonical(&s, false).unwrap();
    let (err, spread) = constant_dynamics_error(&anti, 4, &sphere_bump(&s, 0.3).shifted(0.2), 8).unwrap();
    assert!(err <= 1e-10 && spread <= 1e-10, "{err} {spread}");
}

#[test]
fn sphere_forms_must_be_diagonal() {
    let g = ModelGeometry::p1(1, 128).unwrap();
    let h = hilb(&reference_weight(&g).unwrap(), &MeasureFamily::flat(&g), 2).unwrap();
    let mut m = h.matrix().clone();
    m[(0, 1)] = Complex64::new(0.01, 0.0);
    m[(1, 0)] = Complex64::new(0.01, 0.0);
    let bent = HermitianForm::new(2, g.clone(), m).unwrap();
    assert_eq!(fs(&bent).unwrap_err(), QuantError::NotInvariant);
}

#[test]
fn indefinite_forms_are_rejected() {
    let g = torus(16);
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-0.5, 0.0)]));
    match HermitianForm::new(2, g, m) {
        Err(QuantError::NotPositiveDefinite { min_eigenvalue }) => assert!((min_eigenvalue + 0.5).abs() < 1e-14),
        other => panic!("{other:?}"),
    }
}

#[test]
fn hermitian_forms_round_trip_through_json() {
    let g = torus(32);
    let h = hilb(&bumpy(&g), &MeasureFamily::flat(&g), 3).unwrap();
    assert!(h.hermiticity_defect() <= 1e-12);
    assert!(h.condition_number() >= 1.0);
    let json = serde_json::to_string(&h.to_record()).unwrap();
    let back = HermitianForm::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, h);
    let mut rec = h.to_record();
    rec.level = 4;
    assert_eq!(HermitianForm::from_record(&rec).unwrap_err(), QuantError::BasisMismatch);
}

#[test]
fn quadrature_resolution_scales_with_level() {
    let g = torus(32);
    assert_eq!(quadrature_resolution(&g, 2), 32);
    assert_eq!(quadrature_resolution(&g, 8), 64);
    assert_eq!(quadrature_resolution(&g, 100), 512);
    let q = Quantizer::new(&g, &MeasureFamily::flat(&g), 8).unwrap();
    assert_eq!(q.quadrature_geometry().resolution(), 64);
    assert_eq!(q.dim(), 8);
}

#[test]
fn sphere_bouche_tian_errors_vanish() {
    let g = ModelGeometry::p1(2, 128).unwrap();
    let fam = MeasureFamily::anticanonical(&g, true).unwrap();
    let bt = bouche_tian_slope(&reference_weight(&g).unwrap(), &fam, &[4, 8, 16, 32]).unwrap();
    assert!(bt.errors.iter().all(|e| *e <= 1e-10), "{:?}", bt.errors);
    assert_eq!(bt.trimmed.len(), 4);
    assert!(bt.fit.is_none());
}

#[test]
fn double_scaling_at_time_zero_is_exact() {
    let g = torus(32);
    let rows = double_scaling(&bumpy(&g), &MeasureFamily::flat(&g), &[2, 4], 0.0, 1e-3).unwrap();
    assert!(rows.iter().all(|r| r.m == 0 && r.deviation == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fixed_measure_step_is_monotone(a in -0.1f64..0.1, b in -0.1f64..0.1, c in 0.0f64..0.3) {
        let g = torus(16);
        let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
        let q = Quantizer::new(&g, &fam, 2).unwrap();
        let phi = Weight::from_fn(g.clone(), |x, y| a * (2.0 * PI * x).cos() + b * (2.0 * PI * y).sin()).unwrap();
        let psi = Weight::from_fn(g.clone(), |x, y| {
            a * (2.0 * PI * x).cos() + b * (2.0 * PI * y).sin() + c * (1.0 + (2.0 * PI * (x - y)).cos()) / 2.0
        })
        .unwrap();
        let (sp, sq) = (q.bergman_step(&phi).unwrap(), q.bergman_step(&psi).unwrap());
        for (x, y) in sp.u().iter().zip(sq.u()) {
            prop_assert!(x <= &(y + 1e-12));
        }
        prop_assert!(sp.sup_distance(&sq) <= phi.sup_distance(&psi) + 1e-12);
    }

    #[test]
    fn bergman_mass_is_one_for_random_weights(a in -0.1f64..0.1, b in -0.1f64..0.1) {
        let g = torus(32);
        let fam = MeasureFamily::fixed(&g, mu0(&g)).unwrap();
        let w = Weight::from_fn(g.clone(), |x, y| a * (2.0 * PI * x).sin() + b * (2.0 * PI * (x + 2.0 * y)).cos()).unwrap();
        let mass = Quantizer::new(&g, &fam, 3).unwrap().bergman_mass(&w).unwrap();
        prop_assert!((mass - 1.0).abs() <= 1e-9);
    }
}

