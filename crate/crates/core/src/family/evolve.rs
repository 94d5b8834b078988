//! Fiberwise flows and Bergman iterations over the base lattice and the relative quantities
//! measured along them.

use super::jets::{diagnostics, node_jets, reference_jets, TauJet};
use super::{FamilyError, FamilySetting, FamilyWeight};
use crate::flow::{flow_step, FlowState, Scheme};
use crate::geometry::{ModelGeometry, Weight};
use crate::functionals::MeasureFamily;
use crate::quantization::Quantizer;
use crate::report::{nondecreasing, ExperimentReport, Series};

/// One semi-implicit flow step of every fiber.
pub fn family_flow_step(fw: &FamilyWeight, setting: FamilySetting, dt: f64) -> Result<FamilyWeight, FamilyError> {
    let fibers = (0..fw.fibers().len())
        .map(|n| {
            let w = fw.fiber_weight(n)?;
            let fam = setting.measure(w.geometry())?;
            let next = flow_step(&FlowState::new(w, fam, Scheme::SemiImplicit, dt))?;
            Ok(next.weight.into_u())
        })
        .collect::<Result<Vec<_>, FamilyError>>()?;
    fw.with_fibers(fibers)
}

/// One Bergman step of every fiber at level `k`.
pub fn family_bergman_step(fw: &FamilyWeight, setting: FamilySetting, k: usize) -> Result<FamilyWeight, FamilyError> {
    let qs = quantizers(fw, setting, k)?;
    bergman_with(fw, &qs)
}

fn quantizers(fw: &FamilyWeight, setting: FamilySetting, k: usize) -> Result<Vec<Quantizer>, FamilyError> {
    (0..fw.fibers().len())
        .map(|n| {
            let g = fw.fiber_geometry(n)?;
            let fam = setting.measure(&g)?;
            Ok(Quantizer::new(&g, &fam, k)?)
        })
        .collect()
}

fn bergman_with(fw: &FamilyWeight, qs: &[Quantizer]) -> Result<FamilyWeight, FamilyError> {
    let fibers = qs
        .iter()
        .enumerate()
        .map(|(n, q)| Ok(q.bergman_step(&Weight::new(q.geometry().clone(), fw.fibers()[n].clone())?)?.into_u()))
        .collect::<Result<Vec<_>, FamilyError>>()?;
    fw.with_fibers(fibers)
}

/// Residual of the heat equation for `c(φ_t)` at the middle of three consecutive snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatResidual {
    pub nodes: Vec<usize>,
    pub field: Vec<Vec<f64>>,
    pub sup: f64,
    /// Sup over the fiber above `s = 0`.
    pub center: f64,
}

/// `∂_t c − Δ_ω c − |A|² + ‖A_harm‖²`, plus in the twisted setting the zero-order terms
/// `+ c − H(φ₀) (+ ∂_s∂_s̄ I)` produced by `μ_φ = e^{φ − φ₀}` (`H` the horizontal Laplacian).
///
/// `drop_c_term` removes the `+c` term only, as a control.
pub fn heat_residual(
    snaps: &[FamilyWeight],
    dt: f64,
    setting: FamilySetting,
    drop_c_term: bool,
) -> Result<HeatResidual, FamilyError> {
    let [prev, mid, next] = snaps else {
        return Err(FamilyError::SnapshotMismatch);
    };
    if prev.geometry() != mid.geometry() || next.geometry() != mid.geometry() {
        return Err(FamilyError::SnapshotMismatch);
    }
    let fam = mid.family();
    let grid = &fam.grid;
    let nx = grid.nx();
    let d = fam.degree as f64;
    let h = fam.spacing;
    let side = mid.side();
    let diag = diagnostics(mid)?;
    let base_i: Vec<f64> = mid
        .fibers()
        .iter()
        .map(|u| (u.iter().map(|v| v.exp()).sum::<f64>() / u.len() as f64).ln())
        .collect();
    let mut field = Vec::with_capacity(diag.nodes.len());
    for (k, &n) in diag.nodes.iter().enumerate() {
        let t = TauJet::at(&fam.tau, diag.s[k]);
        let jp = node_jets(next, n, true)?.c();
        let jm = node_jets(prev, n, true)?.c();
        let c = &diag.c[k];
        let j = &diag.jets[k];
        let (cxx, cxy, cyy) = (grid.spectral_partial(c, 2, 0), grid.spectral_partial(c, 1, 1), grid.spectral_partial(c, 0, 2));
        let mut r: Vec<f64> = (0..grid.len())
            .map(|i| {
                let lap = t.zzbar(cxx[i], cxy[i], cyy[i]) / j.phi_zz[i];
                (jp[i] - jm[i]) / (2.0 * dt) - lap - diag.a_norm2[k][i] + t.harmonic_norm2()
            })
            .collect();
        if let FamilySetting::Twisted { normalized } = setting {
            let h0 = j.horizontal(&reference_jets(&t, d, (0..grid.len()).map(|i| grid.y(i / nx))));
            let i_ss = if normalized {
                let f = |o: isize| base_i[(n as isize + o) as usize];
                let s = side as isize;
                (f(1) + f(-1) + f(s) + f(-s) - 4.0 * f(0)) / (4.0 * h * h)
            } else {
                0.0
            };
            for i in 0..r.len() {
                let c_term = if drop_c_term { 0.0 } else { c[i] };
                r[i] += c_term - h0[i] + i_ss;
            }
        }
        field.push(r);
    }
    let sup_of = |f: &Vec<f64>| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup = field.iter().map(sup_of).fold(0.0, f64::max);
    let center = diag.position(mid.center()).map_or(f64::NAN, |k| sup_of(&field[k]));
    Ok(HeatResidual { nodes: diag.nodes, field, sup, center })
}

const FLOW_POSITIVITY_TOL: f64 = 1e-8;
const BERGMAN_POSITIVITY_TOL: f64 = 1e-6;

/// Minimum of `c` and of `c + weight·WP` over the interior nodes.
fn min_c_and_bound(fw: &FamilyWeight, weight: f64) -> Result<(f64, f64), FamilyError> {
    let diag = diagnostics(fw)?;
    let mut min_c = f64::INFINITY;
    let mut min_b = f64::INFINITY;
    for (k, c) in diag.c.iter().enumerate() {
        for &v in c {
            min_c = min_c.min(v);
            min_b = min_b.min(v + weight * diag.wp_harmonic[k]);
        }
    }
    Ok((min_c, min_b))
}

/// Flow every fiber to `t_end`, tracking `min c(φ_t)` and `min (c(φ_t) + t·WP)`.
pub fn positivity_flow(
    fw0: &FamilyWeight,
    setting: FamilySetting,
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<ExperimentReport, FamilyError> {
    let mut report = ExperimentReport::new("family-flow");
    let mut series = Series::new("positivity", &["t", "min_c", "min_bound"]);
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let every = record_every.max(1);
    let mut fw = fw0.clone();
    let mut t = 0.0;
    for step in 0..=steps {
        if step % every == 0 || step == steps {
            let (c, b) = min_c_and_bound(&fw, t)?;
            series.push(vec![t, c, b]);
        }
        if step == steps {
            break;
        }
        let h = dt.min(t_end - t);
        match family_flow_step(&fw, setting, h) {
            Ok(next) => fw = next,
            Err(e) => {
                report.failure = Some(e.to_string());
                break;
            }
        }
        t += h;
    }
    let bounds = series.column("min_bound").unwrap_or_default();
    let worst = bounds.iter().cloned().fold(f64::INFINITY, f64::min);
    report.check("c + t WP >= -tol", worst >= -FLOW_POSITIVITY_TOL, format!("min {worst:e}"));
    let mins = series.column("min_c").unwrap_or_default();
    if fw0.family().tau.is_constant() && setting == FamilySetting::CalabiYau {
        let ok = nondecreasing(&mins, FLOW_POSITIVITY_TOL);
        report.check("min c nondecreasing", ok.is_ok(), ok.err().map_or(String::new(), |(i, d)| format!("drop {d:e} at {i}")));
    } else {
        report.skip("min c nondecreasing", "only asserted for the trivial Calabi-Yau family");
    }
    if let (Some(first), Some(last)) = (mins.first(), mins.last()) {
        report.summary.insert("min_c_initial".into(), *first);
        report.summary.insert("min_c_final".into(), *last);
    }
    report.summary.insert("min_bound".into(), worst);
    report.series.push(series);
    Ok(report)
}

/// Run `m_max` Bergman steps on every fiber, checking `min c(φ_m) + (m/k)·WP ≥ −tol`.
pub fn positivity_bergman(
    fw0: &FamilyWeight,
    setting: FamilySetting,
    k: usize,
    m_max: usize,
) -> Result<ExperimentReport, FamilyError> {
    let mut report = ExperimentReport::new("family-bergman");
    report.config.insert("k".into(), k.to_string());
    let mut series = Series::new("positivity", &["m", "min_c", "min_bound"]);
    let qs = quantizers(fw0, setting, k)?;
    let mut fw = fw0.clone();
    for m in 0..=m_max {
        let (c, b) = min_c_and_bound(&fw, m as f64 / k as f64)?;
        series.push(vec![m as f64, c, b]);
        if m < m_max {
            fw = bergman_with(&fw, &qs)?;
        }
    }
    let worst = series.column("min_bound").unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min);
    report.check("c + (m/k) WP >= -tol", worst >= -BERGMAN_POSITIVITY_TOL, format!("min {worst:e}"));
    report.summary.insert("min_bound".into(), worst);
    report.series.push(series);
    Ok(report)
}

/// Outcome of the plurisubharmonicity check of Bergman-kernel weights along the base.
#[derive(Clone, Debug, PartialEq)]
pub struct PshCheck {
    /// `FS ∘ Hilb` for `kL + K`: the norm `∫ |f|² e^{−kφ} i dz∧dz̄ = 2 Im τ · Hilb`.
    pub adjoint: FamilyWeight,
    /// `FS ∘ Hilb` with the unit-mass area.
    pub plain: FamilyWeight,
    /// Minimum of `∂_s∂_s̄` at fixed `z` of the adjoint output.
    pub min_adjoint: f64,
    /// Minimum of `∂_s∂_s̄` of the plain output plus `WP/k`.
    pub min_plain_margin: f64,
}

pub fn direct_image_psh_check(fw: &FamilyWeight, k: usize) -> Result<PshCheck, FamilyError> {
    let mut adjoint = Vec::with_capacity(fw.fibers().len());
    let mut plain = Vec::with_capacity(fw.fibers().len());
    for n in 0..fw.fibers().len() {
        let g: ModelGeometry = fw.fiber_geometry(n)?;
        let q = Quantizer::new(&g, &MeasureFamily::flat(&g), k)?;
        let h = q.hilb(&fw.fiber_weight(n)?)?;
        let two_v = 2.0 * fw.family().tau.eval(fw.node_s(n)).im;
        plain.push(q.fs(&h)?.into_u());
        adjoint.push(q.fs(&h.scaled(two_v))?.into_u());
    }
    let adjoint = fw.with_fibers(adjoint)?;
    let plain = fw.with_fibers(plain)?;
    let (mut min_adjoint, mut min_plain_margin) = (f64::INFINITY, f64::INFINITY);
    for n in fw.interior() {
        let wp = TauJet::at(&fw.family().tau, fw.node_s(n)).harmonic_norm2();
        for v in node_jets(&adjoint, n, true)?.phi_ss {
            min_adjoint = min_adjoint.min(v);
        }
        for v in node_jets(&plain, n, true)?.phi_ss {
            min_plain_margin = min_plain_margin.min(v + wp / k as f64);
        }
    }
    Ok(PshCheck { adjoint, plain, min_adjoint, min_plain_margin })
}

