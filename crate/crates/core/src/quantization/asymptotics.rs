//! Large-`k` measurements: the Bergman function rate and the double-scaling limit.

use crate::flow::{flow_step, FlowError, FlowState, Scheme};
use crate::functionals::{mu_of, MeasureFamily};
use crate::geometry::{ma_measure, sup_distance, Weight};
use crate::report::{power_fit, LinearFit};

use super::{iteration::symmetrize, QuantError, Quantizer};

/// Errors at or below this are dominated by quadrature and excluded from the fit.
const QUADRATURE_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct BoucheTian {
    pub ks: Vec<usize>,
    /// `sup|ρ^{(k)} − MA/(V μ_φ)|` for each entry of `ks`.
    pub errors: Vec<f64>,
    /// Fit over the levels above the quadrature floor; `None` with fewer than two.
    pub fit: Option<LinearFit>,
    pub trimmed: Vec<usize>,
}

/// `sup|ρ^{(k)}(φ) − MA(φ)/(V μ_φ)|` for each level.
pub fn bouche_tian_errors(phi: &Weight, fam: &MeasureFamily, ks: &[usize]) -> Result<Vec<f64>, QuantError> {
    let geom = phi.geometry();
    let ma = ma_measure(phi);
    let mu = mu_of(phi, fam)?;
    let v = geom.volume();
    let target: Vec<f64> = ma.values.iter().zip(&mu.values).map(|(a, m)| a / (v * m)).collect();
    ks.iter()
        .map(|&k| {
            let rho = Quantizer::new(geom, fam, k)?.bergman_function(phi)?;
            Ok(sup_distance(&rho.values, &target))
        })
        .collect()
}

/// Fit `log e_k` against `log k`, dropping levels whose error sits at the quadrature floor.
pub fn bouche_tian_slope(phi: &Weight, fam: &MeasureFamily, ks: &[usize]) -> Result<BoucheTian, QuantError> {
    let errors = bouche_tian_errors(phi, fam, ks)?;
    let (mut x, mut y, mut trimmed) = (vec![], vec![], vec![]);
    for (&k, &e) in ks.iter().zip(&errors) {
        if e > QUADRATURE_FLOOR {
            x.push(k as f64);
            y.push(e);
        } else {
            trimmed.push(k);
        }
    }
    let fit = (x.len() >= 2).then(|| power_fit(&x, &y));
    Ok(BoucheTian { ks: ks.to_vec(), errors, fit, trimmed })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleScalingRow {
    pub k: usize,
    pub m: usize,
    pub deviation: f64,
}

/// Compare `m = round(t_star·k)` Bergman steps with the flow at time `m/k`.
///
/// The flow is integrated once with the semi-implicit scheme and step `dt`, landing exactly on
/// every requested time.
pub fn double_scaling(
    phi0: &Weight,
    fam: &MeasureFamily,
    ks: &[usize],
    t_star: f64,
    dt: f64,
) -> Result<Vec<DoubleScalingRow>, QuantError> {
    let ms: Vec<usize> = ks.iter().map(|&k| (t_star * k as f64).round() as usize).collect();
    let mut times: Vec<(f64, usize)> = ks.iter().zip(&ms).enumerate().map(|(i, (&k, &m))| (m as f64 / k as f64, i)).collect();
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut flow_at = vec![None; ks.len()];
    let mut state = FlowState::new(phi0.clone(), fam.clone(), Scheme::SemiImplicit, dt);
    for (t, i) in times {
        while state.t < t - 1e-12 {
            let step = FlowState { dt: dt.min(t - state.t), ..state.clone() };
            state = FlowState { dt, ..flow_step(&step).map_err(flow_error)? };
        }
        flow_at[i] = Some(state.weight.clone());
    }
    ks.iter()
        .zip(&ms)
        .zip(flow_at)
        .map(|((&k, &m), reference)| {
            let q = Quantizer::new(phi0.geometry(), fam, k)?;
            let mut phi = phi0.clone();
            for _ in 0..m {
                phi = symmetrize(q.bergman_step(&phi)?)?;
            }
            let reference = reference.expect("every time is visited");
            Ok(DoubleScalingRow { k, m, deviation: sup_distance(phi.u(), reference.u()) })
        })
        .collect()
}

fn flow_error(e: FlowError) -> QuantError {
    match e {
        FlowError::Geometry(g) => QuantError::Geometry(g),
        FlowError::Functional(f) => QuantError::Functional(f),
        other => QuantError::Flow(other.to_string()),
    }
}
