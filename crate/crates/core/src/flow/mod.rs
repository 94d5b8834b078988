//! Time stepping for the weight-level flow `∂φ/∂t = log(MA(φ) / (V μ_φ))`
//! and a Newton solver for its fixed points.

mod newton;

pub use newton::{solve_fixed_point, FixedPointResult};

use thiserror::Error;

use crate::functionals::{energy_e, i_functional, mu_of, FunctionalError, MeasureFamily};
use crate::geometry::{ma_measure, GeometryError, ModelGeometry, Weight};
use crate::report::{nondecreasing, ExperimentReport, Series};

/// Relative slack allowed in per-step monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("weight is not fiber positive (min MA density {margin:e})")]
    PositivityLoss { margin: f64 },
    #[error("explicit step dt = {dt:e} exceeds the stability bound {bound:e}")]
    UnstableStep { dt: f64, bound: f64 },
    #[error("Newton iteration stalled after {iterations} steps at residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    SemiImplicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub weight: Weight,
    pub t: f64,
    pub dt: f64,
    pub family: MeasureFamily,
    pub scheme: Scheme,
}

impl FlowState {
    pub fn new(weight: Weight, family: MeasureFamily, scheme: Scheme, dt: f64) -> Self {
        FlowState { weight, t: 0.0, dt, family, scheme }
    }
}

/// Velocity `log(MA/(V μ_φ))` at every node.
pub fn velocity(w: &Weight, fam: &MeasureFamily) -> Result<Vec<f64>, FlowError> {
    let ma = ma_measure(w);
    let min = ma.min();
    if !(min > 0.0) {
        return Err(FlowError::PositivityLoss { margin: min });
    }
    let v = w.geometry().volume();
    let mu = mu_of(w, fam)?;
    Ok(ma.values.iter().zip(&mu.values).map(|(a, m)| (a / (v * m)).ln()).collect())
}

/// Sup-norm of the velocity, i.e. of the Monge–Ampère residual.
pub fn residual(w: &Weight, fam: &MeasureFamily) -> Result<f64, FlowError> {
    Ok(velocity(w, fam)?.iter().fold(0.0, |m, v| m.max(v.abs())))
}

fn symmetric(geom: &ModelGeometry) -> bool {
    matches!(geom, ModelGeometry::P1Symmetric { .. })
}

/// Advance by one step of size `state.dt`.
///
/// The semi-implicit scheme linearizes `log MA` and solves
/// `(MA − dt·dd^c) δ = dt·MA·log(MA/(Vμ))`; zero-order terms stay explicit.
pub fn flow_step(state: &FlowState) -> Result<FlowState, FlowError> {
    let w = &state.weight;
    let geom = w.geometry();
    let g = velocity(w, &state.family)?;
    let min_ma = w.fiber_margin();
    let dt = state.dt;
    let delta = match state.scheme {
        Scheme::Explicit => {
            let bound = geom.explicit_dt_bound(min_ma);
            if dt > bound {
                return Err(FlowError::UnstableStep { dt, bound });
            }
            g.iter().map(|v| dt * v).collect::<Vec<_>>()
        }
        Scheme::SemiImplicit => {
            let ma = ma_measure(w).values;
            let coef: Vec<f64> = ma.iter().map(|m| m / dt).collect();
            let rhs: Vec<f64> = ma.iter().zip(&g).map(|(m, v)| m * v).collect();
            newton::pcg_shifted(geom, &coef, &rhs)
        }
    };
    let mut u: Vec<f64> = w.u().iter().zip(&delta).map(|(a, b)| a + b).collect();
    if symmetric(geom) {
        geom.line_grid().unwrap().symmetrize(&mut u);
    }
    let next = w.with_u(u)?;
    let margin = next.fiber_margin();
    if !(margin > 0.0) {
        return Err(FlowError::PositivityLoss { margin });
    }
    Ok(FlowState { weight: next, t: state.t + dt, ..state.clone() })
}

/// What to record along a run.
#[derive(Clone, Debug, Default)]
pub struct FlowMonitors {
    /// Weight to measure `sup|φ_t − φ_ref|` against.
    pub reference: Option<Weight>,
    /// Compare with the reference after removing the difference of means.
    pub modulo_constants: bool,
    /// Record every n-th step (and always the last); 0 means every step.
    pub record_every: usize,
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub state: FlowState,
    pub report: ExperimentReport,
}

pub(crate) fn distance_to(w: &Weight, reference: &Weight, modulo_constants: bool) -> f64 {
    let geom = w.geometry();
    let shift = if modulo_constants { geom.integrate(w.u()) - geom.integrate(reference.u()) } else { 0.0 };
    w.u().iter().zip(reference.u()).fold(0.0, |m, (a, b)| m.max((a - b - shift).abs()))
}

/// Integrate to `t_end`, recording functionals and checking their monotonicity.
///
/// A numerical failure truncates the report and sets its failure flag.
pub fn flow_run(state: FlowState, t_end: f64, monitors: &FlowMonitors) -> FlowRun {
    let mut report = ExperimentReport::new("flow");
    let mut series = Series::new("flow", &["t", "E", "I_mu", "F_mu", "sup_dist", "residual", "min_ma"]);
    let v = state.weight.geometry().volume();
    let normalized = state.family.is_normalized();
    let (mut es, mut is, mut fs) = (vec![], vec![], vec![]);
    let mut state = state;
    let every = monitors.record_every.max(1);
    let mut step = 0usize;
    let n_steps = ((t_end - state.t) / state.dt - 1e-9).ceil().max(0.0) as usize;
    loop {
        let w = &state.weight;
        let e = energy_e(w);
        let i = match i_functional(w, &state.family) {
            Ok(i) => i,
            Err(err) => {
                report.failure = Some(err.to_string());
                break;
            }
        };
        es.push(e);
        is.push(i);
        fs.push(e / v - i);
        let last = step == n_steps;
        if step % every == 0 || last {
            let dist = monitors
                .reference
                .as_ref()
                .map_or(f64::NAN, |r| distance_to(w, r, monitors.modulo_constants));
            let res = residual(w, &state.family).unwrap_or(f64::NAN);
            series.push(vec![state.t, e, i, e / v - i, dist, res, w.fiber_margin()]);
        }
        if last {
            break;
        }
        let remaining = t_end - state.t;
        let trial = if remaining < state.dt { FlowState { dt: remaining, ..state.clone() } } else { state.clone() };
        match flow_step(&trial) {
            Ok(next) => state = FlowState { dt: state.dt, ..next },
            Err(err) => {
                report.failure = Some(err.to_string());
                break;
            }
        }
        step += 1;
    }
    let describe = |r: Result<(), (usize, f64)>| match r {
        Ok(()) => (true, String::new()),
        Err((i, d)) => (false, format!("drop {d:e} at step {i}")),
    };
    let (ok, d) = describe(nondecreasing(&fs, MONOTONE_SLACK));
    report.check("F_mu nondecreasing", ok, d);
    if normalized {
        let (ok, d) = describe(nondecreasing(&es, MONOTONE_SLACK));
        report.check("E nondecreasing", ok, d);
        let neg: Vec<f64> = is.iter().map(|v| -v).collect();
        let (ok, d) = describe(nondecreasing(&neg, MONOTONE_SLACK));
        report.check("I_mu nonincreasing", ok, d);
    } else {
        report.skip("E nondecreasing", "non-normalized family");
        report.skip("I_mu nonincreasing", "non-normalized family");
    }
    if let Some(last) = series.rows.last() {
        report.summary.insert("t_final".into(), last[0]);
        report.summary.insert("sup_dist".into(), last[4]);
        report.summary.insert("residual".into(), last[5]);
    }
    report.series.push(series);
    FlowRun { state, report }
}
