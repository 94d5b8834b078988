//! The Bergman iteration `φ ↦ FS(Hilb(φ))`, its monitors and the balanced solver.

use crate::functionals::{i_functional, MeasureFamily};
use crate::geometry::{sup_distance, ModelGeometry, Weight};
use crate::report::{nondecreasing, ExperimentReport, Series};

use super::{QuantError, Quantizer};

/// Default sup-change below which a weight counts as balanced.
pub const BALANCED_TOL: f64 = 1e-10;
/// Consecutive steps below tolerance required before stopping.
pub const CONFIRM_WINDOW: usize = 5;
const MONOTONE_SLACK: f64 = 1e-12;
/// Ratios are only measured while the previous change is above this; below it rounding
/// (about 1e-16 absolute) moves the ratio by more than 1e-7.
const RATIO_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationOptions {
    pub m_max: usize,
    pub tol: f64,
    /// Stop once balanced; otherwise always run `m_max` steps.
    pub stop_when_balanced: bool,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions { m_max: 500, tol: BALANCED_TOL, stop_when_balanced: true }
    }
}

/// State after step `m`; `l`, `j` are evaluated at `φ_{m}`, `sup_change = sup|φ_{m+1} − φ_m|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    pub sup_change: f64,
    pub l: f64,
    /// `L^{(k)}` of the normalized family minus its `I`; monotone in every setting.
    pub l_invariant: f64,
    pub i_mu: f64,
    pub j: f64,
    pub ratio: f64,
    pub balanced: bool,
}

#[derive(Clone, Debug)]
pub struct IterationTrace {
    pub k: usize,
    pub records: Vec<IterationRecord>,
    pub report: ExperimentReport,
}

impl IterationTrace {
    pub fn balanced_at(&self) -> Option<usize> {
        self.records.iter().find(|r| r.balanced).map(|r| r.m)
    }

    pub fn last_change(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.sup_change)
    }

    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

/// Per-step contraction factor the iteration is expected to respect, if any.
pub fn contraction_bound(fam: &MeasureFamily, k: usize) -> Option<f64> {
    let k = k as f64;
    match fam {
        MeasureFamily::FixedMu(_) => Some(1.0),
        MeasureFamily::CanonicalPlusTwisted { normalized: true, .. } => Some(1.0),
        MeasureFamily::CanonicalPlusTwisted { normalized: false, .. } => Some(1.0 - 1.0 / k),
        MeasureFamily::AntiCanonical { normalized: false } => Some(1.0 + 1.0 / k),
        MeasureFamily::AntiCanonical { normalized: true } => None,
    }
}

pub(crate) fn symmetrize(w: Weight) -> Result<Weight, QuantError> {
    match w.geometry() {
        ModelGeometry::P1Symmetric { grid, .. } => {
            let mut u = w.u().to_vec();
            grid.symmetrize(&mut u);
            Ok(w.with_u(u)?)
        }
        _ => Ok(w),
    }
}

/// Run the Bergman iteration from `phi0`, checking monotonicity and contraction at every step.
pub fn iterate(q: &Quantizer, phi0: &Weight, opts: IterationOptions) -> Result<(IterationTrace, Weight), QuantError> {
    let fam = q.family();
    let k = q.level();
    let normalized = fam.is_normalized();
    let norm_fam = fam.as_normalized();
    let mut report = ExperimentReport::new("bergman");
    report.config.insert("k".into(), k.to_string());
    report.config.insert("family".into(), fam.name().to_string());
    let mut series = Series::new("bergman", &["m", "sup_change", "L", "L_inv", "I_mu", "J", "ratio"]);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut phi = phi0.clone();
    let mut streak = 0usize;
    let mut cond_max = 0.0f64;
    for m in 0..opts.m_max {
        let h = q.hilb(&phi)?;
        cond_max = cond_max.max(h.condition_number());
        let next = symmetrize(q.fs(&h)?)?;
        let l = q.l_of_form(&h)?;
        let i_mu = i_functional(&phi, fam)?;
        let l_invariant = if normalized {
            l - i_mu
        } else {
            q.l_of_form(&q.hilb_normalized(&phi)?)? - i_functional(&phi, &norm_fam)?
        };
        let j = q.j_given_fs(&h, &next)?;
        let sup_change = sup_distance(next.u(), phi.u());
        let ratio = match records.last() {
            Some(prev) if prev.sup_change > RATIO_FLOOR => sup_change / prev.sup_change,
            _ => f64::NAN,
        };
        streak = if sup_change <= opts.tol { streak + 1 } else { 0 };
        series.push(vec![m as f64, sup_change, l, l_invariant, i_mu, j, ratio]);
        records.push(IterationRecord { m, sup_change, l, l_invariant, i_mu, j, ratio, balanced: false });
        phi = next;
        if opts.stop_when_balanced && streak >= CONFIRM_WINDOW {
            break;
        }
    }
    if streak > 0 {
        let n = records.len();
        for r in &mut records[n - streak..] {
            r.balanced = true;
        }
    }
    check_trace(&mut report, fam, k, &records);
    report.summary.insert("steps".into(), records.len() as f64);
    report.summary.insert("last_change".into(), records.last().map_or(f64::NAN, |r| r.sup_change));
    report.summary.insert("condition_max".into(), cond_max);
    report.series.push(series);
    Ok((IterationTrace { k, records, report }, phi))
}

fn check_trace(report: &mut ExperimentReport, fam: &MeasureFamily, k: usize, records: &[IterationRecord]) {
    let describe = |r: Result<(), (usize, f64)>| match r {
        Ok(()) => (true, String::new()),
        Err((i, d)) => (false, format!("drop {d:e} at step {i}")),
    };
    if fam.is_normalized() {
        let ls: Vec<f64> = records.iter().map(|r| r.l).collect();
        let (ok, d) = describe(nondecreasing(&ls, MONOTONE_SLACK));
        report.check("L nondecreasing", ok, d);
        let neg: Vec<f64> = records.iter().map(|r| -r.i_mu).collect();
        let (ok, d) = describe(nondecreasing(&neg, MONOTONE_SLACK));
        report.check("I_mu nonincreasing", ok, d);
    } else {
        report.skip("L nondecreasing", "non-normalized family: see L_inv");
        report.skip("I_mu nonincreasing", "non-normalized family");
    }
    let inv: Vec<f64> = records.iter().map(|r| r.l_invariant).collect();
    let (ok, d) = describe(nondecreasing(&inv, MONOTONE_SLACK));
    report.check("L_inv nondecreasing", ok, d);
    match contraction_bound(fam, k) {
        Some(bound) => {
            let worst = records.iter().filter(|r| r.ratio.is_finite()).map(|r| r.ratio).fold(0.0, f64::max);
            report.check("contraction", worst <= bound + 1e-6, format!("max ratio {worst:.6} vs {bound:.6}"));
            report.summary.insert("max_ratio".into(), worst);
        }
        None => report.skip("contraction", "no contraction factor for this family"),
    }
}

/// Balanced weight at level `k` together with its fixed-point residual.
#[derive(Clone, Debug)]
pub struct BalancedResult {
    pub weight: Weight,
    pub residual: f64,
    pub trace: IterationTrace,
}

/// Iterate to a balanced weight and verify `sup|step(φ) − φ| ≤ 2 tol`.
///
/// In normalized canonical settings the result is shifted to `I = 0`. The non-normalized
/// anticanonical iteration expands constants by `1 + 1/k`, so it is solved through the
/// normalized iteration and the unique `I = 0` representative.
pub fn solve_balanced(
    fam: &MeasureFamily,
    k: usize,
    init: &Weight,
    tol: f64,
    m_max: usize,
) -> Result<BalancedResult, QuantError> {
    let geom = init.geometry();
    let through_normalized = matches!(fam, MeasureFamily::AntiCanonical { normalized: false });
    let iter_fam = if through_normalized { fam.as_normalized() } else { fam.clone() };
    let q = Quantizer::new(geom, &iter_fam, k)?;
    let opts = IterationOptions { m_max, tol, stop_when_balanced: true };
    let (trace, mut phi) = iterate(&q, init, opts)?;
    if trace.balanced_at().is_none() {
        return Err(QuantError::NotBalanced(m_max));
    }
    let canonical = !matches!(fam, MeasureFamily::FixedMu(_));
    if canonical && (iter_fam.is_normalized()) {
        let i = i_functional(&phi, &iter_fam.as_normalized())?;
        phi = phi.shifted(-i);
    }
    let check = if through_normalized { Quantizer::new(geom, fam, k)? } else { q };
    let residual = sup_distance(symmetrize(check.bergman_step(&phi)?)?.u(), phi.u());
    if residual > 2.0 * tol {
        return Err(QuantError::NotBalanced(m_max));
    }
    Ok(BalancedResult { weight: phi, residual, trace })
}

/// Largest violation of `C_{m+1} − C_m = ∓(1/k) I_±(φ_m)` over `steps` steps, where `φ_m` is the
/// non-normalized iteration, `φ'_m` the normalized one from the same start and `C_m = φ_m − φ'_m`.
///
/// Also returns the largest spread of `φ_m − φ'_m` about its mean, which should vanish.
pub fn constant_dynamics_error(
    fam: &MeasureFamily,
    k: usize,
    init: &Weight,
    steps: usize,
) -> Result<(f64, f64), QuantError> {
    let sign = fam.sign();
    let norm = fam.as_normalized();
    let geom = init.geometry();
    let q = Quantizer::new(geom, fam, k)?;
    let qn = Quantizer::new(geom, &norm, k)?;
    let (mut a, mut b) = (init.clone(), init.clone());
    let (mut err, mut spread) = (0.0f64, 0.0f64);
    let mut c = 0.0;
    for _ in 0..steps {
        let i = i_functional(&a, &norm)?;
        a = symmetrize(q.bergman_step(&a)?)?;
        b = symmetrize(qn.bergman_step(&b)?)?;
        let diff: Vec<f64> = a.u().iter().zip(b.u()).map(|(x, y)| x - y).collect();
        let c_next = diff.iter().sum::<f64>() / diff.len() as f64;
        spread = spread.max(diff.iter().fold(0.0, |m, d| m.max((d - c_next).abs())));
        err = err.max((c_next - c + sign * i / k as f64).abs());
        c = c_next;
    }
    Ok((err, spread))
}
