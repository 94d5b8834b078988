use std::f64::consts::PI;

use num_complex::Complex64;

use super::config::{ExperimentConfig, FamilyStart, GeometryKind, MeasureKind, SchemeKind, ScenarioKind, SettingKind};
use crate::family::{direct_image_psh_check, positivity_bergman, positivity_flow, FamilySetting, FamilyWeight};
use crate::flow::{flow_run, solve_fixed_point, FlowMonitors, FlowState, Scheme};
use crate::functionals::MeasureFamily;
use crate::geometry::{ModelGeometry, TauPolynomial, Weight};
use crate::quantization::{bouche_tian_slope, double_scaling, iterate, solve_balanced, IterationOptions, Quantizer};
use crate::report::{power_fit, ExperimentReport, Series};

/// Newton tolerance for the flow scenario's reference fixed point.
const NEWTON_TOL: f64 = 1e-12;

pub(super) fn execute(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    match cfg.scenario {
        ScenarioKind::Flow => flow(cfg),
        ScenarioKind::Bergman => bergman(cfg),
        ScenarioKind::Balanced => balanced(cfg),
        ScenarioKind::DoubleScaling => double_scaling_table(cfg),
        ScenarioKind::BoucheTian => bouche_tian(cfg),
        ScenarioKind::FamilyFlow => family_flow(cfg),
        ScenarioKind::FamilyBergman => family_bergman(cfg),
        ScenarioKind::PshCheck => psh_check(cfg),
    }
}

fn text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn fiber_geometry(cfg: &ExperimentConfig) -> Result<ModelGeometry, String> {
    let n = cfg.resolution;
    match cfg.geometry {
        GeometryKind::Elliptic => ModelGeometry::elliptic(cfg.tau, cfg.degree, n, n),
        GeometryKind::P1 => ModelGeometry::p1(cfg.degree, n),
        GeometryKind::Family => ModelGeometry::family(
            TauPolynomial::new(vec![cfg.tau, cfg.tau_slope]),
            cfg.degree,
            n,
            n,
            cfg.half_width,
            cfg.spacing,
        ),
    }
    .map_err(text)
}

fn measure(cfg: &ExperimentConfig, geom: &ModelGeometry) -> Result<MeasureFamily, String> {
    let a = cfg.perturbation;
    let bumped = || geom.sample(|x, _| 1.0 + a * (2.0 * PI * x).cos());
    match cfg.measure {
        MeasureKind::Flat => Ok(MeasureFamily::flat(geom)),
        MeasureKind::Perturbed => MeasureFamily::fixed(geom, bumped()),
        MeasureKind::Twisted { normalized } => MeasureFamily::twisted(geom, bumped(), normalized),
        MeasureKind::AntiCanonical { normalized } => MeasureFamily::anticanonical(geom, normalized),
    }
    .map_err(text)
}

/// `a cos 2πx`; on the sphere this is flip-symmetric in the moment coordinate.
fn initial(cfg: &ExperimentConfig, geom: &ModelGeometry) -> Result<Weight, String> {
    let a = cfg.initial_amplitude;
    Weight::from_fn(geom.clone(), |x, _| a * (2.0 * PI * x).cos()).map_err(text)
}

fn flow(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let geom = fiber_geometry(cfg)?;
    let fam = measure(cfg, &geom)?;
    let phi0 = initial(cfg, &geom)?;
    let newton = solve_fixed_point(&fam, &phi0, NEWTON_TOL);
    let scheme = match cfg.scheme {
        SchemeKind::SemiImplicit => Scheme::SemiImplicit,
        SchemeKind::Explicit => Scheme::Explicit,
    };
    let monitors = FlowMonitors {
        reference: newton.as_ref().ok().map(|r| r.weight.clone()),
        modulo_constants: matches!(fam, MeasureFamily::FixedMu(_)),
        record_every: cfg.record_every,
    };
    let run = flow_run(FlowState::new(phi0, fam, scheme, cfg.dt), cfg.t_end, &monitors);
    let mut report = run.report;
    match newton {
        Ok(r) => {
            report.summary.insert("newton_residual".into(), r.residual);
            report.summary.insert("newton_iterations".into(), r.iterations as f64);
            let dist = report.summary.get("sup_dist").copied().unwrap_or(f64::NAN);
            report.check("flow reaches the fixed point", dist <= cfg.tol, format!("sup distance {dist:e}"));
        }
        Err(e) => report.skip("flow reaches the fixed point", format!("no Newton reference: {e}")),
    }
    Ok(report)
}

fn bergman(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let geom = fiber_geometry(cfg)?;
    let fam = measure(cfg, &geom)?;
    let phi0 = initial(cfg, &geom)?;
    let q = Quantizer::new(&geom, &fam, cfg.k).map_err(text)?;
    let opts = IterationOptions { m_max: cfg.m_max, tol: cfg.tol, stop_when_balanced: true };
    let (trace, _) = iterate(&q, &phi0, opts).map_err(text)?;
    Ok(trace.report)
}

fn balanced(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let geom = fiber_geometry(cfg)?;
    let fam = measure(cfg, &geom)?;
    let phi0 = initial(cfg, &geom)?;
    let r = solve_balanced(&fam, cfg.k, &phi0, cfg.tol, cfg.m_max).map_err(text)?;
    let mut report = r.trace.report;
    report.scenario = "balanced".into();
    report.summary.insert("fixed_point_residual".into(), r.residual);
    report.check(
        "balanced fixed point",
        r.residual <= 2.0 * cfg.tol,
        format!("residual {:e} after {} steps", r.residual, r.trace.records.len()),
    );
    Ok(report)
}

fn double_scaling_table(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let geom = fiber_geometry(cfg)?;
    let fam = measure(cfg, &geom)?;
    let phi0 = initial(cfg, &geom)?;
    let rows = double_scaling(&phi0, &fam, &cfg.ks, cfg.t_star, cfg.dt).map_err(text)?;
    let mut report = ExperimentReport::new("double-scaling");
    let mut series = Series::new("double_scaling", &["k", "m", "deviation"]);
    for r in &rows {
        series.push(vec![r.k as f64, r.m as f64, r.deviation]);
    }
    let devs: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    let decreasing = devs.windows(2).all(|w| w[1] < w[0]);
    report.check("deviation decreases in k", decreasing, format!("{devs:?}"));
    if rows.len() >= 2 && devs.iter().all(|d| *d > 0.0) {
        let ks: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
        let fit = power_fit(&ks, &devs);
        report.summary.insert("slope".into(), fit.slope);
        report.summary.insert("r2".into(), fit.r2);
    }
    report.series.push(series);
    Ok(report)
}

fn bouche_tian(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let geom = fiber_geometry(cfg)?;
    let fam = measure(cfg, &geom)?;
    let phi0 = initial(cfg, &geom)?;
    let bt = bouche_tian_slope(&phi0, &fam, &cfg.ks).map_err(text)?;
    let mut report = ExperimentReport::new("bouche-tian");
    let mut series = Series::new("bouche_tian", &["k", "error"]);
    for (k, e) in bt.ks.iter().zip(&bt.errors) {
        series.push(vec![*k as f64, *e]);
    }
    report.series.push(series);
    report.summary.insert("trimmed".into(), bt.trimmed.len() as f64);
    match bt.fit {
        Some(fit) => {
            report.summary.insert("slope".into(), fit.slope);
            report.summary.insert("r2".into(), fit.r2);
            let ok = (-1.15..=-0.85).contains(&fit.slope) && fit.r2 >= 0.98;
            report.check("density error decays like 1/k", ok, format!("slope {:.4}, R² {:.4}", fit.slope, fit.r2));
        }
        None => report.skip("density error decays like 1/k", "fewer than two levels above the quadrature floor"),
    }
    Ok(report)
}

fn family_setting(cfg: &ExperimentConfig) -> FamilySetting {
    match cfg.setting {
        SettingKind::CalabiYau => FamilySetting::CalabiYau,
        SettingKind::Twisted { normalized } => FamilySetting::Twisted { normalized },
    }
}

fn family_start(cfg: &ExperimentConfig) -> Result<FamilyWeight, String> {
    let geom = fiber_geometry(cfg)?;
    let a = cfg.initial_amplitude;
    match cfg.family_start {
        FamilyStart::Flat => FamilyWeight::flat(geom),
        FamilyStart::Hodge => FamilyWeight::hodge_normalized(geom),
        FamilyStart::SemiPositive => FamilyWeight::from_fn(geom, |s: Complex64, x, _| a * s.re * (2.0 * PI * x).cos())
            .and_then(|fw| fw.with_min_curvature(0.0)),
    }
    .map_err(text)
}

fn family_flow(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let fw = family_start(cfg)?;
    let setting = family_setting(cfg);
    let mut report = positivity_flow(&fw, setting, cfg.dt, cfg.t_end, cfg.record_every).map_err(text)?;
    if let FamilySetting::Twisted { .. } = setting {
        const STRICT_BY: f64 = 0.1;
        let series = report.series("positivity").cloned().unwrap_or_else(|| Series::new("positivity", &[]));
        let late: Vec<f64> =
            series.rows.iter().filter(|r| r[0] >= STRICT_BY - 0.5 * cfg.dt).map(|r| r[1]).collect();
        if late.is_empty() {
            report.skip("c becomes strictly positive", format!("run ends before t = {STRICT_BY}"));
        } else {
            let min = late.iter().copied().fold(f64::INFINITY, f64::min);
            report.check("c becomes strictly positive", min > 0.0, format!("min c for t ≥ {STRICT_BY}: {min:e}"));
        }
    }
    Ok(report)
}

fn family_bergman(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let fw = family_start(cfg)?;
    positivity_bergman(&fw, family_setting(cfg), cfg.k, cfg.m_max).map_err(text)
}

fn psh_check(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    let fw = family_start(cfg)?;
    let chk = direct_image_psh_check(&fw, cfg.k).map_err(text)?;
    let mut report = ExperimentReport::new("psh-check");
    report.summary.insert("min_adjoint".into(), chk.min_adjoint);
    report.summary.insert("min_plain_margin".into(), chk.min_plain_margin);
    report.check(
        "adjoint kernel weight is s-subharmonic",
        chk.min_adjoint >= -cfg.tol,
        format!("min s-Laplacian {:e}", chk.min_adjoint),
    );
    report.check(
        "plain kernel weight within WP/k",
        chk.min_plain_margin >= -cfg.tol,
        format!("min margin {:e}", chk.min_plain_margin),
    );
    Ok(report)
}
