use super::*;

fn cfg(pairs: &[(&str, &str)]) -> ExperimentConfig {
    ExperimentConfig::from_pairs(pairs).unwrap()
}

#[test]
fn power_fit_of_an_exact_inverse() {
    let x = [1.0, 2.0, 4.0, 8.0];
    let y: Vec<f64> = x.iter().map(|v| 4.0 / v).collect();
    let fit = fit_rate(&x, &y, RateModel::Power).unwrap();
    assert!((fit.slope + 1.0).abs() < 1e-12);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
}

#[test]
fn exponential_fit_of_an_exact_decay() {
    let x = [0.0f64, 0.5, 1.0, 1.5, 2.0];
    let y: Vec<f64> = x.iter().map(|v| (-2.0 * v).exp()).collect();
    let fit = fit_rate(&x, &y, RateModel::Exponential).unwrap();
    assert!((fit.slope + 2.0).abs() < 1e-12);
}

#[test]
fn degenerate_series_are_rejected() {
    assert_eq!(fit_rate(&[1.0, 2.0], &[1.0, 2.0], RateModel::Power), Err(FitError::TooFewPoints(2)));
    assert_eq!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], RateModel::Power), Err(FitError::NonPositive(1)));
    assert_eq!(fit_rate(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], RateModel::Exponential), Err(FitError::DegenerateX(false)));
    assert_eq!(fit_rate(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], RateModel::Power), Err(FitError::DegenerateX(true)));
    assert!(matches!("linear".parse::<RateModel>(), Err(FitError::UnknownModel(_))));
}

#[test]
fn negative_dt_is_a_schema_error() {
    let err = ExperimentConfig::from_pairs(&[("scenario", "flow"), ("dt", "-0.01")]).unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "dt"));
    assert_eq!(ExitCode::of_error(&RunError::Config(err)), ExitCode::ConfigurationError);
}

#[test]
fn schema_violations() {
    let bad = |pairs: &[(&str, &str)]| ExperimentConfig::from_pairs(pairs).unwrap_err();
    assert_eq!(bad(&[("dt", "0.1")]), ConfigError::Missing("scenario".into()));
    assert_eq!(bad(&[("scenario", "flow"), ("colour", "red")]), ConfigError::UnknownKey("colour".into()));
    assert!(matches!(bad(&[("scenario", "sideways")]), ConfigError::Invalid { .. }));
    assert!(matches!(bad(&[("scenario", "flow"), ("resolution", "15")]), ConfigError::Invalid { .. }));
    assert!(matches!(bad(&[("scenario", "flow"), ("measure", "anticanonical")]), ConfigError::Invalid { .. }));
    assert!(matches!(bad(&[("scenario", "psh-check"), ("geometry", "p1")]), ConfigError::Invalid { .. }));
    assert!(matches!(bad(&[("scenario", "bouche-tian"), ("ks", "8,x")]), ConfigError::Invalid { .. }));
    let e = ExperimentConfig::parse("scenario flow\n", Path::new(".")).unwrap_err();
    assert_eq!(e, ConfigError::Syntax { line: 1, text: "scenario flow".into() });
}

#[test]
fn defaults_are_echoed() {
    let c = cfg(&[("scenario", "bouche-tian")]);
    assert_eq!(c.ks, vec![8, 16, 32, 64]);
    assert_eq!(c.echo["ks"], "8,16,32,64");
    assert_eq!(c.echo["tol"], "1e-6");
    assert_eq!(c.output, PathBuf::from("bouche-tian"));
    let p = cfg(&[("scenario", "balanced"), ("geometry", "p1"), ("measure", "anticanonical-normalized")]);
    assert_eq!(p.degree, 2);
    assert_eq!(p.tol, 1e-10);
    assert_eq!(cfg(&[("scenario", "family-flow")]).geometry, GeometryKind::Family);
}

#[test]
fn includes_resolve_relative_and_later_keys_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("common")).unwrap();
    fs::write(dir.path().join("common/base.cfg"), "# shared\nresolution = 16\ndt = 0.5\n").unwrap();
    fs::write(dir.path().join("run.cfg"), "scenario = flow\ninclude = common/base.cfg\ndt = 0.02 # override\n").unwrap();
    let c = ExperimentConfig::load(&dir.path().join("run.cfg")).unwrap();
    assert_eq!((c.resolution, c.dt), (16, 0.02));

    fs::write(dir.path().join("a.cfg"), "include = b.cfg\n").unwrap();
    fs::write(dir.path().join("b.cfg"), "include = a.cfg\n").unwrap();
    assert!(matches!(ExperimentConfig::load(&dir.path().join("a.cfg")), Err(ConfigError::IncludeCycle(_))));
}

fn small_flow(dt: &str, t_end: &str) -> ExperimentConfig {
    cfg(&[
        ("scenario", "flow"),
        ("measure", "perturbed"),
        ("resolution", "16"),
        ("dt", dt),
        ("t_end", t_end),
        ("record_every", "1"),
    ])
}

#[test]
fn flow_scenario_reaches_the_fixed_point() {
    let report = run(&small_flow("0.05", "30")).unwrap();
    assert_eq!(ExitCode::of_report(&report), ExitCode::Pass, "{:?}", report.assertions);
    assert_eq!(report.assertion("F_mu nondecreasing").unwrap().status, Status::Pass);
    assert!(report.summary["sup_dist"] < 1e-6);
    assert!(report.summary["newton_residual"] <= 1e-12);
    assert_eq!(report.config["measure"], "perturbed");
}

#[test]
fn runs_are_byte_identical_and_round_trip_through_disk() {
    let c = small_flow("0.05", "1");
    let (a, b) = (run(&c).unwrap(), run(&c).unwrap());
    assert_eq!(series_csv(&a.series[0]).unwrap(), series_csv(&b.series[0]).unwrap());
    assert!(report_diff(&a, &b, 0.0).unwrap().is_empty());

    let dir = tempfile::tempdir().unwrap();
    let paths = write_outputs(&a, dir.path()).unwrap();
    assert_eq!(paths.len(), 2);
    let back = read_csv(&paths[0]).unwrap();
    assert_eq!(back, a.series[0]);
    let loaded = load_report(&paths[1]).unwrap();
    assert_eq!(loaded, a);
    let fit = fit_series(&back, Some("t"), Some("residual"), RateModel::Exponential).unwrap();
    assert!(fit.slope < 0.0);
}

#[test]
fn halving_dt_moves_the_endpoint_at_first_order() {
    let e = |dt: &str| run(&small_flow(dt, "0.5")).unwrap();
    let (a, b, c) = (e("0.02"), e("0.01"), e("0.005"));
    let d1 = report_diff(&a, &b, 0.0).unwrap();
    assert!(d1.config.iter().any(|x| x.key == "dt"));
    let gap = |x: &ExperimentReport, y: &ExperimentReport| (x.summary["residual"] - y.summary["residual"]).abs();
    let ratio = gap(&a, &b) / gap(&b, &c);
    assert!((1.6..2.4).contains(&ratio), "{ratio}");
    assert!(gap(&a, &c) <= 4.0 * gap(&b, &c));
}

#[test]
fn different_levels_give_a_structural_diff() {
    let base = [("scenario", "bergman"), ("resolution", "16"), ("m_max", "5")];
    let a = run(&cfg(&[base[0], base[1], base[2], ("k", "2")])).unwrap();
    let b = run(&cfg(&[base[0], base[1], base[2], ("k", "3")])).unwrap();
    let d = report_diff(&a, &b, 1e-12).unwrap();
    assert_eq!(d.config.iter().map(|x| x.key.as_str()).collect::<Vec<_>>(), ["k"]);
    assert_eq!(d.series, ["bergman"]);
    let other = run(&cfg(&[("scenario", "psh-check"), ("resolution", "8"), ("family_start", "flat")])).unwrap();
    assert!(report_diff(&a, &other, 0.0).is_err());
}

#[test]
fn scenario_failures_map_to_exit_codes() {
    let mut r = ExperimentReport::new("flow");
    r.check("x", true, "");
    assert_eq!(ExitCode::of_report(&r), ExitCode::Pass);
    r.check("y", false, "");
    assert_eq!(ExitCode::of_report(&r), ExitCode::AssertionFailure);
    r.failure = Some("positivity lost".into());
    assert_eq!(ExitCode::of_report(&r), ExitCode::NumericalFailure);
    let explicit = cfg(&[("scenario", "flow"), ("scheme", "explicit"), ("dt", "1"), ("resolution", "16")]);
    assert_eq!(ExitCode::of_report(&run(&explicit).unwrap()), ExitCode::NumericalFailure);
}

#[test]
fn family_scenarios_run() {
    let psh = run(&cfg(&[("scenario", "psh-check"), ("resolution", "16"), ("k", "2")])).unwrap();
    assert!(psh.passed(), "{:?}", psh.assertions);
    let twisted = cfg(&[
        ("scenario", "family-flow"),
        ("resolution", "16"),
        ("tau_slope_re", "0"),
        ("setting", "twisted"),
        ("family_start", "semi-positive"),
        ("t_end", "0.1"),
        ("record_every", "1"),
    ]);
    let r = run(&twisted).unwrap();
    assert!(r.passed(), "{:?}", r.assertions);
    assert_eq!(r.assertion("c becomes strictly positive").unwrap().status, Status::Pass);
}
