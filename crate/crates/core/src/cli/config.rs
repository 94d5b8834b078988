//! Flat `key = value` experiment configs with `include` and a typed schema.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use super::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Flow,
    Bergman,
    Balanced,
    DoubleScaling,
    BoucheTian,
    FamilyFlow,
    FamilyBergman,
    PshCheck,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Flow,
        ScenarioKind::Bergman,
        ScenarioKind::Balanced,
        ScenarioKind::DoubleScaling,
        ScenarioKind::BoucheTian,
        ScenarioKind::FamilyFlow,
        ScenarioKind::FamilyBergman,
        ScenarioKind::PshCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Flow => "flow",
            ScenarioKind::Bergman => "bergman",
            ScenarioKind::Balanced => "balanced",
            ScenarioKind::DoubleScaling => "double-scaling",
            ScenarioKind::BoucheTian => "bouche-tian",
            ScenarioKind::FamilyFlow => "family-flow",
            ScenarioKind::FamilyBergman => "family-bergman",
            ScenarioKind::PshCheck => "psh-check",
        }
    }

    pub fn is_family(self) -> bool {
        matches!(self, ScenarioKind::FamilyFlow | ScenarioKind::FamilyBergman | ScenarioKind::PshCheck)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeometryKind {
    Elliptic,
    P1,
    Family,
}

/// Fiber measure for single-fiber scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    Flat,
    /// Fixed measure `(1 + a cos 2πx)/Z`.
    Perturbed,
    Twisted { normalized: bool },
    AntiCanonical { normalized: bool },
}

/// Relative setting for family scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SettingKind {
    CalabiYau,
    Twisted { normalized: bool },
}

/// Starting family weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyStart {
    Flat,
    Hodge,
    /// `a Re(s) cos 2πx + κ|s|²` with `κ` chosen so that `min c = 0`.
    SemiPositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    SemiImplicit,
    Explicit,
}

/// Every key with its default, in echo order.
const DEFAULTS: &[(&str, &str)] = &[
    ("scenario", ""),
    ("geometry", "elliptic"),
    ("tau_re", "0"),
    ("tau_im", "1"),
    ("tau_slope_re", "1"),
    ("tau_slope_im", "0"),
    ("degree", "auto"),
    ("resolution", "32"),
    ("half_width", "2"),
    ("spacing", "0.05"),
    ("measure", "flat"),
    ("perturbation", "0.3"),
    ("initial_amplitude", "0.1"),
    ("setting", "cy"),
    ("family_start", "hodge"),
    ("k", "4"),
    ("ks", "auto"),
    ("t_end", "auto"),
    ("t_star", "1"),
    ("dt", "auto"),
    ("m_max", "auto"),
    ("tol", "auto"),
    ("scheme", "semi-implicit"),
    ("record_every", "10"),
    ("output", ""),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub geometry: GeometryKind,
    pub tau: Complex64,
    /// `τ(s) = tau + tau_slope·s` for families.
    pub tau_slope: Complex64,
    pub degree: usize,
    pub resolution: usize,
    pub half_width: usize,
    pub spacing: f64,
    pub measure: MeasureKind,
    pub perturbation: f64,
    pub initial_amplitude: f64,
    pub setting: SettingKind,
    pub family_start: FamilyStart,
    pub k: usize,
    pub ks: Vec<usize>,
    pub t_end: f64,
    pub t_star: f64,
    pub dt: f64,
    pub m_max: usize,
    pub tol: f64,
    pub scheme: SchemeKind,
    pub record_every: usize,
    /// Output directory, relative to the output root.
    pub output: PathBuf,
    /// Every key with defaults filled in.
    pub echo: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Read a config file, resolving includes relative to the including file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut raw = BTreeMap::new();
        read_into(path, &mut raw, &mut vec![])?;
        Self::from_map(raw)
    }

    /// Parse config text; includes resolve relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut raw = BTreeMap::new();
        parse_into(text, base, &mut raw, &mut vec![])?;
        Self::from_map(raw)
    }

    /// Build from explicit pairs, as if each were a line of a config file.
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Result<Self, ConfigError> {
        Self::from_map(pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }

    fn from_map(raw: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = raw.keys().find(|k| !DEFAULTS.iter().any(|(d, _)| d == k)) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let mut echo: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        echo.extend(raw);
        let get = |k: &str| echo[k].as_str();

        let scenario = match get("scenario") {
            "" => return Err(ConfigError::Missing("scenario".into())),
            s => ScenarioKind::ALL
                .into_iter()
                .find(|k| k.as_str() == s)
                .ok_or_else(|| invalid("scenario", s, "unknown scenario"))?,
        };
        if scenario.is_family() && !echo_is_set(&echo, "geometry") {
            echo.insert("geometry".into(), "family".into());
        }
        for (key, value) in scenario_defaults(scenario) {
            if echo[*key] == "auto" {
                echo.insert(key.to_string(), value.to_string());
            }
        }
        if echo["output"].is_empty() {
            echo.insert("output".into(), scenario.as_str().into());
        }
        let get = |k: &str| echo[k].as_str();

        let geometry = match get("geometry") {
            "elliptic" => GeometryKind::Elliptic,
            "p1" => GeometryKind::P1,
            "family" => GeometryKind::Family,
            g => return Err(invalid("geometry", g, "expected elliptic, p1 or family")),
        };
        if scenario.is_family() != (geometry == GeometryKind::Family) {
            return Err(invalid("geometry", get("geometry"), "family scenarios need geometry = family and vice versa"));
        }
        if echo["degree"] == "auto" {
            let d = if geometry == GeometryKind::P1 { "2" } else { "1" };
            echo.insert("degree".into(), d.into());
        }
        let get = |k: &str| echo[k].as_str();
        let measure = match get("measure") {
            "flat" => MeasureKind::Flat,
            "perturbed" => MeasureKind::Perturbed,
            "twisted" => MeasureKind::Twisted { normalized: false },
            "twisted-normalized" => MeasureKind::Twisted { normalized: true },
            "anticanonical" => MeasureKind::AntiCanonical { normalized: false },
            "anticanonical-normalized" => MeasureKind::AntiCanonical { normalized: true },
            m => return Err(invalid("measure", m, "unknown measure")),
        };
        let on_sphere = geometry == GeometryKind::P1;
        if on_sphere != matches!(measure, MeasureKind::AntiCanonical { .. }) {
            return Err(invalid("measure", get("measure"), "the anticanonical measure lives exactly on p1"));
        }
        let setting = match get("setting") {
            "cy" => SettingKind::CalabiYau,
            "twisted" => SettingKind::Twisted { normalized: false },
            "twisted-normalized" => SettingKind::Twisted { normalized: true },
            s => return Err(invalid("setting", s, "expected cy, twisted or twisted-normalized")),
        };
        let family_start = match get("family_start") {
            "flat" => FamilyStart::Flat,
            "hodge" => FamilyStart::Hodge,
            "semi-positive" => FamilyStart::SemiPositive,
            s => return Err(invalid("family_start", s, "expected flat, hodge or semi-positive")),
        };
        let scheme = match get("scheme") {
            "semi-implicit" => SchemeKind::SemiImplicit,
            "explicit" => SchemeKind::Explicit,
            s => return Err(invalid("scheme", s, "expected semi-implicit or explicit")),
        };

        let tau = Complex64::new(num(&echo, "tau_re")?, num(&echo, "tau_im")?);
        if !(tau.im > 0.0) {
            return Err(invalid("tau_im", get("tau_im"), "must be positive"));
        }
        let tau_slope = Complex64::new(num(&echo, "tau_slope_re")?, num(&echo, "tau_slope_im")?);
        let degree: usize = int(&echo, "degree")?;
        if degree == 0 || (on_sphere && degree != 2 && matches!(measure, MeasureKind::AntiCanonical { .. })) {
            return Err(invalid("degree", get("degree"), "must be positive, and 2 for the anticanonical sphere"));
        }
        let resolution: usize = int(&echo, "resolution")?;
        if !(8..=1024).contains(&resolution) || (!on_sphere && resolution % 2 == 1) {
            return Err(invalid("resolution", get("resolution"), "must be in 8..=1024 (even on the torus)"));
        }
        let half_width: usize = int(&echo, "half_width")?;
        if !(2..=20).contains(&half_width) {
            return Err(invalid("half_width", get("half_width"), "must be in 2..=20"));
        }
        let spacing = positive(&echo, "spacing")?;
        let perturbation = num(&echo, "perturbation")?;
        if !(perturbation.abs() < 1.0) {
            return Err(invalid("perturbation", get("perturbation"), "must lie in (-1, 1)"));
        }
        let initial_amplitude = num(&echo, "initial_amplitude")?;
        let k: usize = int(&echo, "k")?;
        if k == 0 {
            return Err(invalid("k", get("k"), "must be positive"));
        }
        let ks = get("ks")
            .split(',')
            .map(|s| s.trim().parse::<usize>().ok().filter(|k| *k > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid("ks", get("ks"), "expected a comma-separated list of positive integers"))?;
        let t_end = num(&echo, "t_end")?;
        if !(t_end >= 0.0) {
            return Err(invalid("t_end", get("t_end"), "must be nonnegative"));
        }
        let t_star = positive(&echo, "t_star")?;
        let dt = positive(&echo, "dt")?;
        let m_max: usize = int(&echo, "m_max")?;
        if m_max == 0 {
            return Err(invalid("m_max", get("m_max"), "must be positive"));
        }
        let tol = positive(&echo, "tol")?;
        let record_every: usize = int(&echo, "record_every")?;
        let output = PathBuf::from(get("output"));

        Ok(ExperimentConfig {
            scenario,
            geometry,
            tau,
            tau_slope,
            degree,
            resolution,
            half_width,
            spacing,
            measure,
            perturbation,
            initial_amplitude,
            setting,
            family_start,
            k,
            ks,
            t_end,
            t_star,
            dt,
            m_max,
            tol,
            scheme,
            record_every,
            output,
            echo,
        })
    }
}

/// Values substituted for `auto`.
fn scenario_defaults(s: ScenarioKind) -> &'static [(&'static str, &'static str)] {
    match s {
        ScenarioKind::Flow => &[("t_end", "30"), ("dt", "0.01"), ("tol", "1e-6"), ("m_max", "500"), ("ks", "8,16,32")],
        ScenarioKind::Bergman | ScenarioKind::Balanced => {
            &[("t_end", "0"), ("dt", "0.01"), ("tol", "1e-10"), ("m_max", "500"), ("ks", "8,16,32")]
        }
        ScenarioKind::DoubleScaling => {
            &[("t_end", "0"), ("dt", "0.001"), ("tol", "1e-6"), ("m_max", "500"), ("ks", "8,16,32")]
        }
        ScenarioKind::BoucheTian => {
            &[("t_end", "0"), ("dt", "0.01"), ("tol", "1e-6"), ("m_max", "500"), ("ks", "8,16,32,64")]
        }
        ScenarioKind::FamilyFlow => {
            &[("t_end", "0.2"), ("dt", "0.01"), ("tol", "1e-8"), ("m_max", "8"), ("ks", "8,16,32")]
        }
        ScenarioKind::FamilyBergman => {
            &[("t_end", "0"), ("dt", "0.01"), ("tol", "1e-6"), ("m_max", "8"), ("ks", "8,16,32")]
        }
        ScenarioKind::PshCheck => &[("t_end", "0"), ("dt", "0.01"), ("tol", "1e-8"), ("m_max", "8"), ("ks", "8,16,32")],
    }
}

fn echo_is_set(echo: &BTreeMap<String, String>, key: &str) -> bool {
    DEFAULTS.iter().find(|(k, _)| *k == key).is_some_and(|(_, d)| echo[key] != *d)
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid { key: key.into(), value: value.into(), reason: reason.into() }
}

fn parsed<T: FromStr>(echo: &BTreeMap<String, String>, key: &str, what: &str) -> Result<T, ConfigError> {
    echo[key].trim().parse().map_err(|_| invalid(key, &echo[key], what))
}

fn num(echo: &BTreeMap<String, String>, key: &str) -> Result<f64, ConfigError> {
    let v: f64 = parsed(echo, key, "expected a number")?;
    if v.is_finite() { Ok(v) } else { Err(invalid(key, &echo[key], "must be finite")) }
}

fn positive(echo: &BTreeMap<String, String>, key: &str) -> Result<f64, ConfigError> {
    let v = num(echo, key)?;
    if v > 0.0 { Ok(v) } else { Err(invalid(key, &echo[key], "must be positive")) }
}

fn int(echo: &BTreeMap<String, String>, key: &str) -> Result<usize, ConfigError> {
    parsed(echo, key, "expected a nonnegative integer")
}

fn read_into(path: &Path, out: &mut BTreeMap<String, String>, stack: &mut Vec<PathBuf>) -> Result<(), ConfigError> {
    let canonical = path
        .canonicalize()
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    if stack.contains(&canonical) {
        return Err(ConfigError::IncludeCycle(path.display().to_string()));
    }
    let text = std::fs::read_to_string(&canonical)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    stack.push(canonical.clone());
    let base = canonical.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_into(&text, &base, out, stack)?;
    stack.pop();
    Ok(())
}

fn parse_into(
    text: &str,
    base: &Path,
    out: &mut BTreeMap<String, String>,
    stack: &mut Vec<PathBuf>,
) -> Result<(), ConfigError> {
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: n + 1, text: line.into() });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: n + 1, text: line.into() });
        }
        if key == "include" {
            read_into(&base.join(value), out, stack)?;
        } else {
            out.insert(key.to_string(), value.to_string());
        }
    }
    Ok(())
}
