//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. Every key may appear once per file; `--set`
//! overrides are applied afterwards in order. Parsing errors name the file
//! and line, or the override, and the offending field.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use dqpt_core::dqpt::ClassifierParams;
use dqpt_core::evolution::EvolutionParams;
use dqpt_core::imps::ProductState;
use dqpt_core::models::{named_initial_state, Pauli, SpinModel, TrotterOrder};
use dqpt_core::numerics::c;
use dqpt_core::observables::MAX_CORRELATOR_DISTANCE;
use dqpt_core::oracle::ED_MAX_SITES;

/// Largest site label usable in a mutual-information region.
pub const MAX_REGION_SITE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// `file:line`, `--set`, or the field list of the resolved config.
    pub location: String,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{}: field `{field}`: {}", self.location, self.message),
            None => write!(f, "{}: {}", self.location, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Evolve,
    Ansatz,
    Ed,
    Analyze,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Evolve => "evolve",
            Mode::Ansatz => "ansatz",
            Mode::Ed => "ed",
            Mode::Analyze => "analyze",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "evolve" => Ok(Mode::Evolve),
            "ansatz" => Ok(Mode::Ansatz),
            "ed" => Ok(Mode::Ed),
            "analyze" => Ok(Mode::Analyze),
            _ => Err(format!("expected evolve, ansatz, ed or analyze, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnsatzKind {
    /// Precession for `down`, entanglement for `right`.
    Auto,
    Precession,
    Entanglement,
}

impl AnsatzKind {
    pub fn label(self) -> &'static str {
        match self {
            AnsatzKind::Auto => "auto",
            AnsatzKind::Precession => "precession",
            AnsatzKind::Entanglement => "entanglement",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(AnsatzKind::Auto),
            "precession" => Ok(AnsatzKind::Precession),
            "entanglement" => Ok(AnsatzKind::Entanglement),
            _ => Err(format!("expected auto, precession or entanglement, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ising,
    Xxz,
}

/// `C_ab_d<distance>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrelatorSpec {
    pub a: Pauli,
    pub b: Pauli,
    pub distance: usize,
}

impl CorrelatorSpec {
    pub fn column(&self) -> String {
        format!("C_{}{}_d{}", self.a.label(), self.b.label(), self.distance)
    }

    fn token(&self) -> String {
        format!("{}{}:{}", self.a.label(), self.b.label(), self.distance)
    }
}

/// Two regions given by 1-based site labels relative to an A-sublattice
/// origin, e.g. `12:3` for sites {1, 2} against site {3}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPair {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl RegionPair {
    pub fn column(&self) -> String {
        format!("MI_{}__{}", digits(&self.a), digits(&self.b))
    }

    fn token(&self) -> String {
        format!("{}:{}", digits(&self.a), digits(&self.b))
    }

    /// 0-based sites of region A and B.
    pub fn sites(&self) -> (Vec<usize>, Vec<usize>) {
        (self.a.iter().map(|s| s - 1).collect(), self.b.iter().map(|s| s - 1).collect())
    }
}

fn digits(sites: &[usize]) -> String {
    sites.iter().map(|s| s.to_string()).collect()
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub mode: Mode,
    pub family: Family,
    pub j: f64,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    pub hx: f64,
    pub hz: f64,
    /// A state name, or four numbers `up_re, up_im, down_re, down_im`.
    pub initial_state: String,
    pub dt: f64,
    pub t_max: f64,
    pub chi_max: usize,
    pub sv_threshold: f64,
    pub trotter_order: u32,
    pub spectrum_depth: usize,
    pub correlators: Vec<CorrelatorSpec>,
    pub mutual_information: Vec<RegionPair>,
    pub classify_window: f64,
    pub classify_gap_threshold: f64,
    pub classify_overlap_threshold: f64,
    pub truncate_to_chi2: bool,
    pub ansatz: AnsatzKind,
    pub ed_sites: usize,
}

/// Keys in echo order.
pub const KEYS: &[&str] = &[
    "name",
    "mode",
    "model",
    "j",
    "jx",
    "jy",
    "jz",
    "hx",
    "hz",
    "initial_state",
    "dt",
    "t_max",
    "chi_max",
    "sv_threshold",
    "trotter_order",
    "spectrum_depth",
    "correlators",
    "mutual_information",
    "classify_window",
    "classify_gap_threshold",
    "classify_overlap_threshold",
    "truncate_to_chi2",
    "ansatz",
    "ed_sites",
];

/// Keys holding a single number, which a sweep may vary.
pub const SCALAR_KEYS: &[&str] = &[
    "j",
    "jx",
    "jy",
    "jz",
    "hx",
    "hz",
    "dt",
    "t_max",
    "chi_max",
    "sv_threshold",
    "trotter_order",
    "spectrum_depth",
    "classify_window",
    "classify_gap_threshold",
    "classify_overlap_threshold",
    "ed_sites",
];

const ISING_ONLY: &[&str] = &["j"];
const XXZ_ONLY: &[&str] = &["jx", "jy", "jz"];

/// Raw key/value pairs with where each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, (String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (k, line) in text.lines().enumerate() {
            let location = format!("{source}:{}", k + 1);
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
                location: location.clone(),
                field: None,
                message: format!("expected `key = value`, got '{content}'"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            check_key(&key, &location)?;
            if let Some((_, first)) = raw.values.get(&key) {
                return Err(ConfigError { location, field: Some(key), message: format!("repeated; first set at {first}") });
            }
            raw.values.insert(key, (value.trim().to_string(), location));
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            location: path.display().to_string(),
            field: None,
            message: format!("cannot read: {e}"),
        })?;
        let mut raw = Self::parse(&text, &path.display().to_string())?;
        if !raw.values.contains_key("name") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
            raw.values.insert("name".into(), (stem, format!("{} (file name)", path.display())));
        }
        Ok(raw)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let location = format!("--set {assignment}");
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError {
            location: location.clone(),
            field: None,
            message: "expected key=value".into(),
        })?;
        let key = key.trim().to_ascii_lowercase();
        check_key(&key, &location)?;
        self.values.insert(key, (value.trim().to_string(), location));
        Ok(())
    }

    pub fn set_value(&mut self, key: &str, value: &str, location: &str) -> Result<(), ConfigError> {
        check_key(key, location)?;
        self.values.insert(key.to_string(), (value.to_string(), location.to_string()));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<(&str, &str)> {
        self.values.get(key).map(|(v, l)| (v.as_str(), l.as_str()))
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let fail = |key: &str, location: &str, message: String| ConfigError { location: location.to_string(), field: Some(key.to_string()), message };
        let num = |key: &str, default: f64| -> Result<f64, ConfigError> {
            match self.get(key) {
                None => Ok(default),
                Some((v, loc)) => match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(fail(key, loc, format!("expected a finite number, got '{v}'"))),
                },
            }
        };
        let count = |key: &str, default: usize| -> Result<usize, ConfigError> {
            match self.get(key) {
                None => Ok(default),
                Some((v, loc)) => v.parse::<usize>().map_err(|_| fail(key, loc, format!("expected a non-negative integer, got '{v}'"))),
            }
        };
        let text = |key: &str, default: &str| -> String { self.get(key).map(|(v, _)| v.to_string()).unwrap_or_else(|| default.to_string()) };
        let loc = |key: &str| self.get(key).map(|(_, l)| l.to_string()).unwrap_or_else(|| "defaults".to_string());

        let family = match self.get("model") {
            None => return Err(ConfigError { location: "config".into(), field: Some("model".into()), message: "is required (ising or xxz)".into() }),
            Some(("ising", _)) => Family::Ising,
            Some(("xxz", _)) => Family::Xxz,
            Some((other, l)) => return Err(fail("model", l, format!("expected ising or xxz, got '{other}'"))),
        };
        let foreign = if family == Family::Ising { XXZ_ONLY } else { ISING_ONLY };
        for key in foreign {
            if let Some((_, l)) = self.get(key) {
                return Err(fail(key, l, format!("does not apply to the {} model", text("model", ""))));
            }
        }
        let mode = Mode::parse(&text("mode", "evolve")).map_err(|m| fail("mode", &loc("mode"), m))?;
        let ansatz = AnsatzKind::parse(&text("ansatz", "auto")).map_err(|m| fail("ansatz", &loc("ansatz"), m))?;
        let truncate_to_chi2 = match text("truncate_to_chi2", "false").as_str() {
            "true" => true,
            "false" => false,
            other => return Err(fail("truncate_to_chi2", &loc("truncate_to_chi2"), format!("expected true or false, got '{other}'"))),
        };
        let correlators = parse_list(&text("correlators", ""), parse_correlator).map_err(|m| fail("correlators", &loc("correlators"), m))?;
        let mutual_information =
            parse_list(&text("mutual_information", ""), parse_regions).map_err(|m| fail("mutual_information", &loc("mutual_information"), m))?;

        let cfg = RunConfig {
            name: text("name", "run"),
            mode,
            family,
            j: num("j", 0.0)?,
            jx: num("jx", 0.0)?,
            jy: num("jy", 0.0)?,
            jz: num("jz", 0.0)?,
            hx: num("hx", 0.0)?,
            hz: num("hz", 0.0)?,
            initial_state: text("initial_state", "down"),
            dt: num("dt", 0.01)?,
            t_max: num("t_max", 2.0)?,
            chi_max: count("chi_max", 256)?,
            sv_threshold: num("sv_threshold", 1e-9)?,
            trotter_order: count("trotter_order", 2)? as u32,
            spectrum_depth: count("spectrum_depth", 4)?,
            correlators,
            mutual_information,
            classify_window: num("classify_window", 0.5)?,
            classify_gap_threshold: num("classify_gap_threshold", 0.2)?,
            classify_overlap_threshold: num("classify_overlap_threshold", 0.5)?,
            truncate_to_chi2,
            ansatz,
            ed_sites: count("ed_sites", 12)?,
        };
        cfg.validate(&|key| loc(key))?;
        Ok(cfg)
    }
}

fn check_key(key: &str, location: &str) -> Result<(), ConfigError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError { location: location.to_string(), field: Some(key.to_string()), message: "unknown key".into() })
    }
}

fn parse_list<T>(text: &str, item: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

fn parse_correlator(token: &str) -> Result<CorrelatorSpec, String> {
    let (ops, d) = token.split_once(':').ok_or_else(|| format!("expected `ab:distance`, got '{token}'"))?;
    let ops: Vec<char> = ops.trim().chars().collect();
    if ops.len() != 2 {
        return Err(format!("expected two Pauli labels before ':', got '{token}'"));
    }
    let pauli = |ch: char| Pauli::parse(&ch.to_string()).map_err(|e| e.to_string());
    let distance: usize = d.trim().parse().map_err(|_| format!("bad distance in '{token}'"))?;
    if distance == 0 || distance > MAX_CORRELATOR_DISTANCE {
        return Err(format!("distance in '{token}' must lie in 1..={MAX_CORRELATOR_DISTANCE}"));
    }
    Ok(CorrelatorSpec { a: pauli(ops[0])?, b: pauli(ops[1])?, distance })
}

fn parse_region(text: &str, token: &str) -> Result<Vec<usize>, String> {
    let sites: Vec<usize> = text
        .trim()
        .chars()
        .map(|ch| ch.to_digit(10).map(|d| d as usize).filter(|d| (1..=MAX_REGION_SITE).contains(d)))
        .collect::<Option<_>>()
        .ok_or_else(|| format!("regions in '{token}' are written as site digits 1..={MAX_REGION_SITE}"))?;
    let mut sorted = sites.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() || sorted.len() != sites.len() {
        return Err(format!("regions in '{token}' must be non-empty with distinct sites"));
    }
    Ok(sorted)
}

fn parse_regions(token: &str) -> Result<RegionPair, String> {
    let (a, b) = token.split_once(':').ok_or_else(|| format!("expected `A:B` site digits, got '{token}'"))?;
    let (a, b) = (parse_region(a, token)?, parse_region(b, token)?);
    if a.iter().any(|s| b.contains(s)) {
        return Err(format!("regions in '{token}' overlap"));
    }
    Ok(RegionPair { a, b })
}

impl RunConfig {
    fn validate(&self, loc: &dyn Fn(&str) -> String) -> Result<(), ConfigError> {
        let fail = |key: &str, message: String| Err(ConfigError { location: loc(key), field: Some(key.to_string()), message });
        if !(self.dt > 0.0) {
            return fail("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.t_max >= 0.0) {
            return fail("t_max", format!("must be non-negative, got {}", self.t_max));
        }
        if !(self.sv_threshold > 0.0 && self.sv_threshold < 1.0) {
            return fail("sv_threshold", format!("must lie in (0, 1), got {}", self.sv_threshold));
        }
        if self.chi_max == 0 {
            return fail("chi_max", "must be at least 1".into());
        }
        if !matches!(self.trotter_order, 1 | 2) {
            return fail("trotter_order", format!("must be 1 or 2, got {}", self.trotter_order));
        }
        if self.spectrum_depth == 0 {
            return fail("spectrum_depth", "must be at least 1".into());
        }
        if !(self.classify_window > 0.0) {
            return fail("classify_window", format!("must be positive, got {}", self.classify_window));
        }
        if !(self.classify_gap_threshold > 0.0) {
            return fail("classify_gap_threshold", format!("must be positive, got {}", self.classify_gap_threshold));
        }
        if !(self.classify_overlap_threshold > 0.0) {
            return fail("classify_overlap_threshold", format!("must be positive, got {}", self.classify_overlap_threshold));
        }
        if !(2..=ED_MAX_SITES).contains(&self.ed_sites) {
            return fail("ed_sites", format!("must lie in 2..={ED_MAX_SITES}, got {}", self.ed_sites));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return fail("name", format!("must be a plain file name, got '{}'", self.name));
        }
        if let Err(e) = self.model() {
            return fail(if self.family == Family::Xxz { "jy" } else { "j" }, e.to_string());
        }
        if let Err(e) = self.initial_product_state() {
            return fail("initial_state", e);
        }
        if self.mode == Mode::Ed {
            let span = self.observable_span();
            if span > self.ed_sites {
                return fail("ed_sites", format!("observables span {span} sites, more than the ring holds"));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> dqpt_core::Result<SpinModel> {
        match self.family {
            Family::Ising => SpinModel::ising(self.j, self.hx, self.hz),
            Family::Xxz => SpinModel::xxz(self.jx, self.jy, self.jz, self.hx, self.hz),
        }
    }

    pub fn initial_product_state(&self) -> Result<ProductState, String> {
        let parts: Vec<&str> = self.initial_state.split(',').map(str::trim).collect();
        if parts.len() == 4 {
            let x: Vec<f64> = parts
                .iter()
                .map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| format!("spinor '{}' needs four finite numbers", self.initial_state))?;
            ProductState::normalized(c(x[0], x[1]), c(x[2], x[3])).map_err(|e| e.to_string())
        } else {
            named_initial_state(&self.initial_state).map_err(|e| format!("{e}; expected a name or `up_re, up_im, down_re, down_im`"))
        }
    }

    pub fn evolution_params(&self) -> EvolutionParams {
        EvolutionParams {
            dt: self.dt,
            t_max: self.t_max,
            chi_max: self.chi_max,
            sv_threshold: self.sv_threshold,
            order: TrotterOrder::from_int(self.trotter_order).expect("validated"),
        }
    }

    pub fn classifier(&self) -> ClassifierParams {
        ClassifierParams {
            overlap_threshold: self.classify_overlap_threshold,
            gap_threshold: self.classify_gap_threshold,
            window: self.classify_window,
        }
    }

    /// Number of consecutive sites, from the origin, touched by the
    /// configured correlators and regions (at least one).
    pub fn observable_span(&self) -> usize {
        let corr = self.correlators.iter().map(|c| c.distance + 1);
        let mi = self.mutual_information.iter().flat_map(|r| r.a.iter().chain(&r.b).copied());
        corr.chain(mi).max().unwrap_or(1).max(1)
    }

    /// The configuration with every default written out, in key order.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let list = |items: Vec<String>| items.join(", ");
        for &key in KEYS {
            let value = match key {
                "name" => self.name.clone(),
                "mode" => self.mode.label().into(),
                "model" => (if self.family == Family::Ising { "ising" } else { "xxz" }).into(),
                "j" if self.family == Family::Ising => self.j.to_string(),
                "jx" | "jy" | "jz" if self.family == Family::Ising => continue,
                "j" => continue,
                "jx" => self.jx.to_string(),
                "jy" => self.jy.to_string(),
                "jz" => self.jz.to_string(),
                "hx" => self.hx.to_string(),
                "hz" => self.hz.to_string(),
                "initial_state" => self.initial_state.clone(),
                "dt" => self.dt.to_string(),
                "t_max" => self.t_max.to_string(),
                "chi_max" => self.chi_max.to_string(),
                "sv_threshold" => format!("{:e}", self.sv_threshold),
                "trotter_order" => self.trotter_order.to_string(),
                "spectrum_depth" => self.spectrum_depth.to_string(),
                "correlators" => list(self.correlators.iter().map(CorrelatorSpec::token).collect()),
                "mutual_information" => list(self.mutual_information.iter().map(RegionPair::token).collect()),
                "classify_window" => self.classify_window.to_string(),
                "classify_gap_threshold" => self.classify_gap_threshold.to_string(),
                "classify_overlap_threshold" => self.classify_overlap_threshold.to_string(),
                "truncate_to_chi2" => self.truncate_to_chi2.to_string(),
                "ansatz" => self.ansatz.label().into(),
                "ed_sites" => self.ed_sites.to_string(),
                _ => unreachable!("every key is listed"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
