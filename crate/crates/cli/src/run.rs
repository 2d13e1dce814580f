//! Evolution, ansatz and exact-diagonalization pipelines.
//!
//! Every pipeline streams one CSV row per time step, so a failed run keeps
//! the rows computed so far followed by a `#TRUNCATED` marker. The JSON
//! report and the resolved config are written next to the CSV.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use dqpt_core::ansatz::{EntanglementAnsatz, PrecessionAnsatz};
use dqpt_core::dqpt::{
    classify_dqpt, detect_dqpts, fidelity_density, overlap_decomposition, rate_cap, AnalysisPoint, BranchTracker, Classification, DqptEvent,
    DqptKind, FidelitySpectrum,
};
use dqpt_core::evolution::{evolve, StepReport};
use dqpt_core::imps::{Bond, IMpsState, ProductState, Sublattice};
use dqpt_core::models::{named_initial_state, Pauli};
use dqpt_core::numerics::{eigh, C64};
use dqpt_core::observables::{correlator, density_matrix_entropy, expectation, mutual_info, Anchored, Marginals, SharedWindow};
use dqpt_core::oracle::{ed_evolve_many, ed_rate_series, ed_return_amplitudes, EdSystem};
use dqpt_core::Error;
use serde_json::{json, Value};

use crate::config::{AnsatzKind, ConfigError, Family, Mode, RunConfig};

/// Spinors closer than this count as the named state an ansatz needs.
const STATE_MATCH_TOL: f64 = 1e-12;
/// Density-matrix eigenvalues below this do not count towards the rank.
const RANK_CUTOFF: f64 = 1e-15;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

/// Output file names for a run called `name` in `dir`.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub report: PathBuf,
    pub config: PathBuf,
}

impl Artifacts {
    pub fn new(dir: &Path, name: &str) -> Self {
        Self { csv: dir.join(format!("{name}.csv")), report: dir.join(format!("{name}.report.json")), config: dir.join(format!("{name}.config.cfg")) }
    }
}

/// One classified (or unclassifiable) event.
#[derive(Debug, Clone)]
pub struct EventSummary {
    pub event: DqptEvent,
    /// Half-width of the classification window actually used.
    pub window: f64,
    pub classification: Result<Classification, String>,
}

impl EventSummary {
    pub fn kind(&self) -> Option<DqptKind> {
        self.classification.as_ref().ok().map(|c| c.kind)
    }

    pub fn p_score(&self) -> Option<f64> {
        self.classification.as_ref().ok().map(|c| c.ratio_at_event)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Artifacts,
    /// Message of the error that stopped the simulation, if any.
    pub failure: Option<String>,
    pub events: Vec<EventSummary>,
    pub report: Value,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// CSV column layout of a run.
#[derive(Debug, Clone)]
pub struct Schema {
    pub depth: usize,
    pub correlators: Vec<String>,
    pub mutual_information: Vec<String>,
}

impl Schema {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            depth: cfg.spectrum_depth,
            correlators: cfg.correlators.iter().map(|c| c.column()).collect(),
            mutual_information: cfg.mutual_information.iter().map(|r| r.column()).collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "f", "e1_re", "e1_im", "e2_re", "e2_im"].map(String::from).to_vec();
        h.extend((1..=self.depth).map(|k| format!("lambda_{k}")));
        h.extend(["S_A", "S_B", "o11_abs", "ood_abs", "sx", "sy", "sz"].map(String::from));
        h.extend(self.correlators.iter().cloned());
        h.extend(self.mutual_information.iter().cloned());
        h.extend(["chi", "lambda_tail"].map(String::from));
        h
    }
}

/// One CSV row.
#[derive(Debug, Clone)]
pub struct Row {
    pub t: f64,
    pub f: f64,
    pub e1: C64,
    pub e2: C64,
    /// Leading entanglement-spectrum values, padded with zeros.
    pub lambdas: Vec<f64>,
    pub s_a: f64,
    pub s_b: f64,
    pub o11_abs: f64,
    pub ood_abs: f64,
    pub magnetization: [f64; 3],
    pub correlators: Vec<f64>,
    pub mutual_information: Vec<f64>,
    pub chi: usize,
    /// Weight of the spectrum beyond the reported depth.
    pub lambda_tail: f64,
}

impl Row {
    fn values(&self) -> Vec<f64> {
        let mut v = vec![self.t, self.f, self.e1.re, self.e1.im, self.e2.re, self.e2.im];
        v.extend(&self.lambdas);
        v.extend([self.s_a, self.s_b, self.o11_abs, self.ood_abs]);
        v.extend(self.magnetization);
        v.extend(&self.correlators);
        v.extend(&self.mutual_information);
        v.extend([self.chi as f64, self.lambda_tail]);
        v
    }

    fn analysis_point(&self) -> AnalysisPoint {
        AnalysisPoint {
            time: self.t,
            lambda1: self.lambdas.first().copied().unwrap_or(0.0),
            lambda2: self.lambdas.get(1).copied().unwrap_or(0.0),
            o11_abs: self.o11_abs,
            ood_abs: self.ood_abs,
        }
    }
}

/// Formats a value with 17 significant digits.
pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

fn split_spectrum(values: &[f64], depth: usize) -> (Vec<f64>, f64) {
    let mut top: Vec<f64> = values.iter().take(depth).copied().collect();
    top.resize(depth, 0.0);
    (top, values.iter().skip(depth).sum())
}

/// Streams rows to disk and keeps what the analysis needs.
struct Recorder {
    out: BufWriter<File>,
    history: Vec<AnalysisPoint>,
    spectra: Vec<FidelitySpectrum>,
    tracker: BranchTracker,
    underflow: Vec<f64>,
    io_error: Option<io::Error>,
    rows: usize,
    last_time: Option<f64>,
}

impl Recorder {
    fn create(path: &Path, schema: &Schema) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", schema.header().join(","))?;
        Ok(Self {
            out,
            history: Vec::new(),
            spectra: Vec::new(),
            tracker: BranchTracker::new(),
            underflow: Vec::new(),
            io_error: None,
            rows: 0,
            last_time: None,
        })
    }

    fn push(&mut self, row: &Row) -> dqpt_core::Result<()> {
        let line: Vec<String> = row.values().into_iter().map(number).collect();
        if let Err(e) = writeln!(self.out, "{}", line.join(",")) {
            let msg = e.to_string();
            self.io_error = Some(e);
            return Err(Error::Breakdown(format!("cannot write the CSV: {msg}")));
        }
        self.history.push(row.analysis_point());
        self.rows += 1;
        self.last_time = Some(row.t);
        Ok(())
    }

    /// Fidelity spectrum of `state`, or an empty spectrum with the capped
    /// rate when the leading eigenvalue underflows.
    fn spectrum(&mut self, state: &IMpsState, v0: &ProductState) -> dqpt_core::Result<FidelitySpectrum> {
        let mut spec = match fidelity_density(state, v0) {
            Ok(s) => s,
            Err(Error::SpectrumUnderflow { time }) => {
                self.underflow.push(time);
                FidelitySpectrum { time, eigenvalues: Vec::new(), f: rate_cap(), branch_ids: Vec::new(), ambiguous: false }
            }
            Err(e) => return Err(e),
        };
        self.tracker.assign(&mut spec);
        Ok(spec)
    }

    fn finish(mut self, failure: Option<&str>) -> io::Result<Self> {
        if let Some(msg) = failure {
            let t = self.last_time.map(number).unwrap_or_default();
            writeln!(self.out, "#TRUNCATED,{t},{}", msg.replace([',', '\n', '\r'], " "))?;
        }
        self.out.flush()?;
        Ok(self)
    }
}

/// Per-run numerical diagnostics of the iMPS pipelines.
#[derive(Debug, Default)]
struct Diagnostics {
    max_chi: usize,
    max_discarded_weight: f64,
    total_discarded_weight: f64,
    regauge_steps: usize,
    truncation_overflow_steps: usize,
    max_canonical_error: f64,
    /// Largest `|λ_k(A) - λ_k(B)|` over the reported depth.
    max_bond_mismatch: f64,
    /// Largest `||o_12| - |o_21||`; only tracked for real initial spinors.
    max_offdiagonal_asymmetry: Option<f64>,
}

impl Diagnostics {
    fn step(&mut self, report: &StepReport) {
        self.max_discarded_weight = self.max_discarded_weight.max(report.discarded_weight);
        self.total_discarded_weight += report.discarded_weight;
        self.regauge_steps += report.regauged as usize;
        self.truncation_overflow_steps += report.truncation_overflow as usize;
        self.max_canonical_error = self.max_canonical_error.max(report.canonical_error);
    }

    fn json(&self) -> Value {
        json!({
            "max_chi": self.max_chi,
            "max_discarded_weight": self.max_discarded_weight,
            "total_discarded_weight": self.total_discarded_weight,
            "regauge_steps": self.regauge_steps,
            "truncation_overflow_steps": self.truncation_overflow_steps,
            "max_canonical_error": self.max_canonical_error,
            "max_bond_mismatch": self.max_bond_mismatch,
            "max_offdiagonal_asymmetry": self.max_offdiagonal_asymmetry,
        })
    }
}

/// Builds the row of an iMPS state. `state` is the state the columns
/// describe (the χ = 2 truncation when requested).
fn imps_row(state: &IMpsState, spec: &FidelitySpectrum, v0: &ProductState, cfg: &RunConfig, diag: &mut Diagnostics) -> dqpt_core::Result<Row> {
    let lam_a = state.lambdas(Bond::A);
    let lam_b = state.lambdas(Bond::B);
    let (lambdas, lambda_tail) = split_spectrum(&lam_a, cfg.spectrum_depth);
    let (lambdas_b, _) = split_spectrum(&lam_b, cfg.spectrum_depth);
    let mismatch = lambdas.iter().zip(&lambdas_b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diag.max_bond_mismatch = diag.max_bond_mismatch.max(mismatch);
    diag.max_chi = diag.max_chi.max(state.max_chi());

    let ov = overlap_decomposition(state, v0);
    if v0.is_real() {
        let d = (ov.ood_abs - ov.o21_abs).abs();
        diag.max_offdiagonal_asymmetry = Some(diag.max_offdiagonal_asymmetry.unwrap_or(0.0).max(d));
    }
    let window = SharedWindow::new(&Anchored::new(state, Sublattice::A), 0, cfg.observable_span())?;
    let (correlators, mutual_information) = extended_observables(&window, 0, cfg)?;
    Ok(Row {
        t: state.time(),
        f: spec.f,
        e1: spec.per_site(0),
        e2: spec.per_site(1),
        lambdas,
        s_a: state.entanglement_entropy(Bond::A),
        s_b: state.entanglement_entropy(Bond::B),
        o11_abs: ov.o11_abs,
        ood_abs: ov.ood_abs,
        magnetization: magnetization(&window, 0)?,
        correlators,
        mutual_information,
        chi: state.chi(Bond::A),
        lambda_tail,
    })
}

fn magnetization<M: Marginals + ?Sized>(source: &M, site: usize) -> dqpt_core::Result<[f64; 3]> {
    Ok([expectation(source, Pauli::X, site)?, expectation(source, Pauli::Y, site)?, expectation(source, Pauli::Z, site)?])
}

fn extended_observables<M: Marginals + ?Sized>(source: &M, origin: usize, cfg: &RunConfig) -> dqpt_core::Result<(Vec<f64>, Vec<f64>)> {
    let corr =
        cfg.correlators.iter().map(|c| correlator(source, c.a, c.b, origin, c.distance).map(|z| z.re)).collect::<dqpt_core::Result<Vec<f64>>>()?;
    let shift = |sites: Vec<usize>| sites.into_iter().map(|s| s + origin).collect::<Vec<_>>();
    let mi = cfg
        .mutual_information
        .iter()
        .map(|r| {
            let (a, b) = r.sites();
            mutual_info(source, &shift(a), &shift(b))
        })
        .collect::<dqpt_core::Result<Vec<f64>>>()?;
    Ok((corr, mi))
}

fn evolve_pipeline(cfg: &RunConfig, v0: &ProductState, rec: &mut Recorder, diag: &mut Diagnostics) -> dqpt_core::Result<()> {
    let model = cfg.model()?;
    evolve(&IMpsState::from_product(v0), &model, &cfg.evolution_params(), |state, report| {
        diag.step(report);
        diag.max_chi = diag.max_chi.max(state.max_chi());
        let reduced;
        let shown = if cfg.truncate_to_chi2 {
            reduced = state.truncate_to_chi2()?.0;
            &reduced
        } else {
            state
        };
        let spec = rec.spectrum(shown, v0)?;
        let row = imps_row(shown, &spec, v0, cfg, diag)?;
        rec.spectra.push(spec);
        rec.push(&row)
    })
    .map(|_| ())
}

/// Which closed-form ansatz a config selects, checked against its model and
/// initial state.
fn ansatz_choice(cfg: &RunConfig, v0: &ProductState) -> Result<AnsatzKind, ConfigError> {
    let fail = |field: &str, message: String| ConfigError { location: "config".into(), field: Some(field.into()), message };
    if cfg.family != Family::Ising {
        return Err(fail("model", "the ansatz pipelines need the ising model".into()));
    }
    let matches = |name: &str| {
        let [a, b] = named_initial_state(name).expect("built-in name").amplitudes();
        let [x, y] = v0.amplitudes();
        (a - x).norm() < STATE_MATCH_TOL && (b - y).norm() < STATE_MATCH_TOL
    };
    let needed = |kind: AnsatzKind| if kind == AnsatzKind::Precession { "down" } else { "right" };
    let kind = match cfg.ansatz {
        AnsatzKind::Auto if matches("down") => AnsatzKind::Precession,
        AnsatzKind::Auto if matches("right") => AnsatzKind::Entanglement,
        AnsatzKind::Auto => return Err(fail("initial_state", "ansatz = auto needs the down or right state".into())),
        kind => kind,
    };
    if !matches(needed(kind)) {
        return Err(fail("initial_state", format!("the {} ansatz starts from the {} state", kind.label(), needed(kind))));
    }
    let built = match kind {
        AnsatzKind::Precession => PrecessionAnsatz::new(cfg.j, cfg.hx, cfg.hz).map(|_| ()),
        _ => EntanglementAnsatz::new(cfg.j, cfg.hx, cfg.hz).map(|_| ()),
    };
    built.map_err(|e| fail("j", e.to_string()))?;
    Ok(kind)
}

fn ansatz_pipeline(cfg: &RunConfig, kind: AnsatzKind, v0: &ProductState, rec: &mut Recorder, diag: &mut Diagnostics) -> dqpt_core::Result<()> {
    let steps = cfg.evolution_params().steps();
    let pre = PrecessionAnsatz::new(cfg.j, cfg.hx, cfg.hz);
    let ent = EntanglementAnsatz::new(cfg.j, cfg.hx, cfg.hz);
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let state = match kind {
            AnsatzKind::Precession => pre.as_ref().map_err(Clone::clone)?.canonical_state(t)?,
            _ => ent.as_ref().map_err(Clone::clone)?.state(t)?.canonicalize()?.with_time(t),
        };
        diag.max_canonical_error = diag.max_canonical_error.max(state.canonical_error());
        let spec = rec.spectrum(&state, v0)?;
        let row = imps_row(&state, &spec, v0, cfg, diag)?;
        rec.spectra.push(spec);
        rec.push(&row)?;
    }
    Ok(())
}

/// Rate maxima of the ring, returned for the report.
fn ed_pipeline(cfg: &RunConfig, v0: &ProductState, rec: &mut Recorder) -> dqpt_core::Result<Vec<(f64, f64)>> {
    let l = cfg.ed_sites;
    let system = EdSystem::new(l, cfg.model()?, v0)?;
    let times: Vec<f64> = (0..=cfg.evolution_params().steps()).map(|k| k as f64 * cfg.dt).collect();
    let rates = ed_rate_series(&system, &times)?;
    let amplitudes = ed_return_amplitudes(&system, &times)?;
    let states = ed_evolve_many(&system, &times)?;
    let half = l / 2;
    let nan = C64::new(f64::NAN, f64::NAN);
    for ((t, rate), (amp, state)) in times.iter().zip(&rates).zip(amplitudes.iter().zip(&states)) {
        if rate.underflow {
            rec.underflow.push(*t);
        }
        let rho = state.marginal(&(0..half).collect::<Vec<_>>())?;
        let (mut w, _) = eigh(&rho);
        w.reverse();
        let probs: Vec<f64> = w.iter().map(|&p| p.max(0.0)).collect();
        let (lambdas, lambda_tail) = split_spectrum(&probs, cfg.spectrum_depth);
        let shifted = state.marginal(&(1..=half).collect::<Vec<_>>())?;
        let window = SharedWindow::new(state, 0, cfg.observable_span())?;
        let (correlators, mutual_information) = extended_observables(&window, 0, cfg)?;
        rec.push(&Row {
            t: *t,
            f: rate.f,
            e1: amp.powf(1.0 / l as f64),
            e2: nan,
            lambdas,
            s_a: density_matrix_entropy(&rho),
            s_b: density_matrix_entropy(&shifted),
            o11_abs: f64::NAN,
            ood_abs: f64::NAN,
            magnetization: magnetization(&window, 0)?,
            correlators,
            mutual_information,
            chi: probs.iter().filter(|&&p| p > RANK_CUTOFF).count(),
            lambda_tail,
        })?;
    }
    let f: Vec<f64> = rates.iter().map(|r| r.f).collect();
    Ok((1..f.len().saturating_sub(1)).filter(|&k| f[k] > f[k - 1] && f[k] >= f[k + 1]).map(|k| (times[k], f[k])).collect())
}

/// Smallest fraction of the configured window an event near either end of
/// the history may be classified with.
pub const MIN_WINDOW_FRACTION: f64 = 0.5;

/// Detects and classifies events from a tracked spectrum sequence. Events
/// closer to either end of the history than the configured window are
/// classified with the window shrunk symmetrically to fit, down to
/// [`MIN_WINDOW_FRACTION`] of it.
pub fn analyze_events(spectra: &[FidelitySpectrum], history: &[AnalysisPoint], cfg: &RunConfig) -> Result<Vec<EventSummary>, String> {
    if spectra.len() < 3 || history.is_empty() {
        return Ok(Vec::new());
    }
    let events = detect_dqpts(spectra).map_err(|e| e.to_string())?;
    let (first, last) = (history[0].time, history[history.len() - 1].time);
    Ok(events
        .into_iter()
        .map(|event| {
            let mut params = cfg.classifier();
            let room = (event.time - first).min(last - event.time);
            if room < params.window && room >= MIN_WINDOW_FRACTION * params.window {
                params.window = room;
            }
            let classification = classify_dqpt(event.time, history, &params).map_err(|e| e.to_string());
            EventSummary { event, window: params.window, classification }
        })
        .collect())
}

fn minimum_json(m: Option<(f64, f64)>) -> Value {
    m.map(|(time, value)| json!({ "time": time, "value": value })).unwrap_or(Value::Null)
}

pub fn event_json(e: &EventSummary) -> Value {
    let mut v = json!({
        "time": e.event.time,
        "bracket": [e.event.bracket.0, e.event.bracket.1],
        "branch_before": e.event.branch_before,
        "branch_after": e.event.branch_after,
        "gap_slope": e.event.gap_slope,
        "ambiguous": e.event.ambiguous,
        "window": e.window,
    });
    match &e.classification {
        Ok(c) => {
            v["classification"] = json!({
                "kind": c.kind.label(),
                "p_score": c.ratio_at_event,
                "ratio_min": c.ratio_min,
                "ratio_max": c.ratio_max,
                "gap_minimum": minimum_json(c.gap_minimum),
                "o11_minimum": minimum_json(c.o11_minimum),
                "overlap_ratio_minimum": minimum_json(c.overlap_ratio_minimum),
                "precession_fired": c.precession_fired,
                "entanglement_fired": c.entanglement_fired,
            });
        }
        Err(msg) => {
            v["classification"] = Value::Null;
            v["classification_error"] = json!(msg);
        }
    }
    v
}

/// Runs the pipeline selected by `cfg.mode` and writes all artifacts to
/// `dir`. A numerical failure is reported in the outcome, not as an error.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome, RunError> {
    let v0 =
        cfg.initial_product_state().map_err(|message| ConfigError { location: "config".into(), field: Some("initial_state".into()), message })?;
    let ansatz = match cfg.mode {
        Mode::Ansatz => Some(ansatz_choice(cfg, &v0)?),
        Mode::Analyze => {
            return Err(
                ConfigError { location: "config".into(), field: Some("mode".into()), message: "analyze does not run a simulation".into() }.into()
            )
        }
        _ => None,
    };
    fs::create_dir_all(dir)?;
    let artifacts = Artifacts::new(dir, &cfg.name);
    fs::write(&artifacts.config, cfg.echo())?;
    let mut rec = Recorder::create(&artifacts.csv, &Schema::of(cfg))?;
    let mut diag = Diagnostics::default();
    log::info!("{}: {} run to t = {}", cfg.name, cfg.mode.label(), cfg.t_max);

    let mut maxima = Vec::new();
    let result = match cfg.mode {
        Mode::Evolve => evolve_pipeline(cfg, &v0, &mut rec, &mut diag),
        Mode::Ansatz => ansatz_pipeline(cfg, ansatz.expect("chosen above"), &v0, &mut rec, &mut diag),
        Mode::Ed => ed_pipeline(cfg, &v0, &mut rec).map(|m| maxima = m),
        Mode::Analyze => unreachable!("rejected above"),
    };
    let failure = result.err().map(|e| e.to_string());
    let mut rec = rec.finish(failure.as_deref())?;
    if let Some(e) = rec.io_error.take() {
        return Err(e.into());
    }
    if let Some(msg) = &failure {
        log::error!("{}: {msg}", cfg.name);
    }

    let analysis = if cfg.mode == Mode::Ed { Ok(Vec::new()) } else { analyze_events(&rec.spectra, &rec.history, cfg) };
    let (events, analysis_error) = match analysis {
        Ok(e) => (e, None),
        Err(msg) => (Vec::new(), Some(msg)),
    };
    let mut report = json!({
        "name": cfg.name,
        "mode": cfg.mode.label(),
        "timestamp": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "completed": failure.is_none(),
        "failure": failure,
        "rows": rec.rows,
        "last_time": rec.last_time,
        "underflow_times": rec.underflow,
        "events": events.iter().map(event_json).collect::<Vec<_>>(),
    });
    if let Some(msg) = analysis_error {
        report["analysis_error"] = json!(msg);
    }
    match cfg.mode {
        Mode::Ed => {
            report["sites"] = json!(cfg.ed_sites);
            report["rate_maxima"] = maxima.iter().map(|(t, f)| json!({ "time": t, "f": f })).collect();
        }
        _ => report["diagnostics"] = diag.json(),
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    fs::write(&artifacts.report, text)?;
    Ok(RunOutcome { artifacts, failure, events, report })
}
