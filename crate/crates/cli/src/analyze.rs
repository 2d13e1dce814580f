//! Re-analysis and validation of a finished run's CSV.

use std::fs;
use std::path::Path;

use dqpt_core::dqpt::{track_branches, AnalysisPoint, FidelitySpectrum};
use dqpt_core::numerics::C64;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::run::{analyze_events, event_json, Artifacts, EventSummary, RunError};

/// Bound on `|Σλ - 1|` per row.
pub const LAMBDA_SUM_TOL: f64 = 1e-8;
/// Mutual information may dip this far below zero from rounding.
pub const MI_FLOOR: f64 = -1e-9;

/// Parsed CSV body, one vector per column.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Contents of a `#TRUNCATED` marker, if present.
    pub truncated: Option<String>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().ok_or("empty CSV")?.split(',').map(String::from).collect();
        let mut rows = Vec::new();
        let mut truncated = None;
        for (k, line) in lines.enumerate() {
            if let Some(rest) = line.strip_prefix("#TRUNCATED") {
                truncated = Some(rest.trim_start_matches(',').to_string());
                continue;
            }
            let row: Vec<f64> = line.split(',').map(|x| x.parse::<f64>()).collect::<Result<_, _>>().map_err(|e| format!("row {}: {e}", k + 2))?;
            if row.len() != header.len() {
                return Err(format!("row {} has {} fields, header has {}", k + 2, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Self { header, rows, truncated })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|k| self.rows.iter().map(|r| r[k]).collect())
    }

    fn require(&self, name: &str) -> Result<usize, String> {
        self.index(name).ok_or_else(|| format!("column `{name}` is missing"))
    }

    /// Columns whose names start with `prefix`.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<usize> {
        (0..self.header.len()).filter(|&k| self.header[k].starts_with(prefix)).collect()
    }
}

/// One failed row check.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub time: f64,
    pub what: String,
}

/// Checks `f ≥ 0`, `|Σλ - 1| ≤ 1e-8` and `MI ≥ -1e-9` on every row.
pub fn check(table: &Table) -> Result<Vec<Violation>, String> {
    let t = table.require("t")?;
    let f = table.require("f")?;
    table.require("lambda_tail")?;
    let lambdas = table.columns_with_prefix("lambda_");
    let mi = table.columns_with_prefix("MI_");
    let mut out = Vec::new();
    for row in &table.rows {
        let time = row[t];
        if !(row[f] >= 0.0) {
            out.push(Violation { time, what: format!("f = {}", row[f]) });
        }
        // `lambda_tail` shares the prefix, so the sum covers the whole spectrum.
        let sum: f64 = lambdas.iter().map(|&k| row[k]).sum();
        if !((sum - 1.0).abs() <= LAMBDA_SUM_TOL) {
            out.push(Violation { time, what: format!("sum of lambda = {sum}") });
        }
        for &k in &mi {
            if !(row[k] >= MI_FLOOR) {
                out.push(Violation { time, what: format!("{} = {}", table.header[k], row[k]) });
            }
        }
    }
    Ok(out)
}

/// Rebuilds the leading two fidelity eigenvalues per row and the classifier
/// history, then detects and classifies events as a run would.
pub fn reanalyze(table: &Table, cfg: &RunConfig) -> Result<Vec<EventSummary>, String> {
    let col = |name: &str| table.require(name);
    let (t, f) = (col("t")?, col("f")?);
    let e = [col("e1_re")?, col("e1_im")?, col("e2_re")?, col("e2_im")?];
    let (l1, o11, ood) = (col("lambda_1")?, col("o11_abs")?, col("ood_abs")?);
    let l2 = table.index("lambda_2");
    let mut spectra = Vec::with_capacity(table.rows.len());
    let mut history = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let eigenvalues: Vec<C64> = [C64::new(row[e[0]], row[e[1]]), C64::new(row[e[2]], row[e[3]])]
            .into_iter()
            .filter(|z| z.is_finite() && z.norm() > 0.0)
            .map(|z| z * z)
            .collect();
        spectra.push(FidelitySpectrum { time: row[t], eigenvalues, f: row[f], branch_ids: Vec::new(), ambiguous: false });
        history.push(AnalysisPoint {
            time: row[t],
            lambda1: row[l1],
            lambda2: l2.map(|k| row[k]).unwrap_or(0.0),
            o11_abs: row[o11],
            ood_abs: row[ood],
        });
    }
    track_branches(&mut spectra);
    analyze_events(&spectra, &history, cfg)
}

/// Outcome of the `analyze` subcommand.
#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub events: Vec<EventSummary>,
    pub violations: Vec<Violation>,
    pub report: Value,
}

/// Re-analyzes `<name>.csv` in `dir`, optionally checking row invariants,
/// and writes `<name>.analysis.json`.
pub fn analyze(cfg: &RunConfig, dir: &Path, with_check: bool) -> Result<AnalyzeOutcome, RunError> {
    let artifacts = Artifacts::new(dir, &cfg.name);
    let table = Table::load(&artifacts.csv).map_err(|e| RunError::Io(std::io::Error::other(e)))?;
    let bad_table = |e: String| RunError::Io(std::io::Error::other(format!("{}: {e}", artifacts.csv.display())));
    let events = reanalyze(&table, cfg).map_err(bad_table)?;
    let violations = if with_check { check(&table).map_err(bad_table)? } else { Vec::new() };
    let mut report = json!({
        "name": cfg.name,
        "source": artifacts.csv.file_name().and_then(|s| s.to_str()),
        "timestamp": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "rows": table.rows.len(),
        "truncated": table.truncated,
        "events": events.iter().map(event_json).collect::<Vec<_>>(),
    });
    if with_check {
        report["check"] = json!({
            "passed": violations.is_empty(),
            "violations": violations.iter().map(|v| json!({ "time": v.time, "what": v.what })).collect::<Vec<_>>(),
        });
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    fs::write(dir.join(format!("{}.analysis.json", cfg.name)), text)?;
    Ok(AnalyzeOutcome { events, violations, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_flags_each_invariant() {
        let text = "t,f,lambda_1,lambda_2,MI_1__2,chi,lambda_tail\n\
                    0,0,1,0,0,1,0\n\
                    1,-1e-3,0.5,0.5,0,2,0\n\
                    2,0.1,0.5,0.4,-1e-6,3,0.1\n\
                    3,0.1,0.5,0.4,0,3,0\n\
                    #TRUNCATED,3,boom\n";
        let table = Table::parse(text).unwrap();
        assert_eq!(table.truncated.as_deref(), Some("3,boom"));
        let v = check(&table).unwrap();
        let times: Vec<f64> = v.iter().map(|x| x.time).collect();
        assert_eq!(times, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(Table::parse("t,f\n0,1,2\n").is_err());
        assert!(Table::parse("t,f\n0,x\n").is_err());
    }
}
