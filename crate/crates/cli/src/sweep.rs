//! Parameter sweeps: one run per value, concurrently, plus a summary table.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ConfigError, RawConfig, SCALAR_KEYS};
use crate::run::{number, run, RunError, RunOutcome};

/// Caps the number of concurrent runs.
pub const WORKERS_ENV: &str = "DQPT_MAX_WORKERS";

/// Parses `--param hz,j` and `--values 0.15:1,0.35:0.9` into parameter
/// names and one tuple per run.
pub fn parse_sweep(param: &str, values: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), ConfigError> {
    let fail = |field: Option<&str>, message: String| ConfigError { location: "sweep".into(), field: field.map(String::from), message };
    let params: Vec<String> = param.split(',').map(|p| p.trim().to_ascii_lowercase()).collect();
    for (k, p) in params.iter().enumerate() {
        if !SCALAR_KEYS.contains(&p.as_str()) {
            return Err(fail(Some(p), "is not a numeric config field".into()));
        }
        if params[..k].contains(p) {
            return Err(fail(Some(p), "is listed twice".into()));
        }
    }
    let tuples = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|tuple| {
            let parts: Vec<&str> = tuple.split(':').map(str::trim).collect();
            if parts.len() != params.len() {
                return Err(fail(None, format!("value '{tuple}' has {} entries for {} parameters", parts.len(), params.len())));
            }
            parts
                .iter()
                .map(|p| p.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| fail(None, format!("'{p}' in '{tuple}' is not a number"))))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    Ok((params, tuples))
}

/// Worker count from the environment, defaulting to the available cores.
pub fn worker_count() -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(cores)
}

#[derive(Debug)]
pub struct SweepEntry {
    pub values: Vec<f64>,
    pub dir: PathBuf,
    pub result: Result<RunOutcome, RunError>,
}

impl SweepEntry {
    pub fn status(&self) -> String {
        match &self.result {
            Ok(o) if o.completed() => "ok".into(),
            Ok(o) => format!("failed: {}", o.failure.as_deref().unwrap_or_default()),
            Err(RunError::Config(e)) => format!("config error: {e}"),
            Err(e) => format!("error: {e}"),
        }
    }

    pub fn succeeded(&self) -> bool {
        matches!(&self.result, Ok(o) if o.completed())
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub params: Vec<String>,
    pub entries: Vec<SweepEntry>,
    pub summary: PathBuf,
}

impl SweepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.entries.iter().all(SweepEntry::succeeded)
    }
}

fn directory_name(index: usize, params: &[String], values: &[f64]) -> String {
    let parts: Vec<String> = params.iter().zip(values).map(|(p, v)| format!("{p}={v}")).collect();
    format!("{index:03}_{}", parts.join("_"))
}

/// Runs `base` once per value tuple. Each run writes its usual artifacts to
/// its own subdirectory of `dir`; `summary.csv` lists the outcomes in input
/// order. A failing run does not stop the others.
pub fn sweep(base: &RawConfig, params: &[String], values: &[Vec<f64>], dir: &Path) -> Result<SweepOutcome, RunError> {
    base.resolve()?;
    fs::create_dir_all(dir)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build().map_err(|e| RunError::Io(std::io::Error::other(e)))?;
    let entries: Vec<SweepEntry> = pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(index, tuple)| {
                let sub = dir.join(directory_name(index, params, tuple));
                let mut raw = base.clone();
                let result = params
                    .iter()
                    .zip(tuple)
                    .try_for_each(|(p, v)| raw.set_value(p, &v.to_string(), "sweep"))
                    .and_then(|_| raw.resolve())
                    .map_err(RunError::from)
                    .and_then(|cfg| run(&cfg, &sub));
                SweepEntry { values: tuple.clone(), dir: sub, result }
            })
            .collect()
    });
    let summary = dir.join("summary.csv");
    fs::write(&summary, summary_csv(params, &entries))?;
    Ok(SweepOutcome { params: params.to_vec(), entries, summary })
}

fn summary_csv(params: &[String], entries: &[SweepEntry]) -> String {
    let mut out = String::from("index,");
    for p in params {
        out.push_str(p);
        out.push(',');
    }
    out.push_str("status,events,event_times,kinds,p_scores\n");
    for (index, e) in entries.iter().enumerate() {
        let events = e.result.as_ref().map(|o| o.events.as_slice()).unwrap_or_default();
        let join = |items: Vec<String>| items.join(";");
        let fields: Vec<String> = std::iter::once(index.to_string())
            .chain(e.values.iter().map(|v| number(*v)))
            .chain([
                e.status().replace([',', '\n', '\r'], " "),
                events.len().to_string(),
                join(events.iter().map(|x| number(x.event.time)).collect()),
                join(events.iter().map(|x| x.kind().map(|k| k.label()).unwrap_or("unclassified").to_string()).collect()),
                join(events.iter().map(|x| x.p_score().map(number).unwrap_or_else(|| "NaN".into())).collect()),
            ])
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_values() {
        let (p, v) = parse_sweep("hz,j", "0.15:1, 0.35:0.9").unwrap();
        assert_eq!(p, vec!["hz", "j"]);
        assert_eq!(v, vec![vec![0.15, 1.0], vec![0.35, 0.9]]);
        assert!(parse_sweep("hz", "").unwrap().1.is_empty());
        assert!(parse_sweep("hz,j", "0.1").is_err());
        assert!(parse_sweep("name", "1").is_err());
        assert!(parse_sweep("hz,hz", "1:2").is_err());
        assert!(parse_sweep("hz", "abc").is_err());
    }
}
