//! Experiment manifests, check orchestration and machine-readable reports.

mod batteries;
mod checks;
mod manifest;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

pub use batteries::{battery, list_batteries, Battery, BATTERIES};
pub use manifest::*;

use crate::error::{Error, Result};
use crate::geometry::ManifoldModel;
use crate::heat_kernel::HeatKernelEngine;
use crate::verdict::Verdict;

/// A table destined for a CSV plot file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotSeries {
    pub fn new(name: &str, header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub index: usize,
    pub kind: String,
    pub name: Option<String>,
    pub manifold: String,
    pub potential: Option<String>,
    /// The inequality or identity being tested, verbatim.
    pub inequality: Option<String>,
    pub margin_min: Option<f64>,
    pub tolerance: Option<f64>,
    pub sweep: BTreeMap<String, Value>,
    pub empirical_constants: BTreeMap<String, f64>,
    /// PASS when the observed verdict is PASS, or matches `expected`.
    pub verdict: Verdict,
    pub observed: Verdict,
    pub expected: Option<Verdict>,
    pub label: String,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub detail: Value,
    #[serde(skip)]
    pub plots: Vec<PlotSeries>,
}

/// Wall-clock data, excluded from the determinism contract.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub unix_seconds: u64,
    pub runtimes_ms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub tolerance_scale: f64,
    pub parallel: bool,
    pub manifest: ExperimentManifest,
    pub checks: Vec<CheckResult>,
    pub counts: BTreeMap<String, usize>,
    pub verdict: Verdict,
    pub timestamp: Timing,
}

impl Report {
    /// 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.verdict.is_pass() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The report as JSON with the timestamp removed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("timestamp");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Writes one CSV per plot series into `dir`.
    pub fn write_plots(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for c in &self.checks {
            for p in &c.plots {
                let path = dir.join(format!("{:02}-{}-{}.csv", c.index, c.kind, p.name));
                p.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let name = c.name.as_deref().unwrap_or(&c.kind);
            let margin = c.margin_min.map_or(String::new(), |m| format!(" margin={m:.3e}"));
            let err = c.error.as_ref().map_or(String::new(), |e| format!(" error: {e}"));
            let observed = match c.expected {
                Some(e) => format!(" (observed {}, expected {e})", c.observed),
                None => String::new(),
            };
            s.push_str(&format!(
                "[{:>2}] {:<12} {name} on {}{observed}{margin}{err}\n",
                c.index,
                c.verdict.to_string(),
                c.manifold
            ));
        }
        s.push_str(&format!("overall: {}\n", self.verdict));
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the manifest seed.
    pub seed: Option<u64>,
    pub parallel: bool,
    pub tolerance_scale: f64,
    pub dump_paths: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            parallel: false,
            tolerance_scale: 1.0,
            dump_paths: None,
        }
    }
}

fn execute(manifest: &ExperimentManifest, spec: &CheckSpec, index: usize, seed: u64, opts: &RunOptions) -> (CheckResult, f64) {
    let started = Instant::now();
    let manifold = spec.manifold.clone().unwrap_or_else(|| manifest.manifold.clone());
    let potential = spec.potential.clone().or_else(|| manifest.potential.clone());
    let outcome = (|| -> Result<checks::Outcome> {
        let model: ManifoldModel = manifold.parse()?;
        let engine = HeatKernelEngine::with_method(&model, manifest.kernel.method.parse()?)?;
        let ctx = checks::Context {
            model,
            engine,
            potential: potential.as_deref(),
            seed: seed.wrapping_add(index as u64),
            tolerance_scale: opts.tolerance_scale,
            dump_paths: opts.dump_paths.as_deref(),
            index,
        };
        checks::run_check(&spec.check, &ctx)
    })();
    let uses_potential = !matches!(
        spec.check,
        Check::KernelCheck(_) | Check::ControlPair(_) | Check::FkVerify(_) | Check::MviSweep(_) | Check::HeatBound(_) | Check::Coulomb(_)
    );
    let mut result = CheckResult {
        index: index + 1,
        kind: spec.check.kind().into(),
        name: spec.name.clone(),
        manifold,
        potential: if uses_potential { potential } else { None },
        inequality: None,
        margin_min: None,
        tolerance: None,
        sweep: BTreeMap::new(),
        empirical_constants: BTreeMap::new(),
        verdict: Verdict::Fail,
        observed: Verdict::Fail,
        expected: spec.expect,
        label: crate::kato::NUMERICAL_EVIDENCE.into(),
        notes: Vec::new(),
        error: None,
        detail: Value::Null,
        plots: Vec::new(),
    };
    match outcome {
        Ok(o) => {
            result.inequality = o.inequality;
            result.margin_min = o.margin_min;
            result.tolerance = o.tolerance;
            result.sweep = o.sweep;
            result.empirical_constants = o.constants;
            result.verdict = o.verdict.unwrap_or(Verdict::Inconclusive);
            result.notes = o.notes;
            result.detail = o.detail;
            result.plots = o.plots;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result.observed = result.verdict;
    if let Some(expected) = spec.expect {
        result.verdict = Verdict::from_bool(result.observed == expected && result.error.is_none());
    }
    (result, 1e3 * started.elapsed().as_secs_f64())
}

/// Runs every check in declaration order. A failing or erroring check is
/// recorded and the run continues.
pub fn run(manifest: &ExperimentManifest, opts: &RunOptions) -> Report {
    let seed = opts.seed.unwrap_or(manifest.seed);
    let run_one = |(i, spec): (usize, &CheckSpec)| execute(manifest, spec, i, seed, opts);
    let results: Vec<(CheckResult, f64)> = if opts.parallel {
        manifest.checks.par_iter().enumerate().map(run_one).collect()
    } else {
        manifest.checks.iter().enumerate().map(run_one).collect()
    };
    let (checks, runtimes_ms): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let verdict = checks.iter().fold(Verdict::Pass, |v, c| v.and(c.verdict));
    let mut counts = BTreeMap::new();
    for v in [Verdict::Pass, Verdict::Fail, Verdict::Inconclusive] {
        counts.insert(v.to_string(), checks.iter().filter(|c| c.verdict == v).count());
    }
    let mut echo = manifest.clone();
    echo.seed = seed;
    Report {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        tolerance_scale: opts.tolerance_scale,
        parallel: opts.parallel,
        manifest: echo,
        checks,
        counts,
        verdict,
        timestamp: Timing {
            unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            runtimes_ms,
        },
    }
}

/// Parses the manifest at `path` and runs it.
pub fn run_path(path: &Path, opts: &RunOptions) -> Result<Report> {
    Ok(run(&ExperimentManifest::from_path(path)?, opts))
}

/// Exit status for an error raised before any check ran.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::InvalidManifest(_) | Error::Spec { .. } => 2,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_check_list_passes() {
        let m = ExperimentManifest::parse("manifold = \"circle\"\n").unwrap();
        let r = run(&m, &RunOptions::default());
        assert!(r.checks.is_empty());
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn circle_kernel_check_passes() {
        let m = ExperimentManifest::parse("manifold = \"circle\"\n[[check]]\nkind = \"kernel-check\"\n").unwrap();
        let r = run(&m, &RunOptions::default());
        assert_eq!(r.checks[0].verdict, Verdict::Pass, "{}", r.to_json().unwrap());
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn errors_become_failed_checks() {
        let text = "manifold = \"sphere2\"\n[[check]]\nkind = \"fk-verify\"\n[[check]]\nkind = \"kernel-check\"\ntimes = [0.5]\n";
        let r = run(&ExperimentManifest::parse(text).unwrap(), &RunOptions::default());
        assert_eq!(r.checks[0].verdict, Verdict::Fail);
        assert!(r.checks[0].error.is_some());
        assert_eq!(r.checks[1].verdict, Verdict::Pass);
        assert_eq!(r.exit_code(), 1);
    }
}
