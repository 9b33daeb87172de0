//! Command-line front end: load a scenario (file path or `builtin:<name>`),
//! run its check plan over the grid, emit reports.
//!
//! Exit codes: 0 all checks pass, 1 any VIOLATION verdict, 2 input or
//! validation error, 3 numerical breakdown.

use std::path::PathBuf;

use crate::error::Error;
use crate::report::ScenarioReport;
use crate::scenarios::{build_scenario, builtin_doc, builtin_names, ScenarioDoc};
use crate::verify::run_scenario;

/// One CLI invocation.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    /// Scenario file path or `builtin:<name>`.
    pub scenario: String,
    pub grid: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub tol_eq: Option<f64>,
    pub report_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
    pub verbose: bool,
}

fn load_doc(spec: &str) -> Result<ScenarioDoc, String> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin_doc(name).ok_or_else(|| {
            format!("unknown builtin `{name}`; known: {}", builtin_names().join(", "))
        });
    }
    let text = std::fs::read_to_string(spec).map_err(|e| format!("cannot read {spec}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| {
        let offset = byte_offset(&text, e.line(), e.column());
        format!("{spec}: malformed scenario JSON at byte offset {offset}: {e}")
    })
}

/// Byte offset of a (1-based) line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0usize;
    for (i, b) in text.bytes().enumerate() {
        if remaining == 0 {
            return i + column.saturating_sub(1);
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

/// Execute a run configuration; returns the process exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    let mut doc = match load_doc(&cfg.scenario) {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    if let Some(g) = cfg.grid {
        doc.grid = g;
    }
    if let Some(r) = cfg.restarts {
        doc.optimizer.restarts = r;
    }
    if let Some(s) = cfg.seed {
        doc.seed = s;
        doc.optimizer.seed = s;
    }
    if let Some(t) = cfg.tol_eq {
        doc.tolerances.tol_eq = t;
    }

    let scenario = match build_scenario(&doc) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };

    let records = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let report = ScenarioReport::new(&scenario.label, scenario.seed, records);

    if cfg.verbose {
        for rec in &report.per_check {
            match rec {
                crate::verify::CheckRecord::Inequality(r) => {
                    println!(
                        "{:<28} point {:?} lhs {:+.6e} rhs {:+.6e} gap {:+.3e} {:?}",
                        r.inequality_id, r.point, r.lhs, r.rhs, r.gap, r.verdict
                    );
                }
                crate::verify::CheckRecord::Criterion(c) => {
                    println!(
                        "criterion:{:<18} asserted={} ({} hypotheses)",
                        c.criterion_id,
                        c.asserted,
                        c.hypotheses.len()
                    );
                }
            }
        }
    }
    println!(
        "{}: pass {}  equality {}  violation {}  unverifiable {}",
        report.scenario_label,
        report.summary.pass,
        report.summary.equality,
        report.summary.violation,
        report.summary.unverifiable
    );

    if let Some(path) = &cfg.report_path {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            eprintln!("error: cannot write report {}: {e}", path.display());
            return 2;
        }
    }
    if let Some(path) = &cfg.csv_path {
        let csv = report.to_csv(scenario.manifold.dim());
        if let Err(e) = std::fs::write(path, csv) {
            eprintln!("error: cannot write CSV {}: {e}", path.display());
            return 2;
        }
    }

    if report.summary.violation > 0 {
        1
    } else {
        0
    }
}

/// Render the builtin listing (the `--list-builtins` flag).
pub fn list_builtins() -> String {
    let mut s = String::from("built-in scenarios (use as builtin:<name>):\n");
    for name in builtin_names() {
        s.push_str("  ");
        s.push_str(name);
        s.push('\n');
    }
    s
}

impl Error {
    /// Convenience used by tests asserting on exit classes.
    pub fn is_input_error(&self) -> bool {
        self.exit_code() == 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_offset_computation() {
        let text = "ab\ncd\nef";
        assert_eq!(byte_offset(text, 1, 1), 0);
        assert_eq!(byte_offset(text, 1, 3), 2);
        assert_eq!(byte_offset(text, 2, 1), 3);
        assert_eq!(byte_offset(text, 3, 2), 7);
    }

    #[test]
    fn unknown_builtin_is_input_error() {
        let cfg = RunConfig { scenario: "builtin:nope".into(), ..RunConfig::default() };
        assert_eq!(run(&cfg), 2);
    }

    #[test]
    fn malformed_json_reports_offset() {
        let dir = std::env::temp_dir().join("mixedcurv_cli_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.json");
        std::fs::write(&path, "{ \"mixedcurv_schema\": 1, ").unwrap();
        let cfg = RunConfig { scenario: path.to_string_lossy().into_owned(), ..RunConfig::default() };
        assert_eq!(run(&cfg), 2);
    }

    #[test]
    fn listing_contains_all_names() {
        let listing = list_builtins();
        for name in builtin_names() {
            assert!(listing.contains(name));
        }
    }
}
