//! Report assembly and serialization: JSON (schema version 1, floats printed
//! with 17 significant digits for byte-reproducibility) and CSV sweeps.

use serde::Serialize;

use crate::verify::{CheckRecord, HypothesisStatus, Verdict};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub equality: usize,
    pub violation: usize,
    pub unverifiable: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub scenario_label: String,
    pub seed: u64,
    pub per_check: Vec<CheckRecord>,
    pub summary: Summary,
}

impl ScenarioReport {
    pub fn new(label: &str, seed: u64, per_check: Vec<CheckRecord>) -> Self {
        let mut summary = Summary::default();
        for rec in &per_check {
            match rec {
                CheckRecord::Inequality(r) => match r.verdict {
                    Verdict::Pass => summary.pass += 1,
                    Verdict::Equality => summary.equality += 1,
                    Verdict::Violation => summary.violation += 1,
                },
                CheckRecord::Criterion(c) => {
                    if c.hypotheses.iter().any(|h| h.status == HypothesisStatus::Unverifiable) {
                        summary.unverifiable += 1;
                    } else {
                        // criteria measure hypotheses; they are never violations
                        summary.pass += 1;
                    }
                }
            }
        }
        ScenarioReport {
            schema_version: 1,
            scenario_label: label.to_string(),
            seed,
            per_check,
            summary,
        }
    }

    /// JSON with every float printed as 17 significant digits; byte-identical
    /// across runs for identical inputs.
    pub fn to_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, ReproFormatter::default());
        self.serialize(&mut ser).expect("report serialization cannot fail");
        let mut s = String::from_utf8(out).expect("serializer emits UTF-8");
        s.push('\n');
        s
    }

    /// CSV sweep: one row per (check, point) with LF line endings. Criterion
    /// rows leave the coordinate cells empty.
    pub fn to_csv(&self, dim: usize) -> String {
        let mut s = String::new();
        s.push_str("check_id");
        for i in 0..dim {
            s.push_str(&format!(",coord_{i}"));
        }
        s.push_str(",lhs,rhs,gap,verdict\n");
        for rec in &self.per_check {
            match rec {
                CheckRecord::Inequality(r) => {
                    s.push_str(&r.inequality_id);
                    for i in 0..dim {
                        s.push(',');
                        if let Some(v) = r.point.get(i) {
                            s.push_str(&fmt17(*v));
                        }
                    }
                    let verdict = match r.verdict {
                        Verdict::Pass => "PASS",
                        Verdict::Equality => "EQUALITY",
                        Verdict::Violation => "VIOLATION",
                    };
                    s.push_str(&format!(",{},{},{},{verdict}\n", fmt17(r.lhs), fmt17(r.rhs), fmt17(r.gap)));
                }
                CheckRecord::Criterion(c) => {
                    s.push_str(&format!("criterion:{}", c.criterion_id));
                    for _ in 0..dim {
                        s.push(',');
                    }
                    let gap = c.integral_value.unwrap_or(f64::NAN);
                    let verdict = if c.hypotheses.iter().any(|h| h.status == HypothesisStatus::Unverifiable) {
                        "UNVERIFIABLE"
                    } else if c.asserted {
                        "ASSERTED"
                    } else {
                        "NOT_ASSERTED"
                    };
                    s.push_str(&format!(",,,{},{verdict}\n", fmt17(gap)));
                }
            }
        }
        s
    }
}

/// 17-significant-digit float text (round-trips any f64 exactly).
pub fn fmt17(v: f64) -> String {
    if !v.is_finite() {
        return "null".to_string();
    }
    format!("{v:.16e}")
}

/// serde_json formatter printing every float with 17 significant digits.
#[derive(Default)]
pub struct ReproFormatter;

impl serde_json::ser::Formatter for ReproFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            write!(writer, "null")
        }
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.write_f64(writer, value as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{CriterionVerdict, Hypothesis, InequalityReport};

    fn sample_records() -> Vec<CheckRecord> {
        vec![
            CheckRecord::Inequality(InequalityReport {
                inequality_id: "main_inequality".into(),
                point: vec![1.0, 2.0],
                lhs: 2.0,
                rhs: 2.25,
                gap: 0.25,
                verdict: Verdict::Pass,
                diagnostics: None,
                hypotheses: vec![],
                tol_eq: 1e-5,
                rhs_note: None,
            }),
            CheckRecord::Criterion(CriterionVerdict {
                criterion_id: "SPLITTING".into(),
                hypotheses: vec![Hypothesis {
                    name: "x".into(),
                    status: HypothesisStatus::Unverifiable,
                    value: Some(0.5),
                }],
                conclusion: "c".into(),
                asserted: false,
                integral_value: None,
            }),
        ]
    }

    #[test]
    fn summary_counts() {
        let r = ScenarioReport::new("t", 42, sample_records());
        assert_eq!(r.summary.pass, 1);
        assert_eq!(r.summary.unverifiable, 1);
        assert_eq!(r.summary.violation, 0);
    }

    #[test]
    fn json_uses_17_digits_and_is_stable() {
        let r = ScenarioReport::new("t", 42, sample_records());
        let a = r.to_json();
        let b = r.to_json();
        assert_eq!(a, b);
        assert!(a.contains("2.2500000000000000e0"), "{a}");
        assert!(a.ends_with('\n'));
        // parses back as ordinary JSON
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["summary"]["pass"], 1);
    }

    #[test]
    fn csv_layout() {
        let r = ScenarioReport::new("t", 42, sample_records());
        let csv = r.to_csv(2);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "check_id,coord_0,coord_1,lhs,rhs,gap,verdict");
        let row = lines.next().unwrap();
        assert!(row.starts_with("main_inequality,"));
        assert!(row.ends_with(",PASS"));
        assert!(!csv.contains('\r'));
    }
}
