//! Machine-readable curve emission (CSV) and plain-text summary tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hash::digest_hex;
use crate::inoculation::{FineTunePlan, InoculationReport};
use crate::model::FeatureConfig;

pub const CSV_HEADER: &str = "size,best_lr,original_acc,challenge_acc,gap_closure";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub size: usize,
    pub best_lr: f64,
    pub original_acc: f64,
    pub challenge_acc: f64,
    pub gap_closure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveHeader {
    pub challenge_name: String,
    pub model_config_digest: String,
    pub plan_digest: String,
}

/// Fig-style curve data: one row per fine-tuning size, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTable {
    pub header: CurveHeader,
    pub rows: Vec<CurveRow>,
}

fn digest_of<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)
        .map_err(|e| Error::runtime(format!("digesting config: {e}")))?;
    Ok(digest_hex(&bytes))
}

pub fn build_curve_table(
    report: &InoculationReport,
    model_cfg: &FeatureConfig,
    plan: &FineTunePlan,
) -> Result<CurveTable> {
    let gap = report.performance_gap();
    let rows = report
        .points
        .iter()
        .map(|p| CurveRow {
            size: p.size,
            best_lr: p.best_lr,
            original_acc: p.original_test_acc,
            challenge_acc: p.challenge_test_acc,
            gap_closure: if gap > 0.0 {
                (p.challenge_test_acc - report.pre_challenge_acc) / gap
            } else {
                f64::NAN
            },
        })
        .collect();
    Ok(CurveTable {
        header: CurveHeader {
            challenge_name: report.challenge_name.clone(),
            model_config_digest: digest_of(model_cfg)?,
            plan_digest: digest_of(plan)?,
        },
        rows,
    })
}

/// Emits the report as RFC-4180 CSV: fixed header row, one row per point,
/// accuracies and closures with 6 decimals.
pub fn emit_csv(report: &InoculationReport, path: &Path) -> Result<()> {
    let gap = report.performance_gap();
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push_str("\r\n");
    for p in &report.points {
        let closure = if gap > 0.0 {
            format!("{:.6}", (p.challenge_test_acc - report.pre_challenge_acc) / gap)
        } else {
            "nan".to_string()
        };
        let _ = write!(
            out,
            "{},{},{:.6},{:.6},{}\r\n",
            p.size, p.best_lr, p.original_test_acc, p.challenge_test_acc, closure
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One aligned text table over many reports: challenge name, pre-inoculation
/// gap, max closure, max original drop and outcome.
pub fn summarize(reports: &[InoculationReport]) -> String {
    let mut rows: Vec<[String; 5]> = vec![[
        "challenge".into(),
        "pre_gap".into(),
        "max_closure".into(),
        "max_drop".into(),
        "outcome".into(),
    ]];
    for r in reports {
        let gap = r.performance_gap();
        let max_closure = r
            .points
            .iter()
            .map(|p| {
                if gap > 0.0 {
                    (p.challenge_test_acc - r.pre_challenge_acc) / gap
                } else {
                    f64::NAN
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let max_drop = r
            .points
            .iter()
            .map(|p| r.pre_original_acc - p.original_test_acc)
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push([
            r.challenge_name.clone(),
            format!("{gap:.4}"),
            if r.points.is_empty() { "-".into() } else { format!("{max_closure:.4}") },
            if r.points.is_empty() { "-".into() } else { format!("{max_drop:.4}") },
            r.outcome.map(|o| o.kind.as_str().to_string()).unwrap_or_else(|| "-".into()),
        ]);
    }
    let mut widths = [0usize; 5];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inoculation::InoculationPoint;
    use crate::outcomes::{classify, OutcomeThresholds};

    fn sample_report() -> InoculationReport {
        let mut r = InoculationReport {
            challenge_name: "word_overlap".into(),
            pre_original_acc: 0.9,
            pre_challenge_acc: 0.6,
            points: vec![
                point(5, 1e-4, 0.899, 0.70),
                point(100, 1e-3, 0.895, 0.88),
                point(1000, 1e-2, 0.893, 0.89),
            ],
            outcome: None,
        };
        r.outcome = Some(classify(&r, &OutcomeThresholds::default()).unwrap());
        r
    }

    fn point(size: usize, lr: f64, original: f64, challenge: f64) -> InoculationPoint {
        InoculationPoint {
            size,
            best_lr: lr,
            original_test_acc: original,
            challenge_test_acc: challenge,
            history_ref: String::new(),
            dev_selected_lr: lr,
            dev_selected_original_acc: original,
            dev_selected_challenge_acc: challenge,
        }
    }

    #[test]
    fn empty_points_gives_header_only() {
        let r = InoculationReport {
            challenge_name: "x".into(),
            pre_original_acc: 0.9,
            pre_challenge_acc: 0.6,
            points: vec![],
            outcome: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        emit_csv(&r, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\r\n"));
    }

    #[test]
    fn three_points_four_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        emit_csv(&sample_report(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with(CSV_HEADER));
    }

    #[test]
    fn csv_round_trip_at_6_decimals() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        emit_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let gap = report.performance_gap();
        for (line, p) in text.lines().skip(1).zip(&report.points) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0].parse::<usize>().unwrap(), p.size);
            assert_eq!(cells[1].parse::<f64>().unwrap(), p.best_lr);
            assert!((cells[2].parse::<f64>().unwrap() - p.original_test_acc).abs() < 5e-7);
            assert!((cells[3].parse::<f64>().unwrap() - p.challenge_test_acc).abs() < 5e-7);
            let closure = (p.challenge_test_acc - report.pre_challenge_acc) / gap;
            assert!((cells[4].parse::<f64>().unwrap() - closure).abs() < 5e-7);
        }
    }

    #[test]
    fn summarize_empty() {
        let table = summarize(&[]);
        assert_eq!(table.lines().count(), 1);
        assert!(table.starts_with("challenge"));
    }

    #[test]
    fn summarize_rows_match_reports() {
        let report = sample_report();
        let table = summarize(&[report.clone()]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        let row = lines[1];
        assert!(row.starts_with("word_overlap"));
        assert!(row.trim_end().ends_with("outcome1_dataset_weakness"), "row: {row}");
        assert!(row.contains("0.3000"));
        // max closure recomputed: (0.89 - 0.6) / 0.3
        assert!(row.contains(&format!("{:.4}", (0.89 - 0.6) / 0.3)));
    }

    #[test]
    fn curve_table_digests_are_stable() {
        let report = sample_report();
        let cfg = FeatureConfig::default();
        let plan = FineTunePlan::default();
        let a = build_curve_table(&report, &cfg, &plan).unwrap();
        let b = build_curve_table(&report, &cfg, &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        let other_plan = FineTunePlan { seed: 99, ..FineTunePlan::default() };
        let c = build_curve_table(&report, &cfg, &other_plan).unwrap();
        assert_ne!(a.header.plan_digest, c.header.plan_digest);
    }
}
