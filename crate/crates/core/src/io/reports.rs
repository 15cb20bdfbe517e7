use std::fs;
use std::path::Path;

use serde_json::json;

use super::{csv_writer, fmt};
use crate::error::Result;
use crate::selection::{ResplitSummary, SelectionResult};
use crate::simgen::{ArmOutcome, ReplicateRecord, SummaryRow};

pub const REPORT_HEADER: [&str; 10] = [
    "scenario", "n", "omega", "beta", "arm", "metric", "median", "q1", "q3", "completed",
];

/// `q,mspe_train,mspe_test,seconds`, one row per prefix size.
pub fn write_selection_csv(path: &Path, train: &[f64], test: &[f64], seconds: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["q", "mspe_train", "mspe_test", "seconds"])?;
    for q in 0..test.len() {
        w.write_record([q.to_string(), fmt(train[q]), fmt(test[q]), fmt(seconds[q])])?;
    }
    w.flush()?;
    Ok(())
}

/// `selection.csv` plus `summary.json` for a single split.
pub fn write_selection(dir: &Path, result: &SelectionResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_selection_csv(
        &dir.join("selection.csv"),
        &result.train_mspe_by_q,
        &result.mspe_by_q,
        &result.seconds,
    )?;
    let summary = json!({
        "q_min": result.q_min,
        "n_components": result.n_components(),
        "split_seed": result.split_seed,
        "mspe_test_at_q_min": result.mspe_by_q[result.q_min],
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// `selection.csv` with the resplit means, `resplit_<r>.csv` per split and `summary.json`.
pub fn write_resplit_summary(dir: &Path, summary: &ResplitSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_selection_csv(
        &dir.join("selection.csv"),
        &summary.mean_train_by_q,
        &summary.mean_test_by_q,
        &summary.mean_seconds_by_q,
    )?;
    for (r, s) in summary.per_split.iter().enumerate() {
        write_selection_csv(
            &dir.join(format!("resplit_{}.csv", r + 1)),
            &s.train_mspe_by_q,
            &s.mspe_by_q,
            &s.seconds,
        )?;
    }
    let per_split_q: Vec<usize> = summary.per_split.iter().map(|s| s.q_min).collect();
    let seeds: Vec<u64> = summary.per_split.iter().map(|s| s.split_seed).collect();
    let doc = json!({
        "q_min": summary.q_min,
        "n_components": summary.mean_test_by_q.len() - 1,
        "resplits": summary.per_split.len(),
        "per_split_q_min": per_split_q,
        "split_seeds": seeds,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

/// Median / quartile table, one row per cell, arm and metric.
pub fn write_report_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for row in rows {
        let (med, q1, q3) = match row.quartiles {
            Some(q) => (fmt(q.median), fmt(q.q1), fmt(q.q3)),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        w.write_record([
            row.cell.scenario.to_string(),
            row.cell.n.to_string(),
            row.cell.omega.clone(),
            row.cell.beta.clone(),
            row.cell.arm.clone(),
            row.metric.clone(),
            med,
            q1,
            q3,
            row.completed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long table of every completed replicate's metrics.
pub fn write_records_csv(path: &Path, records: &[ReplicateRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["scenario", "n", "omega", "beta", "arm", "replicate", "metric", "value"])?;
    for rec in records {
        if let ArmOutcome::Completed { metrics, .. } = &rec.outcome {
            for (name, v) in metrics {
                w.write_record([
                    rec.cell.scenario.to_string(),
                    rec.cell.n.to_string(),
                    rec.cell.omega.clone(),
                    rec.cell.beta.clone(),
                    rec.cell.arm.clone(),
                    (rec.replicate + 1).to_string(),
                    name.clone(),
                    if v.is_finite() { fmt(*v) } else { "NA".into() },
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let res = SelectionResult {
            mspe_by_q: vec![2.0, 0.5],
            train_mspe_by_q: vec![1.0, 0.25],
            q_min: 1,
            split_seed: 3,
            seconds: vec![0.0, 0.125],
        };
        write_selection(dir.path(), &res).unwrap();
        let text = fs::read_to_string(dir.path().join("selection.csv")).unwrap();
        assert_eq!(text, "q,mspe_train,mspe_test,seconds\n0,1,2,0\n1,0.25,0.5,0.125\n");
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["q_min"], 1);
    }
}
