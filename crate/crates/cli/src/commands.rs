use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hybridfpca::fofreg::{fit_fof, predict};
use hybridfpca::hpca::fit_hpca;
use hybridfpca::io::{
    read_curves_csv, read_hpca_model, read_tensor_csv, write_curves_csv, write_fof_model, write_hpca_model,
    write_records_csv, write_report_csv, write_resplit_summary, LabeledCurves, REPORT_HEADER,
};
use hybridfpca::metrics::timing_capture;
use hybridfpca::pooling::{pool_reconstruction, pool_to_curve};
use hybridfpca::selection::select_with_resplits;
use hybridfpca::simgen::{run_scenario, ArmOutcome};
use hybridfpca::{Error, FunctionalSample, Result};
use serde_json::json;

use crate::config::{pipeline_config, scenario_config};
use crate::Common;

fn require_files(paths: &[&Path]) -> Result<()> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    let expected: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    Err(Error::InvalidConfig(format!(
        "missing input file(s): {} (expected: {})",
        missing.join(", "),
        expected.join(", ")
    )))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_subjects(path: &Path, subjects: &[String]) -> Result<()> {
    let mut text = String::from("subject\n");
    for s in subjects {
        text.push_str(s);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_subjects(path: &Path, n: usize) -> Result<Vec<String>> {
    if !path.is_file() {
        return Ok((0..n).map(|i| i.to_string()).collect());
    }
    let text = fs::read_to_string(path)?;
    let subjects: Vec<String> = text.lines().skip(1).map(|l| l.trim().to_string()).collect();
    if subjects.len() != n {
        return Err(Error::Parse {
            path: path.display().to_string(),
            detail: format!("{} subjects listed, model has {n}", subjects.len()),
        });
    }
    Ok(subjects)
}

fn read_predictors(paths: &[PathBuf], subjects: &[String]) -> Result<Vec<FunctionalSample>> {
    paths
        .iter()
        .map(|p| read_curves_csv(p)?.aligned_to(subjects, &p.display().to_string()))
        .collect()
}

pub fn simulate(scenario: u8, common: &Common, threads: usize) -> Result<()> {
    let cfg = scenario_config(scenario, common.config.as_deref(), common.seed)?;
    fs::create_dir_all(&common.out)?;
    log::info!("scenario {scenario}: {} replicates, seed {}", cfg.replicates, cfg.seed);
    let (report, timing) = timing_capture(|| run_scenario(&cfg));
    let report = report?;
    write_report_csv(&common.out.join("report.csv"), &report.summary_rows())?;
    write_records_csv(&common.out.join("replicates.csv"), &report.records)?;
    write_report_csv(&common.out.join("timing.csv"), &report.timing_rows())?;

    let failures: Vec<_> = report
        .records
        .iter()
        .filter_map(|r| match &r.outcome {
            ArmOutcome::Failed { reason } => Some(json!({
                "n": r.cell.n, "omega": r.cell.omega, "beta": r.cell.beta, "arm": r.cell.arm,
                "replicate": r.replicate + 1, "reason": reason,
            })),
            ArmOutcome::Completed { .. } => None,
        })
        .collect();
    if !failures.is_empty() {
        log::warn!("{} replicate fits failed; see manifest.json", failures.len());
    }
    write_json(
        &common.out.join("manifest.json"),
        &json!({
            "tool": "hybridfpca",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "simulate",
            "scenario": scenario,
            "seed": cfg.seed,
            "threads": threads,
            "config": cfg,
            "failures": failures,
            "timing": { "elapsed": timing.elapsed, "user": timing.user, "system": timing.system },
        }),
    )
}

pub fn decompose(tensor: &Path, fve: Option<f64>, common: &Common) -> Result<()> {
    require_files(&[tensor])?;
    let cfg = pipeline_config(common.config.as_deref(), common.seed, fve)?;
    let data = read_tensor_csv(tensor)?;
    let model = fit_hpca(&data.tensor, &cfg.hpca)?;
    log::info!(
        "retained {} x {} x {} = {} components",
        model.k(),
        model.l(),
        model.m(),
        model.n_components()
    );
    write_hpca_model(&common.out, &model)?;
    write_subjects(&common.out.join("subjects.csv"), &data.subjects)
}

pub fn pool(tensor: Option<&Path>, model: Option<&Path>, q: Option<usize>, out: &Path) -> Result<()> {
    let curves = match (tensor, model) {
        (Some(t), _) => {
            require_files(&[t])?;
            let data = read_tensor_csv(t)?;
            LabeledCurves {
                sample: pool_to_curve(&data.tensor)?,
                subjects: data.subjects,
            }
        }
        (None, Some(dir)) => {
            require_files(&[&dir.join("manifest.json")])?;
            let m = read_hpca_model(dir)?;
            let q = q.unwrap_or(m.n_components());
            LabeledCurves {
                sample: pool_reconstruction(&m, q)?,
                subjects: read_subjects(&dir.join("subjects.csv"), m.n)?,
            }
        }
        (None, None) => return Err(Error::InvalidConfig("pass --tensor or --model".into())),
    };
    fs::create_dir_all(out)?;
    write_curves_csv(&out.join("curves.csv"), &curves, "s")
}

pub fn fit(response: &Path, predictors: &[PathBuf], common: &Common) -> Result<()> {
    let mut all: Vec<&Path> = vec![response];
    all.extend(predictors.iter().map(|p| p.as_path()));
    require_files(&all)?;
    let cfg = pipeline_config(common.config.as_deref(), common.seed, None)?;
    let resp = read_curves_csv(response)?;
    let xs = read_predictors(predictors, &resp.subjects)?;
    let model = fit_fof(&resp.sample, &xs, &cfg.fof)?;
    log::info!("penalty {} , train MSPE {}", model.chosen_penalty, model.diagnostics.train_mspe);
    write_fof_model(&common.out, &model)?;
    let fitted = LabeledCurves {
        sample: predict(&model, &xs)?,
        subjects: resp.subjects,
    };
    write_curves_csv(&common.out.join("fitted.csv"), &fitted, "s")
}

pub fn select(
    tensor: &Path,
    predictors: &[PathBuf],
    fve: Option<f64>,
    resplits: usize,
    common: &Common,
) -> Result<()> {
    let mut all: Vec<&Path> = vec![tensor];
    all.extend(predictors.iter().map(|p| p.as_path()));
    require_files(&all)?;
    let cfg = pipeline_config(common.config.as_deref(), common.seed, fve)?;
    let data = read_tensor_csv(tensor)?;
    let xs = read_predictors(predictors, &data.subjects)?;
    let summary = select_with_resplits(&data.tensor, &xs, &cfg.fof, &cfg.hpca, resplits)?;
    log::info!("q_min = {} of {}", summary.q_min, summary.mean_test_by_q.len() - 1);
    write_resplit_summary(&common.out, &summary)?;
    println!("q_min = {}", summary.q_min);
    Ok(())
}

fn short(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e4) => format!("{x:.3e}"),
        Ok(x) => format!("{x:.4}"),
        Err(_) => v.to_string(),
    }
}

pub fn report(input: &Path, out: Option<&Path>) -> Result<()> {
    let path = input.join("report.csv");
    require_files(&[&path])?;
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != REPORT_HEADER.join(",") {
        return Err(Error::Parse {
            path: path.display().to_string(),
            detail: format!("unexpected header `{header}`"),
        });
    }
    let mut cells: Vec<String> = Vec::new();
    let mut metrics: Vec<String> = Vec::new();
    let mut table: BTreeMap<(String, String), String> = BTreeMap::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != REPORT_HEADER.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                detail: format!("line {}: expected {} fields", k + 2, REPORT_HEADER.len()),
            });
        }
        let cell = format!("n={} omega={} beta={} {}", f[1], f[2], f[3], f[4]);
        if !cells.contains(&cell) {
            cells.push(cell.clone());
        }
        if !metrics.iter().any(|m| m == f[5]) {
            metrics.push(f[5].to_string());
        }
        let entry = format!("{} ({}, {})", short(f[6]), short(f[7]), short(f[8]));
        table.insert((f[5].to_string(), cell), entry);
    }
    let mut rows = vec![std::iter::once("metric".to_string()).chain(cells.iter().cloned()).collect::<Vec<_>>()];
    for m in &metrics {
        let mut row = vec![m.clone()];
        row.extend(cells.iter().map(|c| table.get(&(m.clone(), c.clone())).cloned().unwrap_or_default()));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for row in &rows {
        let padded: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        println!("{}", padded.join("  ").trim_end());
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let quote = |v: &String| {
            if v.contains(',') {
                format!("\"{v}\"")
            } else {
                v.clone()
            }
        };
        let csv: Vec<String> = rows
            .iter()
            .map(|r| r.iter().map(quote).collect::<Vec<_>>().join(","))
            .collect();
        fs::write(dir.join("table.csv"), csv.join("\n") + "\n")?;
    }
    Ok(())
}
