use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hybridfpca::io::{read_curves_csv, read_tensor_csv, write_curves_csv, write_tensor_csv, LabeledCurves, LabeledTensor};
use hybridfpca::pooling::pool_to_curve;
use hybridfpca::selection::select_with_resplits;
use hybridfpca::{FofConfig, FunctionalSample, Grid1D, HpcaConfig, HybridTensor};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridfpca"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/rank1")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_scenario_config(dir: &Path) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, r#"{"replicates": 3}"#).unwrap();
    p
}

#[test]
fn simulate_is_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scenario_config(dir.path());
    let outs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    for (out, threads) in outs.iter().zip(["1", "4", "2"]) {
        let o = run(&[
            "--threads", threads, "simulate", "--scenario", "2", "--seed", "7", "--config", s(&cfg), "--out", s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["report.csv", "replicates.csv"] {
        let a = fs::read(outs[0].join(file)).unwrap();
        for out in &outs[1..] {
            assert_eq!(a, fs::read(out.join(file)).unwrap(), "{file} differs");
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["replicates"], 3);
    assert!(outs[0].join("timing.csv").is_file());

    let o = run(&["report", "--input", s(&outs[0]), "--out", s(&outs[0])]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("MSPE_pred_train") && table.contains("HPCA_All"));
}

#[test]
fn malformed_json_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"replicates\": 2,\n  \"seed\" 4\n}\n").unwrap();
    let o = run(&["simulate", "--scenario", "1", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("column"), "{e}");
}

#[test]
fn bad_scenario_and_unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(run(&["simulate", "--scenario", "3", "--out", s(&out)]).status.code(), Some(2));
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"replicate": 2}"#).unwrap();
    let o = run(&["simulate", "--scenario", "2", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicate"));
}

#[test]
fn missing_predictor_lists_expected_paths() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture();
    let missing = dir.path().join("nope.csv");
    let o = run(&[
        "select",
        "--tensor", s(&fx.join("tensor.csv")),
        "--predictor", s(&fx.join("predictor_1.csv")),
        "--predictor", s(&missing),
        "--out", s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("nope.csv") && e.contains("predictor_1.csv"), "{e}");
}

#[test]
fn subject_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture();
    let p = read_curves_csv(&fx.join("predictor_1.csv")).unwrap();
    let keep: Vec<usize> = (0..p.sample.n() - 1).collect();
    let short = LabeledCurves {
        sample: p.sample.select(&keep).unwrap(),
        subjects: p.subjects[..keep.len()].to_vec(),
    };
    let path = dir.path().join("short.csv");
    write_curves_csv(&path, &short, "g").unwrap();
    let o = run(&[
        "select", "--tensor", s(&fx.join("tensor.csv")), "--predictor", s(&path), "--out", s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing [39]"), "{}", stderr(&o));
}

fn selection_columns(dir: &Path) -> Vec<(String, String, String)> {
    fs::read_to_string(dir.join("selection.csv"))
        .unwrap()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect()
}

#[test]
fn select_on_fixture_picks_one_and_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture();
    let mut args: Vec<String> = vec!["select".into(), "--tensor".into(), s(&fx.join("tensor.csv")).into()];
    for j in 1..=3 {
        args.push("--predictor".into());
        args.push(s(&fx.join(format!("predictor_{j}.csv"))).into());
    }
    args.extend(["--resplits".into(), "1".into(), "--seed".into(), "7".into()]);
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let mut a = args.clone();
        a.extend(["--out".into(), s(out).into()]);
        let o = bin().args(&a).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(selection_columns(&outs[0]), selection_columns(&outs[1]));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["q_min"], 1);

    let tensor = read_tensor_csv(&fx.join("tensor.csv")).unwrap();
    let preds: Vec<FunctionalSample> = (1..=3)
        .map(|j| read_curves_csv(&fx.join(format!("predictor_{j}.csv"))).unwrap().sample)
        .collect();
    let fof = FofConfig { seed: 7, ..Default::default() };
    let direct = select_with_resplits(&tensor.tensor, &preds, &fof, &HpcaConfig::default(), 1).unwrap();
    let cols = selection_columns(&outs[0]);
    for (q, row) in cols[1..].iter().enumerate() {
        let test: f64 = row.2.parse().unwrap();
        let train: f64 = row.1.parse().unwrap();
        assert!((test - direct.mean_test_by_q[q]).abs() <= 1e-12);
        assert!((train - direct.mean_train_by_q[q]).abs() <= 1e-12);
    }
}

#[test]
fn decompose_then_pool_matches_pooled_demeaned_input() {
    let dir = tempfile::tempdir().unwrap();
    let (wg, sg) = (Grid1D::uniform(0.0, 1.0, 7).unwrap(), Grid1D::uniform(0.0, 1.0, 9).unwrap());
    let a = [1.5, -0.7, 0.3, 2.2, -1.1, 0.4];
    let b = [-0.2, 0.9, 1.3, -0.5, 0.8, -1.7];
    let t = HybridTensor::from_fn(6, 3, wg, sg, |i, r, w, s| {
        let (x, y) = (w as f64 / 6.0, s as f64 / 8.0);
        let v = [1.0, 2.0, -0.5][r];
        a[i] * v * (1.0 + x) * (3.14 * y).sin() + b[i] * v * (2.0 * x - 1.0) * y * y + 0.5
    })
    .unwrap();
    let tpath = dir.path().join("t.csv");
    write_tensor_csv(&tpath, &LabeledTensor::unlabeled(t.clone())).unwrap();
    let model = dir.path().join("model");
    let o = run(&["decompose", "--tensor", s(&tpath), "--fve", "1", "--out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pooled = dir.path().join("pooled");
    assert!(run(&["pool", "--model", s(&model), "--out", s(&pooled)]).status.success());
    let got = read_curves_csv(&pooled.join("curves.csv")).unwrap().sample;

    let raw = pool_to_curve(&t).unwrap();
    let mean = raw.mean_curve();
    for i in 0..6 {
        for (j, m) in mean.iter().enumerate() {
            assert!((got.get(i, j) - (raw.get(i, j) - m)).abs() <= 1e-8);
        }
    }
}

#[test]
fn fit_with_zero_predictor_returns_mean_intercept() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid1D::uniform(0.0, 1.0, 11).unwrap();
    let resp = FunctionalSample::from_fn(8, g.clone(), |i, j| (i as f64) * 0.3 + (j as f64 * 0.4).cos()).unwrap();
    let zero = FunctionalSample::zeros(8, g);
    let (rp, xp) = (dir.path().join("r.csv"), dir.path().join("x.csv"));
    write_curves_csv(&rp, &LabeledCurves::unlabeled(resp.clone()), "s").unwrap();
    write_curves_csv(&xp, &LabeledCurves::unlabeled(zero), "g").unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"fof": {"n_basis_g": 5, "n_basis_s": 5}}"#).unwrap();
    let out = dir.path().join("fit");
    let o = run(&["fit", "--response", s(&rp), "--predictor", s(&xp), "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = hybridfpca::io::read_fof_model(&out).unwrap();
    for (a, b) in model.intercept.iter().zip(resp.mean_curve()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn ill_posed_fit_exits_3_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid1D::uniform(0.0, 1.0, 11).unwrap();
    let resp = FunctionalSample::from_fn(3, g.clone(), |i, j| (i * j) as f64).unwrap();
    let mut args = vec!["fit".to_string(), "--response".into()];
    let rp = dir.path().join("r.csv");
    write_curves_csv(&rp, &LabeledCurves::unlabeled(resp), "s").unwrap();
    args.push(s(&rp).into());
    for k in 0..3 {
        let x = FunctionalSample::from_fn(3, g.clone(), |i, j| ((i + k) as f64 * 0.7 + j as f64).sin()).unwrap();
        let p = dir.path().join(format!("x{k}.csv"));
        write_curves_csv(&p, &LabeledCurves::unlabeled(x), "g").unwrap();
        args.extend(["--predictor".into(), s(&p).into()]);
    }
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"fof": {"n_basis_g": 5, "n_basis_s": 5}}"#).unwrap();
    args.extend(["--config".into(), s(&cfg).into(), "--out".into(), s(&dir.path().join("o")).into()]);
    let o = bin().args(&args).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("ill-posed"), "{}", stderr(&o));
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_presets_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    let cfg = configs().join("scenario1_smoke.json");
    let o = run(&["simulate", "--scenario", "1", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| l.ends_with(",2")), "a replicate failed:\n{report}");

    let fx = fixture();
    let pipe = configs().join("pipeline.json");
    let o = run(&["decompose", "--tensor", s(&fx.join("tensor.csv")), "--config", s(&pipe), "--out", s(&dir.path().join("m"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn conflicting_scenario_in_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("scenario1_paper_scale.json");
    let o = run(&["simulate", "--scenario", "2", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario 1"), "{}", stderr(&o));
}
