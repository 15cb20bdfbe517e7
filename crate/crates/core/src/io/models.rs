use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_header, csv_reader, csv_writer, fmt, open, parse_err, parse_f64};
use crate::error::{Error, Result};
use crate::fofreg::{BsplineBasis, FitDiagnostics, FofModel, PredictorCompression};
use crate::hpca::{Dimension, HpcaConfig, HpcaModel, MarginalBasis, Triplet};
use crate::tensorcore::{make_trapezoid_grid, Grid1D, MeanArray};

pub const FORMAT_VERSION: u32 = 1;

/// A CSV whose first column is a label and the rest numbers.
struct Table {
    header: Vec<String>,
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let src = path.display().to_string();
    let mut rdr = csv_reader(open(path)?);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(&src, Some(1), e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let (mut labels, mut rows) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(&src, e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        labels.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|f| parse_f64(f, "entry", &src, line))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, labels, rows })
}

fn write_table(path: &Path, header: &[String], labels: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for (label, row) in labels.iter().zip(rows) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], ncols: usize, src: &Path) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(parse_err(&src.display().to_string(), None, "ragged table"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|j| format!("{prefix}{j}")).collect()
}

fn read_manifest<T: for<'de> Deserialize<'de>>(dir: &Path, kind: &str) -> Result<T> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| parse_err(&path.display().to_string(), None, format!("cannot read: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| parse_err(&path.display().to_string(), Some(e.line() as u64), e.to_string()))?;
    let found_kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("");
    if found_kind != kind {
        return Err(parse_err(
            &path.display().to_string(),
            None,
            format!("expected a `{kind}` model, found `{found_kind}`"),
        ));
    }
    let version = value.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(parse_err(
            &path.display().to_string(),
            None,
            format!("unsupported format_version {version:?}"),
        ));
    }
    serde_json::from_value(value).map_err(|e| parse_err(&path.display().to_string(), None, e.to_string()))
}

fn write_manifest<T: Serialize>(dir: &Path, manifest: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct HpcaManifest {
    kind: String,
    format_version: u32,
    n: usize,
    regions: usize,
    omega_points: usize,
    s_points: usize,
    retained: [usize; 3],
    n_components: usize,
    config: HpcaConfig,
}

/// Writes `manifest.json`, `mean.csv`, `basis_{region,omega,s}.csv`,
/// `eigenvalues.csv`, `scores.csv` and `ranking.csv` into `dir`.
pub fn write_hpca_model(dir: &Path, model: &HpcaModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_manifest(
        dir,
        &HpcaManifest {
            kind: "hpca".into(),
            format_version: FORMAT_VERSION,
            n: model.n,
            regions: model.regions(),
            omega_points: model.omega_grid.len(),
            s_points: model.s_grid.len(),
            retained: [model.k(), model.l(), model.m()],
            n_components: model.n_components(),
            config: model.config,
        },
    )?;

    let mut w = csv_writer(&dir.join("mean.csv"))?;
    w.write_record(["region", "omega", "s", "value"])?;
    for r in 0..model.regions() {
        for (wi, &om) in model.omega_grid.points().iter().enumerate() {
            for (si, &s) in model.s_grid.points().iter().enumerate() {
                w.write_record([r.to_string(), fmt(om), fmt(s), fmt(model.mean.get(r, wi, si))])?;
            }
        }
    }
    w.flush()?;

    let bases = [
        (&model.basis_region, "basis_region.csv", "region", "v"),
        (&model.basis_omega, "basis_omega.csv", "omega", "phi"),
        (&model.basis_s, "basis_s.csv", "s", "psi"),
    ];
    for (basis, file, axis, prefix) in bases {
        let mut header = vec![axis.to_string()];
        header.extend(numbered(prefix, basis.retained()));
        let labels: Vec<String> = match basis.dimension {
            Dimension::Region => (0..basis.len()).map(|r| r.to_string()).collect(),
            Dimension::Omega => model.omega_grid.points().iter().map(|&p| fmt(p)).collect(),
            Dimension::S => model.s_grid.points().iter().map(|&p| fmt(p)).collect(),
        };
        write_table(&dir.join(file), &header, &labels, &matrix_rows(&basis.vectors))?;
    }

    let mut w = csv_writer(&dir.join("eigenvalues.csv"))?;
    w.write_record(["dimension", "index", "eigenvalue", "fve"])?;
    for basis in [&model.basis_region, &model.basis_omega, &model.basis_s] {
        for (j, (e, f)) in basis.eigenvalues.iter().zip(&basis.fve).enumerate() {
            w.write_record([basis.dimension.name().to_string(), (j + 1).to_string(), fmt(*e), fmt(*f)])?;
        }
    }
    w.flush()?;

    let q = model.n_components();
    let mut header = vec!["subject".to_string()];
    header.extend(numbered("c", q));
    let rows: Vec<Vec<f64>> = (0..model.n).map(|i| model.scores[i * q..(i + 1) * q].to_vec()).collect();
    let labels: Vec<String> = (0..model.n).map(|i| i.to_string()).collect();
    write_table(&dir.join("scores.csv"), &header, &labels, &rows)?;

    let mut w = csv_writer(&dir.join("ranking.csv"))?;
    w.write_record(["rank", "k", "l", "m", "score_variance"])?;
    for (j, (t, v)) in model.ranking.iter().zip(&model.score_variance).enumerate() {
        w.write_record([
            (j + 1).to_string(),
            (t.k + 1).to_string(),
            (t.l + 1).to_string(),
            (t.m + 1).to_string(),
            fmt(*v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hpca_model(dir: &Path) -> Result<HpcaModel> {
    let man: HpcaManifest = read_manifest(dir, "hpca")?;
    let shape_err = |what: &str| Error::Parse {
        path: dir.display().to_string(),
        detail: format!("{what} does not match the manifest"),
    };

    let mean_path = dir.join("mean.csv");
    let src = mean_path.display().to_string();
    let mut rdr = csv_reader(open(&mean_path)?);
    check_header(&mut rdr, &["region", "omega", "s", "value"], &src)?;
    let mut mean = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line());
        mean.push(parse_f64(&rec[3], "value", &src, line)?);
    }
    if mean.len() != man.regions * man.omega_points * man.s_points {
        return Err(shape_err("mean.csv"));
    }

    let load_basis = |file: &str, dimension: Dimension, len: usize, retained: usize| -> Result<(MarginalBasis, Vec<String>)> {
        let path = dir.join(file);
        let t = read_table(&path)?;
        if t.rows.len() != len || t.header.len() != retained + 1 {
            return Err(shape_err(file));
        }
        let vectors = rows_matrix(&t.rows, retained, &path)?;
        Ok((
            MarginalBasis {
                dimension,
                vectors,
                eigenvalues: Vec::new(),
                fve: Vec::new(),
            },
            t.labels,
        ))
    };
    let [k, l, m] = man.retained;
    let (mut basis_region, _) = load_basis("basis_region.csv", Dimension::Region, man.regions, k)?;
    let (mut basis_omega, w_labels) = load_basis("basis_omega.csv", Dimension::Omega, man.omega_points, l)?;
    let (mut basis_s, s_labels) = load_basis("basis_s.csv", Dimension::S, man.s_points, m)?;
    let grid = |labels: &[String], file: &str| -> Result<Grid1D> {
        let src = dir.join(file).display().to_string();
        let pts = labels
            .iter()
            .map(|x| parse_f64(x, "grid point", &src, None))
            .collect::<Result<Vec<_>>>()?;
        make_trapezoid_grid(&pts)
    };
    let omega_grid = grid(&w_labels, "basis_omega.csv")?;
    let s_grid = grid(&s_labels, "basis_s.csv")?;

    let eig_path = dir.join("eigenvalues.csv");
    let src = eig_path.display().to_string();
    let mut rdr = csv_reader(open(&eig_path)?);
    check_header(&mut rdr, &["dimension", "index", "eigenvalue", "fve"], &src)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line());
        let target = match &rec[0] {
            "region" => &mut basis_region,
            "omega" => &mut basis_omega,
            "s" => &mut basis_s,
            other => return Err(parse_err(&src, line, format!("unknown dimension `{other}`"))),
        };
        target.eigenvalues.push(parse_f64(&rec[2], "eigenvalue", &src, line)?);
        target.fve.push(parse_f64(&rec[3], "fve", &src, line)?);
    }
    for (b, len) in [(&basis_region, man.regions), (&basis_omega, man.omega_points), (&basis_s, man.s_points)] {
        if b.eigenvalues.len() != len {
            return Err(shape_err("eigenvalues.csv"));
        }
    }

    let q = man.n_components;
    let scores_path = dir.join("scores.csv");
    let t = read_table(&scores_path)?;
    if t.rows.len() != man.n || t.rows.iter().any(|r| r.len() != q) {
        return Err(shape_err("scores.csv"));
    }
    let scores: Vec<f64> = t.rows.concat();

    let rank_path = dir.join("ranking.csv");
    let src = rank_path.display().to_string();
    let mut rdr = csv_reader(open(&rank_path)?);
    check_header(&mut rdr, &["rank", "k", "l", "m", "score_variance"], &src)?;
    let (mut ranking, mut score_variance) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line());
        let idx = |f: &str, bound: usize| -> Result<usize> {
            match f.parse::<usize>() {
                Ok(v) if v >= 1 && v <= bound => Ok(v - 1),
                _ => Err(parse_err(&src, line, format!("index `{f}` out of range 1..={bound}"))),
            }
        };
        ranking.push(Triplet {
            k: idx(&rec[1], k)?,
            l: idx(&rec[2], l)?,
            m: idx(&rec[3], m)?,
        });
        score_variance.push(parse_f64(&rec[4], "score_variance", &src, line)?);
    }
    if ranking.len() != q || q != k * l * m {
        return Err(shape_err("ranking.csv"));
    }

    Ok(HpcaModel {
        n: man.n,
        mean: MeanArray {
            values: mean,
            regions: man.regions,
            omega_len: man.omega_points,
            s_len: man.s_points,
        },
        omega_grid,
        s_grid,
        basis_region,
        basis_omega,
        basis_s,
        scores,
        ranking,
        score_variance,
        config: man.config,
    })
}

#[derive(Serialize, Deserialize)]
struct CompressionMeta {
    eigenvalues: Vec<f64>,
    score_sd: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FofManifest {
    kind: String,
    format_version: u32,
    n_predictors: usize,
    g_basis: BsplineBasis,
    s_basis: BsplineBasis,
    chosen_penalty: f64,
    train_mspe: f64,
    gcv: Vec<(f64, f64)>,
    n_components: Vec<usize>,
    compression: Vec<CompressionMeta>,
}

/// Writes `manifest.json`, `intercept.csv`, `predictor_mean.csv`,
/// `coefficients_<j>.csv` and `directions_<j>.csv` (one pair per predictor, 1-based).
pub fn write_fof_model(dir: &Path, model: &FofModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_manifest(
        dir,
        &FofManifest {
            kind: "fof".into(),
            format_version: FORMAT_VERSION,
            n_predictors: model.n_predictors(),
            g_basis: model.g_basis.clone(),
            s_basis: model.s_basis.clone(),
            chosen_penalty: model.chosen_penalty,
            train_mspe: model.diagnostics.train_mspe,
            gcv: model.diagnostics.gcv.clone(),
            n_components: model.diagnostics.n_components.clone(),
            compression: model
                .compression
                .iter()
                .map(|c| CompressionMeta {
                    eigenvalues: c.eigenvalues.clone(),
                    score_sd: c.score_sd.clone(),
                })
                .collect(),
        },
    )?;
    let s_labels: Vec<String> = model.response_grid.points().iter().map(|&x| fmt(x)).collect();
    let rows: Vec<Vec<f64>> = model.intercept.iter().map(|&v| vec![v]).collect();
    write_table(&dir.join("intercept.csv"), &["s".into(), "value".into()], &s_labels, &rows)?;

    let p = model.n_predictors();
    let g_labels: Vec<String> = model.predictor_grid.points().iter().map(|&x| fmt(x)).collect();
    let mut header = vec!["g".to_string()];
    header.extend(numbered("mean_", p));
    let rows: Vec<Vec<f64>> = (0..g_labels.len())
        .map(|a| model.compression.iter().map(|c| c.mean[a]).collect())
        .collect();
    write_table(&dir.join("predictor_mean.csv"), &header, &g_labels, &rows)?;

    let basis_labels: Vec<String> = (1..=model.g_basis.n_basis()).map(|b| b.to_string()).collect();
    for (j, (c, comp)) in model.coefficients.iter().zip(&model.compression).enumerate() {
        let mut header = vec!["basis_g".to_string()];
        header.extend(numbered("s_basis_", c.ncols()));
        write_table(&dir.join(format!("coefficients_{}.csv", j + 1)), &header, &basis_labels, &matrix_rows(c))?;
        let mut header = vec!["basis_g".to_string()];
        header.extend(numbered("direction_", comp.directions.ncols()));
        write_table(
            &dir.join(format!("directions_{}.csv", j + 1)),
            &header,
            &basis_labels,
            &matrix_rows(&comp.directions),
        )?;
    }
    Ok(())
}

pub fn read_fof_model(dir: &Path) -> Result<FofModel> {
    let man: FofManifest = read_manifest(dir, "fof")?;
    let p = man.n_predictors;
    if man.compression.len() != p {
        return Err(parse_err(&dir.display().to_string(), None, "compression list length differs from n_predictors"));
    }
    let grid_of = |t: &Table, path: &Path| -> Result<Grid1D> {
        let src = path.display().to_string();
        let pts = t
            .labels
            .iter()
            .map(|x| parse_f64(x, "grid point", &src, None))
            .collect::<Result<Vec<_>>>()?;
        make_trapezoid_grid(&pts)
    };
    let ipath = dir.join("intercept.csv");
    let it = read_table(&ipath)?;
    let response_grid = grid_of(&it, &ipath)?;
    let intercept: Vec<f64> = rows_matrix(&it.rows, 1, &ipath)?.iter().copied().collect();

    let mpath = dir.join("predictor_mean.csv");
    let mt = read_table(&mpath)?;
    let predictor_grid = grid_of(&mt, &mpath)?;
    let means = rows_matrix(&mt.rows, p, &mpath)?;

    let (nbg, nbs) = (man.g_basis.n_basis(), man.s_basis.n_basis());
    let mut coefficients = Vec::with_capacity(p);
    let mut compression = Vec::with_capacity(p);
    for (j, meta) in man.compression.into_iter().enumerate() {
        let cpath = dir.join(format!("coefficients_{}.csv", j + 1));
        let ct = read_table(&cpath)?;
        if ct.rows.len() != nbg {
            return Err(parse_err(&cpath.display().to_string(), None, "row count differs from the g basis size"));
        }
        coefficients.push(rows_matrix(&ct.rows, nbs, &cpath)?);
        let dpath = dir.join(format!("directions_{}.csv", j + 1));
        let dt = read_table(&dpath)?;
        let kept = dt.header.len() - 1;
        if dt.rows.len() != nbg || kept != meta.score_sd.len() {
            return Err(parse_err(&dpath.display().to_string(), None, "shape differs from the manifest"));
        }
        compression.push(PredictorCompression {
            mean: means.column(j).iter().copied().collect(),
            directions: rows_matrix(&dt.rows, kept, &dpath)?,
            eigenvalues: meta.eigenvalues,
            score_sd: meta.score_sd,
        });
    }
    FofModel::from_parts(
        response_grid,
        predictor_grid,
        intercept,
        man.g_basis,
        man.s_basis,
        coefficients,
        compression,
        man.chosen_penalty,
        FitDiagnostics {
            train_mspe: man.train_mspe,
            gcv: man.gcv,
            n_components: man.n_components,
        },
    )
}
