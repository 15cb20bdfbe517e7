//! File formats. Every CSV is UTF-8, comma-delimited, with a mandatory header
//! row; floats are written in their shortest round-trip form so that a value
//! read back is bit-identical to the one written.

mod models;
mod reports;

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorcore::{make_trapezoid_grid, FunctionalSample, HybridTensor};

pub use models::{read_fof_model, read_hpca_model, write_fof_model, write_hpca_model, FORMAT_VERSION};
pub use reports::{
    write_records_csv, write_report_csv, write_resplit_summary, write_selection, write_selection_csv,
    REPORT_HEADER,
};

/// A tensor together with the subject and region labels found in its file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTensor {
    pub tensor: HybridTensor,
    pub subjects: Vec<String>,
    pub regions: Vec<String>,
}

impl LabeledTensor {
    /// Labels subjects and regions by their zero-based index.
    pub fn unlabeled(tensor: HybridTensor) -> Self {
        LabeledTensor {
            subjects: (0..tensor.n()).map(|i| i.to_string()).collect(),
            regions: (0..tensor.regions()).map(|r| r.to_string()).collect(),
            tensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCurves {
    pub sample: FunctionalSample,
    pub subjects: Vec<String>,
}

impl LabeledCurves {
    pub fn unlabeled(sample: FunctionalSample) -> Self {
        LabeledCurves {
            subjects: (0..sample.n()).map(|i| i.to_string()).collect(),
            sample,
        }
    }

    /// Reorders the curves to follow `subjects`; every subject must be present exactly once.
    pub fn aligned_to(&self, subjects: &[String], source: &str) -> Result<FunctionalSample> {
        let index: HashMap<&str, usize> = self.subjects.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let missing: Vec<&str> = subjects
            .iter()
            .filter(|s| !index.contains_key(s.as_str()))
            .map(|s| s.as_str())
            .collect();
        if !missing.is_empty() || self.subjects.len() != subjects.len() {
            let extra: Vec<&str> = self
                .subjects
                .iter()
                .filter(|s| !subjects.contains(s))
                .map(|s| s.as_str())
                .collect();
            return Err(Error::InvalidData(format!(
                "subjects of {source} do not match: missing [{}], unexpected [{}]",
                missing.join(", "),
                extra.join(", ")
            )));
        }
        let order: Vec<usize> = subjects.iter().map(|s| index[s.as_str()]).collect();
        self.sample.select(&order)
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn parse_err(path: &str, line: Option<u64>, detail: impl Into<String>) -> Error {
    let detail = detail.into();
    Error::Parse {
        path: path.to_string(),
        detail: match line {
            Some(l) => format!("line {l}: {detail}"),
            None => detail,
        },
    }
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| parse_err(&path.display().to_string(), None, format!("cannot open: {e}")))
}

pub(crate) fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().from_path(path)?)
}

fn parse_f64(field: &str, what: &str, src: &str, line: Option<u64>) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(src, line, format!("{what} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(src, line, format!("{what} `{field}` is not finite")));
    }
    Ok(v)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str], src: &str) -> Result<csv::StringRecord> {
    let header = rdr
        .headers()
        .map_err(|e| parse_err(src, Some(1), e.to_string()))?
        .clone();
    let ok = header.len() == expected.len()
        && header.iter().zip(expected).all(|(h, e)| *e == "*" || h == *e);
    if !ok {
        return Err(parse_err(
            src,
            Some(1),
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(header)
}

/// Sorted distinct values plus a lookup from bit pattern to position.
fn axis(values: &[f64]) -> (Vec<f64>, HashMap<u64, usize>) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let map = v.iter().enumerate().map(|(i, x)| (x.to_bits(), i)).collect();
    (v, map)
}

fn label_index(labels: &mut Vec<String>, map: &mut HashMap<String, usize>, label: &str) -> usize {
    *map.entry(label.to_string()).or_insert_with(|| {
        labels.push(label.to_string());
        labels.len() - 1
    })
}

/// Reads a long-form `subject,region,omega,s,value` file.
pub fn read_tensor_csv(path: &Path) -> Result<LabeledTensor> {
    parse_tensor_csv(open(path)?, &path.display().to_string())
}

pub fn parse_tensor_csv<R: Read>(reader: R, src: &str) -> Result<LabeledTensor> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["subject", "region", "omega", "s", "value"], src)?;
    let (mut subjects, mut regions) = (Vec::new(), Vec::new());
    let (mut subj_map, mut reg_map) = (HashMap::new(), HashMap::new());
    let mut rows: Vec<(usize, usize, f64, f64, f64, Option<u64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(src, e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        let i = label_index(&mut subjects, &mut subj_map, &rec[0]);
        let r = label_index(&mut regions, &mut reg_map, &rec[1]);
        let w = parse_f64(&rec[2], "omega", src, line)?;
        let s = parse_f64(&rec[3], "s", src, line)?;
        let v = parse_f64(&rec[4], "value", src, line)?;
        rows.push((i, r, w, s, v, line));
    }
    if rows.is_empty() {
        return Err(parse_err(src, None, "no data rows"));
    }
    let (w_pts, w_map) = axis(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    let (s_pts, s_map) = axis(&rows.iter().map(|r| r.3).collect::<Vec<_>>());
    let (n, nr, nw, ns) = (subjects.len(), regions.len(), w_pts.len(), s_pts.len());
    let mut values = vec![0.0; n * nr * nw * ns];
    let mut seen = vec![false; values.len()];
    let mut per_slice = vec![0usize; n * nw];
    for &(i, r, w, s, v, line) in &rows {
        let (wi, si) = (w_map[&w.to_bits()], s_map[&s.to_bits()]);
        let k = ((i * nr + r) * nw + wi) * ns + si;
        if seen[k] {
            return Err(parse_err(
                src,
                line,
                format!("duplicate entry for subject {}, region {}, omega {w}, s {s}", subjects[i], regions[r]),
            ));
        }
        seen[k] = true;
        values[k] = v;
        per_slice[i * nw + wi] += 1;
    }
    let mut mask = vec![true; n * nw];
    for i in 0..n {
        for wi in 0..nw {
            match per_slice[i * nw + wi] {
                0 => mask[i * nw + wi] = false,
                c if c == nr * ns => {}
                c => {
                    return Err(parse_err(
                        src,
                        None,
                        format!(
                            "subject {} at omega {} has {c} of {} region x s entries",
                            subjects[i],
                            w_pts[wi],
                            nr * ns
                        ),
                    ))
                }
            }
        }
    }
    let mask = if mask.iter().all(|&b| b) { None } else { Some(mask) };
    let tensor = HybridTensor::new(
        values,
        n,
        nr,
        make_trapezoid_grid(&w_pts)?,
        make_trapezoid_grid(&s_pts)?,
        mask,
    )?;
    Ok(LabeledTensor { tensor, subjects, regions })
}

pub fn write_tensor_csv(path: &Path, data: &LabeledTensor) -> Result<()> {
    let t = &data.tensor;
    let mut w = csv_writer(path)?;
    w.write_record(["subject", "region", "omega", "s", "value"])?;
    for i in 0..t.n() {
        for r in 0..t.regions() {
            for (wi, &om) in t.omega_grid().points().iter().enumerate() {
                if !t.is_observed(i, wi) {
                    continue;
                }
                for (si, &s) in t.s_grid().points().iter().enumerate() {
                    w.write_record([
                        data.subjects[i].as_str(),
                        data.regions[r].as_str(),
                        &fmt(om),
                        &fmt(s),
                        &fmt(t.get(i, r, wi, si)),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `subject,<axis>,value` curves; the axis column may carry any name.
pub fn read_curves_csv(path: &Path) -> Result<LabeledCurves> {
    parse_curves_csv(open(path)?, &path.display().to_string())
}

pub fn parse_curves_csv<R: Read>(reader: R, src: &str) -> Result<LabeledCurves> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["subject", "*", "value"], src)?;
    let mut subjects = Vec::new();
    let mut subj_map = HashMap::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(src, e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        let i = label_index(&mut subjects, &mut subj_map, &rec[0]);
        rows.push((i, parse_f64(&rec[1], "grid point", src, line)?, parse_f64(&rec[2], "value", src, line)?, line));
    }
    if rows.is_empty() {
        return Err(parse_err(src, None, "no data rows"));
    }
    let (pts, map) = axis(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let (n, m) = (subjects.len(), pts.len());
    let mut values = vec![0.0; n * m];
    let mut seen = vec![false; n * m];
    for &(i, x, v, line) in &rows {
        let k = i * m + map[&x.to_bits()];
        if seen[k] {
            return Err(parse_err(src, line, format!("duplicate entry for subject {} at {x}", subjects[i])));
        }
        seen[k] = true;
        values[k] = v;
    }
    if let Some(k) = seen.iter().position(|&b| !b) {
        return Err(parse_err(
            src,
            None,
            format!("subject {} has no value at grid point {}", subjects[k / m], pts[k % m]),
        ));
    }
    let sample = FunctionalSample::new(values, n, make_trapezoid_grid(&pts)?)?;
    Ok(LabeledCurves { sample, subjects })
}

pub fn write_curves_csv(path: &Path, data: &LabeledCurves, axis_name: &str) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["subject", axis_name, "value"])?;
    let pts = data.sample.grid().points();
    for i in 0..data.sample.n() {
        for (j, &x) in pts.iter().enumerate() {
            w.write_record([data.subjects[i].as_str(), &fmt(x), &fmt(data.sample.get(i, j))])?;
        }
    }
    w.flush()?;
    Ok(())
}
