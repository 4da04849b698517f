//! CSV ingestion and export.
//!
//! Curves use the long format `sample_id,predictor_id,t,value`; responses
//! use `sample_id,y`. Samples and predictors are ordered by first
//! appearance. Every (sample, predictor) pair must carry the same set of
//! `t` values, which are mapped affinely onto `[0, 1]` and interpolated
//! onto the target grid.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fdata::{resample_linear, CurveSet, Dataset, Grid};

const CURVE_HEADER: [&str; 4] = ["sample_id", "predictor_id", "t", "value"];
const RESPONSE_HEADER: [&str; 2] = ["sample_id", "y"];

/// Curves together with their external identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub sample_ids: Vec<String>,
    pub predictor_ids: Vec<String>,
    pub curves: CurveSet,
}

/// A dataset with external identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub sample_ids: Vec<String>,
    pub predictor_ids: Vec<String>,
    pub data: Dataset,
}

fn csv_err(line: u64, message: impl Into<String>) -> Error {
    Error::Csv { line, message: message.into() }
}

fn from_csv(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => csv_err(line, format!("{kind:?}")),
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let got = rdr.headers().map_err(from_csv)?;
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want {
        return Err(csv_err(1, format!("expected header '{}', found '{}'", want.join(","), got.join(","))));
    }
    Ok(())
}

fn parse_f64(field: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| csv_err(line, format!("{name} '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(csv_err(line, format!("{name} is not finite")));
    }
    Ok(v)
}

fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, id: &str) -> usize {
    *index.entry(id.to_string()).or_insert_with(|| {
        ids.push(id.to_string());
        ids.len() - 1
    })
}

/// Reads long-format curves and resamples them onto `grid`.
pub fn read_curves<R: Read>(reader: R, grid: &Grid) -> Result<CurveTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &CURVE_HEADER)?;
    let (mut samples, mut sample_idx) = (Vec::new(), HashMap::new());
    let (mut preds, mut pred_idx) = (Vec::new(), HashMap::new());
    // (sample, predictor) -> [(t, value, line)]
    let mut cells: HashMap<(usize, usize), Vec<(f64, f64, u64)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(from_csv)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(csv_err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(csv_err(line, "empty identifier"));
        }
        let n = intern(&mut samples, &mut sample_idx, &rec[0]);
        let j = intern(&mut preds, &mut pred_idx, &rec[1]);
        let t = parse_f64(&rec[2], "t", line)?;
        let v = parse_f64(&rec[3], "value", line)?;
        cells.entry((n, j)).or_default().push((t, v, line));
    }
    if samples.is_empty() {
        return Err(csv_err(1, "no data rows"));
    }
    for cell in cells.values_mut() {
        cell.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = cell.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(csv_err(w[1].2, format!("duplicate t = {}", w[1].0)));
        }
    }
    let reference: Vec<f64> = cells[&(0, 0)].iter().map(|c| c.0).collect();
    if reference.len() < 2 {
        return Err(csv_err(cells[&(0, 0)][0].2, "each curve needs at least two t values"));
    }
    for n in 0..samples.len() {
        for j in 0..preds.len() {
            let cell = cells.get(&(n, j)).ok_or_else(|| {
                let line = cells.iter().filter(|(k, _)| k.0 == n).map(|(_, c)| c[0].2).min().unwrap_or(0);
                csv_err(line, format!("sample '{}' has no values for predictor '{}'", samples[n], preds[j]))
            })?;
            let same = cell.len() == reference.len() && cell.iter().zip(&reference).all(|(c, t)| c.0 == *t);
            if !same {
                return Err(csv_err(
                    cell[0].2,
                    format!("sample '{}', predictor '{}' has a different set of t values", samples[n], preds[j]),
                ));
            }
        }
    }
    let (t0, t1) = (reference[0], reference[reference.len() - 1]);
    let scaled: Vec<f64> = reference.iter().map(|t| (t - t0) / (t1 - t0)).collect();
    let on_grid = scaled.as_slice() == grid.points();
    let m = grid.len();
    let predictors = (0..preds.len())
        .map(|j| {
            let mut mat = DMatrix::zeros(samples.len(), m);
            for n in 0..samples.len() {
                let values: Vec<f64> = cells[&(n, j)].iter().map(|c| c.1).collect();
                let row = if on_grid { values } else { resample_linear(&scaled, &values, grid).values };
                for (k, v) in row.into_iter().enumerate() {
                    mat[(n, k)] = v;
                }
            }
            mat
        })
        .collect();
    Ok(CurveTable {
        sample_ids: samples,
        predictor_ids: preds,
        curves: CurveSet::new(grid.clone(), predictors)?,
    })
}

/// Reads `sample_id,y` rows.
pub fn read_response<R: Read>(reader: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &RESPONSE_HEADER)?;
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(from_csv)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(csv_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        if seen.insert(rec[0].to_string(), line).is_some() {
            return Err(csv_err(line, format!("duplicate sample '{}'", &rec[0])));
        }
        out.push((rec[0].to_string(), parse_f64(&rec[1], "y", line)?));
    }
    if out.is_empty() {
        return Err(csv_err(1, "no data rows"));
    }
    Ok(out)
}

/// Orders a response by the curve table's samples.
pub fn align_response(table: &CurveTable, response: &[(String, f64)]) -> Result<Vec<f64>> {
    let by_id: HashMap<&str, f64> = response.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    if by_id.len() != table.sample_ids.len() {
        return Err(Error::Dimension(format!(
            "{} samples have curves but {} have responses",
            table.sample_ids.len(),
            by_id.len()
        )));
    }
    table
        .sample_ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Dimension(format!("sample '{id}' has no response")))
        })
        .collect()
}

pub fn read_dataset<R1: Read, R2: Read>(curves: R1, response: R2, grid: &Grid) -> Result<LabeledDataset> {
    let table = read_curves(curves, grid)?;
    let y = align_response(&table, &read_response(response)?)?;
    Ok(LabeledDataset {
        data: Dataset::new(table.curves, y)?,
        sample_ids: table.sample_ids,
        predictor_ids: table.predictor_ids,
    })
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn finish<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush()?;
    Ok(())
}

/// Writes curves in long format with 1-based integer identifiers.
pub fn write_curves<W: Write>(w: W, curves: &CurveSet) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(CURVE_HEADER).map_err(from_csv)?;
    let t = curves.grid().points();
    for n in 0..curves.n_samples() {
        for (j, x) in curves.predictors().iter().enumerate() {
            for (k, tk) in t.iter().enumerate() {
                let rec = [(n + 1).to_string(), (j + 1).to_string(), tk.to_string(), x[(n, k)].to_string()];
                wtr.write_record(&rec).map_err(from_csv)?;
            }
        }
    }
    finish(wtr)
}

fn write_pairs<W: Write>(w: W, header: [&str; 2], ids: &[String], values: &[f64]) -> Result<()> {
    if ids.len() != values.len() {
        return Err(Error::Dimension(format!("{} ids for {} values", ids.len(), values.len())));
    }
    let mut wtr = writer(w);
    wtr.write_record(header).map_err(from_csv)?;
    for (id, v) in ids.iter().zip(values) {
        wtr.write_record([id.as_str(), &v.to_string()]).map_err(from_csv)?;
    }
    finish(wtr)
}

/// Writes `sample_id,y` with 1-based identifiers.
pub fn write_response<W: Write>(w: W, y: &[f64]) -> Result<()> {
    let ids: Vec<String> = (1..=y.len()).map(|i| i.to_string()).collect();
    write_pairs(w, RESPONSE_HEADER, &ids, y)
}

/// Writes `sample_id,y_hat`.
pub fn write_predictions<W: Write>(w: W, ids: &[String], y_hat: &[f64]) -> Result<()> {
    write_pairs(w, ["sample_id", "y_hat"], ids, y_hat)
}
