//! CSV readers and writers: UTF-8, comma separated, mandatory header.
//!
//! * curves, long: `id,t,value`; wide: `id,<t₁>,<t₂>,…`
//! * response: `id,y`
//! * coordinates: `id,lat,lon`
//! * weights: dense `id,<id₁>,<id₂>,…` or triplets `i,j,w` keyed by id

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spatial::{SpatialWeights, WeightScheme};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.into() }
}

fn records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn number(path: &Path, line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| parse_err(path, format!("row {line}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, format!("row {line}: non-finite value '{s}'")));
    }
    Ok(v)
}

fn expect_columns(path: &Path, header: &[String], names: &[&str]) -> Result<()> {
    let got: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if got != names {
        return Err(parse_err(path, format!("expected header '{}', found '{}'", names.join(","), header.join(","))));
    }
    Ok(())
}

/// Curves sampled on a shared grid, in file order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub ids: Vec<String>,
    pub grid: Vec<f64>,
    pub curves: DMatrix<f64>,
}

pub fn read_curves_long(path: &Path) -> Result<CurveTable> {
    let (header, rows) = records(path)?;
    expect_columns(path, &header, &["id", "t", "value"])?;
    let mut ids: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    for (line, row) in rows.iter().enumerate() {
        if row.len() != 3 {
            return Err(parse_err(path, format!("row {}: expected 3 fields", line + 1)));
        }
        let t = number(path, line + 1, &row[1])?;
        let v = number(path, line + 1, &row[2])?;
        let entry = by_id.entry(row[0].clone()).or_insert_with(|| {
            ids.push(row[0].clone());
            Vec::new()
        });
        entry.push((t, v));
    }
    if ids.is_empty() {
        return Err(parse_err(path, "no curves"));
    }
    let mut grid: Option<Vec<f64>> = None;
    let mut values = Vec::with_capacity(ids.len());
    for id in &ids {
        let mut pts = by_id.remove(id).expect("id was recorded");
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let g: Vec<f64> = pts.iter().map(|p| p.0).collect();
        if g.windows(2).any(|w| w[0] == w[1]) {
            return Err(parse_err(path, format!("curve '{id}' repeats a grid point")));
        }
        match &grid {
            None => grid = Some(g),
            Some(g0) if *g0 != g => {
                return Err(parse_err(path, format!("curve '{id}' is not observed on the common grid")));
            }
            _ => {}
        }
        values.push(pts.into_iter().map(|p| p.1).collect::<Vec<_>>());
    }
    let grid = grid.expect("at least one curve");
    let curves = DMatrix::from_fn(ids.len(), grid.len(), |i, j| values[i][j]);
    Ok(CurveTable { ids, grid, curves })
}

/// Wide layout; header cells after `id` are the grid points (a leading
/// non-numeric prefix such as `t` is ignored).
pub fn read_curves_wide(path: &Path) -> Result<CurveTable> {
    let (header, rows) = records(path)?;
    if header.len() < 3 || !header[0].eq_ignore_ascii_case("id") {
        return Err(parse_err(path, "wide curves need a header 'id,<t1>,<t2>,…' with at least two grid points"));
    }
    let grid = header[1..]
        .iter()
        .map(|h| {
            let s = h.trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == '_');
            s.parse::<f64>().map_err(|_| parse_err(path, format!("header cell '{h}' is not a grid point")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut curves = DMatrix::zeros(rows.len(), grid.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(parse_err(path, format!("row {}: expected {} fields", i + 1, header.len())));
        }
        ids.push(row[0].clone());
        for j in 0..grid.len() {
            curves[(i, j)] = number(path, i + 1, &row[j + 1])?;
        }
    }
    if ids.is_empty() {
        return Err(parse_err(path, "no curves"));
    }
    Ok(CurveTable { ids, grid, curves })
}

fn check_unique(path: &Path, ids: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(parse_err(path, format!("duplicate id '{id}'")));
        }
    }
    Ok(())
}

/// `id,y` pairs.
pub fn read_response(path: &Path) -> Result<Vec<(String, f64)>> {
    let (header, rows) = records(path)?;
    expect_columns(path, &header, &["id", "y"])?;
    let out = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != 2 {
                return Err(parse_err(path, format!("row {}: expected 2 fields", i + 1)));
            }
            Ok((r[0].clone(), number(path, i + 1, &r[1])?))
        })
        .collect::<Result<Vec<_>>>()?;
    check_unique(path, &out.iter().map(|p| p.0.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

/// `id,lat,lon` triples.
pub fn read_coords(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let (header, rows) = records(path)?;
    expect_columns(path, &header, &["id", "lat", "lon"])?;
    let out = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != 3 {
                return Err(parse_err(path, format!("row {}: expected 3 fields", i + 1)));
            }
            Ok((r[0].clone(), number(path, i + 1, &r[1])?, number(path, i + 1, &r[2])?))
        })
        .collect::<Result<Vec<_>>>()?;
    check_unique(path, &out.iter().map(|p| p.0.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Reorder keyed values to follow `ids`; every id must be present.
pub fn align<T: Clone>(path: &Path, ids: &[String], keyed: &[(String, T)]) -> Result<Vec<T>> {
    let map: HashMap<&str, &T> = keyed.iter().map(|(k, v)| (k.as_str(), v)).collect();
    ids.iter()
        .map(|id| {
            map.get(id.as_str())
                .map(|v| (*v).clone())
                .ok_or_else(|| parse_err(path, format!("no entry for id '{id}'")))
        })
        .collect()
}

/// Raw weight matrix ordered by `ids`, dense or triplet layout.
pub fn read_weights_matrix(path: &Path, ids: &[String]) -> Result<DMatrix<f64>> {
    let (header, rows) = records(path)?;
    let n = ids.len();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let lookup = |s: &str| index.get(s).copied().ok_or_else(|| parse_err(path, format!("unknown id '{s}'")));
    let mut w = DMatrix::zeros(n, n);
    let lower: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if lower == ["i", "j", "w"] {
        for (line, r) in rows.iter().enumerate() {
            if r.len() != 3 {
                return Err(parse_err(path, format!("row {}: expected 3 fields", line + 1)));
            }
            let (i, j) = (lookup(&r[0])?, lookup(&r[1])?);
            w[(i, j)] = number(path, line + 1, &r[2])?;
        }
        return Ok(w);
    }
    if lower.first().map(String::as_str) != Some("id") || header.len() != n + 1 {
        return Err(parse_err(
            path,
            format!("expected a dense header 'id,<ids…>' with {n} ids or a triplet header 'i,j,w'"),
        ));
    }
    let cols = header[1..].iter().map(|h| lookup(h)).collect::<Result<Vec<usize>>>()?;
    if rows.len() != n {
        return Err(parse_err(path, format!("dense weight matrix has {} rows for {n} units", rows.len())));
    }
    let mut seen = vec![false; n];
    for (line, r) in rows.iter().enumerate() {
        if r.len() != n + 1 {
            return Err(parse_err(path, format!("row {}: expected {} fields", line + 1, n + 1)));
        }
        let i = lookup(&r[0])?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(parse_err(path, format!("duplicate row for id '{}'", r[0])));
        }
        for (c, &j) in cols.iter().enumerate() {
            w[(i, j)] = number(path, line + 1, &r[c + 1])?;
        }
    }
    Ok(w)
}

pub fn read_weights(path: &Path, ids: &[String], normalize: bool) -> Result<SpatialWeights> {
    SpatialWeights::from_matrix(read_weights_matrix(path, ids)?, WeightScheme::Custom, normalize)
        .map_err(|e| match e {
            Error::InvalidInput(m) => parse_err(path, m),
            other => other,
        })
}

fn csv_string<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>>(f: F) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    f(&mut wtr).expect("writing to memory cannot fail");
    String::from_utf8(wtr.into_inner().expect("flush to memory")).expect("utf-8")
}

pub fn curves_long_csv(ids: &[String], grid: &[f64], curves: &DMatrix<f64>) -> String {
    csv_string(|w| {
        w.write_record(["id", "t", "value"])?;
        for (i, id) in ids.iter().enumerate() {
            for (j, t) in grid.iter().enumerate() {
                w.write_record([id.clone(), t.to_string(), curves[(i, j)].to_string()])?;
            }
        }
        Ok(())
    })
}

pub fn curves_wide_csv(ids: &[String], grid: &[f64], curves: &DMatrix<f64>) -> String {
    csv_string(|w| {
        let mut h = vec!["id".to_string()];
        h.extend(grid.iter().map(|t| t.to_string()));
        w.write_record(&h)?;
        for (i, id) in ids.iter().enumerate() {
            let mut r = vec![id.clone()];
            r.extend(curves.row(i).iter().map(|v| v.to_string()));
            w.write_record(&r)?;
        }
        Ok(())
    })
}

/// Two-column table with the given header.
pub fn keyed_csv(ids: &[String], column: &str, values: &DVector<f64>) -> String {
    csv_string(|w| {
        w.write_record(["id", column])?;
        for (id, v) in ids.iter().zip(values.iter()) {
            w.write_record([id.clone(), v.to_string()])?;
        }
        Ok(())
    })
}

pub fn coords_csv(ids: &[String], coords: &[(f64, f64)]) -> String {
    csv_string(|w| {
        w.write_record(["id", "lat", "lon"])?;
        for (id, (lat, lon)) in ids.iter().zip(coords) {
            w.write_record([id.clone(), lat.to_string(), lon.to_string()])?;
        }
        Ok(())
    })
}

pub fn weights_dense_csv(ids: &[String], w: &DMatrix<f64>) -> String {
    csv_string(|wr| {
        let mut h = vec!["id".to_string()];
        h.extend(ids.iter().cloned());
        wr.write_record(&h)?;
        for (i, id) in ids.iter().enumerate() {
            let mut r = vec![id.clone()];
            r.extend(w.row(i).iter().map(|v| v.to_string()));
            wr.write_record(&r)?;
        }
        Ok(())
    })
}

/// `t,beta` table.
pub fn curve_csv(grid: &[f64], values: &DVector<f64>, column: &str) -> String {
    csv_string(|w| {
        w.write_record(["t", column])?;
        for (t, v) in grid.iter().zip(values.iter()) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, body: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("ssofr-io-{}-{name}", std::process::id()));
        std::fs::write(&dir, body).unwrap();
        dir
    }

    #[test]
    fn long_round_trip() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let grid = vec![0.0, 0.5, 1.0];
        let curves = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -0.1, 1e-300, 7.25]);
        let p = tmp("long.csv", &curves_long_csv(&ids, &grid, &curves));
        let t = read_curves_long(&p).unwrap();
        assert_eq!((t.ids, t.grid, t.curves), (ids.clone(), grid.clone(), curves.clone()));
        let p = tmp("wide.csv", &curves_wide_csv(&ids, &grid, &curves));
        let t = read_curves_wide(&p).unwrap();
        assert_eq!(t.curves, curves);
    }

    #[test]
    fn weights_layouts_agree() {
        let ids: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let dense = tmp("dense.csv", "id,z,x,y\ny,0,1,0\nx,2,0,1\nz,0,3,0\n");
        let trip = tmp("trip.csv", "i,j,w\nx,y,1\nx,z,2\ny,x,1\nz,x,3\n");
        assert_eq!(read_weights_matrix(&dense, &ids).unwrap(), read_weights_matrix(&trip, &ids).unwrap());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_coords(Path::new("/nonexistent/coords.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/coords.csv"));
        assert!(!err.is_numerical());
    }
}
