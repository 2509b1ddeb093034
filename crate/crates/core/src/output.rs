//! CSV and JSON writers. Floats are written with 17 significant digits so
//! that values read back compare exactly.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::simulator::Trajectory;
use crate::symtensor::SymTensor;

/// Shortest exact text for `v` in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    crate::linalg::to_rows(m).serialize(s)
}

/// Writes a header and rows of already formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `i, j, value` for every entry.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rows.push(vec![i.to_string(), j.to_string(), fmt_f64(m[(i, j)])]);
        }
    }
    rows
}

/// Index columns and value for each canonical entry.
pub fn tensor_rows(t: &SymTensor) -> Vec<Vec<String>> {
    t.canonical_entries()
        .into_iter()
        .map(|(idx, v)| {
            let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            row.push(fmt_f64(v));
            row
        })
        .collect()
}

pub fn tensor_header(order: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..order).map(|i| format!("i{i}")).collect();
    h.push("value".into());
    h
}

/// `t, zeta_0..zeta_n, u, linf`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let dim = traj.states.first().map_or(0, |s| s.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|k| format!("zeta_{k}")));
    header.push("u".into());
    header.push("linf".into());
    let rows: Vec<Vec<String>> = (0..traj.times.len())
        .map(|i| {
            let mut row = vec![fmt_f64(traj.times[i])];
            row.extend(traj.states[i].iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(traj.controls[i]));
            row.push(fmt_f64(traj.linf[i]));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &rows)
}

/// Two-column `t, linf` plot data.
pub fn write_linf_plot(path: &Path, traj: &Trajectory) -> Result<()> {
    let rows: Vec<Vec<String>> =
        traj.times.iter().zip(&traj.linf).map(|(t, l)| vec![fmt_f64(*t), fmt_f64(*l)]).collect();
    write_csv(path, &["t", "linf"], &rows)
}
