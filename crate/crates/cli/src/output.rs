//! Emission of trajectories (NDJSON), final states and tables (CSV).
//!
//! Every number is printed with 17 significant digits so that files
//! round-trip exactly and identical runs produce identical bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use bulksurf_core::diagnostics::{ConvergenceRow, TrajectorySample};
use bulksurf_core::grid::{BulkField, Geometry};
use bulksurf_core::solver::SystemState;

use crate::error::CliError;

/// `x` with 17 significant digits; non-finite values become `null`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::from("null")
    }
}

/// One NDJSON trajectory record.
pub fn trajectory_record(s: &TrajectorySample) -> String {
    let mut out = String::with_capacity(128);
    let _ = write!(out, "{{\"t\":{},\"totals\":[", num(s.t));
    for (k, v) in s.totals.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push_str(&num(*v));
    }
    let _ = write!(
        out,
        "],\"F\":{},\"min_c\":{},\"newton_res\":{}",
        num(s.free_energy),
        num(s.min_value),
        num(s.newton_residual)
    );
    if let Some(n) = s.phi_iterations {
        let _ = write!(out, ",\"phi_iters\":{n}");
    }
    out.push('}');
    out
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        other => CliError::InitialData { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

/// Final state: one row per cell, then one row per surface node with
/// `surface = 1` and the vacancy in the last column.
pub fn write_state_csv<W: Write>(out: W, s: &SystemState, geom: &Geometry, species: &[String]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::from("surface"), String::from("index"), String::from("x"), String::from("y")];
    header.extend(species.iter().cloned());
    header.push(String::from("vacancy"));
    w.write_record(&header)?;
    for c in 0..geom.n_cells() {
        let (x, y) = geom.cell_center(c);
        let mut row = vec![String::from("0"), c.to_string(), num(x), num(y)];
        row.extend(s.bulk.cell(c).iter().map(|&v| num(v)));
        row.push(String::new());
        w.write_record(&row)?;
    }
    for (k, node) in s.surface.nodes.iter().enumerate() {
        let (x, y) = geom.node_position(k);
        let mut row = vec![String::from("1"), k.to_string(), num(x), num(y)];
        row.extend(node.theta[1..].iter().map(|&v| num(v)));
        row.push(num(node.theta[0]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the bulk part of a final-state file written for the same grid.
pub fn read_bulk_csv(path: &Path, species: &[String], geom: &Geometry) -> Result<BulkField, CliError> {
    let bad = |message: String| CliError::InitialData { path: path.to_path_buf(), message };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let n = species.len();
    let names: Vec<&str> = header.iter().skip(4).take(n).collect();
    if header.len() != n + 5 || names != species.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(bad(format!("header {:?} does not match species {species:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut field = BulkField::zeros(n, geom.n_cells());
    let mut seen = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if &rec[0] != "0" {
            continue;
        }
        let idx: usize = rec[1].parse().map_err(|_| bad(format!("row {}: bad cell index `{}`", line + 2, &rec[1])))?;
        if idx != seen || idx >= geom.n_cells() {
            return Err(bad(format!("row {}: cell {idx} out of order or beyond the grid", line + 2)));
        }
        for s in 0..n {
            let v: f64 = rec[4 + s]
                .parse()
                .map_err(|_| bad(format!("row {}: bad value `{}` for {}", line + 2, &rec[4 + s], species[s])))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(format!("row {}: {} must be finite and nonnegative, found {v}", line + 2, species[s])));
            }
            field.set(idx, s, v);
        }
        seen += 1;
    }
    if seen != geom.n_cells() {
        return Err(bad(format!("{seen} bulk rows for a grid of {} cells", geom.n_cells())));
    }
    Ok(field)
}

/// Error table of a limit convergence study.
pub fn write_convergence_csv<W: Write>(out: W, rows: &[ConvergenceRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "error", "failure"])?;
    for r in rows {
        let err = r.error.map(num).unwrap_or_default();
        w.write_record([num(r.epsilon), err, r.failure.clone().unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
        assert_eq!(num(f64::NAN), "null");
    }

    #[test]
    fn records_are_valid_json() {
        let s = TrajectorySample {
            t: 0.5,
            totals: vec![1.0, 2.0],
            free_energy: -0.25,
            dissipation: 0.0,
            min_value: 0.1,
            norm: 1.0,
            l1: 1.0,
            l2_squared: 1.0,
            newton_residual: 1e-12,
            phi_iterations: Some(3),
        };
        let v: serde_json::Value = serde_json::from_str(&trajectory_record(&s)).unwrap();
        assert_eq!(v["totals"][1], 2.0);
        assert_eq!(v["phi_iters"], 3);
        assert_eq!(v["F"], -0.25);
    }
}
