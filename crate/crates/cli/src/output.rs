//! Plain-text artifacts: the per-step error CSV and field grids.
//!
//! Grid format, byte for byte:
//!
//! ```text
//! resolution R\n
//! v v ... v\n      (R rows of R values, single spaces)
//! ```
//!
//! Rows follow the evaluation lattice (row index = `x2`, increasing). Inside
//! nodes hold `{:e}` formatted values (shortest round-trip form), outside
//! nodes hold `nan`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use teng_core::engine::TrajectoryRecord;
use teng_core::sampling::EvalGrid;
use thiserror::Error;

pub const CSV_HEADER: &str = "step,time,interior_loss,boundary_loss,rel_l2_error";

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {predicted} predicted, {exact} exact, {weights} weights")]
    LengthMismatch { predicted: usize, exact: usize, weights: usize },
    #[error("reference field has zero norm")]
    ZeroReference,
}

/// `√(Σ w (û − u)²) / √(Σ w u²)`.
pub fn relative_l2(predicted: &[f64], exact: &[f64], weights: &[f64]) -> Result<f64, MetricError> {
    if predicted.len() != exact.len() || weights.len() != exact.len() {
        return Err(MetricError::LengthMismatch {
            predicted: predicted.len(),
            exact: exact.len(),
            weights: weights.len(),
        });
    }
    teng_core::engine::relative_l2(predicted, exact, weights).ok_or(MetricError::ZeroReference)
}

pub fn csv_row(r: &TrajectoryRecord<f64>) -> String {
    let err = r.rel_l2_error.map_or_else(|| "nan".to_string(), |e| format!("{e:e}"));
    format!(
        "{},{:e},{:e},{:e},{}",
        r.step_index, r.time, r.loss_report.interior_term, r.loss_report.boundary_term, err
    )
}

/// Streams trajectory records to a CSV file.
pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn push(&mut self, r: &TrajectoryRecord<f64>) -> io::Result<()> {
        writeln!(self.out, "{}", csv_row(r))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn write_grid<W: Write>(mut out: W, grid: &EvalGrid<f64>, values: &[f64]) -> io::Result<()> {
    if values.len() != grid.inside_count() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("{} values for {} inside nodes", values.len(), grid.inside_count()),
        ));
    }
    writeln!(out, "resolution {}", grid.resolution)?;
    let mut inside = values.iter();
    for row in grid.mask.chunks(grid.resolution) {
        let cells: Vec<String> = row
            .iter()
            .map(|&m| if m { format!("{:e}", inside.next().expect("count checked")) } else { "nan".into() })
            .collect();
        writeln!(out, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Writes `values` (one per inside node, lattice order) to `path`.
pub fn export_grid(grid: &EvalGrid<f64>, values: &[f64], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_grid(&mut out, grid, values)?;
    out.flush()
}

/// Reads a grid file back as `(R, R×R values)` with `NaN` outside.
pub fn parse_grid<R: BufRead>(input: R) -> io::Result<(usize, Vec<f64>)> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| bad("empty grid".into()))??;
    let resolution: usize = header
        .strip_prefix("resolution ")
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| bad(format!("bad header {header:?}")))?;
    let mut values = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let line = lines.next().ok_or_else(|| bad(format!("missing row {i}")))??;
        let row: Vec<f64> = line
            .split(' ')
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad value {s:?}"))))
            .collect::<io::Result<_>>()?;
        if row.len() != resolution {
            return Err(bad(format!("row {i} has {} values", row.len())));
        }
        values.extend(row);
    }
    Ok((resolution, values))
}

pub fn read_grid(path: &Path) -> io::Result<(usize, Vec<f64>)> {
    parse_grid(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use teng_core::sampling::make_grid;

    #[test]
    fn metric_cases() {
        let u = [1.0, -2.0, 0.5];
        let w = [1.0; 3];
        assert_eq!(relative_l2(&u, &u, &w).unwrap(), 0.0);
        assert!((relative_l2(&[0.0; 3], &u, &w).unwrap() - 1.0).abs() < 1e-15);
        let scaled: Vec<f64> = u.iter().map(|v| 1.1 * v).collect();
        assert!((relative_l2(&scaled, &u, &w).unwrap() - 0.1).abs() <= 1e-12);
        assert_eq!(relative_l2(&u, &[0.0; 3], &w), Err(MetricError::ZeroReference));
        assert!(matches!(relative_l2(&u[..2], &u, &w), Err(MetricError::LengthMismatch { .. })));
    }

    #[test]
    fn resolution_three_layout() {
        let grid = make_grid::<f64>(3).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &grid, &vec![0.0; grid.inside_count()]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "resolution 3\nnan 0e0 nan\n0e0 0e0 0e0\nnan 0e0 nan\n"
        );
    }

    #[test]
    fn grid_round_trip() {
        let grid = make_grid::<f64>(17).unwrap();
        let values: Vec<f64> = grid.points.iter().map(|p| (3.0 * p[0]).sin() * p[1] + 1e-300).collect();
        let mut buf = Vec::new();
        write_grid(&mut buf, &grid, &values).unwrap();
        let (r, parsed) = parse_grid(buf.as_slice()).unwrap();
        assert_eq!(r, 17);
        let inside: Vec<f64> = parsed.iter().zip(&grid.mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
        assert_eq!(inside, values);
        assert!(parsed.iter().zip(&grid.mask).all(|(v, m)| *m || v.is_nan()));
    }

    #[test]
    fn wrong_value_count_rejected() {
        let grid = make_grid::<f64>(4).unwrap();
        assert!(write_grid(Vec::new(), &grid, &[1.0]).is_err());
    }
}
