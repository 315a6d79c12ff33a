//! Field persistence.
//!
//! * CSV: header `x,re,im`, one row per node.
//! * Binary: little-endian, `N` as `u64`, `L` as `f64`, then `N` pairs of
//!   `f64` (real part, imaginary part).

use std::io::{BufRead, Read, Write};

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::grid::{Field, Grid};

/// Formats a float so that reruns produce byte-identical files.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.15e}")
}

pub fn write_csv<W: Write>(field: &Field, mut out: W) -> Result<()> {
    writeln!(out, "x,re,im")?;
    let values = field.complex_values();
    for (x, z) in field.grid().nodes().iter().zip(&values) {
        writeln!(out, "{},{},{}", fmt_f64(*x), fmt_f64(z.re), fmt_f64(z.im))?;
    }
    Ok(())
}

/// Reads a CSV field. The grid is reconstructed from the node column, so the
/// file must cover a full periodic grid. Fields with identically zero
/// imaginary parts come back real-tagged.
pub fn read_csv<R: BufRead>(input: R) -> Result<Field> {
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if lineno == 0 {
            if line != "x,re,im" {
                return Err(LabError::Format(format!("unexpected header `{line}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(LabError::Format(format!(
                "line {}: expected 3 columns, found {}",
                lineno + 1,
                cols.len()
            )));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| LabError::Format(format!("line {}: {e}", lineno + 1)))
        };
        xs.push(parse(cols[0])?);
        values.push(Complex64::new(parse(cols[1])?, parse(cols[2])?));
    }
    if xs.is_empty() {
        return Err(LabError::Format("no samples".into()));
    }
    let half_width = -xs[0];
    let grid = Grid::new(half_width, xs.len())?;
    let tol = 1e-9 * half_width.max(1.0);
    if let Some((j, _)) = xs
        .iter()
        .zip(grid.nodes())
        .enumerate()
        .find(|(_, (a, b))| (*a - *b).abs() > tol)
    {
        return Err(LabError::Format(format!(
            "node {j} does not lie on a uniform periodic grid"
        )));
    }
    field_from_values(&grid, values)
}

pub fn write_binary<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let grid = field.grid();
    out.write_all(&(grid.n() as u64).to_le_bytes())?;
    out.write_all(&grid.half_width().to_le_bytes())?;
    for z in field.complex_values() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Field> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let half_width = f64::from_le_bytes(word);
    let grid = Grid::new(half_width, n)?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        input.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        input.read_exact(&mut word)?;
        let im = f64::from_le_bytes(word);
        values.push(Complex64::new(re, im));
    }
    field_from_values(&grid, values)
}

fn field_from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Field> {
    if values.iter().all(|z| z.im == 0.0) {
        Field::real(grid, values.into_iter().map(|z| z.re).collect())
    } else {
        Field::complex(grid, values)
    }
}

/// Minimal CSV table writer with a fixed header.
pub struct CsvTable<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvTable<W> {
    pub fn new(mut out: W, header: &[&str]) -> Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvTable {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.columns {
            return Err(LabError::Format(format!(
                "row has {} values, table has {} columns",
                values.len(),
                self.columns
            )));
        }
        let line: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
