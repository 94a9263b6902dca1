use std::io::Write;

use serde::Serialize;

use super::convergence::ConvergenceReport;
use super::stability::{ScanBounds, StabilityScan, INSIDE_TOLERANCE};
use super::stiffness::StiffnessDemo;
use crate::stepper::Method;

/// Writes serializable rows as CSV with a header row taken from the field
/// names. Optional fields become empty cells.
pub fn write_csv_rows<W: Write, R: Serialize>(out: W, rows: impl IntoIterator<Item = R>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct ScanRow {
    re: f64,
    im: f64,
    magnitude: f64,
    inside: bool,
}

/// Summary statistics of a scan, for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub method: Method,
    pub substeps: Option<usize>,
    pub bounds: ScanBounds,
    pub nx: usize,
    pub ny: usize,
    pub inside_count: usize,
    pub inside_fraction: f64,
    pub inside_area: f64,
    pub tolerance: f64,
}

impl StabilityScan {
    /// One `re,im,magnitude,inside` row per lattice node.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = (0..self.ny).flat_map(|iy| {
            (0..self.nx).map(move |ix| {
                let magnitude = self.magnitude(ix, iy);
                ScanRow {
                    re: self.re(ix),
                    im: self.im(iy),
                    magnitude,
                    inside: magnitude <= 1.0 + INSIDE_TOLERANCE,
                }
            })
        });
        write_csv_rows(out, rows)
    }

    pub fn summary(&self) -> ScanSummary {
        ScanSummary {
            method: self.method,
            substeps: self.substeps,
            bounds: self.bounds,
            nx: self.nx,
            ny: self.ny,
            inside_count: self.inside_count,
            inside_fraction: self.inside_fraction(),
            inside_area: self.inside_area(),
            tolerance: INSIDE_TOLERANCE,
        }
    }
}

impl ConvergenceReport {
    /// One `steps,h,nfe,error,status` row per step count.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_csv_rows(out, &self.rows)
    }
}

impl StiffnessDemo {
    /// Eleven `t,exact,euler,heun,rkg2_s4` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_csv_rows(out, &self.rows)
    }
}

#[cfg(test)]
mod tests {
    use super::super::stiffness_demo;

    #[test]
    fn stiffness_csv_layout() {
        let mut buf = Vec::new();
        stiffness_demo().unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,exact,euler,heun,rkg2_s4");
        assert_eq!(lines.len(), 12);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
    }
}
