//! Transmitted-variance grids over two design variables.
//!
//! CSV layout: header `<x>,<y>,variance,response`, then one record per cell,
//! row-major with `y` outer. Numbers are printed in shortest round-trip form.

use std::fmt::Write as _;

use varsynth::{transmit, Study};

use crate::scenario::{Fix, Range};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ContourSpec {
    pub x: String,
    pub y: String,
    /// Default: the variable's bounds when both are set, otherwise
    /// 0.5–1.5 times its nominal.
    pub x_range: Option<Range>,
    pub y_range: Option<Range>,
    pub nx: usize,
    pub ny: usize,
    /// Values for the other variables; the rest stay at their nominals.
    pub fixed: Vec<Fix>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    pub variance: f64,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub x_name: String,
    pub y_name: String,
    pub x_range: Range,
    pub y_range: Range,
    pub nx: usize,
    pub ny: usize,
    /// Every non-axis variable and the value it was held at.
    pub fixed: Vec<(String, f64)>,
    pub cells: Vec<Cell>,
}

fn axis(r: Range, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        r.hi
    } else {
        r.lo + (r.hi - r.lo) * i as f64 / (n - 1) as f64
    }
}

pub fn run_contour(study: &Study, spec: &ContourSpec) -> Result<ContourGrid, CliError> {
    if spec.x == spec.y {
        return Err(CliError::validation("--y", "must differ from --x"));
    }
    if spec.nx < 2 {
        return Err(CliError::validation("--nx", "must be at least 2"));
    }
    if spec.ny < 2 {
        return Err(CliError::validation("--ny", "must be at least 2"));
    }
    let lookup = |name: &str, flag: &str| {
        study
            .variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| CliError::validation(flag, format!("unknown variable `{name}`")))
    };
    let range = |name: &str, given: Option<Range>, flag: &str| -> Result<Range, CliError> {
        let v = lookup(name, flag)?;
        let r = given.unwrap_or(match (v.lower, v.upper) {
            (Some(lo), Some(hi)) => Range { lo, hi },
            _ if v.nominal == 0.0 => Range { lo: -1.0, hi: 1.0 },
            _ => {
                let (a, b) = (0.5 * v.nominal, 1.5 * v.nominal);
                Range { lo: a.min(b), hi: a.max(b) }
            }
        });
        if !(r.lo <= r.hi) {
            return Err(CliError::validation(
                format!("{flag}-range"),
                format!("lower end {} exceeds upper end {}", r.lo, r.hi),
            ));
        }
        Ok(r)
    };
    let x_range = range(&spec.x, spec.x_range, "--x")?;
    let y_range = range(&spec.y, spec.y_range, "--y")?;

    let mut point = study.nominals();
    for f in &spec.fixed {
        if f.name == spec.x || f.name == spec.y {
            return Err(CliError::validation(
                "--fix",
                format!("`{}` is a grid axis and cannot be fixed", f.name),
            ));
        }
        lookup(&f.name, "--fix")?;
        point.set(&f.name, f.value);
    }
    let fixed: Vec<(String, f64)> = study
        .variables
        .iter()
        .filter(|v| v.name != spec.x && v.name != spec.y)
        .map(|v| (v.name.clone(), point.get(&v.name).unwrap()))
        .collect();

    let opts = study.transmit_options();
    let mut cells = Vec::with_capacity(spec.nx * spec.ny);
    for j in 0..spec.ny {
        let y = axis(y_range, spec.ny, j);
        point.set(&spec.y, y);
        for i in 0..spec.nx {
            let x = axis(x_range, spec.nx, i);
            point.set(&spec.x, x);
            let vars = study.variables_at(&point)?;
            let d = transmit(&study.transfer, &vars, &study.correlations, opts)?;
            let response = study.transfer.evaluate(&point)?;
            cells.push(Cell {
                x,
                y,
                variance: d.total,
                response,
            });
        }
    }
    Ok(ContourGrid {
        x_name: spec.x.clone(),
        y_name: spec.y.clone(),
        x_range,
        y_range,
        nx: spec.nx,
        ny: spec.ny,
        fixed,
        cells,
    })
}

impl ContourGrid {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[j * self.nx + i]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},variance,response\n", self.x_name, self.y_name);
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{},{}", c.x, c.y, c.variance, c.response);
        }
        out
    }

    /// Reads back the output of [`ContourGrid::to_csv`]: axis names and
    /// cells in file order.
    pub fn parse_csv(text: &str) -> Result<(String, String, Vec<Cell>), String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty grid file")?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() != 4 || cols[2] != "variance" || cols[3] != "response" {
            return Err(format!("unexpected header `{header}`"));
        }
        let mut cells = Vec::new();
        for (k, line) in lines.enumerate() {
            let v = line
                .split(',')
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("record {}: {e}", k + 1))?;
            if v.len() != 4 {
                return Err(format!("record {}: expected 4 fields", k + 1));
            }
            cells.push(Cell {
                x: v[0],
                y: v[1],
                variance: v[2],
                response: v[3],
            });
        }
        Ok((cols[0].to_string(), cols[1].to_string(), cells))
    }
}
