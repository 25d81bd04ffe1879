//! Output records and their JSON, CSV and table renderings.

use std::collections::BTreeMap;
use std::io::Write;

use clap::ValueEnum;
use fourier_accountant::{DeltaResult, MechanismSpec};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// A scalar for single-mechanism runs, a list for heterogeneous ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn from_iter(mut values: Vec<T>, many: bool) -> Self {
        if many {
            OneOrMany::Many(values)
        } else {
            OneOrMany::One(values.swap_remove(0))
        }
    }

    fn render(&self, cell: impl Fn(&T) -> String) -> String {
        match self {
            OneOrMany::One(v) => cell(v),
            OneOrMany::Many(vs) => vs.iter().map(cell).collect::<Vec<_>>().join(";"),
        }
    }
}

/// One result row. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub value: f64,
    pub kind: &'static str,
    pub tail_estimate: f64,
    pub tail_estimate_valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_tail_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_tail_bound_valid: Option<bool>,
    pub discretization_estimate: Option<f64>,
    #[serde(rename = "L")]
    pub radius: f64,
    pub n: usize,
    pub k: u64,
    pub scheme: OneOrMany<String>,
    pub sigma: OneOrMany<f64>,
    pub q: OneOrMany<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    pub direction: &'static str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_direction: BTreeMap<&'static str, f64>,
    pub warnings: Vec<String>,
}

/// Shortest representation that parses back to the same `f64`.
pub fn number(x: f64) -> String {
    format!("{x:?}")
}

fn optional(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}

impl Report {
    pub fn new(
        result: &DeltaResult,
        components: &[(MechanismSpec, u64)],
        heterogeneous: bool,
        direction: &'static str,
    ) -> Self {
        let schemes = components.iter().map(|(s, _)| s.scheme().name().to_string()).collect();
        let sigmas = components.iter().map(|(s, _)| s.sigma).collect();
        let qs = components.iter().map(|(s, _)| s.q()).collect();
        Self {
            value: result.value,
            kind: result.kind,
            tail_estimate: result.tail_estimate.value,
            tail_estimate_valid: result.tail_estimate.valid,
            analytic_tail_bound: result.analytic_tail_bound.as_ref().map(|b| b.value),
            analytic_tail_bound_valid: result.analytic_tail_bound.as_ref().map(|b| b.valid),
            discretization_estimate: result.discretization_estimate,
            radius: result.grid.radius(),
            n: result.grid.len(),
            k: result.k,
            scheme: OneOrMany::from_iter(schemes, heterogeneous),
            sigma: OneOrMany::from_iter(sigmas, heterogeneous),
            q: OneOrMany::from_iter(qs, heterogeneous),
            counts: heterogeneous.then(|| components.iter().map(|(_, c)| *c).collect()),
            direction,
            per_direction: result.per_direction.iter().map(|(d, v)| (d.name(), *v)).collect(),
            warnings: result.warnings.clone(),
        }
    }

    /// Column names and cells shared by the CSV and table renderings.
    fn cells(&self) -> Vec<(&'static str, String)> {
        vec![
            ("value", number(self.value)),
            ("kind", self.kind.to_string()),
            ("tail_estimate", number(self.tail_estimate)),
            ("tail_estimate_valid", self.tail_estimate_valid.to_string()),
            ("analytic_tail_bound", optional(self.analytic_tail_bound)),
            (
                "analytic_tail_bound_valid",
                self.analytic_tail_bound_valid.map(|v| v.to_string()).unwrap_or_default(),
            ),
            ("discretization_estimate", optional(self.discretization_estimate)),
            ("L", number(self.radius)),
            ("n", self.n.to_string()),
            ("k", self.k.to_string()),
            ("scheme", self.scheme.render(String::clone)),
            ("sigma", self.sigma.render(|x| number(*x))),
            ("q", self.q.render(|x| number(*x))),
            (
                "counts",
                self.counts
                    .as_ref()
                    .map(|c| c.iter().map(u64::to_string).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
            ),
            ("direction", self.direction.to_string()),
            (
                "per_direction",
                self.per_direction
                    .iter()
                    .map(|(d, v)| format!("{d}:{}", number(*v)))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            ("warnings", self.warnings.join(";")),
        ]
    }
}

/// A series of rows produced by `sweep` or `converge`.
#[derive(Debug, Clone, Serialize)]
pub struct Series {
    pub over: &'static str,
    pub rows: Vec<Report>,
}

pub enum Output {
    Single(Report),
    Series(Series),
}

impl Output {
    fn rows(&self) -> &[Report] {
        match self {
            Output::Single(r) => std::slice::from_ref(r),
            Output::Series(s) => &s.rows,
        }
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
        match format {
            Format::Json => {
                match self {
                    Output::Single(r) => serde_json::to_writer_pretty(&mut *out, r),
                    Output::Series(s) => serde_json::to_writer_pretty(&mut *out, s),
                }
                .map_err(|e| CliError::Io(e.to_string()))?;
                writeln!(out)?;
            }
            Format::Csv => {
                let mut writer = csv::Writer::from_writer(out);
                let rows = self.rows();
                let header: Vec<_> = rows[0].cells().into_iter().map(|(h, _)| h).collect();
                writer.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
                for row in rows {
                    writer
                        .write_record(row.cells().into_iter().map(|(_, c)| c))
                        .map_err(|e| CliError::Io(e.to_string()))?;
                }
                writer.flush()?;
            }
            Format::Table => match self {
                Output::Single(r) => {
                    let cells = r.cells();
                    let width = cells.iter().map(|(h, _)| h.len()).max().unwrap_or(0);
                    for (h, c) in cells.iter().filter(|(_, c)| !c.is_empty()) {
                        writeln!(out, "{h:<width$}  {c}")?;
                    }
                }
                Output::Series(s) => write_table(&s.rows, out)?,
            },
        }
        Ok(())
    }
}

/// Aligned columns, leaving out columns that are empty in every row.
fn write_table(rows: &[Report], out: &mut dyn Write) -> Result<(), CliError> {
    let cells: Vec<Vec<(&str, String)>> = rows.iter().map(Report::cells).collect();
    let columns: Vec<usize> = (0..cells[0].len())
        .filter(|&j| cells.iter().any(|row| !row[j].1.is_empty()))
        .collect();
    let widths: Vec<usize> = columns
        .iter()
        .map(|&j| cells.iter().map(|row| row[j].1.len()).max().unwrap_or(0).max(cells[0][j].0.len()))
        .collect();
    let line = |items: Vec<&str>| {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(out, "{}", line(columns.iter().map(|&j| cells[0][j].0).collect()).trim_end())?;
    for row in &cells {
        writeln!(out, "{}", line(columns.iter().map(|&j| row[j].1.as_str()).collect()).trim_end())?;
    }
    Ok(())
}
