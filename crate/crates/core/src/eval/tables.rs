//! Plain-text and CSV renderings of accuracy grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DeltaWSweep, EvalReport, StopwordAblation};

/// Accuracy in percent with one decimal.
pub fn percent(acc: f64) -> String {
    format!("{:.1}", acc * 100.0)
}

/// `value (delta)` in percentage points, e.g. `52.3 (0.5)` or `48.0 (-1.2)`.
pub fn value_delta(acc: f64, delta: f64) -> String {
    let d = delta * 100.0;
    // Avoid printing "-0.0" for tiny negative deltas.
    let d = if format!("{d:.1}") == "-0.0" { 0.0 } else { d };
    format!("{} ({d:.1})", percent(acc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<String>>)>,
}

impl Table {
    pub fn new(title: impl Into<String>, corner: impl Into<String>, columns: Vec<String>) -> Table {
        Table { title: title.into(), corner: corner.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, label: impl Into<String>, cells: Vec<Option<String>>) {
        self.rows.push((label.into(), cells));
    }

    pub fn cell(&self, row: &str, col: &str) -> Option<&str> {
        let c = self.columns.iter().position(|x| x == col)?;
        let (_, cells) = self.rows.iter().find(|(l, _)| l == row)?;
        cells.get(c)?.as_deref()
    }

    /// GitHub-flavoured markdown. Missing cells print as `-`.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "### {}\n", self.title);
        }
        let _ = writeln!(out, "| {} | {} |", self.corner, self.columns.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.columns.len() + 1));
        for (label, cells) in &self.rows {
            let cells: Vec<&str> = cells.iter().map(|c| c.as_deref().unwrap_or("-")).collect();
            let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.corner.clone()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (label, cells) in &self.rows {
            let mut row = vec![label.clone()];
            row.extend(cells.iter().map(|c| c.clone().unwrap_or_default()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

fn ordered_datasets<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for n in names {
        if !seen.iter().any(|s| s == n) {
            seen.push(n.to_string());
        }
    }
    seen
}

/// Accuracy grid: one row per scoring configuration, one column per dataset.
/// Later reports for the same cell replace earlier ones.
pub fn accuracy_table(title: &str, reports: &[EvalReport]) -> Table {
    let columns = ordered_datasets(reports.iter().map(|r| r.dataset.as_str()));
    let mut rows: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in reports {
        let label = r.label();
        if !rows.contains(&label) {
            rows.push(label.clone());
        }
        cells.insert((label, r.dataset.clone()), r.accuracy);
    }
    let mut table = Table::new(title, "scorer", columns.clone());
    for label in rows {
        let row = columns.iter().map(|d| cells.get(&(label.clone(), d.clone())).map(|&a| percent(a))).collect();
        table.push(label, row);
    }
    table
}

/// Stop-word ablation grid with `value (delta)` cells; significant gains
/// carry a trailing `*`.
pub fn ablation_table(title: &str, ablations: &[StopwordAblation]) -> Table {
    let columns = ordered_datasets(ablations.iter().map(|a| a.base.dataset.as_str()));
    let mut rows: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), String> = BTreeMap::new();
    for a in ablations {
        let label = a.base.label();
        if !rows.contains(&label) {
            rows.push(label.clone());
        }
        let mut cell = a.cell();
        if a.significant_gain() {
            cell.push('*');
        }
        cells.insert((label, a.base.dataset.clone()), cell);
    }
    let mut table = Table::new(title, "scorer", columns.clone());
    for label in rows {
        let row = columns.iter().map(|d| cells.get(&(label.clone(), d.clone())).cloned()).collect();
        table.push(label, row);
    }
    table
}

/// ΔW sweep: one row per ΔW value, one column per dataset.
pub fn sweep_table(title: &str, sweeps: &[DeltaWSweep]) -> Table {
    let columns = ordered_datasets(sweeps.iter().filter_map(|s| s.points.first()).map(|p| p.report.dataset.as_str()));
    let mut grid: Vec<f64> = Vec::new();
    let mut cells: BTreeMap<(u64, String), f64> = BTreeMap::new();
    for s in sweeps {
        for p in &s.points {
            if !grid.iter().any(|g| g.to_bits() == p.delta_w.to_bits()) {
                grid.push(p.delta_w);
            }
            cells.insert((p.delta_w.to_bits(), p.report.dataset.clone()), p.report.accuracy);
        }
    }
    grid.sort_by(f64::total_cmp);
    let mut table = Table::new(title, "ΔW", columns.clone());
    for w in grid {
        let row = columns.iter().map(|d| cells.get(&(w.to_bits(), d.clone())).map(|&a| percent(a))).collect();
        table.push(format!("{w}"), row);
    }
    table
}
