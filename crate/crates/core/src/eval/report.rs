use std::path::Path;

use super::EvalReport;
use crate::error::{Error, Result};

pub fn write_report_json(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))
}

/// One row per instance: `id,gold,selected,rank,correct,empty_target,agg_0..`.
pub fn write_report_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let width = report.per_instance.iter().map(|r| r.aggregates.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "id".to_string(),
        "gold".into(),
        "selected".into(),
        "rank".into(),
        "correct".into(),
        "empty_target".into(),
    ];
    header.extend((0..width).map(|i| format!("agg_{i}")));
    w.write_record(&header)?;
    for r in &report.per_instance {
        let mut row = vec![
            r.id.clone(),
            r.gold.to_string(),
            r.selected.map(|s| s.to_string()).unwrap_or_default(),
            r.rank.to_string(),
            u8::from(r.correct()).to_string(),
            u8::from(r.empty_target).to_string(),
        ];
        row.extend((0..width).map(|i| match r.aggregates.get(i) {
            Some(Some(v)) => v.to_string(),
            _ => String::new(),
        }));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
