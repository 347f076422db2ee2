//! CSV tables and their JSON mirror.
//!
//! Cells are rendered once and written to both files, so the CSV and JSON
//! always agree. Percentages use one decimal, scores two; `{:.1}` / `{:.2}`
//! round exact ties half to even.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::report::{BiasReport, CurveSection, ScorerSection, SectionStatus};
use crate::stats::{PreferenceResult, TrendResult};

pub const EMPTY_CELL: &str = "—";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File stem of the CSV.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        w.write_record(&self.header).map_err(map)?;
        for row in &self.rows {
            w.write_record(row).map_err(map)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// `num / den` as a percentage with one decimal.
pub fn percent(num: f64, den: usize) -> String {
    format!("{:.1}", num * 100.0 / den as f64)
}

pub fn score(x: f64) -> String {
    format!("{x:.2}")
}

/// Threshold label such as `2.5%` or `10%`.
pub fn threshold_label(t: f64) -> String {
    format!("{}%", (t * 1000.0).round() / 10.0)
}

/// Trend proportion cell; `—` when no document qualifies.
pub fn trend_cell(t: &TrendResult) -> String {
    if t.n_docs == 0 {
        EMPTY_CELL.into()
    } else {
        percent(t.n_decreasing as f64, t.n_docs)
    }
}

/// Preference cell `rate (n)`; `— (0)` for an empty bin.
pub fn preference_cell(r: &PreferenceResult) -> String {
    if r.n_pairs == 0 {
        format!("{EMPTY_CELL} (0)")
    } else {
        format!("{} ({})", percent(r.shorter_wins, r.n_pairs), r.n_pairs)
    }
}

fn trend_rows(sections: &[CurveSection]) -> Vec<Vec<String>> {
    let total = TrendResult::from_counts(
        sections.iter().map(|s| s.trend.n_docs).sum(),
        sections.iter().map(|s| s.trend.n_decreasing).sum(),
        sections.iter().map(|s| s.trend.n_skipped).sum(),
    );
    let mut rows = vec![vec![
        "Aggregate".to_string(),
        total.n_docs.to_string(),
        trend_cell(&total),
    ]];
    for s in sections {
        rows.push(vec![
            s.language.clone(),
            s.trend.n_docs.to_string(),
            trend_cell(&s.trend),
        ]);
    }
    rows
}

pub fn trend_table(name: &str, sections: &[CurveSection]) -> Table {
    Table {
        name: name.into(),
        header: vec!["language".into(), "n_docs".into(), "proportion".into()],
        rows: trend_rows(sections),
    }
}

pub fn preference_table(name: &str, thresholds: &[f64], rows: &[(String, Vec<PreferenceResult>)]) -> Table {
    let mut header = vec!["language".to_string()];
    header.extend(thresholds.iter().map(|&t| threshold_label(t)));
    Table {
        name: name.into(),
        header,
        rows: rows
            .iter()
            .map(|(lang, results)| {
                let mut row = vec![lang.clone()];
                row.extend(results.iter().map(preference_cell));
                row
            })
            .collect(),
    }
}

fn delta_table(sec: &ScorerSection) -> Table {
    let mut rows = Vec::new();
    for s in &sec.passages {
        for p in &s.curve.points {
            rows.push(vec![
                s.language.clone(),
                p.index.to_string(),
                p.n.to_string(),
                score(p.mean_delta),
                score(p.stddev),
            ]);
        }
    }
    Table {
        name: format!("delta_{}", sec.scorer.name),
        header: ["language", "index", "n", "mean_delta", "stddev"]
            .map(String::from)
            .to_vec(),
        rows,
    }
}

fn perturbation_table(sec: &ScorerSection) -> Table {
    let rows = sec
        .perturbations
        .iter()
        .map(|p| {
            let s = &p.section;
            vec![
                p.category.clone(),
                s.language.clone(),
                s.n_docs.to_string(),
                s.excluded.to_string(),
                score(p.gold_rating),
                s.bias.as_ref().map_or(EMPTY_CELL.into(), |b| score(b.mean_prediction)),
                s.bias.as_ref().map_or(EMPTY_CELL.into(), |b| score(b.bias)),
                s.slope.map_or(EMPTY_CELL.into(), score),
                trend_cell(&s.trend),
            ]
        })
        .collect();
    Table {
        name: format!("perturbation_{}", sec.scorer.name),
        header: [
            "category",
            "language",
            "n_docs",
            "rejected",
            "gold",
            "mean_score",
            "bias",
            "slope",
            "proportion",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    }
}

fn slope_table(report: &BiasReport) -> Table {
    let mut rows = Vec::new();
    for sec in report.scorers.iter().filter(|s| s.status == SectionStatus::Ok) {
        let series = sec
            .passages
            .iter()
            .map(|s| ("passages".to_string(), s))
            .chain(sec.perturbations.iter().map(|p| (p.category.clone(), &p.section)));
        for (label, s) in series {
            rows.push(vec![
                sec.scorer.name.clone(),
                label,
                s.language.clone(),
                s.n_docs.to_string(),
                s.slope.map_or(EMPTY_CELL.into(), score),
            ]);
        }
    }
    Table {
        name: "slope".into(),
        header: ["scorer", "series", "language", "n_docs", "slope"]
            .map(String::from)
            .to_vec(),
        rows,
    }
}

/// Every table for the report, in emission order.
pub fn build_tables(report: &BiasReport) -> Vec<Table> {
    let mut tables = Vec::new();
    for sec in report.scorers.iter().filter(|s| s.status == SectionStatus::Ok) {
        let name = &sec.scorer.name;
        if !sec.passages.is_empty() {
            tables.push(trend_table(&format!("trend_{name}"), &sec.passages));
            tables.push(delta_table(sec));
        }
        if !sec.perturbations.is_empty() {
            tables.push(perturbation_table(sec));
        }
        if !sec.preferences.is_empty() {
            let rows: Vec<_> = sec
                .preferences
                .iter()
                .map(|p| (p.direction.clone(), p.results.clone()))
                .collect();
            tables.push(preference_table(
                &format!("preference_{name}"),
                &report.metadata.thresholds,
                &rows,
            ));
        }
    }
    tables.push(slope_table(report));
    tables
}

#[derive(Serialize)]
struct Mirror<'a> {
    config_digest: &'a str,
    tables: &'a [Table],
}

/// Write one CSV per table plus `tables.json`.
pub fn emit_tables(report: &BiasReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let tables = build_tables(report);
    let mut files = Vec::new();
    for t in &tables {
        let path = dir.join(format!("{}.csv", t.name));
        write_atomic(&path, t.to_csv()?.as_bytes())?;
        files.push(path);
    }
    let mirror = Mirror {
        config_digest: &report.metadata.config_digest,
        tables: &tables,
    };
    let path = dir.join("tables.json");
    let mut json = serde_json::to_string_pretty(&mirror)?;
    json.push('\n');
    write_atomic(&path, json.as_bytes())?;
    files.push(path);
    Ok(files)
}
