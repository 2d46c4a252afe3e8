//! RMSE tables and their CSV and markdown renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::harness::config::Method;

/// `sqrt(mean((e − truth)²))`.
pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(OpeError::EmptyInput);
    }
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub truth: f64,
    /// One entry per column; `None` when every replication failed.
    pub rmse: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub setting: String,
    pub method: Method,
    pub count: usize,
    /// Distinct error names, sorted.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseTable {
    pub name: String,
    pub methods: Vec<Method>,
    pub rows: Vec<TableRow>,
    /// Printed values are `rmse · scale`.
    pub scale: f64,
    /// Ordered `key: value` annotations (config hash, seeds, model settings).
    pub metadata: Vec<(String, String)>,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl RmseTable {
    pub fn total_failures(&self) -> usize {
        self.failures.iter().map(|f| f.count).sum()
    }

    pub fn column(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|m| *m == method)
    }

    /// Unscaled RMSE of `method` in row `row`.
    pub fn get(&self, row: usize, method: Method) -> Option<f64> {
        self.column(method).and_then(|c| self.rows[row].rmse[c])
    }

    pub fn emit(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Csv => self.to_csv(),
            TableFormat::Markdown => self.to_markdown(),
        }
    }

    fn annotations(&self) -> Vec<(String, String)> {
        let mut out = vec![("name".to_string(), self.name.clone())];
        out.extend(self.metadata.iter().cloned());
        out.push(("scale".into(), self.scale.to_string()));
        for f in &self.failures {
            out.push((
                "failures".into(),
                format!("{} / {}: {} ({})", f.setting, f.method, f.count, f.errors.join(" ")),
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.annotations() {
            let _ = writeln!(text, "# {k}: {v}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["setting".to_string(), "truth".to_string()];
        header.extend(self.methods.iter().map(|m| m.label().to_string()));
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.label.clone(), row.truth.to_string()];
            rec.extend(row.rmse.iter().map(|v| v.map(|x| (x * self.scale).to_string()).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory write");
        }
        text.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
        text
    }

    pub fn to_markdown(&self) -> String {
        let mut text = format!("### {}\n\n", self.name);
        let mut header = "| Setting | Truth |".to_string();
        let mut rule = "|---|---:|".to_string();
        for m in &self.methods {
            let _ = write!(header, " {} |", m.label());
            rule.push_str("---:|");
        }
        let _ = writeln!(text, "{header}\n{rule}");
        for row in &self.rows {
            let best = two_smallest(&self.methods, &row.rmse);
            let _ = write!(text, "| {} | {:.4} |", row.label, row.truth);
            for (c, v) in row.rmse.iter().enumerate() {
                match v {
                    Some(x) if best.contains(&c) => {
                        let _ = write!(text, " **{:.3}** |", x * self.scale);
                    }
                    Some(x) => {
                        let _ = write!(text, " {:.3} |", x * self.scale);
                    }
                    None => text.push_str(" n/a |"),
                }
            }
            text.push('\n');
        }
        text.push('\n');
        for (k, v) in self.annotations().into_iter().skip(1) {
            let _ = writeln!(text, "- {k}: {v}");
        }
        text
    }
}

/// Columns holding the two smallest values, the oracle column excluded.
fn two_smallest(methods: &[Method], values: &[Option<f64>]) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter(|(c, _)| methods[*c] != Method::Oracle)
        .filter_map(|(c, v)| v.map(|x| (c, x)))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(2).map(|(c, _)| c).collect()
}

/// Reads a table written by [`RmseTable::to_csv`].
///
/// Values are taken as printed, so the result has `scale = 1`; annotations
/// other than the name and scale come back as metadata.
pub fn parse_csv(text: &str) -> Result<RmseTable> {
    let mut name = String::new();
    let mut metadata = Vec::new();
    for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
        let (k, v) = line.split_once(": ").unwrap_or((line, ""));
        match k {
            "name" => name = v.to_string(),
            "scale" | "failures" => {}
            _ => metadata.push((k.to_string(), v.to_string())),
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| OpeError::Parse { row: 1, msg: e.to_string() })?.clone();
    if header.get(0) != Some("setting") || header.get(1) != Some("truth") {
        return Err(OpeError::Parse { row: 1, msg: "expected setting,truth,… header".into() });
    }
    let methods = header.iter().skip(2).map(str::parse).collect::<Result<Vec<Method>>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| OpeError::Parse { row, msg: e.to_string() })?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| OpeError::Parse { row, msg: format!("bad number {s:?}") });
        let truth = num(rec.get(1).unwrap_or(""))?;
        let rmse = rec
            .iter()
            .skip(2)
            .map(|s| if s.is_empty() { Ok(None) } else { num(s).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        if rmse.len() != methods.len() {
            return Err(OpeError::Parse { row, msg: "row width disagrees with header".into() });
        }
        rows.push(TableRow { label: rec[0].to_string(), truth, rmse });
    }
    Ok(RmseTable { name, methods, rows, scale: 1.0, metadata, failures: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> RmseTable {
        RmseTable {
            name: "demo".into(),
            methods: vec![Method::Dm, Method::Sis, Method::Reg, Method::Emp, Method::Oracle],
            rows: vec![
                TableRow { label: "b=0.8, n=250".into(), truth: -37.125, rmse: vec![Some(2.9), Some(0.1 + 0.2), Some(0.09), None, Some(0.0)] },
                TableRow { label: "b=0.8 n=500".into(), truth: 1.0 / 3.0, rmse: vec![Some(1.5), Some(0.2), Some(0.07), Some(0.071), Some(0.0)] },
            ],
            scale: 1.0,
            metadata: vec![("config_hash".into(), "00ff".into())],
            failures: vec![FailureRecord { setting: "b=0.8, n=250".into(), method: Method::Emp, count: 100, errors: vec!["SolverDiverged".into()] }],
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.5, 0.5], 0.5).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 2.0], 1.0).unwrap(), 1.0);
        assert!((rmse(&[1.0, 2.0, 3.0], 0.0).unwrap() - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[], 0.0).unwrap_err(), OpeError::EmptyInput);
        assert_eq!(rmse(&[3.5], 1.25).unwrap(), 2.25);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = table();
        let back = parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.methods, t.methods);
        assert_eq!(back.name, "demo");
        assert_eq!(back.metadata, t.metadata);
    }

    #[test]
    fn scaled_csv_prints_scaled_values() {
        let mut t = table();
        t.scale = 1000.0;
        let back = parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back.rows[1].rmse[2], Some(70.0));
        assert_eq!(back.rows[1].truth, 1.0 / 3.0);
    }

    #[test]
    fn header_only_without_methods() {
        let t = RmseTable { name: "e".into(), methods: vec![], rows: vec![], scale: 1.0, metadata: vec![], failures: vec![] };
        let csv = t.to_csv();
        let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, vec!["setting,truth"]);
    }

    #[test]
    fn markdown_bolds_two_smallest_excluding_oracle() {
        let md = table().to_markdown();
        let row2 = md.lines().find(|l| l.starts_with("| b=0.8 n=500")).unwrap();
        assert_eq!(row2.matches("**").count(), 4);
        assert!(row2.contains("**0.070**") && row2.contains("**0.071**"));
        assert!(!row2.contains("**0.000**"));
        let row1 = md.lines().find(|l| l.starts_with("| b=0.8, n=250")).unwrap();
        assert!(row1.contains("**0.090**") && row1.contains("**0.300**") && row1.contains("n/a"));
    }
}
