//! Report assembly and rendering: assessment rows joined with catalog
//! metadata, grouped or globally ordered, and rendered as CSV, Markdown, or
//! JSON lines with half-up 3-decimal rounding.

use std::fmt::Write as _;

use serde::Serialize;

use crate::attacks::{AttackCatalog, DeviceClass};
use crate::error::{Error, Result};
use crate::risk::AssessmentRow;

pub const CSV_HEADER: &str =
    "attack_id,name,device,capecs,severity,likelihood,likelihood_shifted,risk,rank";

/// Rounds half-up at `decimals` decimal places (0.0625 -> 0.063 at three).
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let factor = 10f64.powi(decimals as i32);
    (value * factor + 0.5).floor() / factor
}

fn format_cell(value: f64) -> String {
    format!("{:.3}", round_half_up(value, 3))
}

/// Formats with the given number of significant digits, switching to
/// scientific notation outside a readable magnitude window.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let scientific = format!("{:e}", value.abs());
    let exponent: i32 = scientific
        .split('e')
        .nth(1)
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    if exponent < -4 || exponent >= digits as i32 {
        format!("{:.*e}", digits - 1, value)
    } else {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        format!("{:.*}", decimals, value)
    }
}

/// One rendered row: scores plus the attack's display metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub attack_id: String,
    pub name: String,
    pub device: DeviceClass,
    /// Mapped pattern ids, sorted.
    pub capec_refs: Vec<String>,
    pub severity: f64,
    pub likelihood: f64,
    pub likelihood_shifted: f64,
    pub risk: f64,
    /// Global priority rank, regardless of row ordering.
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub shift: f64,
    pub shift_source: String,
    pub aggregation: String,
    pub severity_model: String,
    pub panel: String,
    /// Unix seconds; suppressed in reproducible runs.
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub rows: Vec<ReportRow>,
    pub meta: ReportMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportSort {
    /// Rows grouped by device family in catalog order, descending risk
    /// within each group.
    GroupedByDevice,
    /// One global ranking across all devices.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    JsonLines,
}

/// Joins assessment rows with their catalog records and orders them. The
/// rows must cover the catalog exactly (every attack once).
pub fn build_report(
    rows: &[AssessmentRow],
    attacks: &AttackCatalog,
    meta: ReportMeta,
    sort: ReportSort,
) -> Result<ReportDocument> {
    if rows.len() != attacks.len() {
        return Err(Error::Integrity(format!(
            "report covers {} rows but the catalog has {} attacks",
            rows.len(),
            attacks.len()
        )));
    }
    let mut joined = Vec::with_capacity(rows.len());
    for row in rows {
        let attack = attacks.lookup(&row.attack_id)?;
        joined.push(ReportRow {
            attack_id: attack.id.clone(),
            name: attack.name.clone(),
            device: attack.device.clone(),
            capec_refs: attack.capec_refs.iter().cloned().collect(),
            severity: row.severity,
            likelihood: row.likelihood,
            likelihood_shifted: row.likelihood_shifted,
            risk: row.risk,
            rank: row.rank,
        });
    }
    match sort {
        ReportSort::Global => joined.sort_by_key(|r| r.rank),
        ReportSort::GroupedByDevice => {
            let device_order = attacks.device_order();
            let position = |device: &DeviceClass| {
                device_order
                    .iter()
                    .position(|d| d == device)
                    .unwrap_or(device_order.len())
            };
            joined.sort_by(|a, b| {
                position(&a.device)
                    .cmp(&position(&b.device))
                    .then_with(|| a.rank.cmp(&b.rank))
            });
        }
    }
    Ok(ReportDocument { rows: joined, meta })
}

fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn render_csv(doc: &ReportDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_HEADER}");
    for row in &doc.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.attack_id,
            csv_field(&row.name),
            row.device,
            row.capec_refs.join(";"),
            format_cell(row.severity),
            format_cell(row.likelihood),
            format_cell(row.likelihood_shifted),
            format_cell(row.risk),
            row.rank
        );
    }
    out
}

fn markdown_field(text: &str) -> String {
    text.replace('|', "\\|")
}

fn render_markdown(doc: &ReportDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Attack risk assessment");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "- shift: {:.3} ({})",
        doc.meta.shift, doc.meta.shift_source
    );
    let _ = writeln!(out, "- aggregation: {}", doc.meta.aggregation);
    let _ = writeln!(out, "- severity model: {}", doc.meta.severity_model);
    let _ = writeln!(out, "- panel: {}", doc.meta.panel);
    if let Some(timestamp) = doc.meta.timestamp {
        let _ = writeln!(out, "- generated-at-unix: {timestamp}");
    }
    let mut current_device: Option<&DeviceClass> = None;
    for row in &doc.rows {
        if current_device != Some(&row.device) {
            current_device = Some(&row.device);
            let _ = writeln!(out);
            let _ = writeln!(out, "## {}", row.device);
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "| attack_id | name | device | capecs | severity | likelihood | likelihood_shifted | risk | rank |"
            );
            let _ = writeln!(out, "| --- | --- | --- | --- | --- | --- | --- | --- | --- |");
        }
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            row.attack_id,
            markdown_field(&row.name),
            row.device,
            row.capec_refs.join(";"),
            format_cell(row.severity),
            format_cell(row.likelihood),
            format_cell(row.likelihood_shifted),
            format_cell(row.risk),
            row.rank
        );
    }
    out
}

#[derive(Serialize)]
struct JsonLineRow<'a> {
    attack_id: &'a str,
    name: &'a str,
    device: &'a str,
    capecs: &'a [String],
    severity: f64,
    likelihood: f64,
    likelihood_shifted: f64,
    risk: f64,
    rank: u32,
}

fn render_json_lines(doc: &ReportDocument) -> String {
    let mut out = String::new();
    for row in &doc.rows {
        let line = JsonLineRow {
            attack_id: &row.attack_id,
            name: &row.name,
            device: row.device.as_str(),
            capecs: &row.capec_refs,
            severity: round_half_up(row.severity, 3),
            likelihood: round_half_up(row.likelihood, 3),
            likelihood_shifted: round_half_up(row.likelihood_shifted, 3),
            risk: round_half_up(row.risk, 3),
            rank: row.rank,
        };
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(&line).expect("row serialization cannot fail")
        );
    }
    out
}

/// Renders the document deterministically. CSV and JSON lines carry rows
/// only; Markdown includes the metadata block.
pub fn render_report(doc: &ReportDocument, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(doc),
        ReportFormat::Markdown => render_markdown(doc),
        ReportFormat::JsonLines => render_json_lines(doc),
    }
}
