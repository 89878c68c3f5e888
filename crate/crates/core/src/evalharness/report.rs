use std::fmt::Write;
use std::str::FromStr;

use super::metrics::correctness_by_group;
use super::{CorrectnessLabel, EvalError, EvalRecord, ReportTable};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn fixed(value: f64, places: usize) -> String {
    let s = format!("{value:.places$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn markdown_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn render_table(out: &mut String, table: &ReportTable, format: ReportFormat) {
    let mut header = vec!["Model".to_string()];
    header.extend(table.columns.iter().cloned());
    header.push("Delta".into());
    match format {
        ReportFormat::Markdown => {
            out.push_str(&markdown_row(&header));
            out.push_str(&markdown_row(&vec!["---".to_string(); header.len()]));
            for row in &table.rows {
                let mut cells = vec![row.model_id.clone()];
                cells.extend(row.rates.iter().map(|r| fixed(*r, 3)));
                let delta = fixed(row.delta, 3);
                cells.push(if row.highlight { format!("**{delta}**") } else { delta });
                out.push_str(&markdown_row(&cells));
            }
        }
        ReportFormat::Csv => {
            header.push("highlight".into());
            out.push_str(&header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
            out.push('\n');
            for row in &table.rows {
                let mut cells = vec![csv_field(&row.model_id)];
                cells.extend(row.rates.iter().map(|r| fixed(*r, 3)));
                cells.push(fixed(row.delta, 3));
                cells.push(if row.highlight { "*".into() } else { String::new() });
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
    }
}

/// Renders tables one after another, separated by a blank line. Rates and
/// deltas have three decimals; highlighted deltas are bold in Markdown and
/// marked `*` in the CSV `highlight` column.
pub fn render_report(tables: &[ReportTable], format: ReportFormat) -> String {
    let mut out = String::new();
    for (i, table) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        render_table(&mut out, table, format);
    }
    out
}

/// Per model and condition, the fraction of records under each correctness
/// label (two decimals).
pub fn render_correctness(records: &[EvalRecord], format: ReportFormat) -> Result<String, EvalError> {
    let groups = correctness_by_group(records)?;
    let mut header = vec!["Model".to_string(), "Condition".to_string()];
    header.extend(CorrectnessLabel::ALL.iter().map(|l| l.name().to_string()));
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            out.push_str(&markdown_row(&header));
            out.push_str(&markdown_row(&vec!["---".to_string(); header.len()]));
        }
        ReportFormat::Csv => writeln!(out, "{}", header.join(",")).unwrap(),
    }
    for ((model, condition), rates) in groups {
        let mut cells = vec![model, condition.label().to_string()];
        cells.extend(rates.rates().iter().map(|r| fixed(*r, 2)));
        match format {
            ReportFormat::Markdown => out.push_str(&markdown_row(&cells)),
            ReportFormat::Csv => {
                cells[0] = csv_field(&cells[0]);
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
    }
    Ok(out)
}
