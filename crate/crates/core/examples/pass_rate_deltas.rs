//! Baseline versus RAG pass rates for eleven models, rendered with deltas
//! and highlights, plus a pass rate from raw counts.

use std::path::Path;

use rag_repair::evalharness::{delta_table_from_rates, render_report, ReportFormat, DEFAULT_HIGHLIGHT_THRESHOLD};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/pass_rates.csv"))?;
    let rows: Vec<(String, f64, f64)> = text
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            Ok((f[0].to_string(), f[1].parse()?, f[2].parse()?))
        })
        .collect::<Result<_, std::num::ParseFloatError>>()?;
    let table = delta_table_from_rates(&rows, DEFAULT_HIGHLIGHT_THRESHOLD);

    let mut out = render_report(std::slice::from_ref(&table), ReportFormat::Markdown);
    out += &format!("\nhighlighted: {}\n", table.highlighted().join(", "));
    out += &format!("484 of 772 passed: {:.3}\n", 484.0 / 772.0);
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
