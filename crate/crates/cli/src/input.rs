use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bbqram::DenseMatrix;
use clap::ValueEnum;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Json,
}

impl InputFormat {
    /// `.json` files are JSON, anything else is CSV.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => InputFormat::Json,
            _ => InputFormat::Csv,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

pub fn load_matrix(path: &Path, format: Option<InputFormat>) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read input file {}", path.display()))?;
    let format = format.unwrap_or_else(|| InputFormat::infer(path));
    let parsed = match format {
        InputFormat::Csv => parse_csv(&text),
        InputFormat::Json => parse_json(&text),
    };
    parsed.with_context(|| format!("failed to parse {}", path.display()))
}

/// One matrix row per line, comma separated, no header.
pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("malformed CSV record {}", line + 1))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().with_context(|| {
                format!(
                    "row {}, column {}: {field:?} is not a number",
                    rows.len() + 1,
                    col + 1
                )
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!(
                    "row {} has {} fields, expected {}",
                    rows.len() + 1,
                    row.len(),
                    first.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("empty input: no matrix rows found");
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

/// `{"rows": M, "cols": N, "data": [[...], ...]}`
pub fn parse_json(text: &str) -> Result<DenseMatrix> {
    if text.trim().is_empty() {
        bail!("empty input: no JSON document found");
    }
    let doc: MatrixDoc = serde_json::from_str(text).context("invalid matrix JSON")?;
    if doc.data.len() != doc.rows {
        bail!(
            "\"rows\" is {} but \"data\" has {} rows",
            doc.rows,
            doc.data.len()
        );
    }
    if let Some((i, row)) = doc
        .data
        .iter()
        .enumerate()
        .find(|(_, r)| r.len() != doc.cols)
    {
        bail!(
            "\"cols\" is {} but data row {} has {} entries",
            doc.cols,
            i,
            row.len()
        );
    }
    let flat: Vec<f64> = doc.data.into_iter().flatten().collect();
    Ok(DenseMatrix::pad(doc.rows, doc.cols, &flat)?)
}
