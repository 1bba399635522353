//! Line parsers for the supported click-log formats.
//!
//! Criteo: tab-separated, no header, 40 columns (`label`, `I1..I13`, `C1..C26`).
//! Avazu: comma-separated with a header, 24 columns (`id`, `click`, 22 categorical).
//! Synthetic: comma-separated with a header `label,c1..cF`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CRITEO_COLUMNS: usize = 40;
pub const CRITEO_NUMERIC: usize = 13;
pub const CRITEO_CATEGORICAL: usize = 26;
pub const AVAZU_COLUMNS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Criteo,
    Avazu,
    Synth,
}

/// One parsed line before encoding. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub label: u8,
    pub numeric: Vec<Option<f64>>,
    pub categorical: Vec<Option<String>>,
}

/// Parsed rows plus the field names they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub numeric_names: Vec<String>,
    pub categorical_names: Vec<String>,
    pub rows: Vec<RawRow>,
}

fn parse_label(raw: &str, line: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Parse {
            line,
            detail: format!("unparseable label {other:?}"),
        }),
    }
}

fn token(raw: &str) -> Option<String> {
    let t = raw.trim();
    (!t.is_empty()).then(|| t.to_owned())
}

fn check_columns(cols: usize, expected: usize, line: usize) -> Result<()> {
    if cols != expected {
        return Err(Error::Parse {
            line,
            detail: format!("expected {expected} columns, found {cols}"),
        });
    }
    Ok(())
}

/// Parses one Criteo line. `line` is the 1-based line number used in errors.
pub fn parse_criteo(text: &str, line: usize) -> Result<RawRow> {
    let cols: Vec<&str> = text.trim_end_matches(['\r', '\n']).split('\t').collect();
    check_columns(cols.len(), CRITEO_COLUMNS, line)?;
    let label = parse_label(cols[0], line)?;
    let numeric = cols[1..=CRITEO_NUMERIC]
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let c = c.trim();
            if c.is_empty() {
                return Ok(None);
            }
            c.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| Error::Parse {
                    line,
                    detail: format!("I{} is not a number: {c:?}", i + 1),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let categorical = cols[1 + CRITEO_NUMERIC..].iter().map(|c| token(c)).collect();
    Ok(RawRow {
        label,
        numeric,
        categorical,
    })
}

/// Parses one Avazu data line (not the header); the `id` column is dropped.
pub fn parse_avazu(text: &str, line: usize) -> Result<RawRow> {
    let cols: Vec<&str> = text.trim_end_matches(['\r', '\n']).split(',').collect();
    check_columns(cols.len(), AVAZU_COLUMNS, line)?;
    Ok(RawRow {
        label: parse_label(cols[1], line)?,
        numeric: Vec::new(),
        categorical: cols[2..].iter().map(|c| token(c)).collect(),
    })
}

/// Parses one synthetic-data line with `fields` categorical columns.
pub fn parse_synth(text: &str, fields: usize, line: usize) -> Result<RawRow> {
    let cols: Vec<&str> = text.trim_end_matches(['\r', '\n']).split(',').collect();
    check_columns(cols.len(), fields + 1, line)?;
    Ok(RawRow {
        label: parse_label(cols[0], line)?,
        numeric: Vec::new(),
        categorical: cols[1..].iter().map(|c| token(c)).collect(),
    })
}

pub fn criteo_names() -> (Vec<String>, Vec<String>) {
    (
        (1..=CRITEO_NUMERIC).map(|i| format!("I{i}")).collect(),
        (1..=CRITEO_CATEGORICAL).map(|i| format!("C{i}")).collect(),
    )
}

/// Reads a whole file. Malformed lines are skipped and returned alongside the
/// table; once more than `max_bad` lines fail the read aborts with the last error.
pub fn read_table(path: &Path, format: DataFormat, max_bad: usize) -> Result<(RawTable, Vec<Error>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let mut bad = Vec::new();

    let (numeric_names, categorical_names, synth_fields) = match format {
        DataFormat::Criteo => {
            let (n, c) = criteo_names();
            (n, c, 0)
        }
        DataFormat::Avazu | DataFormat::Synth => {
            let (_, header) = lines
                .next()
                .ok_or_else(|| Error::Data(format!("{} is empty", path.display())))?;
            let header = header?;
            let cols: Vec<String> = header.trim_end().split(',').map(str::to_owned).collect();
            match format {
                DataFormat::Avazu => {
                    if cols.len() != AVAZU_COLUMNS || cols[1] != "click" {
                        return Err(Error::Parse {
                            line: 1,
                            detail: format!(
                                "malformed Avazu header: expected {AVAZU_COLUMNS} columns with `click` second"
                            ),
                        });
                    }
                    (Vec::new(), cols[2..].to_vec(), 0)
                }
                _ => {
                    if cols.len() < 2 || cols[0] != "label" {
                        return Err(Error::Parse {
                            line: 1,
                            detail: "malformed synthetic header: expected label,c1..cF".into(),
                        });
                    }
                    let f = cols.len() - 1;
                    (Vec::new(), cols[1..].to_vec(), f)
                }
            }
        }
    };

    let mut rows = Vec::new();
    for (i, text) in lines {
        let text = text?;
        let line = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            DataFormat::Criteo => parse_criteo(&text, line),
            DataFormat::Avazu => parse_avazu(&text, line),
            DataFormat::Synth => parse_synth(&text, synth_fields, line),
        };
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                bad.push(e);
                if bad.len() > max_bad {
                    return Err(bad.pop().expect("just pushed"));
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} contains no rows", path.display())));
    }
    Ok((
        RawTable {
            numeric_names,
            categorical_names,
            rows,
        },
        bad,
    ))
}
