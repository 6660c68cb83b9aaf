//! Delimited-text trace ingestion.
//!
//! Accepted layout: two columns `x, y` or three columns `x, y, sigma`,
//! comma separated, with an optional header row and `#` comment lines.
//! Without a `sigma` column, counting statistics are assumed.

use std::io::Read;
use std::path::Path;

use cavspin_core::fitting::{AxisKind, SpectrumTrace};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceHints {
    /// Overrides any axis implied by the header.
    pub axis: Option<AxisKind>,
    /// Axis used when neither the hint nor the header names one.
    pub fallback_axis: Option<AxisKind>,
    /// Sort rows by `x` (stably) instead of rejecting unordered files.
    pub sort: bool,
}

/// Axis implied by a column header such as `t_ns`, `wavelength_nm` or
/// `freq_THz`.
pub fn axis_from_header(name: &str) -> Option<AxisKind> {
    let lower = name.trim().to_ascii_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    for t in &tokens {
        match *t {
            "ns" => return Some(AxisKind::TimeNs),
            "nm" => return Some(AxisKind::WavelengthNm),
            "thz" => return Some(AxisKind::FrequencyThz),
            _ => {}
        }
    }
    match tokens.first().copied() {
        Some("t" | "time" | "delay" | "tau") => Some(AxisKind::TimeNs),
        Some("wavelength" | "lambda" | "wl") => Some(AxisKind::WavelengthNm),
        Some("freq" | "frequency" | "nu") => Some(AxisKind::FrequencyThz),
        _ => None,
    }
}

pub fn load_trace(path: &Path, hints: &TraceHints) -> Result<SpectrumTrace, CliError> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(&text, hints).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

struct Row {
    line: u64,
    x: f64,
    y: f64,
    sigma: Option<f64>,
}

pub fn parse_trace(text: &str, hints: &TraceHints) -> Result<SpectrumTrace, CliError> {
    let invalid = |m: String| CliError::Validation(m);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Row> = Vec::new();
    let mut width: Option<usize> = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| invalid(format!("malformed input: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = record.iter().collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Result<f64, _>> = fields.iter().map(|f| f.parse::<f64>()).collect();
        if k == 0 && header.is_none() && parsed.iter().any(|p| p.is_err()) {
            header = Some(fields.iter().map(|s| s.to_string()).collect());
            continue;
        }
        if !(2..=3).contains(&fields.len()) {
            return Err(invalid(format!(
                "line {line}: expected 2 or 3 columns, found {}",
                fields.len()
            )));
        }
        if let Some(w) = width {
            if w != fields.len() {
                return Err(invalid(format!(
                    "line {line}: expected {w} columns, found {}",
                    fields.len()
                )));
            }
        }
        width = Some(fields.len());
        let mut vals = Vec::with_capacity(3);
        for (col, p) in parsed.into_iter().enumerate() {
            let v = p.map_err(|_| {
                invalid(format!(
                    "line {line}, column {}: cannot parse '{}' as a number",
                    col + 1,
                    fields[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(invalid(format!("line {line}, column {}: value is not finite", col + 1)));
            }
            vals.push(v);
        }
        if let Some(&s) = vals.get(2) {
            if !(s > 0.0) {
                return Err(invalid(format!("line {line}: sigma must be positive (got {s})")));
            }
        }
        rows.push(Row {
            line,
            x: vals[0],
            y: vals[1],
            sigma: vals.get(2).copied(),
        });
    }
    if let (Some(h), Some(w)) = (&header, width) {
        if h.len() != w {
            return Err(invalid(format!(
                "header has {} columns but data rows have {w}",
                h.len()
            )));
        }
    }
    if rows.is_empty() {
        return Err(invalid("no data rows".into()));
    }

    if hints.sort {
        rows.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
    for w in rows.windows(2) {
        if w[1].x == w[0].x {
            return Err(invalid(format!(
                "line {}: duplicate x = {} (also on line {})",
                w[1].line, w[1].x, w[0].line
            )));
        }
        if w[1].x < w[0].x {
            return Err(invalid(format!(
                "line {}: x = {} is not increasing (previous row has {}); pass the sort hint to reorder",
                w[1].line, w[1].x, w[0].x
            )));
        }
    }

    let axis = hints
        .axis
        .or_else(|| header.as_ref().and_then(|h| axis_from_header(&h[0])))
        .or(hints.fallback_axis)
        .ok_or_else(|| invalid("cannot tell the x axis kind from the header; give an axis hint".into()))?;

    let x = rows.iter().map(|r| r.x).collect();
    let y = rows.iter().map(|r| r.y).collect();
    let sigma = if width == Some(3) {
        Some(rows.iter().map(|r| r.sigma.unwrap_or(1.0)).collect())
    } else {
        None
    };
    Ok(SpectrumTrace::new(axis, x, y, sigma)?)
}
