//! Pattern files: CSV with a `# window: lo,hi` comment line, a header row
//! `location[,mark]`, and one point per row. Colors are written as
//! integers, vector marks as `;`-separated values, missing marks as empty.

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::patterns::{Mark, MarkedPoint, MarkedPointPattern, PatternError, PointPattern, Window};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

const WINDOW_TAG: &str = "# window:";

fn format_mark(mark: &Mark) -> String {
    match mark {
        Mark::Color(c) => c.to_string(),
        Mark::Values(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
        Mark::Unmarked => String::new(),
    }
}

fn parse_mark(field: &str, line: usize) -> Result<Mark, IoError> {
    let bad = |message: String| IoError::Format { line, message };
    if field.is_empty() {
        Ok(Mark::Unmarked)
    } else if let Ok(c) = field.parse::<u32>() {
        Ok(Mark::Color(c))
    } else {
        field
            .split(';')
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("mark {field:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Mark::Values)
    }
}

pub fn write_marked_csv<W: Write>(pattern: &MarkedPointPattern, out: W) -> Result<(), IoError> {
    let mut out = out;
    writeln!(out, "{WINDOW_TAG} {},{}", pattern.window.lo, pattern.window.hi)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["location", "mark"])?;
    for p in &pattern.points {
        w.write_record([p.location.to_string(), format_mark(&p.mark)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pattern_csv<W: Write>(pattern: &PointPattern, out: W) -> Result<(), IoError> {
    let mut out = out;
    writeln!(out, "{WINDOW_TAG} {},{}", pattern.window.lo, pattern.window.hi)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["location"])?;
    for x in &pattern.points {
        w.write_record([x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_window(line: &str) -> Result<Window, IoError> {
    let bad = |message: String| IoError::Format { line: 1, message };
    let rest = line
        .strip_prefix(WINDOW_TAG)
        .ok_or_else(|| bad(format!("expected `{WINDOW_TAG} lo,hi` as the first line")))?;
    let (lo, hi) = rest
        .trim()
        .split_once(',')
        .ok_or_else(|| bad("window needs two comma-separated bounds".into()))?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("window bound {s:?}: {e}")));
    Ok(Window::new(parse(lo)?, parse(hi)?))
}

/// Reads either file layout; a missing mark column gives unmarked points.
pub fn read_marked_csv<R: Read>(input: R) -> Result<MarkedPointPattern, IoError> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let window = parse_window(first.trim_end())?;
    let mut rows = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rows.headers()?.clone();
    let has_mark = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["location"] => false,
        ["location", "mark"] => true,
        other => {
            return Err(IoError::Format {
                line: 2,
                message: format!("unexpected header {other:?}"),
            })
        }
    };
    let mut points = Vec::new();
    for (i, row) in rows.records().enumerate() {
        let row = row?;
        let line = i + 3;
        let location = row[0].parse::<f64>().map_err(|e| IoError::Format {
            line,
            message: format!("location {:?}: {e}", &row[0]),
        })?;
        let mark = if has_mark { parse_mark(&row[1], line)? } else { Mark::Unmarked };
        points.push(MarkedPoint { location, mark });
    }
    Ok(MarkedPointPattern::new(window, points)?)
}

pub fn read_pattern_csv<R: Read>(input: R) -> Result<PointPattern, IoError> {
    Ok(read_marked_csv(input)?.unmarked())
}
