//! Shared helpers for the comma-separated text formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn parse_f64(source: &str, line: u64, cell: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(source, line, format!("`{cell}` is not a number")))
}

pub(crate) fn parse_usize(source: &str, line: u64, cell: &str) -> Result<usize> {
    cell.trim().parse::<usize>().map_err(|_| {
        Error::parse(
            source,
            line,
            format!("`{cell}` is not a nonnegative integer"),
        )
    })
}

pub(crate) fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(rdr)
}

pub(crate) fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads the header row and checks its leading columns.
pub(crate) fn expect_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    source: &str,
    expected: &[&str],
) -> Result<csv::StringRecord> {
    let header = rdr.headers()?.clone();
    let line = record_line(&header).max(1);
    for (i, want) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(Error::parse(
                    source,
                    line,
                    format!("header column {} is `{got}`, expected `{want}`", i + 1),
                ))
            }
            None => {
                return Err(Error::parse(
                    source,
                    line,
                    format!("header is missing column `{want}`"),
                ))
            }
        }
    }
    Ok(header)
}

pub(crate) fn expect_len(record: &csv::StringRecord, source: &str, len: usize) -> Result<()> {
    if record.len() != len {
        return Err(Error::parse(
            source,
            record_line(record),
            format!("expected {len} fields, found {}", record.len()),
        ));
    }
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(BufReader::new(file))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(BufWriter::new(file))
}

/// Writes a file through a closure and flushes it.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn source_name(path: &Path) -> String {
    path.display().to_string()
}
