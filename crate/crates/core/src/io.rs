//! CSV and text output with a fixed number format.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// 17 significant digits: enough to round-trip any f64 bit-exactly.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text with optional `#key=value` comment lines before the header.
pub fn csv_string<I>(comments: &[String], header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut out = String::new();
    for c in comments {
        out.push('#');
        out.push_str(c);
        out.push('\n');
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| fmt_num(x)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    out.push_str(&String::from_utf8(bytes).expect("CSV output is ASCII"));
    Ok(out)
}

pub fn real_series_csv(series: &TimeSeries<f64>, time_label: &str, value_label: &str) -> Result<String> {
    csv_string(
        &[],
        &[time_label, value_label],
        series.times().iter().zip(series.values()).map(|(&t, &v)| vec![t, v]),
    )
}

pub fn complex_series_csv(series: &TimeSeries<Complex64>, time_label: &str) -> Result<String> {
    csv_string(
        &[],
        &[time_label, "re", "im"],
        series.times().iter().zip(series.values()).map(|(&t, v)| vec![t, v.re, v.im]),
    )
}

/// Two-column `(time, value)` CSV with a header row. Lines starting with `#`
/// are ignored.
pub fn read_real_series(path: &Path) -> Result<TimeSeries<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            ),
            _ => Error::Csv(e),
        })?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::config(
                format!("{}:{}", path.display(), line + 2),
                "expected two columns (t, value)",
            ));
        }
        let parse = |i: usize| {
            record[i].parse::<f64>().map_err(|e| {
                Error::config(format!("{}:{}", path.display(), line + 2), e.to_string())
            })
        };
        times.push(parse(0)?);
        values.push(parse(1)?);
    }
    TimeSeries::new(times, values)
}
