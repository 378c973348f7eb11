//! Numeric CSV files: one column per feature, one row per time step, an
//! optional single header line. Values are written with 17 significant
//! digits so that loading a saved file reproduces it bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use spectral_rnn_core::spectral::SpectralFrames;
use spectral_rnn_core::train::MetricsRow;
use spectral_rnn_core::RealSeries;

use crate::error::{CliError, Result};

pub const METRICS_HEADER: [&str; 5] = ["iteration", "lr", "loss", "time_mse", "wall_ms"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::data(format!("{}: {other:?}", path.display())),
    }
}

/// Parses numeric CSV text. A first row that is not entirely numeric is
/// taken as the header.
pub fn parse_csv(text: &[u8], origin: &str) -> Result<RealSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let mut width = None;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut header_line = None;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(format!("{origin}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        if rows == 0 && header_line.is_none() && parsed.iter().any(Option::is_none) {
            header_line = Some(line);
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CliError::data(format!(
                "{origin}: line {line}: expected {expected} columns, found {}",
                record.len()
            )));
        }
        for (col, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Some(v) => data.push(v),
                None => {
                    return Err(CliError::data(format!(
                        "{origin}: line {line}, column {}: '{cell}' is not a number",
                        col + 1
                    )))
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        let line = header_line.unwrap_or(0);
        return Err(CliError::data(format!("{origin}: line {line}: no data rows")));
    }
    Ok(RealSeries::new(rows, width.unwrap_or(1), data)?)
}

pub fn load_csv(path: &Path) -> Result<RealSeries> {
    let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().flexible(true).from_writer(file))
}

/// Writes `x` with an optional header line.
pub fn save_csv(path: &Path, x: &RealSeries, header: Option<&[String]>) -> Result<()> {
    let mut w = create(path)?;
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_err(path, e))?;
    }
    for t in 0..x.len() {
        w.write_record(x.row(t).iter().map(|v| fmt_f64(*v)))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One row per (frame, bin, feature).
pub fn save_frames(path: &Path, frames: &SpectralFrames) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["frame", "bin", "feature", "re", "im"])
        .map_err(|e| csv_err(path, e))?;
    for tau in 0..frames.n_frames {
        for b in 0..frames.n_freq {
            for d in 0..frames.n_features {
                let c = frames.get(tau, b, d);
                w.write_record([
                    tau.to_string(),
                    b.to_string(),
                    d.to_string(),
                    fmt_f64(c.re),
                    fmt_f64(c.im),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Streams training metrics as they are produced.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        MetricsWriter::new(file)
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(METRICS_HEADER).map_err(|e| csv_err(Path::new("metrics"), e))?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner
            .write_record([
                row.iteration.to_string(),
                fmt_f64(row.lr),
                fmt_f64(row.loss),
                fmt_f64(row.time_mse),
                format!("{:.3}", row.wall_ms),
            ])
            .map_err(|e| csv_err(Path::new("metrics"), e))
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| CliError::io("metrics", e))?;
        self.inner
            .into_inner()
            .map_err(|e| CliError::data(format!("metrics: {}", e.error())))
    }
}

pub fn save_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for row in rows {
        w.write(row)?;
    }
    w.finish().map(drop)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection_and_errors() {
        let x = parse_csv(b"a,b\n1,2\n3,4\n", "t").unwrap();
        assert_eq!((x.len(), x.n_features()), (2, 2));
        assert_eq!(x.data(), &[1.0, 2.0, 3.0, 4.0]);

        let err = parse_csv(b"", "t").unwrap_err().to_string();
        assert!(err.contains("line 0"), "{err}");
        let err = parse_csv(b"1,2\n3\n", "t").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_csv(b"1,2\n3,x\n", "t").unwrap_err().to_string();
        assert!(err.contains("line 2, column 2"), "{err}");
        assert_eq!(parse_csv(b"1\n\n2\n", "t").unwrap().len(), 2);
    }

    #[test]
    fn values_print_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
