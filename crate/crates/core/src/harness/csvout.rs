//! Curve emission: one CSV row per (experiment, waveform, arm, SNR, metric)
//! point, UTF-8 with LF line endings and '.' decimal separators. The writer
//! is deterministic so identical runs produce byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One emitted curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub experiment: String,
    pub waveform: String,
    pub arm: String,
    pub snr_db: f64,
    pub metric: String,
    pub value: f64,
    pub trials: u64,
    pub count: u64,
    pub ci95: f64,
}

/// Serializes rows to a CSV document (header always present).
pub fn csv_string(rows: &[CurveRow]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    if rows.is_empty() {
        writer
            .write_record([
                "experiment",
                "waveform",
                "arm",
                "snr_db",
                "metric",
                "value",
                "trials",
                "count",
                "ci95",
            ])
            .map_err(|e| Error::Numerical(format!("csv encode: {e}")))?;
    }
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Numerical(format!("csv encode: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(format!("csv utf-8: {e}")))
}

/// Writes a curve set to disk.
pub fn write_csv(rows: &[CurveRow], path: &Path) -> Result<()> {
    let text = csv_string(rows)?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a curve set back (round-trip tooling and tests).
pub fn read_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record.map_err(|e| Error::Config(format!("csv parse: {e}")))?);
    }
    Ok(rows)
}

/// Writes one magnitude grid as plain comma-separated rows, one frame row
/// per line, for external heat-map plotting.
pub fn write_magnitude_grid(grid: &nalgebra::DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..grid.nrows() {
        let mut first = true;
        for j in 0..grid.ncols() {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{}", grid[(i, j)]));
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<CurveRow> {
        let mut rows = Vec::new();
        for arm in ["a", "b"] {
            for wf in ["ofdm", "otfs", "afdm"] {
                for snr in [0.0, 2.5, 5.0, 7.5, 10.0] {
                    rows.push(CurveRow {
                        experiment: "ber".into(),
                        waveform: wf.into(),
                        arm: arm.into(),
                        snr_db: snr,
                        metric: "ber".into(),
                        value: 0.1 / (snr + 1.0),
                        trials: 10,
                        count: 12800,
                        ci95: 0.001,
                    });
                }
            }
        }
        rows
    }

    #[test]
    fn empty_curve_set_is_header_only() {
        let text = csv_string(&[]).unwrap();
        assert_eq!(
            text,
            "experiment,waveform,arm,snr_db,metric,value,trials,count,ci95\n"
        );
    }

    #[test]
    fn row_count_matches_arms_times_waveforms_times_snrs() {
        let rows = sample_rows();
        let text = csv_string(&rows).unwrap();
        // Header plus 2 arms × 3 waveforms × 5 SNRs.
        assert_eq!(text.lines().count(), 1 + 30);
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'), "LF line endings only");
    }

    #[test]
    fn round_trip_preserves_values_exactly() {
        let rows = sample_rows();
        let dir = std::env::temp_dir().join(format!("ddlink-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        write_csv(&rows, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(rows, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = write_csv(&[], Path::new("/nonexistent-dir/x/y.csv")).unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.contains("nonexistent-dir")),
            other => panic!("expected Io error, got {other:?}"),
        }
    }
}
