//! EEG CSV reader and writer.
//!
//! Format: header `timestamp,TP9,AF7,AF8,TP10`, one row per sample, seconds
//! relative to the recording start in the first column and microvolts in the
//! channel columns. Extra columns are ignored; channel columns may appear in
//! any order but are returned in canonical order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::IngestError;
use crate::codes::fmt_f64;

/// Canonical channel order of the four-electrode headband.
pub const DEFAULT_CHANNELS: [&str; 4] = ["TP9", "AF7", "AF8", "TP10"];

/// Multi-channel time series, `samples[channel][t]` in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecording {
    pub channels: Vec<String>,
    pub sample_rate: f64,
    pub samples: Vec<Vec<f64>>,
    pub start_time: f64,
}

impl SignalRecording {
    /// Builds a recording, checking channel/sample shape and finiteness.
    pub fn new(
        channels: Vec<String>,
        sample_rate: f64,
        samples: Vec<Vec<f64>>,
        start_time: f64,
    ) -> Result<Self, IngestError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(IngestError::InvalidValue {
                key: "sample_rate".into(),
                constraint: "> 0".into(),
            });
        }
        if channels.len() != samples.len() || channels.is_empty() {
            return Err(IngestError::Shape(format!(
                "{} channel labels for {} sample rows",
                channels.len(),
                samples.len()
            )));
        }
        let n = samples[0].len();
        if samples.iter().any(|s| s.len() != n) {
            return Err(IngestError::Shape("channels differ in sample count".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(IngestError::Shape("non-finite sample value".into()));
        }
        Ok(SignalRecording {
            channels,
            sample_rate,
            samples,
            start_time,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Same channel layout with new sample data.
    pub(crate) fn with_samples(&self, samples: Vec<Vec<f64>>) -> SignalRecording {
        SignalRecording {
            channels: self.channels.clone(),
            sample_rate: self.sample_rate,
            samples,
            start_time: self.start_time,
        }
    }
}

/// Side information collected while parsing an EEG CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EegReadReport {
    /// Rows dropped because a numeric field was unparseable or non-finite.
    pub dropped_rows: usize,
    /// `(row, gap seconds)` for every timestamp step above two sample intervals.
    pub gaps: Vec<(usize, f64)>,
}

/// Reads an EEG CSV file. See the module docs for the format.
pub fn read_eeg_csv(
    path: impl AsRef<Path>,
    expected_rate: f64,
) -> Result<(SignalRecording, EegReadReport), IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_eeg_from(file, expected_rate)
}

pub fn read_eeg_from<R: std::io::Read>(
    reader: R,
    expected_rate: f64,
) -> Result<(SignalRecording, EegReadReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.clone(),
        Ok(_) => return Err(IngestError::EmptyFile),
        Err(e) => return Err(IngestError::Csv(e.to_string())),
    };
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let ts_col = find("timestamp")?;
    let ch_cols = DEFAULT_CHANNELS
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = EegReadReport::default();
    let mut samples = vec![Vec::new(); ch_cols.len()];
    let mut times: Vec<f64> = Vec::new();
    let parse = |rec: &csv::StringRecord, col: usize| -> Option<f64> {
        rec.get(col)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Csv(e.to_string()))?;
        let Some(t) = parse(&rec, ts_col) else {
            report.dropped_rows += 1;
            continue;
        };
        let values: Option<Vec<f64>> = ch_cols.iter().map(|&c| parse(&rec, c)).collect();
        let Some(values) = values else {
            report.dropped_rows += 1;
            continue;
        };
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(IngestError::NonMonotonicTimestamps { row: row + 1 });
            }
            if t - prev > 2.0 / expected_rate {
                report.gaps.push((row + 1, t - prev));
            }
        }
        times.push(t);
        for (dst, v) in samples.iter_mut().zip(values) {
            dst.push(v);
        }
    }
    if times.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let channels = DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect();
    let rec = SignalRecording::new(channels, expected_rate, samples, times[0])?;
    Ok((rec, report))
}

/// Writes a recording in the EEG CSV format. Timestamps are regenerated from
/// `start_time` and the sample rate.
pub fn write_eeg_csv(path: impl AsRef<Path>, rec: &SignalRecording) -> Result<(), IngestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_eeg_to(&mut w, rec).map_err(|e| IngestError::io(path, e))?;
    w.flush().map_err(|e| IngestError::io(path, e))
}

pub fn write_eeg_to<W: Write>(w: &mut W, rec: &SignalRecording) -> std::io::Result<()> {
    write!(w, "timestamp")?;
    for c in &rec.channels {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    let mut line = String::new();
    for t in 0..rec.len() {
        line.clear();
        line.push_str(&fmt_f64(rec.start_time + t as f64 / rec.sample_rate));
        for ch in &rec.samples {
            line.push(',');
            line.push_str(&fmt_f64(ch[t]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv_rows(n: usize) -> String {
        let mut s = String::from("timestamp,TP9,AF7,AF8,TP10\n");
        for i in 0..n {
            s.push_str(&format!("{},{},{},{},{}\n", i as f64 / 256.0, i, 2 * i, 3 * i, 4 * i));
        }
        s
    }

    #[test]
    fn reads_512_rows() {
        let (rec, report) = read_eeg_from(csv_rows(512).as_bytes(), 256.0).unwrap();
        assert_eq!(rec.len(), 512);
        assert_eq!(rec.channel_count(), 4);
        assert!((rec.duration() - 2.0).abs() < 1e-12);
        assert_eq!(report.dropped_rows, 0);
        assert!(report.gaps.is_empty());
        assert_eq!(rec.samples[3][10], 40.0);
    }

    #[test]
    fn missing_channel_is_named() {
        let s = "timestamp,TP9,AF8,TP10\n0,1,2,3\n";
        assert_eq!(
            read_eeg_from(s.as_bytes(), 256.0).unwrap_err(),
            IngestError::MissingColumn("AF7".into())
        );
    }

    #[test]
    fn unparseable_row_is_dropped_and_counted() {
        // 256 rows, one of which carries a non-numeric channel value
        let mut s = String::from("timestamp,TP9,AF7,AF8,TP10\n");
        for i in 0..256 {
            let t = i as f64 / 256.0;
            if i == 100 {
                s.push_str(&format!("{t},1,2,foo,4\n"));
            } else {
                s.push_str(&format!("{t},1,2,3,4\n"));
            }
        }
        let (rec, report) = read_eeg_from(s.as_bytes(), 256.0).unwrap();
        assert_eq!(rec.len(), 255);
        assert_eq!(report.dropped_rows, 1);
        // dropping a row leaves a one-interval step, below the gap threshold
        assert!(report.gaps.is_empty());
    }

    #[test]
    fn channel_columns_are_reordered() {
        let s = "AF8,timestamp,TP10,AF7,TP9,extra\n3,0,4,2,1,x\n";
        let (rec, _) = read_eeg_from(s.as_bytes(), 256.0).unwrap();
        let first: Vec<f64> = rec.samples.iter().map(|c| c[0]).collect();
        assert_eq!(first, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_non_monotonic_time() {
        let s = "timestamp,TP9,AF7,AF8,TP10\n0,1,1,1,1\n0.01,1,1,1,1\n0.005,1,1,1,1\n";
        assert_eq!(
            read_eeg_from(s.as_bytes(), 256.0).unwrap_err(),
            IngestError::NonMonotonicTimestamps { row: 3 }
        );
    }

    #[test]
    fn reports_gaps() {
        let s = "timestamp,TP9,AF7,AF8,TP10\n0,1,1,1,1\n0.00390625,1,1,1,1\n0.5,1,1,1,1\n";
        let (_, report) = read_eeg_from(s.as_bytes(), 256.0).unwrap();
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.gaps[0].0, 3);
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(read_eeg_from("".as_bytes(), 256.0).unwrap_err(), IngestError::EmptyFile);
        assert_eq!(
            read_eeg_from("timestamp,TP9,AF7,AF8,TP10\n".as_bytes(), 256.0).unwrap_err(),
            IngestError::EmptyFile
        );
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(
            values in prop::collection::vec(prop::array::uniform4(-500.0f64..500.0), 1..200),
            start in 0.0f64..10.0,
        ) {
            let samples: Vec<Vec<f64>> =
                (0..4).map(|c| values.iter().map(|r| r[c]).collect()).collect();
            let chans = DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect();
            let rec = SignalRecording::new(chans, 256.0, samples, start).unwrap();
            let mut buf = Vec::new();
            write_eeg_to(&mut buf, &rec).unwrap();
            let (back, report) = read_eeg_from(buf.as_slice(), 256.0).unwrap();
            prop_assert_eq!(report.dropped_rows, 0);
            prop_assert!((back.start_time - start).abs() < 1e-11);
            for (a, b) in rec.samples.iter().flatten().zip(back.samples.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-11);
            }
        }
    }
}
