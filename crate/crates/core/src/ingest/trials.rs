//! Trial/response log: `start,end,condition,response` in seconds on the EEG
//! time base.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::IngestError;
use crate::codes::{fmt_f64, Condition, Response};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub start: f64,
    pub end: f64,
    pub condition: Condition,
    pub response: Response,
}

impl TrialRecord {
    /// Half-open containment `[start, end)`.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Time-ordered, non-overlapping trials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialLog {
    trials: Vec<TrialRecord>,
}

impl TrialLog {
    /// Sorts by start time and validates spans and ordering.
    pub fn new(mut trials: Vec<TrialRecord>) -> Result<Self, IngestError> {
        for (i, t) in trials.iter().enumerate() {
            if !(t.start.is_finite() && t.end.is_finite() && t.start < t.end) {
                return Err(IngestError::InvalidTrial(i));
            }
        }
        trials.sort_by(|a, b| a.start.total_cmp(&b.start));
        for i in 1..trials.len() {
            if trials[i - 1].end > trials[i].start {
                return Err(IngestError::OverlappingTrials(i - 1, i));
            }
        }
        Ok(TrialLog { trials })
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Trial whose `[start, end)` contains `t`.
    pub fn find(&self, t: f64) -> Option<&TrialRecord> {
        let idx = self.trials.partition_point(|tr| tr.start <= t);
        idx.checked_sub(1)
            .map(|i| &self.trials[i])
            .filter(|tr| tr.contains(t))
    }

    /// Shifts every trial by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> TrialLog {
        TrialLog {
            trials: self
                .trials
                .iter()
                .map(|t| TrialRecord {
                    start: t.start + offset,
                    end: t.end + offset,
                    ..*t
                })
                .collect(),
        }
    }
}

pub fn read_trial_log(path: impl AsRef<Path>) -> Result<TrialLog, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_trial_log_from(file)
}

pub fn read_trial_log_from<R: std::io::Read>(reader: R) -> Result<TrialLog, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::EmptyFile);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (c_start, c_end, c_cond, c_resp) =
        (col("start")?, col("end")?, col("condition")?, col("response")?);

    let mut trials = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Csv(e.to_string()))?;
        let num = |c: usize, key: &str| {
            rec[c].parse::<f64>().map_err(|_| IngestError::InvalidValue {
                key: format!("{key} (row {})", row + 1),
                constraint: "number".into(),
            })
        };
        let condition = rec[c_cond]
            .parse::<Condition>()
            .map_err(|e| IngestError::UnknownConditionLabel(e.0))?;
        let response = rec[c_resp]
            .parse::<Response>()
            .map_err(|e| IngestError::UnknownResponseLabel(e.0))?;
        trials.push(TrialRecord {
            start: num(c_start, "start")?,
            end: num(c_end, "end")?,
            condition,
            response,
        });
    }
    TrialLog::new(trials)
}

pub fn write_trial_log(path: impl AsRef<Path>, log: &TrialLog) -> Result<(), IngestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "start,end,condition,response")?;
        for t in log.trials() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(t.start),
                fmt_f64(t.end),
                t.condition,
                t.response
            )?;
        }
        w.flush()
    })();
    res.map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(body: &str) -> Result<TrialLog, IngestError> {
        read_trial_log_from(format!("start,end,condition,response\n{body}").as_bytes())
    }

    #[test]
    fn two_adjacent_trials() {
        let log = parse("0,5,Feedback,Correct\n5,9,feedback,incorrect\n").unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.trials()[1].response, Response::Incorrect);
    }

    #[test]
    fn overlap_reports_first_pair() {
        assert_eq!(
            parse("0,5,feedback,correct\n4,9,feedback,correct\n").unwrap_err(),
            IngestError::OverlappingTrials(0, 1)
        );
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let log = parse("5,9,no_feedback,correct\n0,5,feedback,incorrect\n").unwrap();
        assert_eq!(log.trials()[0].start, 0.0);
        assert_eq!(log.trials()[1].start, 5.0);
        assert!(log
            .trials()
            .windows(2)
            .all(|w| w[0].end <= w[1].start));
    }

    #[test]
    fn bad_labels() {
        assert_eq!(
            parse("0,5,sometimes,correct\n").unwrap_err(),
            IngestError::UnknownConditionLabel("sometimes".into())
        );
        assert_eq!(
            parse("0,5,feedback,maybe\n").unwrap_err(),
            IngestError::UnknownResponseLabel("maybe".into())
        );
    }

    #[test]
    fn zero_length_trial_rejected() {
        assert_eq!(parse("3,3,feedback,correct\n").unwrap_err(), IngestError::InvalidTrial(0));
    }

    #[test]
    fn lookup_uses_half_open_spans() {
        let log = parse("0,3,feedback,correct\n3,6,feedback,incorrect\n").unwrap();
        assert_eq!(log.find(3.0).unwrap().response, Response::Incorrect);
        assert_eq!(log.find(2.999).unwrap().response, Response::Correct);
        assert!(log.find(6.0).is_none());
        assert!(log.find(-0.1).is_none());
    }
}
