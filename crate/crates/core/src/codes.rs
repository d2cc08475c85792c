//! Code set, experimental labels and unit identifiers shared by every stage.

use std::fmt;
use std::str::FromStr;

/// Number of codes in the fixed code set.
pub const CODE_COUNT: usize = 7;

/// Number of EEG frequency-band codes.
pub const BAND_COUNT: usize = 5;

/// One binary feature per epoch: a frequency band or a response label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Code {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
    Correct,
    Incorrect,
}

impl Code {
    pub const ALL: [Code; CODE_COUNT] = [
        Code::Delta,
        Code::Theta,
        Code::Alpha,
        Code::Beta,
        Code::Gamma,
        Code::Correct,
        Code::Incorrect,
    ];

    pub const BANDS: [Code; BAND_COUNT] =
        [Code::Delta, Code::Theta, Code::Alpha, Code::Beta, Code::Gamma];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Code> {
        Code::ALL.get(i).copied()
    }

    /// Lower-case column name used in every CSV export.
    pub fn name(self) -> &'static str {
        match self {
            Code::Delta => "delta",
            Code::Theta => "theta",
            Code::Alpha => "alpha",
            Code::Beta => "beta",
            Code::Gamma => "gamma",
            Code::Correct => "correct",
            Code::Incorrect => "incorrect",
        }
    }

    /// Display label for diagrams.
    pub fn label(self) -> &'static str {
        match self {
            Code::Delta => "Delta",
            Code::Theta => "Theta",
            Code::Alpha => "Alpha",
            Code::Beta => "Beta",
            Code::Gamma => "Gamma",
            Code::Correct => "Correct",
            Code::Incorrect => "Incorrect",
        }
    }

    pub fn from_name(s: &str) -> Option<Code> {
        let s = s.trim();
        Code::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Experimental condition of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Feedback,
    NoFeedback,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Feedback, Condition::NoFeedback];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Feedback => "feedback",
            Condition::NoFeedback => "no_feedback",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Condition {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "feedback" => Ok(Condition::Feedback),
            "no_feedback" | "nofeedback" => Ok(Condition::NoFeedback),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

/// Correctness of the participant's answer on a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Response {
    Correct,
    Incorrect,
}

impl Response {
    pub fn name(self) -> &'static str {
        match self {
            Response::Correct => "correct",
            Response::Incorrect => "incorrect",
        }
    }

    pub fn code(self) -> Code {
        match self {
            Response::Correct => Code::Correct,
            Response::Incorrect => Code::Incorrect,
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Response {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "correct" => Ok(Response::Correct),
            "incorrect" => Ok(Response::Incorrect),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

/// One (participant, condition) pair. Each unit becomes one row of the
/// projection input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitId {
    pub participant: String,
    pub condition: Condition,
}

impl UnitId {
    /// Returns `None` for an empty participant identifier.
    pub fn new(participant: impl Into<String>, condition: Condition) -> Option<Self> {
        let participant = participant.into();
        if participant.trim().is_empty() {
            return None;
        }
        Some(UnitId {
            participant,
            condition,
        })
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.participant, self.condition)
    }
}

/// Shortest round-trip float formatting used by all text exports: output
/// bytes only depend on the value and re-reading yields the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_names_round_trip() {
        for c in Code::ALL {
            assert_eq!(Code::from_name(c.name()), Some(c));
            assert_eq!(Code::from_index(c.index()), Some(c));
        }
        assert_eq!(Code::from_name("GAMMA"), Some(Code::Gamma));
        assert_eq!(Code::from_name("kappa"), None);
    }

    #[test]
    fn labels_are_case_insensitive() {
        assert_eq!("No_Feedback".parse::<Condition>(), Ok(Condition::NoFeedback));
        assert_eq!("FEEDBACK".parse::<Condition>(), Ok(Condition::Feedback));
        assert!("maybe".parse::<Condition>().is_err());
        assert_eq!("Incorrect".parse::<Response>(), Ok(Response::Incorrect));
    }

    #[test]
    fn unit_requires_participant() {
        assert!(UnitId::new("", Condition::Feedback).is_none());
        assert!(UnitId::new("  ", Condition::Feedback).is_none());
        assert!(UnitId::new("P01", Condition::Feedback).is_some());
    }

    #[test]
    fn float_format_is_stable() {
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(2.0), "2");
        assert_eq!(fmt_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
