//! Epoch → binary code vector: Welch PSD per channel, band-share integration,
//! SNR gating, cross-channel majority vote and trial-label attachment.

mod table;
mod welch;

pub use table::{read_code_table, read_code_table_from, write_code_table, write_code_table_to, CODE_TABLE_HEADER};
pub use welch::{hamming, welch_layout, welch_psd, PsdEstimate, Welch, WelchLayout};

use crate::codes::{Code, UnitId, BAND_COUNT, CODE_COUNT};
use crate::dsp::Epoch;
use crate::ingest::{PipelineConfig, TrialLog};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("invalid Welch segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("signal too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("total power over the analysis range is zero")]
    ZeroTotalPower,
    #[error("PSD does not cover {0}-{1} Hz")]
    Coverage(f64, f64),
    #[error("invalid band definitions: {0}")]
    InvalidBands(String),
    #[error("presence matrix shape mismatch: {0}")]
    Shape(String),
    #[error("code table schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("code table row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("{0}")]
    Io(String),
}

/// Frequency range of one band code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandDefinition {
    pub code: Code,
    pub low: f64,
    pub high: f64,
}

/// δ 1–3, θ 4–7, α 8–13, β 14–30, γ 31–49 Hz.
pub fn default_bands() -> Vec<BandDefinition> {
    [(1.0, 3.0), (4.0, 7.0), (8.0, 13.0), (14.0, 30.0), (31.0, 49.0)]
        .iter()
        .zip(Code::BANDS)
        .map(|(&(low, high), code)| BandDefinition { code, low, high })
        .collect()
}

/// Analysis range used as the denominator of band shares.
pub const ANALYSIS_RANGE: (f64, f64) = (1.0, 50.0);

pub fn validate_bands(bands: &[BandDefinition]) -> Result<(), SpectralError> {
    if bands.len() != BAND_COUNT || bands.iter().zip(Code::BANDS).any(|(b, c)| b.code != c) {
        return Err(SpectralError::InvalidBands(
            "need delta, theta, alpha, beta, gamma in order".into(),
        ));
    }
    for b in bands {
        if !(b.low < b.high) {
            return Err(SpectralError::InvalidBands(format!("{}: low >= high", b.code)));
        }
        if b.low < ANALYSIS_RANGE.0 || b.high > ANALYSIS_RANGE.1 {
            return Err(SpectralError::InvalidBands(format!("{}: outside [1, 50)", b.code)));
        }
    }
    for w in bands.windows(2) {
        if w[0].high > w[1].low {
            return Err(SpectralError::InvalidBands(format!(
                "{} overlaps {}",
                w[0].code, w[1].code
            )));
        }
    }
    Ok(())
}

/// Each band's share of the total power over `range`.
pub fn band_shares_in(
    psd: &PsdEstimate,
    bands: &[BandDefinition],
    range: (f64, f64),
) -> Result<Vec<f64>, SpectralError> {
    let (f_lo, f_hi) = (
        psd.frequencies.first().copied().unwrap_or(f64::NAN),
        psd.frequencies.last().copied().unwrap_or(f64::NAN),
    );
    if !(f_lo <= range.0 && f_hi >= range.1) {
        return Err(SpectralError::Coverage(range.0, range.1));
    }
    let total = psd.integrate(range.0, range.1);
    if !(total > 0.0) {
        return Err(SpectralError::ZeroTotalPower);
    }
    Ok(bands
        .iter()
        .map(|b| psd.integrate(b.low.max(range.0), b.high.min(range.1)) / total)
        .collect())
}

/// Band shares over the 1–50 Hz analysis range.
pub fn band_shares(psd: &PsdEstimate, bands: &[BandDefinition]) -> Result<Vec<f64>, SpectralError> {
    band_shares_in(psd, bands, ANALYSIS_RANGE)
}

/// Present iff `share / (1 − share) ≥ threshold`; a share of 1 gives +∞.
pub fn snr_gate(shares: &[f64], threshold: f64) -> Vec<bool> {
    shares
        .iter()
        .map(|&s| {
            let snr = if s >= 1.0 { f64::INFINITY } else { s / (1.0 - s) };
            snr >= threshold
        })
        .collect()
}

/// Band present iff at least `quorum` channels vote present. `votes[c][b]`.
pub fn majority_vote(votes: &[Vec<bool>], quorum: usize) -> Result<Vec<bool>, SpectralError> {
    let Some(first) = votes.first() else {
        return Err(SpectralError::Shape("no channels".into()));
    };
    let bands = first.len();
    if votes.iter().any(|v| v.len() != bands) {
        return Err(SpectralError::Shape("channels disagree in band count".into()));
    }
    Ok((0..bands)
        .map(|b| votes.iter().filter(|v| v[b]).count() >= quorum)
        .collect())
}

/// Per-channel band presence of one epoch. An all-zero channel votes absent
/// for every band.
pub fn channel_presence(
    welch: &Welch,
    channel: &[f64],
    config: &PipelineConfig,
) -> Result<Vec<bool>, SpectralError> {
    let psd = welch.estimate(channel)?;
    match band_shares_in(&psd, &config.bands, config.bandpass) {
        Ok(shares) => Ok(snr_gate(&shares, config.snr_threshold)),
        Err(SpectralError::ZeroTotalPower) => Ok(vec![false; config.bands.len()]),
        Err(e) => Err(e),
    }
}

/// Consolidated band presence for each epoch.
pub fn encode_epochs(
    epochs: &[Epoch],
    sample_rate: f64,
    config: &PipelineConfig,
) -> Result<Vec<Vec<bool>>, SpectralError> {
    let Some(first) = epochs.first() else {
        return Ok(Vec::new());
    };
    let welch = Welch::new(first.len(), sample_rate, config.welch_segments, config.welch_overlap)?;
    epochs
        .iter()
        .map(|e| {
            let votes = e
                .channels
                .iter()
                .map(|ch| channel_presence(&welch, ch, config))
                .collect::<Result<Vec<_>, _>>()?;
            majority_vote(&votes, config.majority_quorum)
        })
        .collect()
}

/// Binary presence over the seven codes for one labelled epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeVector {
    pub epoch_index: usize,
    pub codes: [bool; CODE_COUNT],
    pub unit: UnitId,
}

impl CodeVector {
    pub fn has(&self, code: Code) -> bool {
        self.codes[code.index()]
    }

    pub fn active(&self) -> impl Iterator<Item = Code> + '_ {
        Code::ALL.into_iter().filter(|c| self.has(*c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labelled {
    pub vectors: Vec<CodeVector>,
    /// Epochs whose midpoint fell outside every trial.
    pub dropped: usize,
}

/// Labels each epoch with the response of the trial containing its midpoint
/// (half-open trial spans). Epochs outside every trial are dropped.
pub fn attach_labels(
    participant: &str,
    epochs: &[Epoch],
    presences: &[Vec<bool>],
    trials: &TrialLog,
) -> Result<Labelled, SpectralError> {
    if epochs.len() != presences.len() {
        return Err(SpectralError::Shape(format!(
            "{} epochs, {} presence rows",
            epochs.len(),
            presences.len()
        )));
    }
    let mut vectors = Vec::new();
    let mut dropped = 0;
    for (epoch, bands) in epochs.iter().zip(presences) {
        let Some(trial) = trials.find(epoch.midpoint()) else {
            dropped += 1;
            continue;
        };
        let unit = UnitId::new(participant, trial.condition)
            .ok_or_else(|| SpectralError::Shape("empty participant id".into()))?;
        let mut codes = [false; CODE_COUNT];
        codes[..bands.len().min(BAND_COUNT)].copy_from_slice(&bands[..bands.len().min(BAND_COUNT)]);
        codes[trial.response.code().index()] = true;
        vectors.push(CodeVector {
            epoch_index: epoch.index,
            codes,
            unit,
        });
    }
    Ok(Labelled { vectors, dropped })
}
