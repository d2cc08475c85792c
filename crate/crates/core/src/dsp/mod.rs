//! Preprocessing: average re-reference, mains notch, band-pass, 1-second
//! epoching and ICA artifact rejection, in that order.

mod filter;
mod ica;

pub use filter::{apply_filter, Biquad, FilterKind, FilterSpec, Sos};
pub use ica::{excess_kurtosis, ica_clean, FastIca, IcaOptions, IcaReport};

use crate::ingest::{PipelineConfig, SignalRecording};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("average reference needs at least two channels")]
    SingleChannel,
    #[error("signal too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("filter coefficients are unstable")]
    UnstableFilter,
    #[error("ICA needs at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("ICA needs at least 4 channels, got {0}")]
    TooFewChannels(usize),
    #[error("ICA did not converge in {0} iterations")]
    ConvergenceFailure(usize),
    #[error("epochs disagree in channel count or length")]
    RaggedEpochs,
}

/// One fixed-length segment, `channels[c][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub index: usize,
    pub channels: Vec<Vec<f64>>,
    /// `[start, end)` in seconds on the recording time base.
    pub time_span: (f64, f64),
}

impl Epoch {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.time_span.0 + self.time_span.1)
    }
}

/// Subtracts the across-channel mean at every sample.
pub fn average_reference(rec: &SignalRecording) -> Result<SignalRecording, DspError> {
    let c = rec.channel_count();
    if c < 2 {
        return Err(DspError::SingleChannel);
    }
    let n = rec.len();
    let mut out = rec.samples.clone();
    for t in 0..n {
        let mean = rec.samples.iter().map(|ch| ch[t]).sum::<f64>() / c as f64;
        for ch in out.iter_mut() {
            ch[t] -= mean;
        }
    }
    Ok(rec.with_samples(out))
}

/// Cuts the recording into contiguous epochs of `epoch_length` seconds; the
/// trailing partial epoch is discarded.
pub fn segment_epochs(rec: &SignalRecording, epoch_length: f64) -> Result<Vec<Epoch>, DspError> {
    let per = (epoch_length * rec.sample_rate).round() as usize;
    if per == 0 || rec.len() < per {
        return Err(DspError::TooShort {
            needed: per.max(1),
            got: rec.len(),
        });
    }
    let count = rec.len() / per;
    let span = per as f64 / rec.sample_rate;
    Ok((0..count)
        .map(|i| Epoch {
            index: i,
            channels: rec
                .samples
                .iter()
                .map(|ch| ch[i * per..(i + 1) * per].to_vec())
                .collect(),
            time_span: (
                rec.start_time + i as f64 * span,
                rec.start_time + (i + 1) as f64 * span,
            ),
        })
        .collect())
}

/// Concatenates epochs back into per-channel continuous data.
pub fn concat_epochs(epochs: &[Epoch]) -> Result<Vec<Vec<f64>>, DspError> {
    let Some(first) = epochs.first() else {
        return Ok(Vec::new());
    };
    let (c, n) = (first.channels.len(), first.len());
    if epochs
        .iter()
        .any(|e| e.channels.len() != c || e.channels.iter().any(|ch| ch.len() != n))
    {
        return Err(DspError::RaggedEpochs);
    }
    Ok((0..c)
        .map(|ch| epochs.iter().flat_map(|e| e.channels[ch].iter().copied()).collect())
        .collect())
}

/// Intermediate signals kept for optional debug dumps.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub rereferenced: SignalRecording,
    pub filtered: SignalRecording,
    pub epochs: Vec<Epoch>,
    pub ica: IcaReport,
}

/// Runs re-reference → notch → band-pass → epoch → ICA with the configured
/// parameters.
pub fn preprocess(rec: &SignalRecording, config: &PipelineConfig) -> Result<Preprocessed, DspError> {
    let rereferenced = average_reference(rec)?;
    let notched = apply_filter(
        &rereferenced,
        &FilterSpec::notch(config.notch_freq, config.notch_q),
    )?;
    let filtered = apply_filter(
        &notched,
        &FilterSpec::bandpass(config.bandpass.0, config.bandpass.1, config.filter_order),
    )?;
    let epochs = segment_epochs(&filtered, config.epoch_length)?;
    let (epochs, ica) = ica_clean(&epochs, config)?;
    Ok(Preprocessed {
        rereferenced,
        filtered,
        epochs,
        ica,
    })
}
