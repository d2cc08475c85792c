//! Run configuration: a flat `key = value` text file.
//!
//! Blank lines and `#` comments are ignored. Unknown keys produce a warning.
//! Every key is optional; absent keys take the built-in default.

use std::fmt::Write as _;
use std::path::Path;

use super::IngestError;
use crate::codes::{fmt_f64, Code};
use crate::network::NormalizationMode;
use crate::spectral::{default_bands, welch_layout, BandDefinition};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub channels: Vec<String>,
    pub sample_rate: f64,
    pub bands: Vec<BandDefinition>,
    /// Band present iff `share / (1 - share) >= snr_threshold`.
    pub snr_threshold: f64,
    /// Channels that must agree for a band to be present.
    pub majority_quorum: usize,
    /// NONA window length `L` in epochs (ground = previous `L - 1` epochs).
    pub nona_window: usize,
    pub welch_segments: usize,
    pub welch_overlap: f64,
    pub ica_enabled: bool,
    pub ica_max_iter: usize,
    pub ica_tolerance: f64,
    /// Components with |excess kurtosis| above this are zeroed.
    pub ica_kurtosis_threshold: f64,
    pub notch_freq: f64,
    pub notch_q: f64,
    pub bandpass: (f64, f64),
    pub filter_order: usize,
    pub epoch_length: f64,
    pub normalization_mode: NormalizationMode,
    pub rng_seed: u64,
    /// Seconds added to every trial-log time before epochs are labelled.
    pub trial_offset: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            channels: super::DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            sample_rate: 256.0,
            bands: default_bands(),
            snr_threshold: 0.25,
            majority_quorum: 3,
            nona_window: 2,
            welch_segments: 3,
            welch_overlap: 0.5,
            ica_enabled: true,
            ica_max_iter: 500,
            ica_tolerance: 1e-5,
            ica_kurtosis_threshold: 5.0,
            notch_freq: 60.0,
            notch_q: 30.0,
            bandpass: (1.0, 50.0),
            filter_order: 4,
            epoch_length: 1.0,
            normalization_mode: NormalizationMode::EpochCount,
            rng_seed: 0,
            trial_offset: 0.0,
        }
    }
}

fn invalid(key: &str, constraint: &str) -> IngestError {
    IngestError::InvalidValue {
        key: key.to_string(),
        constraint: constraint.to_string(),
    }
}

impl PipelineConfig {
    /// Samples per epoch, `round(epoch_length * sample_rate)`.
    pub fn epoch_samples(&self) -> usize {
        (self.epoch_length * self.sample_rate).round() as usize
    }

    /// Welch segment length for the configured epoch size.
    pub fn welch_segment_length(&self) -> Result<usize, IngestError> {
        welch_layout(self.epoch_samples(), self.welch_segments, self.welch_overlap)
            .map(|l| l.segment_len)
            .map_err(|e| invalid("welch_segments", &e.to_string()))
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(invalid("sample_rate", "> 0"));
        }
        if !(self.welch_overlap > 0.0 && self.welch_overlap < 1.0) {
            return Err(invalid("welch_overlap", "0 < overlap < 1"));
        }
        if self.welch_segments < 2 {
            return Err(invalid("welch_segments", ">= 2"));
        }
        if self.nona_window < 2 {
            return Err(invalid("nona_window", "≥ 2"));
        }
        if self.channels.is_empty() {
            return Err(invalid("channels", "at least one channel"));
        }
        if self.majority_quorum < 1 || self.majority_quorum > self.channels.len() {
            return Err(invalid("majority_quorum", "1 ≤ quorum ≤ channel count"));
        }
        if !(self.snr_threshold > 0.0 && self.snr_threshold.is_finite()) {
            return Err(invalid("snr_threshold", "> 0"));
        }
        let (lo, hi) = self.bandpass;
        if !(lo > 0.0 && lo < hi && hi < self.sample_rate / 2.0) {
            return Err(invalid("bandpass", "0 < low < high < sample_rate/2"));
        }
        if self.filter_order < 2 || self.filter_order % 2 != 0 {
            return Err(invalid("filter_order", "even and ≥ 2"));
        }
        if !(self.notch_q > 0.0) {
            return Err(invalid("notch_q", "> 0"));
        }
        if !(self.notch_freq > 0.0 && self.notch_freq < self.sample_rate / 2.0) {
            return Err(invalid("notch_freq", "0 < f < sample_rate/2"));
        }
        if !(self.epoch_length > 0.0) || self.epoch_samples() < 8 {
            return Err(invalid("epoch_length", "at least 8 samples per epoch"));
        }
        if self.ica_max_iter == 0 {
            return Err(invalid("ica_max_iter", ">= 1"));
        }
        if !(self.ica_tolerance > 0.0) {
            return Err(invalid("ica_tolerance", "> 0"));
        }
        if !(self.ica_kurtosis_threshold > 0.0) {
            return Err(invalid("ica_kurtosis_threshold", "> 0"));
        }
        crate::spectral::validate_bands(&self.bands)
            .map_err(|e| invalid("band", &e.to_string()))?;
        self.welch_segment_length()?;
        Ok(())
    }

    /// Serializes back to the key = value format. `parse_config` of the output
    /// yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "channels = {}", self.channels.join(","));
        let _ = writeln!(s, "sample_rate = {}", fmt_f64(self.sample_rate));
        for b in &self.bands {
            let _ = writeln!(
                s,
                "band_{} = {},{}",
                b.code.name(),
                fmt_f64(b.low),
                fmt_f64(b.high)
            );
        }
        let _ = writeln!(s, "snr_threshold = {}", fmt_f64(self.snr_threshold));
        let _ = writeln!(s, "majority_quorum = {}", self.majority_quorum);
        let _ = writeln!(s, "nona_window = {}", self.nona_window);
        let _ = writeln!(s, "welch_segments = {}", self.welch_segments);
        let _ = writeln!(s, "welch_overlap = {}", fmt_f64(self.welch_overlap));
        let _ = writeln!(s, "ica_enabled = {}", self.ica_enabled);
        let _ = writeln!(s, "ica_max_iter = {}", self.ica_max_iter);
        let _ = writeln!(s, "ica_tolerance = {:e}", self.ica_tolerance);
        let _ = writeln!(s, "ica_kurtosis_threshold = {}", fmt_f64(self.ica_kurtosis_threshold));
        let _ = writeln!(s, "notch_freq = {}", fmt_f64(self.notch_freq));
        let _ = writeln!(s, "notch_q = {}", fmt_f64(self.notch_q));
        let _ = writeln!(s, "bandpass_low = {}", fmt_f64(self.bandpass.0));
        let _ = writeln!(s, "bandpass_high = {}", fmt_f64(self.bandpass.1));
        let _ = writeln!(s, "filter_order = {}", self.filter_order);
        let _ = writeln!(s, "epoch_length = {}", fmt_f64(self.epoch_length));
        let _ = writeln!(s, "normalization_mode = {}", self.normalization_mode);
        let _ = writeln!(s, "rng_seed = {}", self.rng_seed);
        let _ = writeln!(s, "trial_offset = {}", fmt_f64(self.trial_offset));
        s
    }
}

/// Parsed config plus the warnings (unknown keys) raised while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub warnings: Vec<String>,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<LoadedConfig, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, IngestError> {
    let mut cfg = PipelineConfig::default();
    let mut warnings = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(IngestError::InvalidValue {
                key: format!("line {}", lineno + 1),
                constraint: "key = value".into(),
            });
        };
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        apply_key(&mut cfg, &key, value, &mut warnings)?;
    }
    cfg.validate()?;
    Ok(LoadedConfig {
        config: cfg,
        warnings,
    })
}

fn apply_key(
    cfg: &mut PipelineConfig,
    key: &str,
    value: &str,
    warnings: &mut Vec<String>,
) -> Result<(), IngestError> {
    fn num<T: std::str::FromStr>(key: &str, v: &str, what: &str) -> Result<T, IngestError> {
        v.parse::<T>().map_err(|_| invalid(key, what))
    }
    let f = |v: &str| num::<f64>(key, v, "number");
    let u = |v: &str| num::<usize>(key, v, "non-negative integer");
    match key {
        "channels" => {
            cfg.channels = value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        }
        "sample_rate" => cfg.sample_rate = f(value)?,
        "snr_threshold" => cfg.snr_threshold = f(value)?,
        "majority_quorum" => cfg.majority_quorum = u(value)?,
        "nona_window" => cfg.nona_window = u(value)?,
        "welch_segments" => cfg.welch_segments = u(value)?,
        "welch_overlap" => cfg.welch_overlap = f(value)?,
        "ica_enabled" => {
            cfg.ica_enabled = match value.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "on" => true,
                "false" | "0" | "no" | "off" => false,
                _ => return Err(invalid(key, "boolean")),
            }
        }
        "ica_max_iter" => cfg.ica_max_iter = u(value)?,
        "ica_tolerance" => cfg.ica_tolerance = f(value)?,
        "ica_kurtosis_threshold" => cfg.ica_kurtosis_threshold = f(value)?,
        "notch_freq" => cfg.notch_freq = f(value)?,
        "notch_q" => cfg.notch_q = f(value)?,
        "bandpass_low" => cfg.bandpass.0 = f(value)?,
        "bandpass_high" => cfg.bandpass.1 = f(value)?,
        "filter_order" => cfg.filter_order = u(value)?,
        "epoch_length" => cfg.epoch_length = f(value)?,
        "normalization_mode" => {
            cfg.normalization_mode = value
                .parse()
                .map_err(|_| invalid(key, "epoch-count | entry-sum"))?
        }
        "rng_seed" => cfg.rng_seed = num::<u64>(key, value, "non-negative integer")?,
        "trial_offset" => cfg.trial_offset = f(value)?,
        _ if key.starts_with("band_") => {
            let code = Code::from_name(&key["band_".len()..])
                .filter(|c| c.index() < crate::codes::BAND_COUNT)
                .ok_or_else(|| invalid(key, "band_<delta|theta|alpha|beta|gamma>"))?;
            let (lo, hi) = value
                .split_once(',')
                .ok_or_else(|| invalid(key, "low,high"))?;
            let (lo, hi) = (f(lo.trim())?, f(hi.trim())?);
            let slot = cfg
                .bands
                .iter_mut()
                .find(|b| b.code == code)
                .expect("default bands cover every band code");
            slot.low = lo;
            slot.high = hi;
        }
        _ => {
            log::warn!("unknown config key `{key}`");
            warnings.push(format!("unknown config key `{key}`"));
        }
    }
    Ok(())
}
