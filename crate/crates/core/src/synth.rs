//! Synthetic EEG with a known band-activation and response schedule.
//!
//! Each epoch carries one sinusoid per band at the band's center frequency:
//! active bands at `amplitude_active`, the rest at `amplitude_background`, with
//! a fresh random phase per epoch and band and a short raised-cosine taper at
//! both epoch edges. Channels receive the band signal with zero-sum gains so
//! that the common average reference leaves it intact. Gaussian noise is added
//! per channel and sample.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codes::{Code, Condition, Response, UnitId, BAND_COUNT, CODE_COUNT};
use crate::ingest::{write_eeg_csv, write_trial_log, SignalRecording, TrialLog, TrialRecord, DEFAULT_CHANNELS};
use crate::spectral::{write_code_table, CodeVector};

/// Frequencies (Hz) used for δ, θ, α, β, γ.
pub const BAND_CENTERS: [f64; BAND_COUNT] = [2.0, 5.5, 10.5, 22.0, 40.0];
/// Samples ramped in and out at each end of every epoch.
pub const TAPER_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),
    #[error("need at least 3 participants per condition, got {0}")]
    TooFewParticipants(usize),
    #[error("{0}")]
    Io(String),
}

/// Plan of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub active: [bool; BAND_COUNT],
    /// Trial the epoch belongs to; epochs of one trial are contiguous.
    pub trial: usize,
    pub condition: Condition,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSchedule {
    pub participant: String,
    pub epochs: Vec<EpochPlan>,
    pub amplitude_active: f64,
    pub amplitude_background: f64,
    pub noise_sd: f64,
    /// `(band, channel)` pairs where the band's activation is not present.
    pub dropout: Vec<(Code, usize)>,
    pub seed: u64,
}

impl ActivationSchedule {
    /// Default amplitudes (µV) with no dropout.
    pub fn new(participant: impl Into<String>, epochs: Vec<EpochPlan>, seed: u64) -> Self {
        ActivationSchedule {
            participant: participant.into(),
            epochs,
            amplitude_active: 10.0,
            amplitude_background: 1.0,
            noise_sd: 0.5,
            dropout: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self, channels: usize) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSchedule(m));
        if self.epochs.is_empty() {
            return bad("no epochs".into());
        }
        if self.participant.trim().is_empty() {
            return bad("empty participant id".into());
        }
        if !(self.amplitude_active > self.amplitude_background && self.amplitude_background >= 0.0) {
            return bad("need amplitude_active > amplitude_background ≥ 0".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be ≥ 0".into());
        }
        if let Some((b, c)) = self.dropout.iter().find(|(b, c)| b.index() >= BAND_COUNT || *c >= channels) {
            return bad(format!("dropout ({b}, channel {c}) out of range"));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, e) in self.epochs.iter().enumerate() {
            let continues = k > 0 && self.epochs[k - 1].trial == e.trial;
            if continues {
                let prev = &self.epochs[k - 1];
                if prev.condition != e.condition || prev.response != e.response {
                    return bad(format!("epoch {k} disagrees with its trial's labels"));
                }
            } else if !seen.insert(e.trial) {
                return bad(format!("trial {} is not contiguous", e.trial));
            }
        }
        Ok(())
    }

    fn dropped(&self, band: usize, channel: usize) -> bool {
        self.dropout.iter().any(|(b, c)| b.index() == band && *c == channel)
    }
}

/// Zero-sum channel gains: alternating signs with slowly decreasing magnitude
/// (`[1, −1, 0.7, −0.7]` for four channels).
pub fn channel_gains(channels: usize) -> Vec<f64> {
    let pairs = ((channels.max(1) - 1) / 2).max(1) as f64;
    let mut g: Vec<f64> = (0..channels)
        .map(|c| {
            let mag = 1.0 - 0.3 * (c / 2) as f64 / pairs;
            if c % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let mean = g.iter().sum::<f64>() / channels.max(1) as f64;
    g.iter_mut().for_each(|v| *v -= mean);
    g
}

fn taper(t: usize, n: usize) -> f64 {
    let k = TAPER_SAMPLES.min(n / 2);
    let edge = t.min(n - 1 - t);
    if k == 0 || edge >= k {
        1.0
    } else {
        0.5 * (1.0 - (PI * (edge as f64 + 0.5) / k as f64).cos())
    }
}

/// Recording, trial log and ground-truth codes of one synthetic participant.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub recording: SignalRecording,
    pub trials: TrialLog,
    pub expected: Vec<CodeVector>,
}

/// Renders a schedule into a recording of `channels` channels. A band is
/// expected present when it is active and at least a strict majority of
/// channels carries it.
pub fn generate_recording(schedule: &ActivationSchedule, channels: usize, sample_rate: f64) -> Result<SyntheticRecording, SynthError> {
    if channels < 2 {
        return Err(SynthError::InvalidSchedule("need at least 2 channels".into()));
    }
    if !(sample_rate > 2.0 * BAND_CENTERS[BAND_COUNT - 1]) {
        return Err(SynthError::InvalidSchedule(format!("sample rate {sample_rate} too low")));
    }
    schedule.validate(channels)?;
    let n = sample_rate.round() as usize; // one-second epochs
    let gains = channel_gains(channels);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let noise = Normal::new(0.0, schedule.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut samples = vec![Vec::with_capacity(n * schedule.epochs.len()); channels];

    for plan in &schedule.epochs {
        let phases: Vec<f64> = (0..BAND_COUNT).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        for t in 0..n {
            let tau = t as f64 / sample_rate;
            let w = taper(t, n);
            let mut sines = [0.0; BAND_COUNT];
            for (b, s) in sines.iter_mut().enumerate() {
                *s = w * (2.0 * PI * BAND_CENTERS[b] * tau + phases[b]).sin();
            }
            for (c, out) in samples.iter_mut().enumerate() {
                let mut v = 0.0;
                for (b, s) in sines.iter().enumerate() {
                    let amp = if plan.active[b] && !schedule.dropped(b, c) {
                        schedule.amplitude_active
                    } else {
                        schedule.amplitude_background
                    };
                    v += gains[c] * amp * s;
                }
                if schedule.noise_sd > 0.0 {
                    v += noise.sample(&mut rng);
                }
                out.push(v);
            }
        }
    }

    let channel_names: Vec<String> = (0..channels)
        .map(|c| DEFAULT_CHANNELS.get(c).map_or(format!("C{c}"), |s| s.to_string()))
        .collect();
    let recording = SignalRecording::new(channel_names, sample_rate, samples, 0.0)
        .map_err(|e| SynthError::InvalidSchedule(e.to_string()))?;

    let mut trials = Vec::new();
    for (k, plan) in schedule.epochs.iter().enumerate() {
        if k > 0 && schedule.epochs[k - 1].trial == plan.trial {
            let last: &mut TrialRecord = trials.last_mut().expect("trial started");
            last.end = (k + 1) as f64;
        } else {
            trials.push(TrialRecord {
                start: k as f64,
                end: (k + 1) as f64,
                condition: plan.condition,
                response: plan.response,
            });
        }
    }
    let trials = TrialLog::new(trials).map_err(|e| SynthError::InvalidSchedule(e.to_string()))?;

    let majority = channels / 2 + 1;
    let expected = schedule
        .epochs
        .iter()
        .enumerate()
        .map(|(k, plan)| {
            let mut codes = [false; CODE_COUNT];
            for b in 0..BAND_COUNT {
                let carrying = (0..channels).filter(|&c| !schedule.dropped(b, c)).count();
                codes[b] = plan.active[b] && carrying >= majority;
            }
            codes[plan.response.code().index()] = true;
            CodeVector {
                epoch_index: k,
                codes,
                unit: UnitId::new(schedule.participant.clone(), plan.condition).expect("validated id"),
            }
        })
        .collect();

    Ok(SyntheticRecording {
        recording,
        trials,
        expected,
    })
}

/// Band–response coupling of a synthetic cohort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub p_high: f64,
    pub p_low: f64,
}

impl Coupling {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if ok(self.p_high) && ok(self.p_low) {
            Ok(())
        } else {
            Err(SynthError::InvalidCoupling(format!(
                "probabilities must lie in [0, 1] (p_high {}, p_low {})",
                self.p_high, self.p_low
            )))
        }
    }

    /// Activation probability of `band` in an epoch with the given labels:
    /// β/γ on correct feedback trials and θ/α on incorrect no-feedback trials
    /// fire with `p_high`, everything else with `p_low`.
    pub fn probability(&self, band: Code, condition: Condition, response: Response) -> f64 {
        let coupled = match (condition, response) {
            (Condition::Feedback, Response::Correct) => matches!(band, Code::Beta | Code::Gamma),
            (Condition::NoFeedback, Response::Incorrect) => matches!(band, Code::Theta | Code::Alpha),
            _ => false,
        };
        if coupled {
            self.p_high
        } else {
            self.p_low
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    /// Participants in each condition (between-subject design).
    pub participants_per_condition: usize,
    pub coupling: Coupling,
    pub trials_per_participant: usize,
    pub epochs_per_trial: usize,
    pub correct_rate: f64,
    pub channels: usize,
    pub sample_rate: f64,
    pub amplitude_active: f64,
    pub amplitude_background: f64,
    pub noise_sd: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            participants_per_condition: 11,
            coupling: Coupling { p_high: 0.9, p_low: 0.1 },
            trials_per_participant: 36,
            epochs_per_trial: 3,
            correct_rate: 0.5,
            channels: 4,
            sample_rate: 256.0,
            amplitude_active: 10.0,
            amplitude_background: 1.0,
            noise_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParticipant {
    pub id: String,
    pub condition: Condition,
    pub data: SyntheticRecording,
}

/// Participant `k` (0-based) of a cohort: the first half is in the feedback
/// condition, the second half in the no-feedback condition.
pub fn participant_id(k: usize) -> String {
    format!("P{:02}", k + 1)
}

/// Generates `2 × participants_per_condition` participants. Each participant
/// draws from its own ChaCha stream of `seed`, so participants can be
/// generated independently.
pub fn generate_cohort(spec: &CohortSpec, seed: u64) -> Result<Vec<SyntheticParticipant>, SynthError> {
    if spec.participants_per_condition < 3 {
        return Err(SynthError::TooFewParticipants(spec.participants_per_condition));
    }
    spec.coupling.validate()?;
    if !(0.0..=1.0).contains(&spec.correct_rate) {
        return Err(SynthError::InvalidCoupling(format!("correct_rate {}", spec.correct_rate)));
    }
    if spec.trials_per_participant == 0 || spec.epochs_per_trial == 0 {
        return Err(SynthError::InvalidSchedule("empty trial plan".into()));
    }
    (0..2 * spec.participants_per_condition)
        .map(|k| generate_participant(spec, seed, k))
        .collect()
}

/// One participant of [`generate_cohort`].
pub fn generate_participant(spec: &CohortSpec, seed: u64, k: usize) -> Result<SyntheticParticipant, SynthError> {
    let condition = if k < spec.participants_per_condition {
        Condition::Feedback
    } else {
        Condition::NoFeedback
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    let mut epochs = Vec::with_capacity(spec.trials_per_participant * spec.epochs_per_trial);
    for trial in 0..spec.trials_per_participant {
        let response = if rng.gen_bool(spec.correct_rate) {
            Response::Correct
        } else {
            Response::Incorrect
        };
        for _ in 0..spec.epochs_per_trial {
            let mut active = [false; BAND_COUNT];
            for (b, a) in active.iter_mut().enumerate() {
                *a = rng.gen_bool(spec.coupling.probability(Code::BANDS[b], condition, response));
            }
            epochs.push(EpochPlan {
                active,
                trial,
                condition,
                response,
            });
        }
    }
    let id = participant_id(k);
    let schedule = ActivationSchedule {
        participant: id.clone(),
        epochs,
        amplitude_active: spec.amplitude_active,
        amplitude_background: spec.amplitude_background,
        noise_sd: spec.noise_sd,
        dropout: Vec::new(),
        seed: rng.gen(),
    };
    let data = generate_recording(&schedule, spec.channels, spec.sample_rate)?;
    Ok(SyntheticParticipant { id, condition, data })
}

pub const COHORT_HEADER: &str = "participant,eeg,trials";

/// Writes `<id>.eeg.csv`, `<id>.trials.csv` and `<id>.truth.csv` per
/// participant plus `cohort.csv` (paths relative to `dir`). Returns the
/// cohort manifest path.
pub fn write_cohort(dir: &Path, cohort: &[SyntheticParticipant]) -> Result<PathBuf, SynthError> {
    let io = |e: String| SynthError::Io(e);
    fs::create_dir_all(dir).map_err(|e| io(format!("{}: {e}", dir.display())))?;
    let mut manifest = format!("{COHORT_HEADER}\n");
    for p in cohort {
        let eeg = format!("{}.eeg.csv", p.id);
        let trials = format!("{}.trials.csv", p.id);
        write_eeg_csv(dir.join(&eeg), &p.data.recording).map_err(|e| io(e.to_string()))?;
        write_trial_log(dir.join(&trials), &p.data.trials).map_err(|e| io(e.to_string()))?;
        write_code_table(dir.join(format!("{}.truth.csv", p.id)), &p.data.expected).map_err(|e| io(e.to_string()))?;
        manifest.push_str(&format!("{},{eeg},{trials}\n", p.id));
    }
    let path = dir.join("cohort.csv");
    fs::write(&path, manifest).map_err(|e| io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::preprocess;
    use crate::ingest::PipelineConfig;
    use crate::spectral::{attach_labels, encode_epochs};

    fn plan(active: &[Code], trial: usize, response: Response) -> EpochPlan {
        let mut a = [false; BAND_COUNT];
        for c in active {
            a[c.index()] = true;
        }
        EpochPlan {
            active: a,
            trial,
            condition: Condition::Feedback,
            response,
        }
    }

    fn detect(rec: &SyntheticRecording, ica: bool) -> Vec<CodeVector> {
        let config = PipelineConfig {
            ica_enabled: ica,
            ..PipelineConfig::default()
        };
        let pre = preprocess(&rec.recording, &config).unwrap();
        let presence = encode_epochs(&pre.epochs, rec.recording.sample_rate, &config).unwrap();
        attach_labels("S", &pre.epochs, &presence, &rec.trials).unwrap().vectors
    }

    #[test]
    fn gains_sum_to_zero() {
        assert_eq!(channel_gains(4), vec![1.0, -1.0, 0.7, -0.7]);
        for c in 2..9 {
            assert!(channel_gains(c).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn single_alpha_epoch_noiseless() {
        let mut s = ActivationSchedule::new("S", vec![plan(&[Code::Alpha], 0, Response::Correct)], 1);
        s.amplitude_background = 0.0;
        s.noise_sd = 0.0;
        let rec = generate_recording(&s, 4, 256.0).unwrap();
        assert_eq!(rec.recording.len(), 256);
        let got = detect(&rec, false);
        assert_eq!(got, rec.expected);
        assert_eq!(got[0].active().collect::<Vec<_>>(), vec![Code::Alpha, Code::Correct]);
    }

    #[test]
    fn dropout_below_quorum_is_absent() {
        let epochs = (0..6).map(|k| plan(&[Code::Beta, Code::Delta], k / 3, Response::Incorrect)).collect();
        let mut s = ActivationSchedule::new("S", epochs, 2);
        s.dropout = vec![(Code::Beta, 0), (Code::Beta, 1)];
        let rec = generate_recording(&s, 4, 256.0).unwrap();
        assert!(rec.expected.iter().all(|v| !v.has(Code::Beta) && v.has(Code::Delta)));
        assert_eq!(detect(&rec, false), rec.expected);
    }

    #[test]
    fn noiseless_schedule_recovered_exactly() {
        // every combination of one or two active bands, and of three bands
        // without delta: delta loses about half its power to the high-pass
        // edge and the coarse spectral resolution, so next to two full-power
        // bands its share falls just below the cut
        let mut combos = Vec::new();
        for mask in 1u32..32 {
            if mask.count_ones() <= 2 || (mask.count_ones() == 3 && mask & 1 == 0) {
                combos.push(Code::BANDS.iter().copied().filter(|b| mask & (1 << b.index()) != 0).collect::<Vec<_>>());
            }
        }
        let epochs: Vec<EpochPlan> = combos
            .iter()
            .enumerate()
            .map(|(k, c)| plan(c, k / 2, if (k / 2) % 2 == 0 { Response::Correct } else { Response::Incorrect }))
            .collect();
        let mut s = ActivationSchedule::new("S", epochs, 9);
        s.noise_sd = 0.0;
        s.amplitude_background = 0.1;
        let rec = generate_recording(&s, 4, 256.0).unwrap();
        for ica in [false, true] {
            let got = detect(&rec, ica);
            assert_eq!(got.len(), rec.expected.len());
            for (g, e) in got.iter().zip(&rec.expected) {
                assert_eq!(g, e, "ica={ica} epoch {}", e.epoch_index);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = CohortSpec {
            participants_per_condition: 3,
            trials_per_participant: 4,
            ..CohortSpec::default()
        };
        let a = generate_cohort(&spec, 42).unwrap();
        let b = generate_cohort(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_cohort(&spec, 43).unwrap();
        assert_ne!(a[0].data.recording, c[0].data.recording);
        // participants are independent of cohort size
        let bigger = generate_cohort(&CohortSpec { participants_per_condition: 4, ..spec.clone() }, 42).unwrap();
        assert_eq!(bigger[1], a[1]);
    }

    #[test]
    fn error_paths() {
        let spec = CohortSpec {
            participants_per_condition: 2,
            ..CohortSpec::default()
        };
        assert_eq!(generate_cohort(&spec, 1).unwrap_err(), SynthError::TooFewParticipants(2));
        let spec = CohortSpec {
            coupling: Coupling { p_high: 1.2, p_low: 0.1 },
            ..CohortSpec::default()
        };
        assert!(matches!(generate_cohort(&spec, 1), Err(SynthError::InvalidCoupling(_))));

        let mut s = ActivationSchedule::new("S", vec![plan(&[], 0, Response::Correct)], 1);
        s.amplitude_background = 20.0;
        assert!(matches!(generate_recording(&s, 4, 256.0), Err(SynthError::InvalidSchedule(_))));
        let s = ActivationSchedule::new(
            "S",
            vec![plan(&[], 0, Response::Correct), plan(&[], 1, Response::Correct), plan(&[], 0, Response::Correct)],
            1,
        );
        assert!(matches!(generate_recording(&s, 4, 256.0), Err(SynthError::InvalidSchedule(_))));
    }

    #[test]
    fn coupling_probabilities() {
        let c = Coupling { p_high: 0.9, p_low: 0.1 };
        assert_eq!(c.probability(Code::Gamma, Condition::Feedback, Response::Correct), 0.9);
        assert_eq!(c.probability(Code::Gamma, Condition::Feedback, Response::Incorrect), 0.1);
        assert_eq!(c.probability(Code::Theta, Condition::NoFeedback, Response::Incorrect), 0.9);
        assert_eq!(c.probability(Code::Theta, Condition::Feedback, Response::Incorrect), 0.1);
    }

    #[test]
    fn trial_log_matches_plan() {
        let epochs = (0..9).map(|k| plan(&[Code::Theta], k / 3, Response::Correct)).collect();
        let rec = generate_recording(&ActivationSchedule::new("S", epochs, 4), 4, 256.0).unwrap();
        let t = rec.trials.trials();
        assert_eq!(t.len(), 3);
        assert_eq!((t[1].start, t[1].end), (3.0, 6.0));
    }
}
