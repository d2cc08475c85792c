//! IIR filter design (Butterworth band-pass, mains notch) as second-order
//! sections, with zero-phase forward-backward application.

use super::DspError;
use crate::ingest::SignalRecording;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    /// Second-order IIR notch at `center` Hz with quality factor `q`.
    Notch { center: f64, q: f64 },
    /// Butterworth high-pass at `low` cascaded with Butterworth low-pass at
    /// `high`, each of the given order.
    Bandpass { low: f64, high: f64, order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn notch(center: f64, q: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Notch { center, q },
            zero_phase: true,
        }
    }

    pub fn bandpass(low: f64, high: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass { low, high, order },
            zero_phase: true,
        }
    }

    pub fn order(&self) -> usize {
        match self.kind {
            FilterKind::Notch { .. } => 2,
            FilterKind::Bandpass { order, .. } => order,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<(), DspError> {
        let nyq = sample_rate / 2.0;
        let in_range = |f: f64| f > 0.0 && f < nyq;
        match self.kind {
            FilterKind::Notch { center, q } => {
                if !in_range(center) {
                    return Err(DspError::InvalidFilter(format!("notch center {center} Hz outside (0, {nyq})")));
                }
                if !(q > 0.0 && q.is_finite()) {
                    return Err(DspError::InvalidFilter("notch q must be > 0".into()));
                }
            }
            FilterKind::Bandpass { low, high, order } => {
                if !(in_range(low) && in_range(high) && low < high) {
                    return Err(DspError::InvalidFilter(format!(
                        "band {low}-{high} Hz invalid for Nyquist {nyq}"
                    )));
                }
                if order < 2 || order % 2 != 0 {
                    return Err(DspError::InvalidFilter(format!("order {order} must be even and >= 2")));
                }
            }
        }
        Ok(())
    }

    /// Designs the filter for the given sample rate.
    pub fn design(&self, sample_rate: f64) -> Result<Sos, DspError> {
        self.validate(sample_rate)?;
        let sos = match self.kind {
            FilterKind::Notch { center, q } => Sos(vec![notch_biquad(center, q, sample_rate)]),
            FilterKind::Bandpass { low, high, order } => {
                let mut sections = butterworth(order, low, sample_rate, Pass::High);
                sections.extend(butterworth(order, high, sample_rate, Pass::Low));
                Sos(sections)
            }
        };
        if !sos.is_stable() {
            return Err(DspError::UnstableFilter);
        }
        Ok(sos)
    }
}

/// Direct-form-II-transposed biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[1], self.a[2]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.abs().sqrt()
        } else {
            let s = disc.sqrt();
            ((-a1 + s) / 2.0).abs().max(((-a1 - s) / 2.0).abs())
        }
    }

    /// Steady-state state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[2] * g]
    }

    /// Complex frequency response magnitude at `freq` Hz.
    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            (re * re + im * im).sqrt()
        };
        eval(&self.b) / eval(&self.a)
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos(pub Vec<Biquad>);

impl Sos {
    pub fn sections(&self) -> &[Biquad] {
        &self.0
    }

    pub fn is_stable(&self) -> bool {
        self.0.iter().all(|s| {
            s.b.iter().chain(&s.a).all(|c| c.is_finite()) && s.pole_radius() < 1.0
        })
    }

    /// Cascade magnitude response at `freq` Hz (single pass).
    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        self.0.iter().map(|s| s.magnitude(freq, sample_rate)).product()
    }

    /// Per-section initial state for a unit step through the whole cascade.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut gain = 1.0;
        self.0
            .iter()
            .map(|s| {
                let z = s.step_state();
                let out = [z[0] * gain, z[1] * gain];
                gain *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Single causal pass with per-section initial states.
    pub fn filter_with_state(&self, x: &[f64], mut state: Vec<[f64; 2]>) -> Vec<f64> {
        let mut y = x.to_vec();
        for (s, z) in self.0.iter().zip(state.iter_mut()) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            for v in y.iter_mut() {
                let xin = *v;
                let out = b0 * xin + z[0];
                z[0] = b1 * xin - a1 * out + z[1];
                z[1] = b2 * xin - a2 * out;
                *v = out;
            }
        }
        y
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        self.filter_with_state(x, vec![[0.0; 2]; self.0.len()])
    }

    /// Edge padding for forward-backward filtering: long enough for the
    /// slowest pole to decay by 1e-4, at least three section-equivalent taps.
    pub fn pad_len(&self) -> usize {
        let taps = 3 * (2 * self.0.len() + 1);
        let r = self.0.iter().map(Biquad::pole_radius).fold(0.0, f64::max);
        let decay = if r > 0.0 && r < 1.0 {
            ((1e-4f64).ln() / r.ln()).ceil() as usize
        } else {
            0
        };
        taps.max(decay)
    }

    /// Zero-phase forward-backward filtering with odd extension at both ends
    /// and steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let zi = self.step_states();
        let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();
        let mut fwd = self.filter_with_state(&ext, scaled(ext[0]));
        fwd.reverse();
        let mut back = self.filter_with_state(&fwd, scaled(fwd[0]));
        back.reverse();
        back[pad..pad + n].to_vec()
    }
}

#[derive(Clone, Copy)]
enum Pass {
    Low,
    High,
}

/// Butterworth low/high-pass of `order` as second-order sections via the
/// bilinear transform with pre-warped cutoff.
fn butterworth(order: usize, cutoff: f64, fs: f64, pass: Pass) -> Vec<Biquad> {
    let k = (PI * cutoff / fs).tan();
    let k2 = k * k;
    let mut out = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        // analog prototype pole pair at angle theta from the negative real axis
        let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
        let damp = 2.0 * theta.cos();
        let norm = 1.0 + damp * k + k2;
        let a = [1.0, 2.0 * (k2 - 1.0) / norm, (1.0 - damp * k + k2) / norm];
        let b = match pass {
            Pass::Low => [k2 / norm, 2.0 * k2 / norm, k2 / norm],
            Pass::High => [1.0 / norm, -2.0 / norm, 1.0 / norm],
        };
        out.push(Biquad { b, a });
    }
    if order % 2 == 1 {
        let norm = 1.0 + k;
        let a = [1.0, (k - 1.0) / norm, 0.0];
        let b = match pass {
            Pass::Low => [k / norm, k / norm, 0.0],
            Pass::High => [1.0 / norm, -1.0 / norm, 0.0],
        };
        out.push(Biquad { b, a });
    }
    out
}

fn notch_biquad(center: f64, q: f64, fs: f64) -> Biquad {
    let w0 = 2.0 * PI * center / fs;
    let bw = w0 / q;
    // -3 dB bandwidth convention
    let beta = (bw / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Biquad {
        b: [gain, -2.0 * gain * c, gain],
        a: [1.0, -2.0 * gain * c, 2.0 * gain - 1.0],
    }
}

/// Filters every channel of a recording.
pub fn apply_filter(rec: &SignalRecording, spec: &FilterSpec) -> Result<SignalRecording, DspError> {
    let sos = spec.design(rec.sample_rate)?;
    if rec.len() <= 3 * spec.order() {
        return Err(DspError::TooShort {
            needed: 3 * spec.order() + 1,
            got: rec.len(),
        });
    }
    let samples = rec
        .samples
        .iter()
        .map(|ch| {
            if spec.zero_phase {
                sos.filtfilt(ch)
            } else {
                sos.filter(ch)
            }
        })
        .collect();
    Ok(rec.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DEFAULT_CHANNELS;

    const FS: f64 = 256.0;

    fn sine(freq: f64, amp: f64, seconds: f64) -> Vec<f64> {
        let n = (seconds * FS) as usize;
        (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / FS).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn one_channel(x: Vec<f64>) -> SignalRecording {
        SignalRecording::new(vec![DEFAULT_CHANNELS[0].into()], FS, vec![x], 0.0).unwrap()
    }

    #[test]
    fn notch_removes_mains() {
        let x = sine(60.0, 1.0, 10.0);
        let y = apply_filter(&one_channel(x.clone()), &FilterSpec::notch(60.0, 30.0)).unwrap();
        let ratio = rms(&y.samples[0]) / rms(&x);
        assert!(ratio < 0.1, "ratio {ratio}");
    }

    #[test]
    fn bandpass_passes_alpha() {
        let x = sine(10.0, 1.0, 10.0);
        let y = apply_filter(&one_channel(x.clone()), &FilterSpec::bandpass(1.0, 50.0, 4)).unwrap();
        let ratio = rms(&y.samples[0]) / rms(&x);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn bandpass_rejects_dc() {
        let x = vec![100.0; 2560];
        let y = apply_filter(&one_channel(x), &FilterSpec::bandpass(1.0, 50.0, 4)).unwrap();
        let mean_abs = y.samples[0].iter().map(|v| v.abs()).sum::<f64>() / 2560.0;
        assert!(mean_abs < 1.0, "mean |v| = {mean_abs}");
    }

    #[test]
    fn butterworth_has_half_power_at_cutoff() {
        let sos = FilterSpec::bandpass(1.0, 50.0, 4).design(FS).unwrap();
        let g50 = sos.magnitude(50.0, FS);
        let g1 = sos.magnitude(1.0, FS);
        assert!((g50 - 0.5f64.sqrt()).abs() < 0.01, "{g50}");
        assert!((g1 - 0.5f64.sqrt()).abs() < 0.01, "{g1}");
        assert!(sos.magnitude(100.0, FS) < 0.02);
        assert!((sos.magnitude(10.0, FS) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let x = sine(10.0, 1.0, 4.0);
        let y = apply_filter(&one_channel(x.clone()), &FilterSpec::bandpass(1.0, 50.0, 4)).unwrap();
        let y = &y.samples[0];
        let xcorr = |lag: i64| -> f64 {
            (256..x.len() - 256)
                .map(|i| x[i] * y[(i as i64 + lag) as usize])
                .sum()
        };
        let best = (-12..=12).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(FilterSpec::bandpass(1.0, 50.0, 3).design(FS).is_err());
        assert!(FilterSpec::bandpass(50.0, 1.0, 4).design(FS).is_err());
        assert!(FilterSpec::bandpass(1.0, 200.0, 4).design(FS).is_err());
        assert!(FilterSpec::notch(60.0, 0.0).design(FS).is_err());
        let short = one_channel(vec![0.0; 10]);
        assert!(matches!(
            apply_filter(&short, &FilterSpec::bandpass(1.0, 50.0, 4)),
            Err(DspError::TooShort { .. })
        ));
    }

    #[test]
    fn designs_are_stable() {
        for order in [2, 4, 6, 8] {
            assert!(FilterSpec::bandpass(1.0, 50.0, order).design(FS).unwrap().is_stable());
        }
        assert!(FilterSpec::notch(60.0, 30.0).design(FS).unwrap().is_stable());
    }
}
