//! Welch PSD with Hamming-windowed overlapping segments.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::SpectralError;

/// One-sided power spectral density in µV²/Hz on a uniform grid from 0 Hz to
/// Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub resolution: f64,
}

impl PsdEstimate {
    /// Trapezoidal integral of the linearly interpolated density over `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let f = &self.frequencies;
        let p = &self.power;
        let mut total = 0.0;
        for k in 0..f.len().saturating_sub(1) {
            let (f0, f1) = (f[k], f[k + 1]);
            let a = lo.max(f0);
            let b = hi.min(f1);
            if b <= a {
                continue;
            }
            let interp = |x: f64| p[k] + (p[k + 1] - p[k]) * (x - f0) / (f1 - f0);
            total += 0.5 * (b - a) * (interp(a) + interp(b));
        }
        total
    }
}

/// Segment length and start offsets for a Welch estimate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WelchLayout {
    pub segment_len: usize,
    pub offsets: Vec<usize>,
}

/// Solves `len = n + (segments − 1)(1 − overlap) n` for the segment length `n`.
/// A fractional solution is rounded down; the first `segments − 1` segments
/// step by `floor(n (1 − overlap))` and the last one ends flush with the data.
pub fn welch_layout(len: usize, segments: usize, overlap: f64) -> Result<WelchLayout, SpectralError> {
    if segments < 2 || !(overlap > 0.0 && overlap < 1.0) {
        return Err(SpectralError::InvalidSegmentation(format!(
            "{segments} segments at overlap {overlap}"
        )));
    }
    let exact = len as f64 / (1.0 + (segments - 1) as f64 * (1.0 - overlap));
    // guard against 127.99999 style round-off before flooring
    let n = (exact + 1e-9).floor() as usize;
    if n < 8 {
        return Err(SpectralError::TooShort {
            needed: (8.0 * (1.0 + (segments - 1) as f64 * (1.0 - overlap))).ceil() as usize,
            got: len,
        });
    }
    let step = ((n as f64) * (1.0 - overlap) + 1e-9).floor() as usize;
    if step == 0 {
        return Err(SpectralError::InvalidSegmentation(format!(
            "segment step is zero for segment length {n}"
        )));
    }
    let mut offsets: Vec<usize> = (0..segments - 1).map(|i| i * step).collect();
    offsets.push(len - n);
    Ok(WelchLayout {
        segment_len: n,
        offsets,
    })
}

/// Periodic Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable Welch estimator for a fixed input length.
pub struct Welch {
    layout: WelchLayout,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
    sample_rate: f64,
}

impl Welch {
    pub fn new(len: usize, sample_rate: f64, segments: usize, overlap: f64) -> Result<Self, SpectralError> {
        let layout = welch_layout(len, segments, overlap)?;
        let window = hamming(layout.segment_len);
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(layout.segment_len);
        Ok(Welch {
            layout,
            window,
            window_power,
            fft,
            sample_rate,
        })
    }

    pub fn layout(&self) -> &WelchLayout {
        &self.layout
    }

    pub fn estimate(&self, x: &[f64]) -> Result<PsdEstimate, SpectralError> {
        let n = self.layout.segment_len;
        let expected = self.layout.offsets.last().copied().unwrap_or(0) + n;
        if x.len() != expected {
            return Err(SpectralError::TooShort {
                needed: expected,
                got: x.len(),
            });
        }
        let bins = n / 2 + 1;
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for &off in &self.layout.offsets {
            let seg = &x[off..off + n];
            // constant detrend
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new((v - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, c) in acc.iter_mut().zip(&buf) {
                *a += c.norm_sqr();
            }
        }
        let scale = 1.0 / (self.sample_rate * self.window_power * self.layout.offsets.len() as f64);
        let nyquist_bin = if n % 2 == 0 { Some(n / 2) } else { None };
        let power = acc
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
                v * scale * one_sided
            })
            .collect();
        let resolution = self.sample_rate / n as f64;
        Ok(PsdEstimate {
            frequencies: (0..bins).map(|k| k as f64 * resolution).collect(),
            power,
            resolution,
        })
    }
}

/// One-shot Welch estimate of `x`.
pub fn welch_psd(
    x: &[f64],
    sample_rate: f64,
    segments: usize,
    overlap: f64,
) -> Result<PsdEstimate, SpectralError> {
    Welch::new(x.len(), sample_rate, segments, overlap)?.estimate(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / 256.0).sin()).collect()
    }

    /// Independent oracle: single full-length rectangular periodogram by
    /// direct DFT sums.
    fn periodogram(x: &[f64], fs: f64) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                let s = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
                s * (re * re + im * im) / (fs * n as f64)
            })
            .collect()
    }

    #[test]
    fn default_layout() {
        let l = welch_layout(256, 3, 0.5).unwrap();
        assert_eq!(l.segment_len, 128);
        assert_eq!(l.offsets, vec![0, 64, 128]);
    }

    #[test]
    fn fractional_layout_ends_flush() {
        let l = welch_layout(250, 3, 0.5).unwrap();
        assert_eq!(l.segment_len, 125);
        assert_eq!(l.offsets, vec![0, 62, 125]);
        let l = welch_layout(256, 4, 0.3).unwrap();
        assert_eq!(*l.offsets.last().unwrap() + l.segment_len, 256);
        assert!(welch_layout(256, 1, 0.5).is_err());
        assert!(welch_layout(256, 3, 1.0).is_err());
        assert!(matches!(welch_layout(10, 3, 0.5), Err(SpectralError::TooShort { .. })));
    }

    #[test]
    fn ten_hz_peak_matches_periodogram() {
        let x = sine(10.0, 256);
        let psd = welch_psd(&x, 256.0, 3, 0.5).unwrap();
        let peak = psd
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(psd.frequencies[peak], 10.0);

        let oracle = periodogram(&x, 256.0);
        let oracle_peak = oracle.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(oracle_peak as f64, 10.0); // 1 Hz bins

        let total = psd.integrate(1.0, 50.0);
        let alpha = psd.integrate(8.0, 13.0);
        assert!(alpha / total >= 0.9, "{}", alpha / total);
        let o_total: f64 = oracle[1..50].iter().sum();
        let o_alpha: f64 = oracle[8..=13].iter().sum();
        assert!(o_alpha / o_total >= 0.9);
    }

    #[test]
    fn zero_input_zero_power() {
        let psd = welch_psd(&[0.0; 256], 256.0, 3, 0.5).unwrap();
        assert!(psd.power.iter().all(|&p| p == 0.0));
        assert_eq!(psd.resolution, 2.0);
        assert_eq!(psd.frequencies.len(), 65);
    }

    #[test]
    fn sinusoid_power_matches_mean_square() {
        for f in [5.5, 10.5, 22.0, 40.0] {
            let x = sine(f, 256);
            let psd = welch_psd(&x, 256.0, 3, 0.5).unwrap();
            let total = psd.integrate(0.0, 128.0);
            assert!((total - 0.5).abs() / 0.5 < 0.05, "f={f} total={total}");
        }
        // one cycle per segment: the per-segment detrend removes part of it
        let psd = welch_psd(&sine(2.0, 256), 256.0, 3, 0.5).unwrap();
        let total = psd.integrate(0.0, 128.0);
        assert!(total > 0.3 && total < 0.5, "{total}");
    }

    #[test]
    fn averaging_reduces_variance() {
        // variance across seeds of the estimate at one interior bin, Welch vs a
        // single Hamming periodogram of the full epoch
        let bin_hz = 20.0;
        let mut welch_vals = Vec::new();
        let mut single_vals = Vec::new();
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..256).map(|_| StandardNormal.sample(&mut rng)).collect();
            let w = welch_psd(&x, 256.0, 3, 0.5).unwrap();
            welch_vals.push(w.power[(bin_hz / w.resolution) as usize]);
            // single segment: Welch machinery with one segment spanning the epoch
            let win = hamming(256);
            let wp: f64 = win.iter().map(|v| v * v).sum();
            let k = bin_hz as usize;
            let (mut re, mut im) = (0.0, 0.0);
            for t in 0..256 {
                let ang = -2.0 * PI * (k * t) as f64 / 256.0;
                re += x[t] * win[t] * ang.cos();
                im += x[t] * win[t] * ang.sin();
            }
            single_vals.push(2.0 * (re * re + im * im) / (256.0 * wp));
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        assert!(var(&welch_vals) < var(&single_vals));
    }

    #[test]
    fn integrate_flat_density() {
        let psd = PsdEstimate {
            frequencies: (0..=64).map(|k| 2.0 * k as f64).collect(),
            power: vec![1.0; 65],
            resolution: 2.0,
        };
        assert!((psd.integrate(31.0, 49.0) - 18.0).abs() < 1e-12);
        assert!((psd.integrate(1.0, 3.0) - 2.0).abs() < 1e-12);
    }
}
