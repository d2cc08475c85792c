//! Fixed-point ICA (symmetric decorrelation, log-cosh contrast) with
//! kurtosis-based artifact rejection.
//!
//! The model is fit on all epochs of a recording concatenated. Whitening keeps
//! only the numerically non-zero principal directions, so average-referenced
//! data (rank `channels - 1`) yields one component fewer than channels.
//! Components whose sample excess kurtosis exceeds the configured threshold in
//! magnitude are zeroed and the signal is remixed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{concat_epochs, DspError, Epoch};
use crate::ingest::PipelineConfig;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub max_iter: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        IcaOptions {
            max_iter: 500,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

/// Fitted decomposition `x = mixing * sources + mean`.
#[derive(Debug, Clone)]
pub struct FastIca {
    pub mean: DVector<f64>,
    /// channels × components
    pub mixing: DMatrix<f64>,
    /// components × channels
    pub unmixing: DMatrix<f64>,
    pub iterations: usize,
}

impl FastIca {
    /// Fits on `data` (channels × samples). Returns `ConvergenceFailure` when the
    /// iteration cap is reached.
    pub fn fit(data: &DMatrix<f64>, opts: &IcaOptions) -> Result<FastIca, DspError> {
        let (c, t) = data.shape();
        let mean = data.column_mean();
        let mut x = data.clone();
        for mut col in x.column_iter_mut() {
            col -= &mean;
        }
        let cov = &x * x.transpose() / t as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| top > 0.0 && eig.eigenvalues[i] > RANK_TOL * top)
            .collect();
        let r = kept.len();
        if r == 0 {
            return Ok(FastIca {
                mean,
                mixing: DMatrix::zeros(c, 0),
                unmixing: DMatrix::zeros(0, c),
                iterations: 0,
            });
        }
        // whitening K (r × c) and its inverse (c × r)
        let mut whiten = DMatrix::zeros(r, c);
        let mut dewhiten = DMatrix::zeros(c, r);
        for (k, &i) in kept.iter().enumerate() {
            let lambda = eig.eigenvalues[i];
            let v = eig.eigenvectors.column(i);
            whiten.row_mut(k).copy_from(&(v.transpose() / lambda.sqrt()));
            dewhiten.column_mut(k).copy_from(&(v * lambda.sqrt()));
        }
        let z = &whiten * &x;

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let init = DMatrix::from_fn(r, r, |_, _| StandardNormal.sample(&mut rng));
        let mut w = sym_decorrelate(&init);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let wz = &w * &z;
            let g = wz.map(f64::tanh);
            let g_prime_mean: Vec<f64> = g
                .row_iter()
                .map(|row| row.iter().map(|v| 1.0 - v * v).sum::<f64>() / t as f64)
                .collect();
            let mut w_new = &g * z.transpose() / t as f64;
            for k in 0..r {
                let scaled = w.row(k) * g_prime_mean[k];
                let mut row = w_new.row_mut(k);
                row -= &scaled;
            }
            let w_new = sym_decorrelate(&w_new);
            let lim = (&w_new * w.transpose())
                .diagonal()
                .iter()
                .map(|d| (d.abs() - 1.0).abs())
                .fold(0.0, f64::max);
            w = w_new;
            if lim < opts.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(DspError::ConvergenceFailure(iterations));
        }
        Ok(FastIca {
            mean,
            mixing: &dewhiten * w.transpose(),
            unmixing: &w * &whiten,
            iterations,
        })
    }

    pub fn components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn sources(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = data.clone();
        for mut col in x.column_iter_mut() {
            col -= &self.mean;
        }
        &self.unmixing * x
    }

    /// Remixes `sources`, dropping components where `keep[k]` is false.
    pub fn reconstruct(&self, sources: &DMatrix<f64>, keep: &[bool]) -> DMatrix<f64> {
        let mut s = sources.clone();
        for (k, &kp) in keep.iter().enumerate() {
            if !kp {
                s.row_mut(k).fill(0.0);
            }
        }
        let mut x = &self.mixing * s;
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        x
    }
}

/// `W ← (W Wᵀ)^{-1/2} W`
fn sym_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Biased sample excess kurtosis `m4 / m2² − 3`; zero for constant input.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(m2, m4), v| {
        let d = (v - mean) * (v - mean);
        (m2 + d, m4 + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 <= 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IcaReport {
    pub enabled: bool,
    pub converged: bool,
    pub iterations: usize,
    pub components: usize,
    pub kurtosis: Vec<f64>,
    /// `(component index, excess kurtosis)` of every zeroed component.
    pub rejected: Vec<(usize, f64)>,
    pub warning: Option<String>,
}

/// Removes high-kurtosis components from the concatenated epochs. When ICA is
/// disabled the input is returned unchanged. When the fit does not converge the
/// input is returned unchanged and the report carries a warning.
pub fn ica_clean(epochs: &[Epoch], config: &PipelineConfig) -> Result<(Vec<Epoch>, IcaReport), DspError> {
    if !config.ica_enabled {
        return Ok((epochs.to_vec(), IcaReport::default()));
    }
    let channels = epochs.first().map_or(0, |e| e.channels.len());
    if channels < 4 {
        return Err(DspError::TooFewChannels(channels));
    }
    let data = concat_epochs(epochs)?;
    let t = data[0].len();
    let needed = 20 * channels * channels;
    if t < needed {
        return Err(DspError::InsufficientData { needed, got: t });
    }
    let matrix = DMatrix::from_fn(channels, t, |c, i| data[c][i]);
    let opts = IcaOptions {
        max_iter: config.ica_max_iter,
        tolerance: config.ica_tolerance,
        seed: config.rng_seed,
    };
    let mut report = IcaReport {
        enabled: true,
        ..IcaReport::default()
    };
    let model = match FastIca::fit(&matrix, &opts) {
        Ok(m) => m,
        Err(DspError::ConvergenceFailure(it)) => {
            log::warn!("ICA did not converge after {it} iterations; keeping unmixed data");
            report.iterations = it;
            report.warning = Some(format!("ICA did not converge after {it} iterations"));
            return Ok((epochs.to_vec(), report));
        }
        Err(e) => return Err(e),
    };
    report.converged = true;
    report.iterations = model.iterations;
    report.components = model.components();
    let sources = model.sources(&matrix);
    let mut keep = vec![true; model.components()];
    for (k, row) in sources.row_iter().enumerate() {
        let kurt = excess_kurtosis(&row.iter().copied().collect::<Vec<_>>());
        report.kurtosis.push(kurt);
        if kurt.abs() > config.ica_kurtosis_threshold {
            keep[k] = false;
            report.rejected.push((k, kurt));
        }
    }
    if report.rejected.is_empty() {
        return Ok((epochs.to_vec(), report));
    }
    let clean = model.reconstruct(&sources, &keep);
    let per = epochs[0].len();
    let out = epochs
        .iter()
        .enumerate()
        .map(|(e, ep)| Epoch {
            index: ep.index,
            channels: (0..channels)
                .map(|c| clean.row(c).iter().skip(e * per).take(per).copied().collect())
                .collect(),
            time_span: ep.time_span,
        })
        .collect();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;
    use std::f64::consts::PI;

    fn to_epochs(data: &[Vec<f64>], per: usize) -> Vec<Epoch> {
        let n = data[0].len() / per;
        (0..n)
            .map(|i| Epoch {
                index: i,
                channels: data.iter().map(|c| c[i * per..(i + 1) * per].to_vec()).collect(),
                time_span: (i as f64, i as f64 + 1.0),
            })
            .collect()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn spike_mixture() -> (Vec<Vec<f64>>, Vec<f64>) {
        let fs = 256.0;
        let n = 256 * 20;
        let s1: Vec<f64> = (0..n).map(|i| (2.0 * PI * 5.0 * i as f64 / fs).sin()).collect();
        let s2: Vec<f64> = (0..n).map(|i| (2.0 * PI * 11.3 * i as f64 / fs + 0.7).sin()).collect();
        let s3: Vec<f64> = (0..n).map(|i| (2.0 * PI * 23.7 * i as f64 / fs + 1.9).sin()).collect();
        let spikes: Vec<f64> = (0..n).map(|i| if i % 397 == 13 { 8.0 } else { 0.0 }).collect();
        assert!(excess_kurtosis(&spikes) > 20.0);
        let mix = [
            [1.0, 0.4, 0.3, 1.0],
            [0.2, 1.0, 0.5, 1.0],
            [0.6, 0.1, 1.0, 1.0],
            [0.3, 0.7, 0.2, 1.0],
        ];
        let sources = [&s1, &s2, &s3, &spikes];
        let data = mix
            .iter()
            .map(|row| (0..n).map(|t| (0..4).map(|k| row[k] * sources[k][t]).sum()).collect())
            .collect();
        (data, spikes)
    }

    #[test]
    fn spike_component_is_rejected() {
        let (data, spikes) = spike_mixture();
        let cfg = PipelineConfig::default();
        let (clean, report) = ica_clean(&to_epochs(&data, 256), &cfg).unwrap();
        assert!(report.converged);
        assert_eq!(report.rejected.len(), 1, "{report:?}");
        let joined = concat_epochs(&clean).unwrap();
        for ch in &joined {
            let r = corr(ch, &spikes).abs();
            assert!(r < 0.1, "correlation with spikes {r}");
        }
        let before = corr(&data[0], &spikes).abs();
        assert!(before > 0.3);
    }

    #[test]
    fn disabled_is_identity() {
        let (data, _) = spike_mixture();
        let cfg = PipelineConfig {
            ica_enabled: false,
            ..PipelineConfig::default()
        };
        let epochs = to_epochs(&data, 256);
        let (out, report) = ica_clean(&epochs, &cfg).unwrap();
        assert_eq!(out, epochs);
        assert!(!report.enabled);
    }

    #[test]
    fn gaussian_noise_rejects_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..256 * 20).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        for ch in &data {
            assert!(excess_kurtosis(ch).abs() < 0.5);
        }
        let cfg = PipelineConfig::default();
        let epochs = to_epochs(&data, 256);
        let (out, report) = ica_clean(&epochs, &cfg).unwrap();
        assert!(report.rejected.is_empty());
        assert_eq!(out, epochs);
        assert!(report.kurtosis.iter().all(|k| k.abs() < 5.0));
    }

    #[test]
    fn unmix_then_remix_is_identity() {
        let (data, _) = spike_mixture();
        let m = DMatrix::from_fn(4, data[0].len(), |c, t| data[c][t]);
        let model = FastIca::fit(&m, &IcaOptions::default()).unwrap();
        let s = model.sources(&m);
        let back = model.reconstruct(&s, &vec![true; model.components()]);
        let err = (&back - &m).norm() / m.norm();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn rank_deficient_input_keeps_rank() {
        let (data, _) = spike_mixture();
        let m = DMatrix::from_fn(4, data[0].len(), |c, t| data[c][t]);
        // average reference removes one dimension
        let mut reref = m.clone();
        for mut col in reref.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let model = FastIca::fit(&reref, &IcaOptions::default()).unwrap();
        assert_eq!(model.components(), 3);
        let s = model.sources(&reref);
        let back = model.reconstruct(&s, &[true; 3]);
        assert!((&back - &reref).norm() / reref.norm() < 1e-6);
    }

    #[test]
    fn guards() {
        let cfg = PipelineConfig::default();
        let short = to_epochs(&vec![vec![0.0; 256]; 4], 256);
        assert!(matches!(ica_clean(&short, &cfg), Err(DspError::InsufficientData { .. })));
        let three = to_epochs(&vec![vec![0.0; 2560]; 3], 256);
        assert_eq!(ica_clean(&three, &cfg).unwrap_err(), DspError::TooFewChannels(3));
    }

    #[test]
    fn kurtosis_reference_values() {
        let sine: Vec<f64> = (0..10_000).map(|i| (2.0 * PI * i as f64 / 100.0).sin()).collect();
        assert!((excess_kurtosis(&sine) + 1.5).abs() < 1e-6);
        assert_eq!(excess_kurtosis(&[3.0; 10]), 0.0);
    }
}
