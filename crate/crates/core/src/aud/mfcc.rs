use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{FeatureSequence, FEATURE_DIM, NUM_CEPSTRA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    /// Window length in seconds.
    pub frame_length: f64,
    /// Hop in seconds.
    pub frame_step: f64,
    pub num_filters: usize,
    pub pre_emphasis: f64,
    /// Half-width of the delta regression window, in frames.
    pub delta_window: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_length: 0.025,
            frame_step: 0.010,
            num_filters: 26,
            pre_emphasis: 0.97,
            delta_window: 2,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale from 0 Hz to Nyquist, evaluated at
/// each FFT bin's center frequency.
fn mel_filterbank(num_filters: usize, nfft: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let bins = nfft / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
        .collect();
    (0..num_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / nfft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Regression deltas over `±window` frames, clamping at the edges.
fn deltas(frames: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let n = frames.len() as isize;
    let dim = frames.first().map_or(0, Vec::len);
    let denom: f64 = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    (0..n)
        .map(|t| {
            let mut d = vec![0.0; dim];
            for k in 1..=window as isize {
                let ahead = &frames[(t + k).min(n - 1) as usize];
                let behind = &frames[(t - k).max(0) as usize];
                for j in 0..dim {
                    d[j] += k as f64 * (ahead[j] - behind[j]);
                }
            }
            for v in &mut d {
                *v /= denom;
            }
            d
        })
        .collect()
}

/// MFCC + Δ + ΔΔ (39 dims) with per-utterance cepstral mean normalization.
pub fn extract_mfcc(id: &str, samples: &[f64], sample_rate: u32, cfg: &MfccConfig) -> Result<FeatureSequence> {
    if sample_rate < 8000 {
        return Err(Error::Data(format!("{id}: sample rate {sample_rate} Hz below 8 kHz")));
    }
    let sr = sample_rate as f64;
    let win = (cfg.frame_length * sr).round() as usize;
    let hop = (cfg.frame_step * sr).round() as usize;
    if win == 0 || hop == 0 {
        return Err(Error::Config("frame length and step must be positive".into()));
    }
    if samples.len() < win {
        return Err(Error::Data(format!(
            "{id}: {} samples is shorter than one {win}-sample window",
            samples.len()
        )));
    }
    let num_frames = 1 + (samples.len() - win) / hop;
    let nfft = win.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let filters = mel_filterbank(cfg.num_filters, nfft, sr);
    let hamming: Vec<f64> = (0..win)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1).max(1) as f64).cos())
        .collect();
    let emphasized: Vec<f64> = (0..samples.len())
        .map(|n| if n == 0 { samples[0] } else { samples[n] - cfg.pre_emphasis * samples[n - 1] })
        .collect();

    let m = cfg.num_filters as f64;
    let mut ceps: Vec<Vec<f64>> = Vec::with_capacity(num_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for t in 0..num_frames {
        let frame = &emphasized[t * hop..t * hop + win];
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(if k < win { frame[k] * hamming[k] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..nfft / 2 + 1].iter().map(|c| c.norm_sqr() / nfft as f64).collect();
        let log_energy: Vec<f64> = filters
            .iter()
            .map(|f| f.iter().zip(&power).map(|(w, p)| w * p).sum::<f64>().max(1e-10).ln())
            .collect();
        let c: Vec<f64> = (0..NUM_CEPSTRA)
            .map(|i| {
                let scale = if i == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                scale
                    * log_energy
                        .iter()
                        .enumerate()
                        .map(|(j, e)| e * (PI * i as f64 * (j as f64 + 0.5) / m).cos())
                        .sum::<f64>()
            })
            .collect();
        ceps.push(c);
    }
    for j in 0..NUM_CEPSTRA {
        let mean = ceps.iter().map(|c| c[j]).sum::<f64>() / num_frames as f64;
        for c in &mut ceps {
            c[j] -= mean;
        }
    }
    let d1 = deltas(&ceps, cfg.delta_window);
    let d2 = deltas(&d1, cfg.delta_window);
    let frames = ceps
        .into_iter()
        .zip(d1)
        .zip(d2)
        .map(|((c, a), b)| {
            let mut f = Vec::with_capacity(FEATURE_DIM);
            f.extend(c);
            f.extend(a);
            f.extend(b);
            f
        })
        .collect();
    FeatureSequence::new(id, hop as f64 / sr, win as f64 / sr, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_for_one_second() {
        let samples: Vec<f64> = (0..16000).map(|n| (n as f64 * 0.05).sin() * 0.3).collect();
        let f = extract_mfcc("x", &samples, 16000, &MfccConfig::default()).unwrap();
        assert_eq!(f.len(), 98);
        assert!(f.frames().iter().all(|fr| fr.len() == 39));
    }

    #[test]
    fn silence_gives_zero_features() {
        let f = extract_mfcc("s", &vec![0.0; 8000], 16000, &MfccConfig::default()).unwrap();
        for fr in f.frames() {
            assert!(fr[..13].iter().all(|v| v.abs() < 1e-9));
            assert!(fr[13..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn short_audio_and_low_rate_rejected() {
        assert!(extract_mfcc("x", &[0.0; 100], 16000, &MfccConfig::default()).is_err());
        assert!(extract_mfcc("x", &[0.0; 10000], 4000, &MfccConfig::default()).is_err());
    }

    #[test]
    fn deltas_of_ramp_are_constant() {
        let frames: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64]).collect();
        let d = deltas(&frames, 2);
        for v in &d[2..8] {
            assert!((v[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn filterbank_rows_are_triangles() {
        let fb = mel_filterbank(26, 512, 16000.0);
        assert_eq!(fb.len(), 26);
        for f in &fb {
            assert!(f.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(f.iter().any(|&w| w > 0.0));
        }
    }
}
