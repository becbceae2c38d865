//! Welch power spectral density estimation.

use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::numerics::C64;

/// Two-sided PSD estimate of a real sequence at non-negative frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    /// Density in units^2/Hz.
    pub density: Vec<f64>,
}

impl Psd {
    pub fn level_db(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.freqs.iter().zip(&self.density).map(|(&f, &d)| (f, 10.0 * d.log10()))
    }

    /// Mean density over bins with `lo <= f <= hi`, in dB.
    pub fn band_mean_db(&self, lo: f64, hi: f64) -> Option<f64> {
        let (sum, count) = self
            .freqs
            .iter()
            .zip(&self.density)
            .filter(|(&f, _)| f >= lo && f <= hi)
            .fold((0.0, 0usize), |(s, c), (_, &d)| (s + d, c + 1));
        (count > 0).then(|| 10.0 * (sum / count as f64).log10())
    }
}

/// Welch estimate with a Hann window and 50% overlap.
pub fn welch(x: &[f64], sample_rate: f64, segment_len: usize) -> Result<Psd> {
    if segment_len < 8 {
        return Err(Error::InvalidParameter { name: "segment_len", reason: format!("{segment_len} is below 8") });
    }
    if x.len() < segment_len {
        return Err(Error::InsufficientSamples { needed: segment_len, got: x.len() });
    }
    let window: Vec<f64> =
        (0..segment_len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment_len as f64).cos()).collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let hop = segment_len / 2;
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let mut buf = vec![C64::new(0.0, 0.0); segment_len];
    let mut start = 0;
    while start + segment_len <= x.len() {
        let seg = &x[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = C64::new((s - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (segments as f64 * sample_rate * win_power);
    Ok(Psd {
        freqs: (0..bins).map(|k| k as f64 * sample_rate / segment_len as f64).collect(),
        density: acc.into_iter().map(|a| a * scale).collect(),
    })
}
