use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{frame_count, frame_geometry, FeatureLayout, FeatureMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::{hamming, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MfccConfig {
    pub n_fft: usize,
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_ceps: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self { n_fft: 512, n_mels: 26, f_min_hz: 20.0, f_max_hz: 8000.0, n_ceps: 13, log_floor: 1e-10 }
    }
}

impl MfccConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidConfig(format!("mfcc: {s}")));
        let (flen, _) = frame_geometry(sample_rate);
        if self.n_fft < flen {
            return bad(format!("n-fft {} shorter than the {flen}-sample frame", self.n_fft));
        }
        if !(self.f_min_hz >= 0.0 && self.f_max_hz > self.f_min_hz && self.f_max_hz <= sample_rate as f64 / 2.0) {
            return bad(format!("mel band [{}, {}] Hz invalid", self.f_min_hz, self.f_max_hz));
        }
        if self.n_mels < 2 || self.n_ceps == 0 || self.n_ceps > self.n_mels {
            return bad(format!("need 2 <= n-mels and 1 <= n-ceps <= n-mels, got {} / {}", self.n_mels, self.n_ceps));
        }
        if !(self.log_floor > 0.0) {
            return bad("log-floor must be positive".into());
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale as `(first_bin, weights)`.
fn mel_filterbank(cfg: &MfccConfig, sample_rate: u32) -> Vec<(usize, Vec<f64>)> {
    let (lo, hi) = (hz_to_mel(cfg.f_min_hz), hz_to_mel(cfg.f_max_hz));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
    let n_bins = cfg.n_fft / 2 + 1;
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let first = (l / bin_hz).ceil() as usize;
            let last = ((r / bin_hz).floor() as usize).min(n_bins - 1);
            let w = (first..=last)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                    .max(0.0)
                })
                .collect();
            (first, w)
        })
        .collect()
}

/// Log mel filter-bank energies per frame (`frames x n_mels`, row-major).
pub(crate) fn log_mel_energies<T: Real>(w: &Waveform<T>, cfg: &MfccConfig) -> Result<(usize, Vec<f64>)> {
    let fs = w.sample_rate();
    cfg.validate(fs)?;
    let frames = frame_count(w.len(), fs);
    if frames == 0 {
        return Err(Error::EmptySignal);
    }
    let (flen, shift) = frame_geometry(fs);
    let win: Vec<f64> = hamming(flen);
    let bank = mel_filterbank(cfg, fs);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = vec![0.0; cfg.n_fft / 2 + 1];
    let mut out = Vec::with_capacity(frames * cfg.n_mels);
    let x = w.samples();
    for t in 0..frames {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < flen { Complex::new(x[t * shift + i].to_f64_lossy() * win[i], 0.0) } else { Complex::new(0.0, 0.0) };
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        for (first, wts) in &bank {
            let e: f64 = wts.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
            out.push(e.max(cfg.log_floor).ln());
        }
    }
    Ok((frames, out))
}

/// 13 cepstral coefficients `c0..c12` per 20 ms Hamming frame: power
/// spectrum, mel filter bank, log, orthonormal DCT-II.
pub fn mfcc<T: Real>(w: &Waveform<T>, cfg: &MfccConfig) -> Result<FeatureMatrix<T>> {
    let (frames, logmel) = log_mel_energies(w, cfg)?;
    let m = cfg.n_mels;
    let basis: Vec<Vec<f64>> = (0..cfg.n_ceps)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
            (0..m).map(|j| scale * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / m as f64).cos()).collect()
        })
        .collect();
    let mut values = Vec::with_capacity(frames * cfg.n_ceps);
    for row in logmel.chunks_exact(m) {
        for b in &basis {
            values.push(T::lit(b.iter().zip(row).map(|(a, x)| a * x).sum()));
        }
    }
    let layout = if cfg.n_ceps == 13 { FeatureLayout::Mfcc13 } else { FeatureLayout::Lda };
    FeatureMatrix::new(layout, frames, cfg.n_ceps, values)
}
