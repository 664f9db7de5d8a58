//! Numeric kernels: differencing, analysis windows, the DFT, Hilbert
//! envelopes, moving averages and Gaussian smoothing.

mod filter;
mod fourier;
mod lpc;
mod window;

pub use filter::{convolve_same, difference, gaussian_kernel, mean_smooth, moving_average};
pub use fourier::{
    analytic_envelope_and_cos_phase, dft_real, hilbert_transform, idft_real, HilbertTransformer,
};
pub use lpc::{lp_residual, lpc_coefficients};
pub use window::{hamming, hann, window_h1, window_h2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default analysis rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM samples normalized to [-1, 1] together with their rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSampleRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of whole samples spanned by `ms` milliseconds (rounded).
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        ms_to_samples(ms, self.sample_rate)
    }

    /// Copy of the waveform multiplied by `gain`.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round().max(0.0) as usize
}

/// Real-valued spectrum, either full length `n_fft` or the non-negative
/// half `n_fft / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrum<T> {
    pub bins: Vec<T>,
    pub n_fft: usize,
    pub half: bool,
}

impl<T: Real> RealSpectrum<T> {
    pub fn full(bins: Vec<T>) -> Self {
        let n_fft = bins.len();
        Self { bins, n_fft, half: false }
    }

    /// Hz per bin at the given sample rate.
    pub fn bin_resolution(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.n_fft as f64
    }

    /// Bins `0..=n_fft/2`.
    pub fn positive_half(&self) -> &[T] {
        let end = (self.n_fft / 2 + 1).min(self.bins.len());
        &self.bins[..end]
    }
}

/// FIR coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    pub coefficients: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Index of the tap aligned with the output sample in [`convolve_same`].
    pub fn center(&self) -> usize {
        self.coefficients.len() / 2
    }

    pub fn sum(&self) -> T {
        self.coefficients.iter().copied().sum()
    }
}

impl<T> std::ops::Index<usize> for Kernel<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.coefficients[i]
    }
}
