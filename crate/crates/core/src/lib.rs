//! Excitation-source speech analysis.
//!
//! The pipeline runs voiced-activity detection on the zero-frequency
//! filtered signal, locates epochs (glottal closure instants) with
//! zero-time windowing, derives per-frame epoch and MFCC features and
//! classifies utterance emotion with per-emotion left-to-right HMMs.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the type
//! aliases at the crate root pick `f64`.

pub mod classifier;
pub mod epoch;
pub mod error;
pub mod extract;
pub mod features;
pub mod scalar;
pub mod signal;
pub mod synth;
pub mod vad;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Waveform = signal::Waveform<f64>;
pub type Kernel = signal::Kernel<f64>;
pub type RealSpectrum = signal::RealSpectrum<f64>;
pub type FeatureMatrix = features::FeatureMatrix<f64>;
pub type EpochTrain = epoch::EpochTrain<f64>;
pub type EpochFeatures = features::EpochFeatures<f64>;
