//! Per-frame features: epoch-derived vectors, MFCCs and their
//! normalization, context splicing, LDA and fusion.

mod epochs;
mod io;
mod lda;
mod mfcc;
mod transform;

pub use epochs::{
    epoch_features, frame_epoch_features, instantaneous_phase_at_epochs, instantaneous_pitch, strength_of_excitation,
    EpochFeatures, EpochRecord, EPOCH_SLOTS, PITCH_RANGE_HZ,
};
pub use io::{read_epfm, read_epfm_file, write_epfm, write_epfm_file, write_matrix_csv, EPFM_MAGIC, EPFM_VERSION};
pub use lda::{LdaAccumulator, LdaTransform};
pub use mfcc::{mel_to_hz, hz_to_mel, mfcc, MfccConfig};
pub use transform::{add_deltas, cmvn, cmvn_speaker, combine, splice, CmvnStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Frame length and shift shared by every per-frame feature.
pub const FRAME_MS: f64 = 20.0;
pub const FRAME_SHIFT_MS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLayout {
    Mfcc13,
    Mfcc39,
    Epoch30,
    Combined69,
    Spliced,
    Lda,
}

impl FeatureLayout {
    pub const ALL: [FeatureLayout; 6] = [
        FeatureLayout::Mfcc13,
        FeatureLayout::Mfcc39,
        FeatureLayout::Epoch30,
        FeatureLayout::Combined69,
        FeatureLayout::Spliced,
        FeatureLayout::Lda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureLayout::Mfcc13 => "MFCC13",
            FeatureLayout::Mfcc39 => "MFCC39",
            FeatureLayout::Epoch30 => "EPOCH30",
            FeatureLayout::Combined69 => "COMBINED69",
            FeatureLayout::Spliced => "SPLICED",
            FeatureLayout::Lda => "LDA",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name().eq_ignore_ascii_case(s))
    }

    /// Tag stored in feature files.
    pub fn tag(self) -> u32 {
        match self {
            FeatureLayout::Mfcc13 => 1,
            FeatureLayout::Mfcc39 => 2,
            FeatureLayout::Epoch30 => 3,
            FeatureLayout::Combined69 => 4,
            FeatureLayout::Spliced => 5,
            FeatureLayout::Lda => 6,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.tag() == tag)
    }

    /// Fixed width, or `None` for layouts whose width depends on a parameter.
    pub fn fixed_dims(self) -> Option<usize> {
        match self {
            FeatureLayout::Mfcc13 => Some(13),
            FeatureLayout::Mfcc39 => Some(39),
            FeatureLayout::Epoch30 => Some(30),
            FeatureLayout::Combined69 => Some(69),
            FeatureLayout::Spliced | FeatureLayout::Lda => None,
        }
    }

    pub fn accepts(self, dims: usize) -> bool {
        self.fixed_dims().map_or(dims > 0, |d| d == dims)
    }
}

impl std::fmt::Display for FeatureLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major `frames x dims` matrix on the 20 ms / 10 ms grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    layout: FeatureLayout,
    frames: usize,
    dims: usize,
    values: Vec<T>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(layout: FeatureLayout, frames: usize, dims: usize, values: Vec<T>) -> Result<Self> {
        if !layout.accepts(dims) {
            return Err(Error::LayoutMismatch { layout: layout.name(), dims });
        }
        if values.len() != frames * dims {
            return Err(Error::LengthMismatch(values.len(), frames * dims));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { layout, frames, dims, values })
    }

    pub fn zeros(layout: FeatureLayout, frames: usize, dims: usize) -> Result<Self> {
        Self::new(layout, frames, dims, vec![T::zero(); frames * dims])
    }

    pub fn from_rows(layout: FeatureLayout, dims: usize, rows: &[Vec<T>]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * dims);
        for r in rows {
            if r.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::new(layout, rows.len(), dims, values)
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.dims.max(1)).take(self.frames)
    }

    pub fn get(&self, t: usize, d: usize) -> T {
        self.values[t * self.dims + d]
    }

    /// Same values under another layout tag.
    pub fn relabel(self, layout: FeatureLayout) -> Result<Self> {
        Self::new(layout, self.frames, self.dims, self.values)
    }

    pub fn column(&self, d: usize) -> Vec<T> {
        (0..self.frames).map(|t| self.get(t, d)).collect()
    }
}

/// Frame count of the shared grid for a signal of `len` samples.
pub fn frame_count(len: usize, sample_rate: u32) -> usize {
    let (frame, shift) = frame_geometry(sample_rate);
    if len < frame {
        0
    } else {
        (len - frame) / shift + 1
    }
}

/// `(frame_len, frame_shift)` in samples.
pub fn frame_geometry(sample_rate: u32) -> (usize, usize) {
    (
        crate::signal::ms_to_samples(FRAME_MS, sample_rate),
        crate::signal::ms_to_samples(FRAME_SHIFT_MS, sample_rate).max(1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_tags_round_trip() {
        for l in FeatureLayout::ALL {
            assert_eq!(FeatureLayout::from_tag(l.tag()), Some(l));
            assert_eq!(FeatureLayout::parse(l.name()), Some(l));
        }
        assert_eq!(FeatureLayout::from_tag(0), None);
    }

    #[test]
    fn matrix_validates_layout_and_shape() {
        assert!(FeatureMatrix::<f64>::zeros(FeatureLayout::Mfcc13, 3, 13).is_ok());
        assert!(matches!(
            FeatureMatrix::<f64>::zeros(FeatureLayout::Mfcc13, 3, 12),
            Err(Error::LayoutMismatch { .. })
        ));
        assert!(FeatureMatrix::new(FeatureLayout::Lda, 1, 2, vec![1.0f64, f64::NAN]).is_err());
        assert!(FeatureMatrix::new(FeatureLayout::Lda, 2, 2, vec![1.0f64; 3]).is_err());
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(frame_count(319, 16_000), 0);
        assert_eq!(frame_count(320, 16_000), 1);
        assert_eq!(frame_count(16_000, 16_000), (16_000 - 320) / 160 + 1);
    }
}
