use super::{FeatureLayout, FeatureMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

const VARIANCE_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CmvnStats {
    /// Statistics pooled over every frame of `mats`.
    pub fn estimate<T: Real>(mats: &[&FeatureMatrix<T>]) -> Result<Self> {
        let dims = mats.first().map_or(0, |m| m.dims());
        let frames: usize = mats.iter().map(|m| m.frames()).sum();
        if frames < 2 {
            return Err(Error::Unnormalizable(frames));
        }
        let mut mean = vec![0.0; dims];
        for m in mats {
            if m.dims() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: m.dims() });
            }
            for row in m.rows() {
                for (a, v) in mean.iter_mut().zip(row) {
                    *a += v.to_f64_lossy();
                }
            }
        }
        mean.iter_mut().for_each(|a| *a /= frames as f64);
        let mut var = vec![0.0; dims];
        for m in mats {
            for row in m.rows() {
                for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    let d = v.to_f64_lossy() - mu;
                    *a += d * d;
                }
            }
        }
        let std = var.into_iter().map(|v| (v / frames as f64).max(VARIANCE_FLOOR).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply<T: Real>(&self, m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if m.dims() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: m.dims() });
        }
        let values = m
            .rows()
            .flat_map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(v, (mu, sd))| T::lit((v.to_f64_lossy() - mu) / sd))
            })
            .collect();
        FeatureMatrix::new(m.layout(), m.frames(), m.dims(), values)
    }
}

/// Zero mean and unit variance per dimension over one utterance.
pub fn cmvn<T: Real>(m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    CmvnStats::estimate(&[m])?.apply(m)
}

/// Normalization with statistics pooled over all utterances of a speaker.
pub fn cmvn_speaker<T: Real>(mats: &[FeatureMatrix<T>]) -> Result<Vec<FeatureMatrix<T>>> {
    let refs: Vec<&FeatureMatrix<T>> = mats.iter().collect();
    let stats = CmvnStats::estimate(&refs)?;
    mats.iter().map(|m| stats.apply(m)).collect()
}

fn regression<T: Real>(x: &[T], frames: usize, dims: usize, half: usize) -> Vec<T> {
    let norm = T::lit(2.0 * (1..=half).map(|n| (n * n) as f64).sum::<f64>());
    let clamp = |t: isize| t.clamp(0, frames as isize - 1) as usize;
    let mut out = vec![T::zero(); frames * dims];
    for t in 0..frames {
        for d in 0..dims {
            let mut acc = T::zero();
            for n in 1..=half {
                let fwd = x[clamp(t as isize + n as isize) * dims + d];
                let back = x[clamp(t as isize - n as isize) * dims + d];
                acc += T::from_usize_lossy(n) * (fwd - back);
            }
            out[t * dims + d] = acc / norm;
        }
    }
    out
}

/// `[c | delta | delta-delta]` with half-window 2 regression and replicated
/// edge frames.
pub fn add_deltas<T: Real>(m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if m.layout() != FeatureLayout::Mfcc13 {
        return Err(Error::LayoutMismatch { layout: m.layout().name(), dims: m.dims() });
    }
    let (frames, dims) = (m.frames(), m.dims());
    if frames == 0 {
        return FeatureMatrix::zeros(FeatureLayout::Mfcc39, 0, 3 * dims);
    }
    let d1 = regression(m.values(), frames, dims, 2);
    let d2 = regression(&d1, frames, dims, 2);
    let mut values = Vec::with_capacity(frames * dims * 3);
    for t in 0..frames {
        values.extend_from_slice(m.row(t));
        values.extend_from_slice(&d1[t * dims..(t + 1) * dims]);
        values.extend_from_slice(&d2[t * dims..(t + 1) * dims]);
    }
    FeatureMatrix::new(FeatureLayout::Mfcc39, frames, 3 * dims, values)
}

/// Concatenates frames `t - context ..= t + context`, replicating the edges.
pub fn splice<T: Real>(m: &FeatureMatrix<T>, context: usize) -> Result<FeatureMatrix<T>> {
    let (frames, dims) = (m.frames(), m.dims());
    let width = 2 * context + 1;
    let mut values = Vec::with_capacity(frames * dims * width);
    for t in 0..frames as isize {
        for o in -(context as isize)..=context as isize {
            let s = (t + o).clamp(0, frames as isize - 1) as usize;
            values.extend_from_slice(m.row(s));
        }
    }
    FeatureMatrix::new(FeatureLayout::Spliced, frames, dims * width, values)
}

/// Row-wise `[mfcc39 | epoch30]`.
pub fn combine<T: Real>(mfcc39: &FeatureMatrix<T>, epoch30: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    for (m, l) in [(mfcc39, FeatureLayout::Mfcc39), (epoch30, FeatureLayout::Epoch30)] {
        if m.layout() != l {
            return Err(Error::LayoutMismatch { layout: m.layout().name(), dims: m.dims() });
        }
    }
    if mfcc39.frames() != epoch30.frames() {
        return Err(Error::FrameGridMismatch { left: mfcc39.frames(), right: epoch30.frames() });
    }
    let mut values = Vec::with_capacity(mfcc39.frames() * 69);
    for t in 0..mfcc39.frames() {
        values.extend_from_slice(mfcc39.row(t));
        values.extend_from_slice(epoch30.row(t));
    }
    FeatureMatrix::new(FeatureLayout::Combined69, mfcc39.frames(), 69, values)
}
