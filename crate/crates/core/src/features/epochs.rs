use super::{frame_count, frame_geometry, FeatureLayout, FeatureMatrix};
use crate::epoch::{mean_removed, EpochTrain, RegionAnalysis};
use crate::error::Result;
use crate::scalar::Real;
use crate::signal::analytic_envelope_and_cos_phase;

/// Epochs kept per frame in the per-frame epoch vector.
pub const EPOCH_SLOTS: usize = 10;

/// Plausible instantaneous pitch in Hz; pairs outside are dropped.
pub const PITCH_RANGE_HZ: (f64, f64) = (50.0, 600.0);

/// Reciprocal of each successive epoch interval, `fs / (t[i+1] - t[i])`.
/// Entry `i` belongs to the pair `(i, i+1)`; implausible values are `None`.
pub fn instantaneous_pitch<T: Real>(locations: &[usize], sample_rate: u32) -> Vec<Option<T>> {
    let fs = sample_rate as f64;
    locations
        .windows(2)
        .map(|w| {
            let d = w[1].abs_diff(w[0]);
            if d == 0 {
                return None;
            }
            let hz = fs / d as f64;
            (PITCH_RANGE_HZ.0..=PITCH_RANGE_HZ.1).contains(&hz).then(|| T::lit(hz))
        })
        .collect()
}

/// Signed difference of successive strengths, `x[i] - x[i+1]`.
pub fn strength_of_excitation<T: Real>(strengths: &[T]) -> Vec<T> {
    strengths.windows(2).map(|w| w[0] - w[1]).collect()
}

/// Cosine of the analytic phase of the mean-removed evidence, read at the
/// train's epochs. `evidence` is indexed in region coordinates.
pub fn instantaneous_phase_at_epochs<T: Real>(evidence: &[T], train: &EpochTrain<T>) -> Result<Vec<T>> {
    if train.is_empty() {
        return Ok(Vec::new());
    }
    let (_, cos) = analytic_envelope_and_cos_phase(&mean_removed(evidence))?;
    let base = train.region.start_sample;
    Ok(train.locations.iter().map(|&l| cos[l - base]).collect())
}

/// One epoch with the pairwise values of the interval ending at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord<T> {
    pub location: usize,
    /// Pitch of the interval from the previous epoch; `None` for the first
    /// epoch of a train or an implausible interval.
    pub pitch_hz: Option<T>,
    /// Strength difference to the previous epoch, present with `pitch_hz`.
    pub soe: Option<T>,
    pub cos_phase: T,
}

/// Epoch records of one utterance in temporal order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochFeatures<T> {
    pub records: Vec<EpochRecord<T>>,
    /// Indices (into `records`) whose interval pitch was implausible.
    pub dropped: Vec<usize>,
}

impl<T: Real> EpochFeatures<T> {
    pub fn pitch_values(&self) -> Vec<T> {
        self.records.iter().filter_map(|r| r.pitch_hz).collect()
    }

    pub fn soe_values(&self) -> Vec<T> {
        self.records.iter().filter_map(|r| r.soe).collect()
    }

    pub fn phase_values(&self) -> Vec<T> {
        self.records.iter().map(|r| r.cos_phase).collect()
    }
}

/// Pitch, SOE and phase for every epoch of the analysed regions. Pairs
/// never span two regions.
pub fn epoch_features<T: Real>(analyses: &[RegionAnalysis<T>], sample_rate: u32) -> Result<EpochFeatures<T>> {
    let mut out = EpochFeatures { records: Vec::new(), dropped: Vec::new() };
    for a in analyses {
        let t = &a.train;
        let phase = instantaneous_phase_at_epochs(&a.evidence.values, t)?;
        let pitch = instantaneous_pitch::<T>(&t.locations, sample_rate);
        let soe = strength_of_excitation(&t.strengths);
        for (i, &location) in t.locations.iter().enumerate() {
            let (p, s) = if i == 0 {
                (None, None)
            } else {
                match pitch[i - 1] {
                    Some(p) => (Some(p), Some(soe[i - 1])),
                    None => {
                        out.dropped.push(out.records.len());
                        (None, None)
                    }
                }
            };
            out.records.push(EpochRecord { location, pitch_hz: p, soe: s, cos_phase: phase[i] });
        }
    }
    Ok(out)
}

/// 30-dimensional `[pitch x10 | soe x10 | cos_phase x10]` rows on the
/// shared frame grid. Each frame takes the epochs located inside it, the
/// most recent ten when there are more; missing slots and values are zero.
pub fn frame_epoch_features<T: Real>(feats: &EpochFeatures<T>, utterance_len: usize, sample_rate: u32) -> FeatureMatrix<T> {
    let frames = frame_count(utterance_len, sample_rate);
    let (flen, shift) = frame_geometry(sample_rate);
    let dims = 3 * EPOCH_SLOTS;
    let mut values = vec![T::zero(); frames * dims];
    let recs = &feats.records;
    for t in 0..frames {
        let (start, end) = (t * shift, t * shift + flen);
        let lo = recs.partition_point(|r| r.location < start);
        let hi = recs.partition_point(|r| r.location < end);
        let lo = lo.max(hi.saturating_sub(EPOCH_SLOTS));
        let row = &mut values[t * dims..(t + 1) * dims];
        for (slot, r) in recs[lo..hi].iter().enumerate() {
            row[slot] = r.pitch_hz.unwrap_or_else(T::zero);
            row[EPOCH_SLOTS + slot] = r.soe.unwrap_or_else(T::zero);
            row[2 * EPOCH_SLOTS + slot] = r.cos_phase;
        }
    }
    FeatureMatrix::new(FeatureLayout::Epoch30, frames, dims, values).expect("finite epoch features")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vad::VoicedRegion;

    #[test]
    fn pitch_examples() {
        let uniform: Vec<usize> = (0..10).map(|i| i * 160).collect();
        assert!(instantaneous_pitch::<f64>(&uniform, 16_000).iter().all(|&p| p == Some(100.0)));
        assert_eq!(instantaneous_pitch::<f64>(&[0, 160, 240], 16_000), vec![Some(100.0), Some(200.0)]);
        assert_eq!(instantaneous_pitch::<f64>(&[0, 10, 1000], 16_000), vec![None, None]);
        assert!(instantaneous_pitch::<f64>(&[5], 16_000).is_empty());
    }

    #[test]
    fn soe_examples() {
        assert_eq!(strength_of_excitation(&[3.0f64, 1.0, 4.0]), vec![2.0, -3.0]);
        assert!(strength_of_excitation(&[2.0f64; 5]).iter().all(|&v| v == 0.0));
        assert!(strength_of_excitation::<f64>(&[1.0]).is_empty());
    }

    #[test]
    fn phase_at_cosine_maxima_is_one() {
        let period = 160;
        let n = 3200;
        let ev: Vec<f64> = (0..n).map(|i| 2.0 + (2.0 * std::f64::consts::PI * i as f64 / period as f64).cos()).collect();
        let region = VoicedRegion::new(1000, 1000 + n);
        let locations: Vec<usize> = (1..19).map(|k| 1000 + k * period).collect();
        let train = EpochTrain { strengths: vec![1.0; locations.len()], locations, region };
        let phase = instantaneous_phase_at_epochs(&ev, &train).unwrap();
        assert!(phase.iter().all(|&c| (c - 1.0).abs() < 1e-2), "{phase:?}");
    }

    fn record(location: usize, pitch: f64, soe: f64, phase: f64) -> EpochRecord<f64> {
        EpochRecord { location, pitch_hz: Some(pitch), soe: Some(soe), cos_phase: phase }
    }

    #[test]
    fn unvoiced_utterance_gives_zero_rows() {
        let m = frame_epoch_features(&EpochFeatures::<f64>::default(), 16_000, 16_000);
        assert_eq!(m.frames(), 99);
        assert_eq!(m.dims(), 30);
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_epoch_fills_slot_zero_of_each_block() {
        let feats = EpochFeatures { records: vec![record(400, 100.0, 0.5, 0.9)], dropped: vec![] };
        let m = frame_epoch_features(&feats, 1600, 16_000);
        // Sample 400 lies in frames 1 ([160, 480)) and 2 ([320, 640)).
        for t in [1, 2] {
            let nz: Vec<usize> = (0..30).filter(|&d| m.get(t, d) != 0.0).collect();
            assert_eq!(nz, vec![0, 10, 20]);
            assert_eq!((m.get(t, 0), m.get(t, 10), m.get(t, 20)), (100.0, 0.5, 0.9));
        }
        assert!(m.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overflow_keeps_most_recent() {
        let records: Vec<_> = (0..12).map(|i| record(10 + 20 * i, 100.0 + i as f64, 0.0, 0.0)).collect();
        let m = frame_epoch_features(&EpochFeatures { records, dropped: vec![] }, 320, 16_000);
        assert_eq!(m.frames(), 1);
        let pitches: Vec<f64> = m.row(0)[..10].to_vec();
        assert_eq!(pitches, (2..12).map(|i| 100.0 + i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_100_hz_train_has_two_epochs_per_frame() {
        let records: Vec<_> = (0..100).map(|i| record(5 + 160 * i, 100.0, 0.0, 0.5)).collect();
        let m = frame_epoch_features(&EpochFeatures { records, dropped: vec![] }, 16_000, 16_000);
        for t in 1..m.frames() - 1 {
            let filled = (0..10).filter(|&s| m.get(t, 20 + s) != 0.0).count();
            assert_eq!(filled, 2, "frame {t}");
        }
    }
}
