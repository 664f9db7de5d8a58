//! Waveform to per-frame features: voicing, epochs, MFCC39, EPOCH30 and
//! their 69-dimensional fusion on one frame grid.

use serde::{Deserialize, Serialize};

use crate::epoch::{analyze_regions, RegionAnalysis, ZtwConfig};
use crate::error::{Error, Result};
use crate::features::{
    add_deltas, cmvn, combine, epoch_features, frame_epoch_features, mfcc, EpochFeatures, FeatureMatrix, MfccConfig,
};
use crate::scalar::Real;
use crate::signal::Waveform;
use crate::vad::{detect_voiced, SphContour, VadConfig, VoicedRegion};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExtractConfig {
    pub vad: VadConfig,
    pub epoch: ZtwConfig,
    pub mfcc: MfccConfig,
}

impl ExtractConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        self.vad.validate()?;
        self.epoch.validate(sample_rate)?;
        self.mfcc.validate(sample_rate)
    }
}

/// Everything computed for one utterance.
#[derive(Debug, Clone)]
pub struct UtteranceFeatures<T> {
    pub regions: Vec<VoicedRegion>,
    pub sph: SphContour<T>,
    pub analyses: Vec<RegionAnalysis<T>>,
    pub epochs: EpochFeatures<T>,
    /// Utterance-normalized MFCCs with deltas.
    pub mfcc39: FeatureMatrix<T>,
    pub epoch30: FeatureMatrix<T>,
    pub combined69: FeatureMatrix<T>,
}

impl<T: Real> UtteranceFeatures<T> {
    pub fn epoch_locations(&self) -> impl Iterator<Item = usize> + '_ {
        self.analyses.iter().flat_map(|a| a.train.locations.iter().copied())
    }
}

pub fn extract<T: Real>(w: &Waveform<T>, cfg: &ExtractConfig) -> Result<UtteranceFeatures<T>> {
    let fs = w.sample_rate();
    cfg.validate(fs)?;
    let (regions, sph) = detect_voiced(w, &cfg.vad)?;
    let analyses = analyze_regions(w, &regions, &cfg.epoch)?;
    let epochs = epoch_features(&analyses, fs)?;
    let mfcc39 = add_deltas(&cmvn(&mfcc(w, &cfg.mfcc)?)?)?;
    let epoch30 = frame_epoch_features(&epochs, w.len(), fs);
    if epoch30.frames() != mfcc39.frames() {
        return Err(Error::FrameGridMismatch { left: mfcc39.frames(), right: epoch30.frames() });
    }
    let combined69 = combine(&mfcc39, &epoch30)?;
    Ok(UtteranceFeatures { regions, sph, analyses, epochs, mfcc39, epoch30, combined69 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureLayout;
    use crate::synth::{synthesize, SyntheticSpec};

    #[test]
    fn all_views_share_the_grid() {
        let spec = SyntheticSpec { leading_silence_s: 0.1, trailing_silence_s: 0.1, ..SyntheticSpec::constant(150.0, 0.4, 4) };
        let s = synthesize::<f64>(&spec).unwrap();
        let f = extract(&s.waveform, &ExtractConfig::default()).unwrap();
        let frames = crate::features::frame_count(s.waveform.len(), 16_000);
        assert_eq!(f.mfcc39.frames(), frames);
        assert_eq!(f.epoch30.frames(), frames);
        assert_eq!(f.combined69.frames(), frames);
        assert_eq!(f.combined69.layout(), FeatureLayout::Combined69);
        assert_eq!(f.regions.len(), 1);
        assert!(f.epoch_locations().count() > 50);
    }
}
