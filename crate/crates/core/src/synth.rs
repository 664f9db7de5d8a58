//! Source-filter speech synthesis with exact glottal closure instants.
//!
//! An impulse train whose period follows an f0 trajectory (with optional
//! jitter and shimmer) excites a cascade of second-order resonators. The
//! impulse positions are the ground-truth epochs used by the oracles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", rename_all_fields = "kebab-case", tag = "shape")]
pub enum ContourShape {
    /// Holds `f0_start_hz`.
    Constant,
    /// Linear glide from `f0_start_hz` to `f0_end_hz`.
    Linear,
    /// Oscillates between the two endpoints at `rate_hz`.
    Sinusoidal { rate_hz: f64 },
    /// Smoothed random walk confined to the endpoints, drawn from the seed.
    Wander { rate_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

impl Formant {
    pub const fn new(freq_hz: f64, bandwidth_hz: f64) -> Self {
        Self { freq_hz, bandwidth_hz }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionPreset {
    Angry,
    Happy,
    Neutral,
    Sad,
}

impl EmotionPreset {
    pub const ALL: [EmotionPreset; 4] =
        [EmotionPreset::Angry, EmotionPreset::Happy, EmotionPreset::Neutral, EmotionPreset::Sad];

    pub fn name(self) -> &'static str {
        match self {
            EmotionPreset::Angry => "angry",
            EmotionPreset::Happy => "happy",
            EmotionPreset::Neutral => "neutral",
            EmotionPreset::Sad => "sad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Instantaneous pitch range in Hz. Angry and sad follow the commonly
    /// reported 250-400 Hz and 100-200 Hz spans.
    /// Peak amplitude of an utterance in this style.
    pub fn level(self) -> f64 {
        match self {
            EmotionPreset::Angry => 0.8,
            EmotionPreset::Happy => 0.6,
            EmotionPreset::Neutral => 0.4,
            EmotionPreset::Sad => 0.35,
        }
    }

    /// Excitation roll-off: pressed voice for high arousal, lax for low.
    pub fn tilt(self) -> f64 {
        match self {
            EmotionPreset::Angry => 0.3,
            EmotionPreset::Happy => 0.55,
            EmotionPreset::Neutral => 0.75,
            EmotionPreset::Sad => 0.9,
        }
    }

    /// Syllables per second.
    pub fn syllable_rate(self) -> f64 {
        match self {
            EmotionPreset::Angry => 5.0,
            EmotionPreset::Happy => 5.0,
            EmotionPreset::Neutral => 4.2,
            EmotionPreset::Sad => 2.8,
        }
    }

    pub fn f0_range(self) -> (f64, f64) {
        match self {
            EmotionPreset::Angry => (250.0, 400.0),
            EmotionPreset::Happy => (190.0, 300.0),
            EmotionPreset::Neutral => (110.0, 210.0),
            EmotionPreset::Sad => (100.0, 200.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SyntheticSpec {
    pub f0_start_hz: f64,
    pub f0_end_hz: f64,
    pub contour: ContourShape,
    pub formants: Vec<Formant>,
    /// Vowel targets the formants glide through, one glide per syllable.
    /// With fewer than two targets `formants` stays fixed.
    pub formant_targets: Vec<Vec<Formant>>,
    pub syllable_rate_hz: f64,
    /// Voiced duration in seconds.
    pub duration_s: f64,
    pub jitter_pct: f64,
    pub shimmer_pct: f64,
    /// Pole of a one-pole lowpass on the excitation, in [0, 1). Larger
    /// values give a steeper spectral roll-off (lax voice).
    pub tilt: f64,
    /// Peak amplitude of the voiced part after synthesis.
    pub amplitude: f64,
    pub leading_silence_s: f64,
    pub trailing_silence_s: f64,
    /// Standard deviation of additive white noise over the whole output.
    pub noise_std: f64,
    pub preset: Option<EmotionPreset>,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            f0_start_hz: 120.0,
            f0_end_hz: 120.0,
            contour: ContourShape::Constant,
            formants: vec![Formant::new(700.0, 130.0), Formant::new(1220.0, 70.0), Formant::new(2600.0, 160.0)],
            formant_targets: Vec::new(),
            syllable_rate_hz: 4.0,
            duration_s: 1.0,
            jitter_pct: 0.0,
            shimmer_pct: 0.0,
            tilt: 0.0,
            amplitude: 0.5,
            leading_silence_s: 0.0,
            trailing_silence_s: 0.0,
            noise_std: 0.0,
            preset: None,
            seed: 0,
            sample_rate: crate::signal::DEFAULT_SAMPLE_RATE,
        }
    }
}

impl SyntheticSpec {
    pub fn constant(f0_hz: f64, duration_s: f64, seed: u64) -> Self {
        Self { f0_start_hz: f0_hz, f0_end_hz: f0_hz, duration_s, seed, ..Self::default() }
    }

    pub fn sweep(from_hz: f64, to_hz: f64, duration_s: f64, seed: u64) -> Self {
        Self {
            f0_start_hz: from_hz,
            f0_end_hz: to_hz,
            contour: ContourShape::Linear,
            duration_s,
            seed,
            ..Self::default()
        }
    }

    /// Emotion-styled utterance: pitch span and dynamics from the preset.
    pub fn emotion(preset: EmotionPreset, duration_s: f64, seed: u64) -> Self {
        let (lo, hi) = preset.f0_range();
        let (contour, jitter, shimmer) = match preset {
            EmotionPreset::Angry => (ContourShape::Wander { rate_hz: 6.0 }, 1.5, 12.0),
            EmotionPreset::Happy => (ContourShape::Sinusoidal { rate_hz: 2.5 }, 0.5, 3.0),
            EmotionPreset::Neutral => (ContourShape::Wander { rate_hz: 1.5 }, 0.3, 1.0),
            EmotionPreset::Sad => (ContourShape::Wander { rate_hz: 1.5 }, 0.3, 1.0),
        };
        Self {
            f0_start_hz: lo,
            f0_end_hz: hi,
            contour,
            duration_s,
            jitter_pct: jitter,
            shimmer_pct: shimmer,
            tilt: preset.tilt(),
            syllable_rate_hz: preset.syllable_rate(),
            amplitude: preset.level(),
            preset: Some(preset),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_f0 = |f: f64| (50.0..=600.0).contains(&f);
        if !ok_f0(self.f0_start_hz) || !ok_f0(self.f0_end_hz) {
            return Err(Error::InvalidConfig(format!(
                "f0 endpoints must lie in [50, 600] Hz, got {} and {}",
                self.f0_start_hz, self.f0_end_hz
            )));
        }
        if !(self.duration_s > 0.1) {
            return Err(Error::InvalidConfig(format!("duration must exceed 0.1 s, got {}", self.duration_s)));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidSampleRate(0));
        }
        let nyq = self.sample_rate as f64 / 2.0;
        if self.formants.is_empty() || self.formants.iter().any(|f| !(f.freq_hz > 0.0 && f.freq_hz < nyq && f.bandwidth_hz > 0.0)) {
            return Err(Error::InvalidConfig("formants must be non-empty with 0 < freq < fs/2 and bandwidth > 0".into()));
        }
        if self.jitter_pct < 0.0 || self.shimmer_pct < 0.0 || self.noise_std < 0.0 || self.amplitude <= 0.0 {
            return Err(Error::InvalidConfig("jitter, shimmer and noise must be >= 0, amplitude > 0".into()));
        }
        if self.formant_targets.len() >= 2 {
            let n = self.formant_targets[0].len();
            let bad = self.formant_targets.iter().any(|t| {
                t.len() != n || t.iter().any(|f| !(f.freq_hz > 0.0 && f.freq_hz < nyq && f.bandwidth_hz > 0.0))
            });
            if n == 0 || bad {
                return Err(Error::InvalidConfig("formant targets must share one non-empty valid layout".into()));
            }
            if !(self.syllable_rate_hz > 0.0 && self.syllable_rate_hz.is_finite()) {
                return Err(Error::InvalidConfig("syllable rate must be positive".into()));
            }
        }
        if !(0.0..1.0).contains(&self.tilt) {
            return Err(Error::InvalidConfig(format!("tilt must lie in [0, 1), got {}", self.tilt)));
        }
        if self.leading_silence_s < 0.0 || self.trailing_silence_s < 0.0 {
            return Err(Error::InvalidConfig("silence durations must be >= 0".into()));
        }
        Ok(())
    }
}

/// Output of [`synthesize`].
#[derive(Debug, Clone)]
pub struct Synthesized<T> {
    pub waveform: Waveform<T>,
    /// Ground-truth epoch sample indices.
    pub gcis: Vec<usize>,
    /// Nominal f0 (Hz) at each epoch.
    pub f0_at_gci: Vec<f64>,
    /// `[start, end)` of the excited interval.
    pub voiced: (usize, usize),
}

/// f0 trajectory sampled once per output sample of the voiced interval.
fn f0_track(spec: &SyntheticSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = spec.sample_rate as f64;
    let (a, b) = (spec.f0_start_hz, spec.f0_end_hz);
    match spec.contour {
        ContourShape::Constant => vec![a; n],
        ContourShape::Linear => {
            let d = (n.max(2) - 1) as f64;
            (0..n).map(|i| a + (b - a) * i as f64 / d).collect()
        }
        ContourShape::Sinusoidal { rate_hz } => {
            let phase0 = rng.random_range(0.0..std::f64::consts::TAU);
            let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
            (0..n)
                .map(|i| mid + half * (std::f64::consts::TAU * rate_hz * i as f64 / fs + phase0).sin())
                .collect()
        }
        ContourShape::Wander { rate_hz } => {
            // Piecewise-cosine interpolation between random targets placed
            // every 1/rate seconds.
            let step = (fs / rate_hz.max(1e-3)).max(1.0);
            let knots = (n as f64 / step).ceil() as usize + 2;
            let (lo, hi) = (a.min(b), a.max(b));
            let targets: Vec<f64> = (0..knots).map(|_| rng.random_range(lo..=hi)).collect();
            (0..n)
                .map(|i| {
                    let pos = i as f64 / step;
                    let k = pos.floor() as usize;
                    let frac = pos - k as f64;
                    let w = 0.5 - 0.5 * (std::f64::consts::PI * frac).cos();
                    targets[k] * (1.0 - w) + targets[k + 1] * w
                })
                .collect()
        }
    }
}

/// Second-order all-pole resonator run in place.
fn resonate(x: &mut [f64], formant: Formant, fs: f64) {
    resonate_track(x, |_| formant, fs);
}

/// Resonator whose centre frequency and bandwidth may change every sample.
fn resonate_track(x: &mut [f64], formant_at: impl Fn(usize) -> Formant, fs: f64) {
    let (mut y1, mut y2) = (0.0, 0.0);
    for (n, v) in x.iter_mut().enumerate() {
        let f = formant_at(n);
        let r = (-std::f64::consts::PI * f.bandwidth_hz / fs).exp();
        let a1 = 2.0 * r * (std::f64::consts::TAU * f.freq_hz / fs).cos();
        let a2 = -r * r;
        let y = (1.0 - a1 - a2) * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Formant `j` at voiced-relative time `t`, gliding linearly from one
/// target to the next within each syllable.
fn glide(targets: &[Vec<Formant>], rate_hz: f64, j: usize, t: f64) -> Formant {
    let u = (t * rate_hz).max(0.0);
    let k = u.floor() as usize;
    let frac = u - u.floor();
    let (a, b) = (targets[k % targets.len()][j], targets[(k + 1) % targets.len()][j]);
    Formant::new(a.freq_hz + frac * (b.freq_hz - a.freq_hz), a.bandwidth_hz + frac * (b.bandwidth_hz - a.bandwidth_hz))
}

pub fn synthesize<T: Real>(spec: &SyntheticSpec) -> Result<Synthesized<T>> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let lead = (spec.leading_silence_s * fs).round() as usize;
    let voiced_len = (spec.duration_s * fs).round() as usize;
    let trail = (spec.trailing_silence_s * fs).round() as usize;
    let total = lead + voiced_len + trail;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f0 = f0_track(spec, voiced_len, &mut rng);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut excitation = vec![0.0f64; total];
    let mut gcis = Vec::new();
    let mut f0_at_gci = Vec::new();
    let mut pos = 0usize;
    while pos < voiced_len {
        let amp = (1.0 + spec.shimmer_pct / 100.0 * unit.sample(&mut rng)).max(0.05);
        excitation[lead + pos] = amp;
        gcis.push(lead + pos);
        f0_at_gci.push(f0[pos]);
        let period = fs / f0[pos] * (1.0 + spec.jitter_pct / 100.0 * unit.sample(&mut rng));
        pos += period.round().max(1.0) as usize;
    }

    let mut signal = excitation;
    if spec.tilt > 0.0 {
        let mut y = 0.0;
        for v in signal.iter_mut() {
            y = *v + spec.tilt * y;
            *v = y;
        }
    }
    if spec.formant_targets.len() >= 2 {
        let targets = &spec.formant_targets;
        for j in 0..targets[0].len() {
            let at = |n: usize| glide(targets, spec.syllable_rate_hz, j, (n as f64 - lead as f64) / fs);
            resonate_track(&mut signal, at, fs);
        }
    } else {
        for &formant in &spec.formants {
            resonate(&mut signal, formant, fs);
        }
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = spec.amplitude / peak;
        signal.iter_mut().for_each(|v| *v *= g);
    }
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("noise std validated");
        signal.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    for v in signal.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    let waveform = Waveform::new(signal.into_iter().map(T::lit).collect(), spec.sample_rate)?;
    Ok(Synthesized { waveform, gcis, f0_at_gci, voiced: (lead, lead + voiced_len) })
}

/// Open vowels and their first three formants (Hz, bandwidth Hz) for an
/// average adult vocal tract.
const VOWELS: [[(f64, f64); 3]; 5] = [
    [(730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0)],
    [(270.0, 60.0), (2290.0, 100.0), (3010.0, 200.0)],
    [(300.0, 60.0), (870.0, 90.0), (2240.0, 170.0)],
    [(530.0, 70.0), (1840.0, 100.0), (2480.0, 170.0)],
    [(570.0, 80.0), (840.0, 90.0), (2410.0, 170.0)],
];

/// Vocal-tract length and pitch scaling of one synthetic talker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub formant_scale: f64,
    pub f0_scale: f64,
}

impl SpeakerProfile {
    /// Talkers spread over roughly +-10% in formants and pitch; the table
    /// repeats after eight entries.
    pub fn nth(k: usize) -> Self {
        const TABLE: [(f64, f64); 8] = [
            (0.92, 0.92),
            (1.06, 1.04),
            (0.98, 1.10),
            (1.12, 0.96),
            (0.95, 1.02),
            (1.03, 0.90),
            (1.09, 1.08),
            (1.00, 0.98),
        ];
        let (formant_scale, f0_scale) = TABLE[k % TABLE.len()];
        Self { formant_scale, f0_scale }
    }
}

/// One utterance of a synthetic emotion corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub speaker: String,
    pub preset: EmotionPreset,
    pub spec: SyntheticSpec,
}

/// `speakers x 4 x per_emotion` utterances in speaker-major order. Each
/// glides through the vowels in a random order at a syllable rate within
/// +-10% of its preset, and draws a voiced duration within +-25% of `duration_s`, short
/// silences at both ends and a loudness within +-15% of its preset level.
pub fn emotion_corpus(speakers: usize, per_emotion: usize, duration_s: f64, seed: u64) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(speakers * per_emotion * EmotionPreset::ALL.len());
    for k in 0..speakers {
        let profile = SpeakerProfile::nth(k);
        for preset in EmotionPreset::ALL {
            for _ in 0..per_emotion {
                let mut spec = SyntheticSpec::emotion(preset, duration_s * rng.random_range(0.75..1.25), rng.random());
                let mut order: Vec<usize> = (0..VOWELS.len()).collect();
                order.shuffle(&mut rng);
                spec.formant_targets = order
                    .iter()
                    .map(|&v| VOWELS[v].iter().map(|&(f, b)| Formant::new(f * profile.formant_scale, b)).collect())
                    .collect();
                spec.formants = spec.formant_targets[0].clone();
                spec.syllable_rate_hz *= rng.random_range(0.9..1.1);
                spec.f0_start_hz = (spec.f0_start_hz * profile.f0_scale).clamp(50.0, 600.0);
                spec.f0_end_hz = (spec.f0_end_hz * profile.f0_scale).clamp(50.0, 600.0);
                spec.amplitude *= rng.random_range(0.85..1.15);
                spec.leading_silence_s = rng.random_range(0.1..0.2);
                spec.trailing_silence_s = rng.random_range(0.1..0.2);
                spec.noise_std = 1e-3;
                out.push(CorpusEntry { speaker: format!("spk{}", k + 1), preset, spec });
            }
        }
    }
    out
}

/// Gaussian white noise waveform, for negative controls.
pub fn white_noise<T: Real>(len: usize, std: f64, seed: u64, sample_rate: u32) -> Result<Waveform<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let samples = (0..len).map(|_| T::lit(d.sample(&mut rng).clamp(-1.0, 1.0))).collect();
    Waveform::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_100hz_counts() {
        let s = synthesize::<f64>(&SyntheticSpec::constant(100.0, 1.0, 1)).unwrap();
        assert!((99..=101).contains(&s.gcis.len()), "{}", s.gcis.len());
        assert!(s.gcis.windows(2).all(|w| w[1] - w[0] == 160));
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = SyntheticSpec { jitter_pct: 1.0, shimmer_pct: 5.0, noise_std: 1e-3, ..SyntheticSpec::emotion(EmotionPreset::Angry, 0.5, 9) };
        let a = synthesize::<f64>(&spec).unwrap();
        let b = synthesize::<f64>(&spec).unwrap();
        assert_eq!(a.waveform, b.waveform);
        assert_eq!(a.gcis, b.gcis);
        let c = synthesize::<f64>(&SyntheticSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.waveform, c.waveform);
    }

    #[test]
    fn angry_preset_median_f0() {
        let s = synthesize::<f64>(&SyntheticSpec::emotion(EmotionPreset::Angry, 2.0, 3)).unwrap();
        let mut f = s.f0_at_gci.clone();
        f.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = f[f.len() / 2];
        assert!((250.0..=400.0).contains(&med), "{med}");
    }

    #[test]
    fn corpus_layout() {
        let c = emotion_corpus(2, 3, 0.5, 1);
        assert_eq!(c.len(), 24);
        assert_eq!(c.iter().filter(|e| e.speaker == "spk2" && e.preset == EmotionPreset::Sad).count(), 3);
        assert!(c.iter().all(|e| e.spec.validate().is_ok()));
        assert_eq!(c, emotion_corpus(2, 3, 0.5, 1));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(synthesize::<f64>(&SyntheticSpec::constant(700.0, 1.0, 0)).is_err());
        assert!(synthesize::<f64>(&SyntheticSpec::constant(100.0, 0.05, 0)).is_err());
    }
}
