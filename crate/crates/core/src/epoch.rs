//! Epoch (glottal closure instant) extraction by zero-time windowing.
//!
//! At every sample of a voiced region a 3 ms slice of the differenced
//! signal is weighted by `h1^2 * h2`, its numerator group delay spectrum is
//! formed and the Hilbert envelope of that spectrum (HNGD) is taken. The sum
//! of the three largest HNGD peaks traces an energy profile that rises
//! sharply at each glottal closure. The profile is contrast-normalized,
//! smoothed with a Gaussian sized to the average pitch period, and its
//! peaks are pruned into the epoch train.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::{
    convolve_same, difference, gaussian_kernel, lp_residual, mean_smooth, moving_average, ms_to_samples, window_h1, window_h2,
    HilbertTransformer, RealSpectrum, Waveform,
};
use crate::vad::VoicedRegion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ZtwConfig {
    pub segment_ms: f64,
    pub n_fft: usize,
    pub n_peaks: usize,
    pub smooth_width: usize,
    /// Take the circular second difference of the NGD over frequency before
    /// the Hilbert envelope.
    pub ngd_second_difference: bool,
    pub local_mean_ms: f64,
    pub fallback_kernel_ms: f64,
    pub min_epoch_gap_ms: f64,
    pub min_region_ms: f64,
    pub pitch_min_ms: f64,
    pub pitch_max_ms: f64,
    /// Smallest normalized autocorrelation accepted as a pitch peak.
    pub pitch_min_correlation: f64,
    /// Nominal length of the blocks whose local pitch sets the evidence
    /// kernel; regions are cut into equal blocks of about this length.
    pub pitch_block_ms: f64,
    /// The shortest autocorrelation peak reaching this fraction of the best
    /// one is taken as the period.
    pub pitch_octave_ratio: f64,
    /// Candidates whose profile is below this fraction of the region's
    /// largest profile value are ignored.
    pub min_relative_strength: f64,
    /// Refine evidence peaks to the strongest linear-prediction residual
    /// sample in the half-kernel before them.
    pub refine_with_residual: bool,
    /// Prediction order for the refinement residual; 0 selects
    /// `2 + fs / 1000`.
    pub lpc_order: usize,
}

impl Default for ZtwConfig {
    fn default() -> Self {
        Self {
            segment_ms: 3.0,
            n_fft: 2048,
            n_peaks: 3,
            smooth_width: 5,
            ngd_second_difference: true,
            local_mean_ms: 20.0,
            fallback_kernel_ms: 2.0,
            min_epoch_gap_ms: 2.0,
            min_region_ms: 40.0,
            pitch_min_ms: 2.0,
            pitch_max_ms: 12.5,
            pitch_min_correlation: 0.25,
            pitch_block_ms: 100.0,
            pitch_octave_ratio: 0.8,
            min_relative_strength: 1e-3,
            refine_with_residual: true,
            lpc_order: 0,
        }
    }
}

impl ZtwConfig {
    pub fn segment_len(&self, fs: u32) -> usize {
        ms_to_samples(self.segment_ms, fs)
    }

    pub fn lpc_order_for(&self, fs: u32) -> usize {
        if self.lpc_order == 0 {
            2 + (fs / 1000) as usize
        } else {
            self.lpc_order
        }
    }

    pub fn validate(&self, fs: u32) -> Result<()> {
        let m = self.segment_len(fs);
        let bad = |s: String| Err(Error::InvalidConfig(format!("epoch: {s}")));
        if m < 2 || m >= self.n_fft {
            return bad(format!("segment of {m} samples must satisfy 2 <= M < n_fft ({})", self.n_fft));
        }
        if self.n_peaks == 0 {
            return bad("n-peaks must be >= 1".into());
        }
        if self.smooth_width == 0 || self.smooth_width.is_multiple_of(2) {
            return bad(format!("smooth-width must be odd, got {}", self.smooth_width));
        }
        if !(self.pitch_min_ms > 0.0 && self.pitch_max_ms > self.pitch_min_ms) {
            return bad("pitch search range must satisfy 0 < min < max".into());
        }
        if !(self.local_mean_ms > 0.0 && self.fallback_kernel_ms > 0.0 && self.min_epoch_gap_ms >= 0.0) {
            return bad("local-mean, fallback kernel and epoch gap must be positive".into());
        }
        if !(0.0..1.0).contains(&self.min_relative_strength) {
            return bad("min-relative-strength must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Smoothed sum of the prominent HNGD peaks at every sample of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile<T> {
    pub values: Vec<T>,
    pub region: VoicedRegion,
    pub sample_rate: u32,
}

/// Gaussian-smoothed evidence for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEvidence<T> {
    /// Contrast-normalized, smoothed profile used for peak picking.
    pub values: Vec<T>,
    /// Smoothed profile without contrast normalization; epoch strengths are
    /// read from here so they keep the signal's energy scale.
    pub strength: Vec<T>,
    /// Smoothing applied to consecutive stretches of the region.
    pub spans: Vec<EvidenceSpan>,
}

/// Stretch `[start, end)` of a region (region coordinates) smoothed with one
/// Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvidenceSpan {
    pub start: usize,
    pub end: usize,
    /// Nominal Gaussian length in samples.
    pub kernel_len: usize,
    /// True when no usable pitch estimate existed and the fixed fallback
    /// kernel was applied.
    pub fallback: bool,
}

impl<T> EpochEvidence<T> {
    /// Gaussian length used at region offset `i`.
    pub fn kernel_len_at(&self, i: usize) -> usize {
        let k = self.spans.partition_point(|s| s.end <= i).min(self.spans.len() - 1);
        self.spans[k].kernel_len
    }

    /// True when any span used the fallback kernel.
    pub fn fallback(&self) -> bool {
        self.spans.iter().any(|s| s.fallback)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrain<T> {
    /// Strictly increasing global sample indices.
    pub locations: Vec<usize>,
    pub strengths: Vec<T>,
    pub region: VoicedRegion,
}

impl<T: Real> EpochTrain<T> {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Rows `sample_index,time_sec,strength`.
    pub fn csv_rows(&self, sample_rate: u32) -> Vec<String> {
        self.locations
            .iter()
            .zip(&self.strengths)
            .map(|(&n, s)| format!("{},{:.6},{:e}", n, n as f64 / sample_rate as f64, s.to_f64_lossy()))
            .collect()
    }
}

pub const EPOCH_CSV_HEADER: &str = "sample_index,time_sec,strength";

/// Everything computed for one voiced region.
#[derive(Debug, Clone)]
pub struct RegionAnalysis<T> {
    pub profile: EnergyProfile<T>,
    pub avg_pitch: usize,
    pub evidence: EpochEvidence<T>,
    pub train: EpochTrain<T>,
}

/// Reusable zero-time-window HNGD analyzer for one `(M, N)` pair.
pub struct HngdAnalyzer<T: Real> {
    m: usize,
    n: usize,
    window: Vec<T>,
    fft: Arc<dyn Fft<T>>,
    hilbert: HilbertTransformer<T>,
    buf: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    ngd: Vec<T>,
    dngd: Vec<T>,
    dngd_b: Vec<T>,
    env: Vec<T>,
    env_b: Vec<T>,
    second_difference: bool,
}

impl<T: Real> HngdAnalyzer<T> {
    pub fn new(cfg: &ZtwConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let m = cfg.segment_len(sample_rate);
        let n = cfg.n_fft;
        let h1 = window_h1::<T>(n)?;
        let h2 = window_h2::<T>(m)?;
        let window = (0..m).map(|i| h1[i] * h1[i] * h2[i]).collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        let zero = Complex::new(T::zero(), T::zero());
        let scratch = vec![zero; fft.get_inplace_scratch_len()];
        Ok(Self {
            m,
            n,
            window,
            fft,
            hilbert: HilbertTransformer::new(n)?,
            buf: vec![zero; n],
            scratch,
            ngd: vec![T::zero(); n],
            dngd: vec![T::zero(); n],
            dngd_b: vec![T::zero(); n],
            env: vec![T::zero(); n],
            env_b: vec![T::zero(); n],
            second_difference: cfg.ngd_second_difference,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.m
    }

    pub fn n_fft(&self) -> usize {
        self.n
    }

    /// HNGD spectrum of one differenced segment of exactly `M` samples.
    pub fn spectrum(&mut self, segment: &[T]) -> Result<&[T]> {
        if segment.len() != self.m {
            return Err(Error::InvalidSegment { got: segment.len(), expected: self.m });
        }
        self.compute(segment);
        Ok(&self.env)
    }

    /// Windowed x[n] goes in the real part and n*x[n] in the imaginary part,
    /// so one transform yields both X and Y by conjugate symmetry. The
    /// (differenced) group delay lands in `out`.
    fn group_delay(&mut self, segment: &[T], out: &mut [T]) {
        let zero = Complex::new(T::zero(), T::zero());
        self.buf.iter_mut().for_each(|b| *b = zero);
        for (i, (&s, &w)) in segment.iter().zip(&self.window).enumerate() {
            let x = s * w;
            self.buf[i] = Complex::new(x, T::from_usize_lossy(i) * x);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let n = self.n;
        let half = T::lit(0.5);
        for k in 0..n {
            let z = self.buf[k];
            let zc = self.buf[(n - k) % n].conj();
            let x = (z + zc) * half;
            // (z - zc) / 2j
            let d = (z - zc) * half;
            let y = Complex::new(d.im, -d.re);
            // X_R Y_R + X_I Y_I
            self.ngd[k] = x.re * y.re + x.im * y.im;
        }
        if self.second_difference {
            let two = T::lit(2.0);
            for k in 0..n {
                let (l, r) = (self.ngd[(k + n - 1) % n], self.ngd[(k + 1) % n]);
                out[k] = two * self.ngd[k] - l - r;
            }
        } else {
            out.copy_from_slice(&self.ngd);
        }
    }

    fn compute(&mut self, segment: &[T]) {
        let mut d = std::mem::take(&mut self.dngd);
        self.group_delay(segment, &mut d);
        self.hilbert.envelope(&d, &mut self.env);
        self.dngd = d;
    }

    /// Spectra of two segments into `env` and `env_b`.
    fn compute_pair(&mut self, a: &[T], b: &[T]) {
        let (mut da, mut db) = (std::mem::take(&mut self.dngd), std::mem::take(&mut self.dngd_b));
        self.group_delay(a, &mut da);
        self.group_delay(b, &mut db);
        self.hilbert.envelope_pair(&da, &db, &mut self.env, &mut self.env_b);
        (self.dngd, self.dngd_b) = (da, db);
    }

    /// Sum of the `n_peaks` largest local maxima of the half spectrum.
    fn peak_sum(env: &[T], n_peaks: usize) -> T {
        let half = &env[..=env.len() / 2];
        let last = half.len() - 1;
        // The spectrum is even about bin 0 and bin N/2, so end bins compare
        // against their single interior neighbour.
        let mut peaks: Vec<T> = Vec::with_capacity(8);
        for k in 0..=last {
            let left = if k == 0 { half[1] } else { half[k - 1] };
            let right = if k == last { half[last - 1] } else { half[k + 1] };
            if half[k] > left && half[k] >= right {
                peaks.push(half[k]);
            }
        }
        if peaks.len() > n_peaks {
            peaks.select_nth_unstable_by(n_peaks - 1, |a, b| b.partial_cmp(a).expect("finite spectrum"));
            peaks.truncate(n_peaks);
        }
        peaks.into_iter().sum()
    }
}

/// HNGD spectrum of one `M`-sample differenced segment.
pub fn hngd_spectrum<T: Real>(segment: &[T], cfg: &ZtwConfig, sample_rate: u32) -> Result<RealSpectrum<T>> {
    let mut a = HngdAnalyzer::new(cfg, sample_rate)?;
    Ok(RealSpectrum::full(a.spectrum(segment)?.to_vec()))
}

fn check_region(len: usize, region: &VoicedRegion) -> Result<()> {
    if region.is_empty() || region.end_sample > len {
        return Err(Error::RegionOutOfBounds { start: region.start_sample, end: region.end_sample, len });
    }
    Ok(())
}

/// Spectral energy profile of a region, computed from the whole-signal
/// first difference.
pub fn energy_profile<T: Real>(w: &Waveform<T>, region: VoicedRegion, cfg: &ZtwConfig) -> Result<EnergyProfile<T>> {
    let diff = difference(w.samples())?;
    energy_profile_from_diff(&diff, w.sample_rate(), region, cfg)
}

fn energy_profile_from_diff<T: Real>(
    diff: &[T],
    fs: u32,
    region: VoicedRegion,
    cfg: &ZtwConfig,
) -> Result<EnergyProfile<T>> {
    check_region(diff.len(), &region)?;
    cfg.validate(fs)?;
    let m = cfg.segment_len(fs);
    if region.len() < m {
        return Err(Error::RegionTooShort { start: region.start_sample, end: region.end_sample, needed: m });
    }
    let data = &diff[region.start_sample..region.end_sample];
    let len = data.len();
    const CHUNK: usize = 256;
    let raw: Vec<T> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map_init(
            || (HngdAnalyzer::new(cfg, fs).expect("validated config"), vec![T::zero(); m], vec![T::zero(); m]),
            |(analyzer, seg, seg_b), c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(len);
                let fill = |seg: &mut [T], i: usize| {
                    let avail = (len - i).min(m);
                    seg[..avail].copy_from_slice(&data[i..i + avail]);
                    seg[avail..].iter_mut().for_each(|v| *v = T::zero());
                };
                let mut out = Vec::with_capacity(hi - lo);
                for i in (lo..hi).step_by(2) {
                    fill(seg, i);
                    if i + 1 < hi {
                        fill(seg_b, i + 1);
                        analyzer.compute_pair(seg, seg_b);
                        out.push(HngdAnalyzer::peak_sum(&analyzer.env, cfg.n_peaks));
                        out.push(HngdAnalyzer::peak_sum(&analyzer.env_b, cfg.n_peaks));
                    } else {
                        analyzer.compute(seg);
                        out.push(HngdAnalyzer::peak_sum(&analyzer.env, cfg.n_peaks));
                    }
                }
                out
            },
        )
        .flatten()
        .collect();
    let values = mean_smooth(&raw, cfg.smooth_width)?;
    Ok(EnergyProfile { values, region, sample_rate: fs })
}

/// Average pitch period (samples) from the autocorrelation of the
/// mean-removed profile: the lag of the highest positive autocorrelation
/// peak inside `[pitch_min_ms, pitch_max_ms]` (the shortest lag within
/// `pitch_octave_ratio` of it), or 0 when none exists or the best peak is
/// below `pitch_min_correlation` of the zero-lag value.
pub fn estimate_avg_pitch<T: Real>(p: &EnergyProfile<T>, cfg: &ZtwConfig) -> usize {
    let x: Vec<f64> = p.values.iter().map(|v| v.to_f64_lossy()).collect();
    let n = x.len();
    if n < 3 {
        return 0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let lo = ms_to_samples(cfg.pitch_min_ms, p.sample_rate).max(1);
    let hi = ms_to_samples(cfg.pitch_max_ms, p.sample_rate).min(n - 2);
    if lo + 1 > hi {
        return 0;
    }
    let r = |lag: usize| -> f64 { x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum() };
    let ac: Vec<f64> = (lo - 1..=hi + 1).map(r).collect();
    let peaks: Vec<(usize, f64)> = (lo..=hi)
        .filter_map(|lag| {
            let i = lag - (lo - 1);
            let v = ac[i];
            (v > 0.0 && v > ac[i - 1] && v >= ac[i + 1]).then_some((lag, v))
        })
        .collect();
    let best = peaks.iter().map(|p| p.1).fold(0.0, f64::max);
    if best <= 0.0 || best < cfg.pitch_min_correlation * r(0) {
        return 0;
    }
    // Multiples of the period correlate almost as well as the period itself.
    peaks.iter().find(|p| p.1 >= cfg.pitch_octave_ratio * best).map_or(0, |p| p.0)
}

fn kernel_for(avg_pitch: usize, fs: u32) -> Option<usize> {
    let lo = ms_to_samples(1.0, fs);
    let hi = ms_to_samples(20.0, fs);
    (lo..=hi).contains(&avg_pitch).then_some(avg_pitch)
}

fn fallback_len(fs: u32, cfg: &ZtwConfig) -> usize {
    ms_to_samples(cfg.fallback_kernel_ms, fs).max(1)
}

fn contrast_normalized<T: Real>(p: &EnergyProfile<T>, cfg: &ZtwConfig) -> Vec<T> {
    let local = moving_average(&p.values, ms_to_samples(cfg.local_mean_ms, p.sample_rate) / 2);
    let floor = T::lit(1e-8);
    p.values.iter().zip(&local).map(|(&v, &m)| v / m.max(floor)).collect()
}

/// Contrast-normalizes the profile by its local mean and smooths it with a
/// Gaussian of length `avg_pitch`. Estimates outside 1..20 ms fall back to
/// the fixed `fallback_kernel_ms` kernel.
pub fn epoch_evidence<T: Real>(p: &EnergyProfile<T>, avg_pitch: usize, cfg: &ZtwConfig) -> Result<EpochEvidence<T>> {
    let fs = p.sample_rate;
    let (kernel_len, fallback) = match kernel_for(avg_pitch, fs) {
        Some(k) => (k, false),
        None => (fallback_len(fs, cfg), true),
    };
    let kernel = gaussian_kernel::<T>(kernel_len)?;
    let normalized = contrast_normalized(p, cfg);
    Ok(EpochEvidence {
        values: convolve_same(&normalized, &kernel),
        strength: convolve_same(&p.values, &kernel),
        spans: vec![EvidenceSpan { start: 0, end: p.values.len(), kernel_len, fallback }],
    })
}

/// Evidence with a kernel that follows the local pitch.
///
/// The region is cut into equal blocks of roughly `pitch_block_ms`; each
/// block's kernel is the average pitch period estimated on the block plus
/// half a block of context either side. Blocks without a usable estimate
/// take `region_pitch`, then the fixed fallback kernel.
pub fn local_epoch_evidence<T: Real>(p: &EnergyProfile<T>, region_pitch: usize, cfg: &ZtwConfig) -> Result<EpochEvidence<T>> {
    let fs = p.sample_rate;
    let n = p.values.len();
    let block = ms_to_samples(cfg.pitch_block_ms, fs).max(1);
    let blocks = ((n as f64 / block as f64).round() as usize).max(1);
    if blocks == 1 {
        return epoch_evidence(p, region_pitch, cfg);
    }
    let normalized = contrast_normalized(p, cfg);
    let mut values = vec![T::zero(); n];
    let mut strength = vec![T::zero(); n];
    let mut spans = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let start = b * n / blocks;
        let end = (b + 1) * n / blocks;
        let ctx = (end - start) / 2;
        let (lo, hi) = (start.saturating_sub(ctx), (end + ctx).min(n));
        let local = EnergyProfile { values: p.values[lo..hi].to_vec(), region: p.region, sample_rate: fs };
        let (kernel_len, fallback) = match kernel_for(estimate_avg_pitch(&local, cfg), fs) {
            Some(k) => (k, false),
            None => match kernel_for(region_pitch, fs) {
                Some(k) => (k, false),
                None => (fallback_len(fs, cfg), true),
            },
        };
        let kernel = gaussian_kernel::<T>(kernel_len)?;
        let reach = kernel.len();
        let (lo, hi) = (start.saturating_sub(reach), (end + reach).min(n));
        let v = convolve_same(&normalized[lo..hi], &kernel);
        let st = convolve_same(&p.values[lo..hi], &kernel);
        values[start..end].copy_from_slice(&v[start - lo..end - lo]);
        strength[start..end].copy_from_slice(&st[start - lo..end - lo]);
        spans.push(EvidenceSpan { start, end, kernel_len, fallback });
    }
    Ok(EpochEvidence { values, strength, spans })
}

/// Evidence minus its moving average over one kernel length of each span.
pub fn locally_centered<T: Real>(evidence: &EpochEvidence<T>) -> Vec<T> {
    let ev = &evidence.values;
    let mut out = vec![T::zero(); ev.len()];
    for span in &evidence.spans {
        let (lo, hi) = (span.start.saturating_sub(span.kernel_len), (span.end + span.kernel_len).min(ev.len()));
        let local = moving_average(&ev[lo..hi], span.kernel_len / 2);
        for i in span.start..span.end {
            out[i] = ev[i] - local[i - lo];
        }
    }
    out
}

/// Evidence with its region mean subtracted.
pub fn mean_removed<T: Real>(x: &[T]) -> Vec<T> {
    if x.is_empty() {
        return Vec::new();
    }
    let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len());
    x.iter().map(|&v| v - mean).collect()
}

/// Peak picking with spurious-peak removal.
///
/// Evidence is referenced to its local mean over one kernel length, so
/// "positive" and "negative" follow slow level changes between cycles.
/// Candidates are local maxima above that reference. Rule (a): peaks are
/// admitted in decreasing amplitude and any peak closer than `min_gap`
/// samples to an admitted one is dropped, so of every close pair the smaller
/// goes. Rule (b): each successive pair must enclose a dip below the
/// reference, otherwise the smaller member goes; repeated until stable.
pub fn pick_epochs<T: Real>(
    evidence: &EpochEvidence<T>,
    region: VoicedRegion,
    sample_rate: u32,
    cfg: &ZtwConfig,
) -> Result<EpochTrain<T>> {
    let ev = &evidence.values;
    if ev.len() != region.len() {
        return Err(Error::LengthMismatch(ev.len(), region.len()));
    }
    let min_gap = ms_to_samples(cfg.min_epoch_gap_ms, sample_rate);
    let centered = locally_centered(evidence);
    let n = ev.len();
    let peak = evidence.strength.iter().fold(T::zero(), |m, &v| m.max(v));
    let floor = peak * T::lit(cfg.min_relative_strength);
    let mut cand: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| centered[i] > T::zero() && ev[i] > ev[i - 1] && ev[i] >= ev[i + 1])
        .filter(|&i| evidence.strength[i] >= floor)
        .collect();

    // Rule (a).
    let mut order = cand.clone();
    order.sort_by(|&a, &b| ev[b].partial_cmp(&ev[a]).expect("finite evidence").then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::with_capacity(order.len());
    for i in order {
        let pos = kept.partition_point(|&k| k < i);
        let clash_left = pos > 0 && i - kept[pos - 1] < min_gap;
        let clash_right = pos < kept.len() && kept[pos] - i < min_gap;
        if !clash_left && !clash_right {
            kept.insert(pos, i);
        }
    }
    cand = kept;

    // Rule (b).
    loop {
        let mut removed = false;
        let mut i = 0;
        while i + 1 < cand.len() {
            let (a, b) = (cand[i], cand[i + 1]);
            let dips = centered[a..=b].iter().any(|&v| v < T::zero());
            if !dips {
                if ev[a] >= ev[b] {
                    cand.remove(i + 1);
                } else {
                    cand.remove(i);
                }
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            break;
        }
    }

    let strengths = cand.iter().map(|&i| evidence.strength[i]).collect();
    let locations = cand.iter().map(|&i| i + region.start_sample).collect();
    Ok(EpochTrain { locations, strengths, region })
}

/// Moves each epoch from its evidence peak to the strongest
/// linear-prediction residual sample within the preceding half-kernel.
///
/// Gaussian smoothing centers the evidence on the energy mass of each
/// excitation burst, which trails the closure instant by the build-up and
/// decay of the vocal-tract response. The prediction residual concentrates
/// the excitation back into a sharp pulse at the closure. `residual` is
/// indexed in region coordinates. Refined positions that would violate the
/// ordering or the minimum gap keep their unrefined location; any pair still
/// too close keeps only its stronger member.
pub fn refine_epochs<T: Real>(train: &mut EpochTrain<T>, residual: &[T], evidence: &EpochEvidence<T>, min_gap: usize) {
    let base = train.region.start_sample;
    let refined: Vec<usize> = train
        .locations
        .iter()
        .map(|&loc| {
            let peak = loc - base;
            let reach = evidence.kernel_len_at(peak).div_ceil(2);
            let lo = peak.saturating_sub(reach);
            let mut arg = peak;
            let mut best = residual[peak].abs();
            for i in (lo..peak).rev() {
                let v = residual[i].abs();
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            arg + base
        })
        .collect();
    let mut out: Vec<usize> = Vec::with_capacity(refined.len());
    for (k, &r) in refined.iter().enumerate() {
        let ok = out.last().is_none_or(|&q| r > q && r - q >= min_gap);
        out.push(if ok { r } else { train.locations[k] });
    }
    let mut keep = vec![true; out.len()];
    let mut last: Option<usize> = None;
    for k in 0..out.len() {
        if let Some(j) = last {
            if out[k] <= out[j] || out[k] - out[j] < min_gap {
                if train.strengths[k] > train.strengths[j] {
                    keep[j] = false;
                    last = Some(k);
                } else {
                    keep[k] = false;
                }
                continue;
            }
        }
        last = Some(k);
    }
    let (mut locations, mut strengths) = (Vec::new(), Vec::new());
    for k in 0..out.len() {
        if keep[k] {
            locations.push(out[k]);
            strengths.push(train.strengths[k]);
        }
    }
    train.locations = locations;
    train.strengths = strengths;
}

fn analyze_with_diff<T: Real>(
    signal: &[T],
    diff: &[T],
    fs: u32,
    region: VoicedRegion,
    cfg: &ZtwConfig,
) -> Result<RegionAnalysis<T>> {
    let profile = energy_profile_from_diff(diff, fs, region, cfg)?;
    let avg_pitch = estimate_avg_pitch(&profile, cfg);
    let evidence = local_epoch_evidence(&profile, avg_pitch, cfg)?;
    let mut train = pick_epochs(&evidence, region, fs, cfg)?;
    if cfg.refine_with_residual {
        let region_signal = &signal[region.start_sample..region.end_sample];
        let residual = lp_residual(region_signal, cfg.lpc_order_for(fs), ms_to_samples(20.0, fs), ms_to_samples(5.0, fs).max(1));
        refine_epochs(&mut train, &residual, &evidence, ms_to_samples(cfg.min_epoch_gap_ms, fs));
    }
    // Smoothing a silent region can leave zero-strength maxima.
    let keep: Vec<bool> = train.strengths.iter().map(|&s| s > T::zero()).collect();
    if keep.iter().any(|k| !k) {
        let mut it = keep.iter();
        train.locations.retain(|_| *it.next().expect("same length"));
        let mut it = keep.iter();
        train.strengths.retain(|_| *it.next().expect("same length"));
    }
    Ok(RegionAnalysis { profile, avg_pitch, evidence, train })
}

/// Runs the full per-region chain for one region.
pub fn analyze_region<T: Real>(w: &Waveform<T>, region: VoicedRegion, cfg: &ZtwConfig) -> Result<RegionAnalysis<T>> {
    let diff = difference(w.samples())?;
    analyze_with_diff(w.samples(), &diff, w.sample_rate(), region, cfg)
}

/// Region analyses for every region at least `min_region_ms` long; shorter
/// regions are skipped with a log message.
pub fn analyze_regions<T: Real>(
    w: &Waveform<T>,
    regions: &[VoicedRegion],
    cfg: &ZtwConfig,
) -> Result<Vec<RegionAnalysis<T>>> {
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let fs = w.sample_rate();
    cfg.validate(fs)?;
    for r in regions {
        check_region(w.len(), r)?;
    }
    let diff = difference(w.samples())?;
    let min_len = ms_to_samples(cfg.min_region_ms, fs);
    regions
        .iter()
        .filter(|r| {
            let ok = r.len() >= min_len;
            if !ok {
                log::info!("skipping region [{}, {}): shorter than {} ms", r.start_sample, r.end_sample, cfg.min_region_ms);
            }
            ok
        })
        .map(|&r| analyze_with_diff(w.samples(), &diff, fs, r, cfg))
        .collect()
}

/// Epoch trains for the given voiced regions.
pub fn detect_epochs<T: Real>(w: &Waveform<T>, regions: &[VoicedRegion], cfg: &ZtwConfig) -> Result<Vec<EpochTrain<T>>> {
    Ok(analyze_regions(w, regions, cfg)?.into_iter().map(|a| a.train).collect())
}

/// Agreement between detected epochs and reference closure instants.
///
/// Each reference instant owns the larynx cycle between the midpoints to its
/// neighbours. A cycle with exactly one detection counts as identified, one
/// with none as a miss and one with several as a false alarm. An identified
/// cycle is accurate when its detection lies within `tolerance` samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochScore {
    pub reference: usize,
    pub identified: usize,
    pub missed: usize,
    pub false_alarms: usize,
    pub accurate: usize,
}

impl EpochScore {
    pub fn identification_rate(&self) -> f64 {
        ratio(self.identified, self.reference)
    }

    /// Fraction of reference instants identified within the tolerance.
    pub fn accurate_rate(&self) -> f64 {
        ratio(self.accurate, self.reference)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn score_epochs(reference: &[usize], detected: &[usize], tolerance: usize) -> EpochScore {
    let mut score = EpochScore { reference: reference.len(), ..EpochScore::default() };
    for (i, &g) in reference.iter().enumerate() {
        let lo = if i == 0 { 0 } else { (reference[i - 1] + g) / 2 };
        let hi = reference.get(i + 1).map_or(usize::MAX, |&next| (g + next) / 2);
        let first = detected.partition_point(|&d| d < lo);
        let last = detected.partition_point(|&d| d < hi);
        match last - first {
            0 => score.missed += 1,
            1 => {
                score.identified += 1;
                if detected[first].abs_diff(g) <= tolerance {
                    score.accurate += 1;
                }
            }
            _ => score.false_alarms += 1,
        }
    }
    score
}
