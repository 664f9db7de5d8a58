use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hmm::HmmTopology;
use super::Utterance;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal-covariance Gaussian mixture observing one HMM state.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmState {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// `ln w - 0.5 (d ln 2pi + sum ln var)` per component.
    consts: Vec<f64>,
}

impl GmmState {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::InvalidConfig("mixture needs matching, non-empty weights, means and variances".into()));
        }
        let d = means[0].len();
        if means.iter().chain(&variances).any(|v| v.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: means.iter().chain(&variances).map(|v| v.len()).find(|&n| n != d).unwrap_or(d) });
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig("mixture weights must be nonnegative and sum to 1".into()));
        }
        if variances.iter().flatten().any(|v| !(*v >= VARIANCE_FLOOR)) || means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig(format!("variances must be >= {VARIANCE_FLOOR} and means finite")));
        }
        let mut g = Self { weights, means, variances, consts: Vec::new() };
        g.refresh();
        Ok(g)
    }

    fn refresh(&mut self) {
        let d = self.dims() as f64;
        self.consts = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(w, var)| w.ln() - 0.5 * (d * LN_2PI + var.iter().map(|v| v.ln()).sum::<f64>()))
            .collect();
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means[0].len()
    }

    fn component_logs(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let q: f64 = x
                .iter()
                .zip(&self.means[k])
                .zip(&self.variances[k])
                .map(|((x, m), v)| (x - m) * (x - m) / v)
                .sum();
            *o = self.consts[k] - 0.5 * q;
        }
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut c = vec![0.0; self.components()];
        self.component_logs(x, &mut c);
        log_sum_exp(&c)
    }

    /// Maximum-likelihood single Gaussian.
    pub fn fit_single(frames: &[&[f64]]) -> Result<Self> {
        let n = frames.len();
        if n == 0 {
            return Err(Error::MissingClass("state without frames".into()));
        }
        let d = frames[0].len();
        let mut mean = vec![0.0; d];
        for f in frames {
            for (m, x) in mean.iter_mut().zip(*f) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for f in frames {
            for ((v, x), m) in var.iter_mut().zip(*f).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / n as f64).max(VARIANCE_FLOOR));
        Self::new(vec![1.0], vec![mean], vec![var])
    }

    /// Splits the heaviest component into two, offset by +-0.2 standard
    /// deviations.
    pub fn split(&mut self) {
        let k = (0..self.components())
            .max_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]).then(b.cmp(&a)))
            .expect("non-empty mixture");
        let w = self.weights[k] / 2.0;
        let var = self.variances[k].clone();
        let mut lo = self.means[k].clone();
        let mut hi = lo.clone();
        for ((a, b), v) in lo.iter_mut().zip(hi.iter_mut()).zip(&var) {
            let off = 0.2 * v.sqrt();
            *a -= off;
            *b += off;
        }
        self.weights[k] = w;
        self.means[k] = lo;
        self.weights.push(w);
        self.means.push(hi);
        self.variances.push(var);
        self.refresh();
    }

    /// One EM step over `frames`; returns the total log-likelihood before
    /// the update. Components with less than one frame of responsibility
    /// are removed.
    pub fn em_step(&mut self, frames: &[&[f64]]) -> f64 {
        let (k, d) = (self.components(), self.dims());
        let mut occ = vec![0.0; k];
        let mut s1 = vec![vec![0.0; d]; k];
        let mut s2 = vec![vec![0.0; d]; k];
        let mut c = vec![0.0; k];
        let mut total = 0.0;
        for f in frames {
            self.component_logs(f, &mut c);
            let ll = log_sum_exp(&c);
            total += ll;
            for j in 0..k {
                let r = (c[j] - ll).exp();
                if r == 0.0 {
                    continue;
                }
                occ[j] += r;
                for ((a, b), x) in s1[j].iter_mut().zip(s2[j].iter_mut()).zip(*f) {
                    *a += r * x;
                    *b += r * x * x;
                }
            }
        }
        let alive: Vec<usize> = (0..k).filter(|&j| occ[j] >= 1.0).collect();
        if alive.is_empty() {
            return total;
        }
        let norm: f64 = alive.iter().map(|&j| occ[j]).sum();
        let mut weights = Vec::with_capacity(alive.len());
        let mut means = Vec::with_capacity(alive.len());
        let mut vars = Vec::with_capacity(alive.len());
        for &j in &alive {
            let m: Vec<f64> = s1[j].iter().map(|a| a / occ[j]).collect();
            let v: Vec<f64> = s2[j].iter().zip(&m).map(|(b, m)| (b / occ[j] - m * m).max(VARIANCE_FLOOR)).collect();
            weights.push(occ[j] / norm);
            means.push(m);
            vars.push(v);
        }
        self.weights = weights;
        self.means = means;
        self.variances = vars;
        self.refresh();
        total
    }

    /// Grows a mixture to `mixes` components by repeated splitting with
    /// `em_iters` EM steps after each split.
    pub fn train(frames: &[&[f64]], mixes: usize, em_iters: usize) -> Result<Self> {
        let mut g = Self::fit_single(frames)?;
        g.grow(frames, mixes, em_iters);
        Ok(g)
    }

    fn grow(&mut self, frames: &[&[f64]], mixes: usize, em_iters: usize) {
        // Each component needs a few frames per dimension to be estimable.
        let cap = (frames.len() / (2 * self.dims()).max(4)).max(1);
        let target = mixes.min(cap);
        while self.components() < target {
            let before = self.components();
            self.split();
            for _ in 0..em_iters {
                self.em_step(frames);
            }
            if self.components() <= before {
                break;
            }
        }
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GmmTrainConfig {
    /// Mixture components per state after splitting.
    pub mixes: usize,
    pub max_iterations: usize,
    /// Stop when the total log-likelihood gains less than this per frame.
    pub tolerance: f64,
    /// EM steps per state per iteration.
    pub em_iterations: usize,
}

impl Default for GmmTrainConfig {
    fn default() -> Self {
        Self { mixes: 4, max_iterations: 20, tolerance: 1e-4, em_iterations: 4 }
    }
}

impl GmmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mixes == 0 || self.max_iterations == 0 || !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("gmm: mixes and max-iterations must be >= 1, tolerance >= 0".into()));
        }
        Ok(())
    }
}

/// Per-emotion GMM-HMMs: one [`GmmState`] per global state label.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmHmm {
    pub topology: HmmTopology,
    pub states: Vec<GmmState>,
}

/// Total alignment log-likelihood of one emotion after each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmIteration {
    pub emotion: usize,
    pub iteration: usize,
    pub loglik: f64,
    pub frames: usize,
}

impl GmmHmm {
    pub fn dims(&self) -> usize {
        self.states[0].dims()
    }

    /// `frames x classes` observation log-likelihoods.
    pub fn log_likelihoods<T: Real>(&self, m: &crate::features::FeatureMatrix<T>) -> Result<Vec<f64>> {
        if m.dims() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: m.dims() });
        }
        let mut out = Vec::with_capacity(m.frames() * self.states.len());
        let mut row = vec![0.0; m.dims()];
        for r in m.rows() {
            row.iter_mut().zip(r).for_each(|(a, b)| *a = b.to_f64_lossy());
            out.extend(self.states.iter().map(|g| g.log_likelihood(&row)));
        }
        Ok(out)
    }
}

/// `frames x states` log-likelihoods of `frames` under `states`.
fn state_obs(states: &[GmmState], frames: &[Vec<f64>]) -> Vec<f64> {
    frames.iter().flat_map(|f| states.iter().map(move |g| g.log_likelihood(f))).collect()
}

fn to_rows<T: Real>(m: &crate::features::FeatureMatrix<T>) -> Vec<Vec<f64>> {
    m.rows().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect()
}

fn uniform_segmentation(frames: usize, states: usize) -> Vec<usize> {
    (0..frames).map(|t| t * states / frames.max(1)).collect()
}

/// Left-to-right transition estimate from state paths, with one pseudo
/// count on each allowed arc.
fn estimate_transitions(paths: &[Vec<usize>], states: usize) -> Vec<f64> {
    let mut stay = vec![1.0; states];
    let mut leave = vec![1.0; states];
    for p in paths {
        for w in p.windows(2) {
            if w[1] == w[0] {
                stay[w[0]] += 1.0;
            } else {
                leave[w[0]] += 1.0;
            }
        }
    }
    let mut t = vec![0.0; states * states];
    for i in 0..states {
        if i + 1 < states {
            let p = stay[i] / (stay[i] + leave[i]);
            t[i * states + i] = p;
            t[i * states + i + 1] = 1.0 - p;
        } else {
            t[i * states + i] = 1.0;
        }
    }
    t
}

/// Viterbi-EM training of one GMM-HMM per emotion.
///
/// Each emotion starts from a uniform segmentation of its utterances into
/// the HMM states, then alternates state re-estimation (with the mixture
/// grown by splitting towards `cfg.mixes`) and Viterbi re-alignment.
/// Utterances that cannot be aligned are skipped with a warning.
pub fn gmm_hmm_train<T: Real>(
    corpus: &[Utterance<'_, T>],
    topology: HmmTopology,
    cfg: &GmmTrainConfig,
) -> Result<(GmmHmm, Vec<GmmIteration>)> {
    cfg.validate()?;
    let dims = corpus.first().map(|u| u.features.dims()).ok_or(Error::EmptyUtterance)?;
    if let Some(u) = corpus.iter().find(|u| u.features.dims() != dims) {
        return Err(Error::DimensionMismatch { expected: dims, got: u.features.dims() });
    }
    if let Some(u) = corpus.iter().find(|u| u.emotion >= topology.emotion_count()) {
        return Err(Error::InvalidLabel { label: u.emotion, classes: topology.emotion_count() });
    }
    for (e, name) in topology.emotions().iter().enumerate() {
        if !corpus.iter().any(|u| u.emotion == e && !u.features.is_empty()) {
            return Err(Error::MissingClass(name.clone()));
        }
    }
    let per_emotion: Vec<Result<(Vec<GmmState>, Vec<f64>, Vec<GmmIteration>)>> = (0..topology.emotion_count())
        .into_par_iter()
        .map(|e| {
            let data: Vec<Vec<Vec<f64>>> = corpus
                .iter()
                .filter(|u| u.emotion == e && !u.features.is_empty())
                .map(|u| to_rows(u.features))
                .collect();
            train_emotion(e, &data, &topology, cfg)
        })
        .collect();
    let mut topology = topology;
    let mut states = Vec::with_capacity(topology.classes());
    let mut log = Vec::new();
    for (e, r) in per_emotion.into_iter().enumerate() {
        let (s, t, l) = r?;
        states.extend(s);
        topology.set_transition(e, t)?;
        log.extend(l);
    }
    Ok((GmmHmm { topology, states }, log))
}

type EmotionFit = (Vec<GmmState>, Vec<f64>, Vec<GmmIteration>);

fn train_emotion(e: usize, data: &[Vec<Vec<f64>>], topology: &HmmTopology, cfg: &GmmTrainConfig) -> Result<EmotionFit> {
    let s = topology.states();
    let total_frames: usize = data.iter().map(|u| u.len()).sum();
    let mut paths: Vec<Vec<usize>> = data.iter().map(|u| uniform_segmentation(u.len(), s)).collect();
    let mut model: Option<Vec<GmmState>> = None;
    let mut transitions = topology.transition(e).to_vec();
    let mut log = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    let mut mixes = 1usize;
    for iteration in 0..cfg.max_iterations {
        let mut states = Vec::with_capacity(s);
        for k in 0..s {
            let frames: Vec<&[f64]> = data
                .iter()
                .zip(&paths)
                .flat_map(|(u, p)| u.iter().zip(p).filter(|(_, &q)| q == k).map(|(f, _)| f.as_slice()))
                .collect();
            let mut g = match model.as_ref() {
                Some(m) if !frames.is_empty() => m[k].clone(),
                _ => GmmState::fit_single(&frames).map_err(|_| Error::MissingClass(format!("{} state {k}", topology.emotions()[e])))?,
            };
            if frames.is_empty() {
                states.push(g);
                continue;
            }
            for _ in 0..cfg.em_iterations {
                g.em_step(&frames);
            }
            g.grow(&frames, mixes, cfg.em_iterations);
            states.push(g);
        }
        transitions = estimate_transitions(&paths, s);
        let mut scratch = topology.clone();
        scratch.set_transition(e, transitions.clone())?;
        let mut total = 0.0;
        let mut new_paths = Vec::with_capacity(data.len());
        for (u, old) in data.iter().zip(&paths) {
            match scratch.viterbi(e, &state_obs(&states, u)) {
                Ok((p, ll)) => {
                    total += ll;
                    new_paths.push(p);
                }
                Err(err) => {
                    log::warn!("skipping an utterance of {} during alignment: {err}", topology.emotions()[e]);
                    new_paths.push(old.clone());
                }
            }
        }
        log.push(GmmIteration { emotion: e, iteration, loglik: total, frames: total_frames });
        paths = new_paths;
        model = Some(states);
        let grown = mixes >= cfg.mixes;
        if grown && (total - previous) / (total_frames.max(1) as f64) < cfg.tolerance {
            break;
        }
        previous = total;
        mixes = (mixes * 2).min(cfg.mixes);
    }
    let mut states = model.expect("at least one iteration");
    // Final re-estimate on the last alignment so states match the paths.
    for (k, g) in states.iter_mut().enumerate() {
        let frames: Vec<&[f64]> = data
            .iter()
            .zip(&paths)
            .flat_map(|(u, p)| u.iter().zip(p).filter(|(_, &q)| q == k).map(|(f, _)| f.as_slice()))
            .collect();
        if !frames.is_empty() {
            g.em_step(&frames);
        }
    }
    transitions = if paths.is_empty() { transitions } else { estimate_transitions(&paths, s) };
    Ok((states, transitions, log))
}

/// Per-frame global state labels: the Viterbi path of every utterance
/// through its own emotion's HMM. Undecodable utterances yield `None`.
pub fn align_states<T: Real>(corpus: &[Utterance<'_, T>], model: &GmmHmm) -> Vec<Option<Vec<usize>>> {
    corpus
        .par_iter()
        .map(|u| {
            let obs = match model.log_likelihoods(u.features) {
                Ok(o) if !u.features.is_empty() => o,
                Ok(_) => return None,
                Err(e) => {
                    log::warn!("skipping utterance in alignment: {e}");
                    return None;
                }
            };
            let c = model.topology.classes();
            let s = model.topology.states();
            let slice: Vec<f64> =
                obs.chunks(c).flat_map(|row| row[u.emotion * s..(u.emotion + 1) * s].iter().copied()).collect();
            match model.topology.viterbi(u.emotion, &slice) {
                Ok((path, _)) => Some(path.into_iter().map(|q| model.topology.label(u.emotion, q)).collect()),
                Err(e) => {
                    log::warn!("skipping undecodable utterance in alignment: {e}");
                    None
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureLayout, FeatureMatrix};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(FeatureLayout::Lda, rows[0].len(), rows).unwrap()
    }

    #[test]
    fn single_state_mean_is_data_mean() {
        let rows: Vec<Vec<f64>> = (0..37).map(|i| vec![(i as f64 * 0.37).sin(), i as f64 / 7.0]).collect();
        let m = matrix(&rows);
        let topo = HmmTopology::new(vec!["x".into()], 1).unwrap();
        let cfg = GmmTrainConfig { mixes: 1, ..GmmTrainConfig::default() };
        let (model, _) = gmm_hmm_train(&[Utterance::new(&m, 0)], topo, &cfg).unwrap();
        for d in 0..2 {
            let mut acc = 0.0;
            for r in &rows {
                acc += r[d];
            }
            assert_eq!(model.states[0].means[0][d], acc / rows.len() as f64);
        }
    }

    #[test]
    fn two_clusters_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (a, b) = (Normal::new(-3.0, 0.5).unwrap(), Normal::new(4.0, 0.5).unwrap());
        let rows: Vec<Vec<f64>> =
            (0..400).map(|i| vec![if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) }]).collect();
        let m = matrix(&rows);
        let topo = HmmTopology::new(vec!["x".into()], 1).unwrap();
        let cfg = GmmTrainConfig { mixes: 2, em_iterations: 10, ..GmmTrainConfig::default() };
        let (model, _) = gmm_hmm_train(&[Utterance::new(&m, 0)], topo, &cfg).unwrap();
        let mut means: Vec<f64> = model.states[0].means.iter().map(|m| m[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 3.0).abs() <= 0.15, "{means:?}");
        assert!((means[1] - 4.0).abs() <= 0.2, "{means:?}");
        assert!(model.states[0].variances.iter().flatten().all(|v| *v >= VARIANCE_FLOOR));
        assert!((model.states[0].weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn staircase(levels: &[f64], per: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.3).unwrap();
        let rows: Vec<Vec<f64>> =
            levels.iter().flat_map(|&l| (0..per).map(|_| vec![l + n.sample(&mut rng), -l + n.sample(&mut rng)]).collect::<Vec<_>>()).collect();
        matrix(&rows)
    }

    #[test]
    fn training_improves_and_alignment_is_monotone() {
        let topo = HmmTopology::new(vec!["up".into(), "down".into()], 5).unwrap();
        let mats: Vec<(FeatureMatrix<f64>, usize)> = (0..6)
            .map(|i| {
                let per = 6 + i;
                if i % 2 == 0 {
                    (staircase(&[0.0, 1.0, 2.0, 3.0, 4.0], per, i as u64), 0)
                } else {
                    (staircase(&[4.0, 3.0, 2.0, 1.0, 0.0], per, i as u64), 1)
                }
            })
            .collect();
        let corpus: Vec<Utterance<f64>> = mats.iter().map(|(m, e)| Utterance::new(m, *e)).collect();
        let (model, log) = gmm_hmm_train(&corpus, topo, &GmmTrainConfig::default()).unwrap();
        for e in 0..2 {
            let lls: Vec<f64> = log.iter().filter(|l| l.emotion == e).map(|l| l.loglik).collect();
            assert!(lls.last().unwrap() >= lls.first().unwrap(), "{lls:?}");
            let t = model.topology.transition(e);
            for r in 0..5 {
                assert!((t[r * 5..r * 5 + 5].iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
        let labels = align_states(&corpus, &model);
        let mut seen = [false; 10];
        for (lab, (_, e)) in labels.iter().zip(&mats) {
            let lab = lab.as_ref().unwrap();
            assert!(lab.windows(2).all(|w| w[1] >= w[0]));
            assert!(lab.iter().all(|l| l / 5 == *e));
            lab.iter().for_each(|&l| seen[l] = true);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn missing_emotion_is_named() {
        let m = staircase(&[0.0, 1.0], 5, 1);
        let topo = HmmTopology::default();
        let err = gmm_hmm_train(&[Utterance::new(&m, 0)], topo, &GmmTrainConfig::default()).unwrap_err();
        assert_eq!(err, Error::MissingClass("happy".into()));
    }

    #[test]
    fn log_sum_exp_handles_empty_mass() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }
}
