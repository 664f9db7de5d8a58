use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATES_PER_EMOTION: usize = 5;
pub const DEFAULT_EMOTIONS: [&str; 4] = ["angry", "happy", "neutral", "sad"];

const ROW_TOLERANCE: f64 = 1e-10;

/// Per-emotion left-to-right HMMs sharing one state count.
///
/// Global state labels run `emotion * states + state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmTopology {
    emotions: Vec<String>,
    states: usize,
    /// One `states x states` row-major matrix per emotion.
    transitions: Vec<Vec<f64>>,
}

impl Default for HmmTopology {
    fn default() -> Self {
        Self::new(DEFAULT_EMOTIONS.iter().map(|s| s.to_string()).collect(), STATES_PER_EMOTION)
            .expect("default topology is valid")
    }
}

impl HmmTopology {
    /// Every non-final state starts with equal self-loop and forward
    /// probabilities; the final state loops with probability 1.
    pub fn new(emotions: Vec<String>, states: usize) -> Result<Self> {
        if emotions.is_empty() || states == 0 {
            return Err(Error::InvalidConfig("topology needs at least one emotion and one state".into()));
        }
        let mut seen = emotions.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != emotions.len() {
            return Err(Error::InvalidConfig(format!("duplicate emotion labels in {emotions:?}")));
        }
        if let Some(bad) = emotions.iter().find(|e| e.is_empty() || e.contains([',', '\n'])) {
            return Err(Error::InvalidConfig(format!("invalid emotion label {bad:?}")));
        }
        let mut t = vec![0.0; states * states];
        for i in 0..states {
            if i + 1 < states {
                t[i * states + i] = 0.5;
                t[i * states + i + 1] = 0.5;
            } else {
                t[i * states + i] = 1.0;
            }
        }
        let transitions = vec![t; emotions.len()];
        Ok(Self { emotions, states, transitions })
    }

    pub fn emotions(&self) -> &[String] {
        &self.emotions
    }

    pub fn emotion_count(&self) -> usize {
        self.emotions.len()
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// Total number of global state labels.
    pub fn classes(&self) -> usize {
        self.emotions.len() * self.states
    }

    pub fn emotion_index(&self, name: &str) -> Option<usize> {
        self.emotions.iter().position(|e| e == name)
    }

    pub fn label(&self, emotion: usize, state: usize) -> usize {
        emotion * self.states + state
    }

    pub fn transition(&self, emotion: usize) -> &[f64] {
        &self.transitions[emotion]
    }

    pub fn set_transition(&mut self, emotion: usize, matrix: Vec<f64>) -> Result<()> {
        check_left_to_right(&matrix, self.states)?;
        self.transitions[emotion] = matrix;
        Ok(())
    }

    pub fn log_transition(&self, emotion: usize) -> Vec<f64> {
        self.transitions[emotion].iter().map(|p| p.ln()).collect()
    }

    /// Entry is always through state 0.
    pub fn log_initial(&self) -> Vec<f64> {
        let mut v = vec![f64::NEG_INFINITY; self.states];
        v[0] = 0.0;
        v
    }

    /// Exit through the last state when the utterance is long enough to
    /// reach it, anywhere otherwise.
    pub fn log_final(&self, frames: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.states];
        if frames >= self.states {
            v.iter_mut().take(self.states - 1).for_each(|x| *x = f64::NEG_INFINITY);
        }
        v
    }

    /// Best state path of `obs` (`frames x states`, row-major) through
    /// emotion `e`.
    pub fn viterbi(&self, emotion: usize, obs: &[f64]) -> Result<(Vec<usize>, f64)> {
        let frames = obs.len() / self.states;
        viterbi_with_exit(obs, self.states, &self.log_transition(emotion), &self.log_initial(), &self.log_final(frames))
    }
}

fn check_left_to_right(m: &[f64], states: usize) -> Result<()> {
    if m.len() != states * states {
        return Err(Error::DimensionMismatch { expected: states * states, got: m.len() });
    }
    for i in 0..states {
        let row = &m[i * states..(i + 1) * states];
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig(format!("transition row {i} has entries outside [0, 1]")));
        }
        if (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidConfig(format!("transition row {i} does not sum to 1")));
        }
        if row.iter().enumerate().any(|(j, &p)| p > 0.0 && j != i && j != i + 1) {
            return Err(Error::InvalidConfig(format!("transition row {i} is not left-to-right")));
        }
    }
    Ok(())
}

/// Log-domain Viterbi over `obs` (`frames x states`, row-major).
///
/// Returns the best path and its score. Ties prefer the lower state index
/// both for predecessors and for the final state. A frame at which no
/// state is reachable yields [`Error::UndecodableFrame`].
pub fn viterbi(obs: &[f64], states: usize, log_trans: &[f64], log_init: &[f64]) -> Result<(Vec<usize>, f64)> {
    viterbi_with_exit(obs, states, log_trans, log_init, &vec![0.0; states])
}

/// [`viterbi`] with a log exit weight added to each final state.
pub fn viterbi_with_exit(
    obs: &[f64],
    states: usize,
    log_trans: &[f64],
    log_init: &[f64],
    log_exit: &[f64],
) -> Result<(Vec<usize>, f64)> {
    if states == 0 || !obs.len().is_multiple_of(states) {
        return Err(Error::InvalidLength { got: obs.len(), reason: "observations must be frames x states" });
    }
    if log_trans.len() != states * states || log_init.len() != states || log_exit.len() != states {
        return Err(Error::DimensionMismatch { expected: states, got: log_init.len() });
    }
    let frames = obs.len() / states;
    if frames == 0 {
        return Err(Error::EmptyUtterance);
    }
    let mut delta: Vec<f64> = (0..states).map(|j| log_init[j] + obs[j]).collect();
    if delta.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::UndecodableFrame(0));
    }
    let mut back = vec![0usize; frames * states];
    let mut next = vec![0.0; states];
    for t in 1..frames {
        for j in 0..states {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..states {
                let v = delta[i] + log_trans[i * states + j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + obs[t * states + j];
            back[t * states + j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
        if delta.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::UndecodableFrame(t));
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (j, (&d, &x)) in delta.iter().zip(log_exit).enumerate() {
        if d + x > best {
            best = d + x;
            last = j;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::UndecodableFrame(frames - 1));
    }
    let mut path = vec![0; frames];
    path[frames - 1] = last;
    for t in (1..frames).rev() {
        path[t - 1] = back[t * states + path[t]];
    }
    Ok((path, best))
}
