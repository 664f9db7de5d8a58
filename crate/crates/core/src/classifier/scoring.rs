use super::hmm::HmmTopology;
use crate::error::{Error, Result};

/// State prior probabilities `p(q)` for turning posteriors into scaled
/// likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePriors(Vec<f64>);

impl StatePriors {
    pub const FLOOR: f64 = 1e-8;

    /// Normalizes `weights` and lifts every entry to at least [`Self::FLOOR`]
    /// while keeping the total at 1.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let c = weights.len();
        let sum: f64 = weights.iter().sum();
        if c == 0 || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !(sum > 0.0) {
            return Err(Error::InvalidConfig("priors need nonnegative weights with a positive sum".into()));
        }
        if c as f64 * Self::FLOOR >= 1.0 {
            return Err(Error::InvalidConfig(format!("{c} classes cannot all carry the prior floor")));
        }
        let mass = 1.0 - c as f64 * Self::FLOOR;
        Ok(Self(weights.iter().map(|w| Self::FLOOR + mass * w / sum).collect()))
    }

    /// Priors that are already normalized and floored, as stored in a model.
    pub fn from_normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty()
            || values.iter().any(|p| !(*p >= Self::FLOOR && *p <= 1.0))
            || (values.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig("stored priors must be floored and sum to 1".into()));
        }
        Ok(Self(values))
    }

    /// Relative label frequencies over `classes` labels.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a usize>, classes: usize) -> Result<Self> {
        let mut counts = vec![0.0; classes];
        for &l in labels {
            *counts.get_mut(l).ok_or(Error::InvalidLabel { label: l, classes })? += 1.0;
        }
        Self::new(counts)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `log p(q|x) - log p(q)` for every frame of `log_posteriors`
/// (`frames x classes`, row-major). The evidence term `log p(x)` is the same
/// for every class of a frame and is left out.
pub fn scaled_loglik(log_posteriors: &[f64], priors: &StatePriors) -> Result<Vec<f64>> {
    let c = priors.len();
    if !log_posteriors.len().is_multiple_of(c) {
        return Err(Error::DimensionMismatch { expected: c, got: log_posteriors.len() % c });
    }
    let log_p: Vec<f64> = priors.values().iter().map(|p| p.ln()).collect();
    Ok(log_posteriors.chunks(c).flat_map(|row| row.iter().zip(&log_p).map(|(a, b)| a - b)).collect())
}

/// Decision for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub emotion: usize,
    /// Viterbi log-likelihood per emotion; `-inf` when undecodable.
    pub logliks: Vec<f64>,
}

/// Scores every emotion's HMM on its slice of `scores` (`frames x classes`)
/// and returns the best. Ties go to the lexicographically smallest label.
pub fn decode(scores: &[f64], topology: &HmmTopology) -> Result<Decoded> {
    let c = topology.classes();
    let s = topology.states();
    if scores.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    if !scores.len().is_multiple_of(c) {
        return Err(Error::DimensionMismatch { expected: c, got: scores.len() % c });
    }
    let mut logliks = Vec::with_capacity(topology.emotion_count());
    let mut first_error = None;
    for e in 0..topology.emotion_count() {
        let obs: Vec<f64> = scores.chunks(c).flat_map(|row| row[e * s..(e + 1) * s].iter().copied()).collect();
        match topology.viterbi(e, &obs) {
            Ok((_, ll)) => logliks.push(ll),
            Err(err) => {
                first_error.get_or_insert(err);
                logliks.push(f64::NEG_INFINITY);
            }
        }
    }
    let names = topology.emotions();
    let mut best: Option<usize> = None;
    for e in 0..logliks.len() {
        if logliks[e] == f64::NEG_INFINITY {
            continue;
        }
        best = match best {
            None => Some(e),
            Some(b) if logliks[e] > logliks[b] || (logliks[e] == logliks[b] && names[e] < names[b]) => Some(e),
            keep => keep,
        };
    }
    match (best, first_error) {
        (Some(emotion), _) => Ok(Decoded { emotion, logliks }),
        (None, Some(err)) => Err(err),
        (None, None) => Err(Error::EmptyUtterance),
    }
}

/// Weighted and unweighted accuracy with the confusion matrix, all in
/// percent. Rows are true classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub wa: f64,
    pub uwa: f64,
    pub confusion: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    /// Per-class recall in percent; `None` for classes absent from the truths.
    pub recalls: Vec<Option<f64>>,
    pub total: usize,
}

/// Plain mean of per-class recalls.
pub fn unweighted_average(recalls: &[f64]) -> f64 {
    if recalls.is_empty() {
        return f64::NAN;
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

pub fn evaluate(predictions: &[usize], truths: &[usize], classes: usize) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch(predictions.len(), truths.len()));
    }
    if truths.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::InvalidLabel { label: p.max(t), classes });
        }
        counts[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|k| counts[k][k]).sum();
    let mut confusion = Vec::with_capacity(classes);
    let mut recalls = Vec::with_capacity(classes);
    for (k, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n == 0 {
            log::warn!("class {k} has no reference utterances and is left out of UWA");
            confusion.push(vec![0.0; classes]);
            recalls.push(None);
        } else {
            confusion.push(row.iter().map(|&c| 100.0 * c as f64 / n as f64).collect());
            recalls.push(Some(100.0 * row[k] as f64 / n as f64));
        }
    }
    let present: Vec<f64> = recalls.iter().flatten().copied().collect();
    Ok(Metrics {
        wa: 100.0 * correct as f64 / truths.len() as f64,
        uwa: unweighted_average(&present),
        confusion,
        counts,
        recalls,
        total: truths.len(),
    })
}
