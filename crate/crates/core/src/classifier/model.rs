use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{align_states, gmm_hmm_train, GmmIteration, GmmState, GmmTrainConfig};
use super::hmm::{HmmTopology, DEFAULT_EMOTIONS, STATES_PER_EMOTION};
use super::mlp::{mlp_train, MlpConfig, MlpEpoch, MlpModel};
use super::scoring::{decode, evaluate, scaled_loglik, Decoded, Metrics, StatePriors};
use super::Utterance;
use crate::error::{Error, Result};
use crate::features::{splice, CmvnStats, FeatureLayout, FeatureMatrix, LdaTransform};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Gmm,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClassifierConfig {
    pub emotions: Vec<String>,
    pub states: usize,
    pub backend: Backend,
    /// Standardize inputs with statistics pooled over the training set.
    pub normalize_input: bool,
    pub gmm: GmmTrainConfig,
    /// Frames of context on each side for the MLP input.
    pub splice_context: usize,
    /// LDA output dimension for the MLP input; 0 feeds spliced features.
    pub lda_dim: usize,
    pub mlp: MlpConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            emotions: DEFAULT_EMOTIONS.iter().map(|s| s.to_string()).collect(),
            states: STATES_PER_EMOTION,
            backend: Backend::Mlp,
            normalize_input: true,
            gmm: GmmTrainConfig::default(),
            splice_context: 4,
            lda_dim: 80,
            mlp: MlpConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn topology(&self) -> Result<HmmTopology> {
        HmmTopology::new(self.emotions.clone(), self.states)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology()?;
        self.gmm.validate()?;
        self.mlp.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    /// One mixture per global state label.
    Gmm(Vec<GmmState>),
    Mlp { network: MlpModel, priors: StatePriors },
}

/// Trained classifier with its front-end transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionModel {
    pub topology: HmmTopology,
    pub layout: FeatureLayout,
    pub input_dims: usize,
    pub cmvn: Option<CmvnStats>,
    pub splice_context: usize,
    pub lda: Option<LdaTransform>,
    pub scorer: Scorer,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub gmm: Vec<GmmIteration>,
    pub mlp: Vec<MlpEpoch>,
    /// Aligned state labels per training utterance; `None` when skipped.
    pub labels: Vec<Option<Vec<usize>>>,
}

impl EmotionModel {
    fn normalized<T: Real>(&self, m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if m.dims() != self.input_dims {
            return Err(Error::DimensionMismatch { expected: self.input_dims, got: m.dims() });
        }
        match &self.cmvn {
            Some(c) => c.apply(m),
            None => Ok(m.clone()),
        }
    }

    /// Network input: spliced and optionally LDA-projected frames.
    fn network_input<T: Real>(&self, normalized: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        let spliced = splice(normalized, self.splice_context)?;
        match &self.lda {
            Some(l) => l.apply(&spliced),
            None => Ok(spliced),
        }
    }

    /// Per-frame observation scores (`frames x classes`): GMM
    /// log-likelihoods or prior-scaled MLP log posteriors.
    pub fn scores<T: Real>(&self, m: &FeatureMatrix<T>) -> Result<Vec<f64>> {
        if m.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        let x = self.normalized(m)?;
        match &self.scorer {
            Scorer::Gmm(states) => {
                let mut out = Vec::with_capacity(x.frames() * states.len());
                let mut row = vec![0.0; x.dims()];
                for r in x.rows() {
                    row.iter_mut().zip(r).for_each(|(a, b)| *a = b.to_f64_lossy());
                    out.extend(states.iter().map(|g| g.log_likelihood(&row)));
                }
                Ok(out)
            }
            Scorer::Mlp { network, priors } => {
                let input = self.network_input(&x)?;
                scaled_loglik(&network.log_posteriors(&input)?, priors)
            }
        }
    }

    pub fn decode<T: Real>(&self, m: &FeatureMatrix<T>) -> Result<Decoded> {
        decode(&self.scores(m)?, &self.topology)
    }
}

fn check_corpus<T: Real>(corpus: &[Utterance<'_, T>], topology: &HmmTopology) -> Result<(FeatureLayout, usize)> {
    let first = corpus.first().ok_or(Error::EmptyUtterance)?;
    let (layout, dims) = (first.features.layout(), first.features.dims());
    for u in corpus {
        if u.features.dims() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: u.features.dims() });
        }
        if u.emotion >= topology.emotion_count() {
            return Err(Error::InvalidLabel { label: u.emotion, classes: topology.emotion_count() });
        }
    }
    for (e, name) in topology.emotions().iter().enumerate() {
        if !corpus.iter().any(|u| u.emotion == e && !u.features.is_empty()) {
            return Err(Error::MissingClass(name.clone()));
        }
    }
    Ok((layout, dims))
}

/// GMM-HMM bootstrap, state alignment, LDA fit and MLP training.
pub fn train_model<T: Real>(corpus: &[Utterance<'_, T>], cfg: &ClassifierConfig) -> Result<(EmotionModel, TrainLog)> {
    cfg.validate()?;
    let topology = cfg.topology()?;
    let (layout, input_dims) = check_corpus(corpus, &topology)?;
    let cmvn = if cfg.normalize_input {
        let mats: Vec<&FeatureMatrix<T>> = corpus.iter().map(|u| u.features).collect();
        Some(CmvnStats::estimate(&mats)?)
    } else {
        None
    };
    let normalized: Vec<FeatureMatrix<T>> = corpus
        .par_iter()
        .map(|u| match &cmvn {
            Some(c) => c.apply(u.features),
            None => Ok(u.features.clone()),
        })
        .collect::<Result<_>>()?;
    let utts: Vec<Utterance<'_, T>> =
        normalized.iter().zip(corpus).map(|(m, u)| Utterance { features: m, ..*u }).collect();
    let (gmm, gmm_log) = gmm_hmm_train(&utts, topology, &cfg.gmm)?;
    let topology = gmm.topology.clone();
    let mut model = EmotionModel {
        topology,
        layout,
        input_dims,
        cmvn,
        splice_context: cfg.splice_context,
        lda: None,
        scorer: Scorer::Gmm(gmm.states.clone()),
    };
    if cfg.backend == Backend::Gmm {
        return Ok((model, TrainLog { gmm: gmm_log, mlp: Vec::new(), labels: Vec::new() }));
    }

    let labels = align_states(&utts, &gmm);
    let classes = model.topology.classes();
    let kept: Vec<(usize, &Vec<usize>)> =
        labels.iter().enumerate().filter_map(|(i, l)| l.as_ref().map(|l| (i, l))).collect();
    if kept.is_empty() {
        return Err(Error::MissingClass("no utterance could be aligned".into()));
    }
    let spliced: Vec<FeatureMatrix<T>> =
        kept.par_iter().map(|&(i, _)| splice(&normalized[i], cfg.splice_context)).collect::<Result<_>>()?;
    if cfg.lda_dim > 0 {
        let pairs: Vec<(&FeatureMatrix<T>, &[usize])> =
            spliced.iter().zip(&kept).map(|(m, (_, l))| (m, l.as_slice())).collect();
        let dim = cfg.lda_dim.min(spliced[0].dims());
        model.lda = Some(LdaTransform::fit_labelled(&pairs, classes, dim)?);
    }
    let inputs: Vec<FeatureMatrix<T>> = match &model.lda {
        Some(l) => spliced.par_iter().map(|m| l.apply(m)).collect::<Result<_>>()?,
        None => spliced,
    };
    let pairs: Vec<(&FeatureMatrix<T>, &[usize])> =
        inputs.iter().zip(&kept).map(|(m, (_, l))| (m, l.as_slice())).collect();
    let (network, mlp_log) = mlp_train(&pairs, classes, &cfg.mlp)?;
    let priors = StatePriors::from_labels(kept.iter().flat_map(|(_, l)| l.iter()), classes)?;
    model.scorer = Scorer::Mlp { network, priors };
    Ok((model, TrainLog { gmm: gmm_log, mlp: mlp_log, labels }))
}

/// Decodes every utterance; results keep corpus order.
pub fn decode_corpus<T: Real>(model: &EmotionModel, corpus: &[Utterance<'_, T>]) -> Vec<Result<Decoded>> {
    corpus.par_iter().map(|u| model.decode(u.features)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub speaker: String,
    /// Corpus indices of the held-out utterances.
    pub test: Vec<usize>,
    pub train_count: usize,
    pub predictions: Vec<usize>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<Fold>,
    pub mean_wa: f64,
    pub std_wa: f64,
    pub mean_uwa: f64,
    pub std_uwa: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Leave-one-speaker-out cross-validation; folds follow sorted speaker ids.
/// Aggregates are the mean and sample standard deviation over folds.
pub fn cross_validate<T: Real>(corpus: &[Utterance<'_, T>], cfg: &ClassifierConfig) -> Result<CrossValidation> {
    let mut speakers: Vec<&str> = corpus.iter().map(|u| u.speaker).collect();
    speakers.sort_unstable();
    speakers.dedup();
    if speakers.len() < 2 {
        return Err(Error::InsufficientSpeakers(speakers.len()));
    }
    let classes = cfg.emotions.len();
    let folds = speakers
        .iter()
        .map(|&spk| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| corpus[i].speaker == spk);
            let train_set: Vec<Utterance<'_, T>> = train.iter().map(|&i| corpus[i]).collect();
            let (model, _) = train_model(&train_set, cfg)?;
            let test_set: Vec<Utterance<'_, T>> = test.iter().map(|&i| corpus[i]).collect();
            let mut predictions = Vec::with_capacity(test.len());
            let mut truths = Vec::with_capacity(test.len());
            for (u, d) in test_set.iter().zip(decode_corpus(&model, &test_set)) {
                match d {
                    Ok(d) => {
                        predictions.push(d.emotion);
                        truths.push(u.emotion);
                    }
                    Err(e) => log::warn!("speaker {spk}: skipping an undecodable utterance: {e}"),
                }
            }
            let metrics = evaluate(&predictions, &truths, classes)?;
            log::info!("fold {spk}: WA {:.2} UWA {:.2}", metrics.wa, metrics.uwa);
            Ok(Fold { speaker: spk.to_string(), test, train_count: train.len(), predictions, metrics })
        })
        .collect::<Result<Vec<Fold>>>()?;
    let (mean_wa, std_wa) = mean_std(&folds.iter().map(|f| f.metrics.wa).collect::<Vec<_>>());
    let (mean_uwa, std_uwa) = mean_std(&folds.iter().map(|f| f.metrics.uwa).collect::<Vec<_>>());
    Ok(CrossValidation { folds, mean_wa, std_wa, mean_uwa, std_uwa })
}
