//! Per-emotion left-to-right HMMs with GMM or MLP observation scoring.

mod container;
mod gmm;
mod hmm;
mod mlp;
mod model;
mod scoring;

pub use container::{read_model, read_model_file, write_model, write_model_file, EMHM_MAGIC, EMHM_VERSION};
pub use gmm::{align_states, gmm_hmm_train, GmmHmm, GmmIteration, GmmState, GmmTrainConfig, VARIANCE_FLOOR};
pub use hmm::{viterbi, viterbi_with_exit, HmmTopology, DEFAULT_EMOTIONS, STATES_PER_EMOTION};
pub use mlp::{difference_resolution, gradient_check, mlp_train, Gradients, LayerCheck, MlpConfig, MlpEpoch, MlpModel};
pub use model::{
    cross_validate, decode_corpus, train_model, Backend, ClassifierConfig, CrossValidation, EmotionModel, Fold, Scorer,
    TrainLog,
};
pub use scoring::{decode, evaluate, scaled_loglik, unweighted_average, Decoded, Metrics, StatePriors};

use crate::features::FeatureMatrix;

/// One labelled utterance of a training or test corpus.
#[derive(Debug)]
pub struct Utterance<'a, T> {
    pub features: &'a FeatureMatrix<T>,
    /// Index into the topology's emotion list.
    pub emotion: usize,
    pub speaker: &'a str,
}

impl<T> Clone for Utterance<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Utterance<'_, T> {}

impl<'a, T> Utterance<'a, T> {
    pub fn new(features: &'a FeatureMatrix<T>, emotion: usize) -> Self {
        Self { features, emotion, speaker: "" }
    }

    pub fn with_speaker(self, speaker: &'a str) -> Self {
        Self { speaker, ..self }
    }
}
