use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    /// Epochs over which the rate falls linearly to `final_learning_rate`.
    pub decay_epochs: usize,
    /// Further epochs at `final_learning_rate`.
    pub extra_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512; 5],
            learning_rate: 0.005,
            final_learning_rate: 0.0005,
            decay_epochs: 25,
            extra_epochs: 20,
            batch_size: 512,
            seed: 1,
        }
    }
}

impl MlpConfig {
    /// Two hidden layers of 64 units.
    pub fn desk() -> Self {
        Self { hidden: vec![64, 64], ..Self::default() }
    }

    pub fn epochs(&self) -> usize {
        self.decay_epochs + self.extra_epochs
    }

    /// Learning rate of 1-based epoch `k`.
    pub fn learning_rate_at(&self, k: usize) -> f64 {
        if k >= self.decay_epochs {
            return self.final_learning_rate;
        }
        let f = (k.max(1) - 1) as f64 / (self.decay_epochs - 1) as f64;
        self.learning_rate + (self.final_learning_rate - self.learning_rate) * f
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.batch_size == 0 || self.epochs() == 0 {
            return Err(Error::InvalidConfig("mlp: hidden sizes, batch size and epoch count must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return Err(Error::InvalidConfig("mlp: learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Feed-forward network with logistic hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// `out x in` per layer.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Parameter gradients laid out like [`MlpModel`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpEpoch {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-frame cross-entropy seen during the epoch.
    pub cross_entropy: f64,
    pub frame_accuracy: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Column-wise log-softmax in place.
fn log_softmax_columns(z: &mut DMatrix<f64>) {
    for mut col in z.column_iter_mut() {
        let m = col.max();
        let lse = m + col.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        col.iter_mut().for_each(|v| *v -= lse);
    }
}

impl MlpModel {
    /// Uniform Glorot initialization, widened fourfold for logistic layers.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, w) in sizes.windows(2).enumerate() {
            let (i, o) = (w[0], w[1]);
            let gain = if l + 2 < sizes.len() { 4.0 } else { 1.0 };
            let r = gain * (6.0 / (i + o) as f64).sqrt();
            weights.push(DMatrix::from_fn(o, i, |_, _| rng.random_range(-r..r)));
            biases.push(DVector::zeros(o));
        }
        Ok(Self { weights, biases })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].ncols()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("at least one layer").nrows()
    }

    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.clone());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().expect("input pushed");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = sigmoid(*v));
            } else {
                log_softmax_columns(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Log posteriors, one column per input column.
    pub fn log_posteriors_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward(x).pop().expect("output layer")
    }

    /// `frames x classes` log posteriors, row-major.
    pub fn log_posteriors<T: Real>(&self, m: &FeatureMatrix<T>) -> Result<Vec<f64>> {
        if m.dims() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: m.dims() });
        }
        let x = DMatrix::from_iterator(m.dims(), m.frames(), m.values().iter().map(|v| v.to_f64_lossy()));
        let out = self.log_posteriors_columns(&x);
        Ok(out.iter().copied().collect())
    }

    /// Summed cross-entropy of `x` (one frame per column) and its gradient.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.backprop(x, labels).map(|(l, _, g)| (l, g))
    }

    /// Loss, count of frames whose argmax matches the label, gradients.
    fn backprop(&self, x: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, usize, Gradients)> {
        let classes = self.output_dim();
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label: l, classes });
        }
        if labels.len() != x.ncols() {
            return Err(Error::LengthMismatch(labels.len(), x.ncols()));
        }
        let acts = self.forward(x);
        let logp = acts.last().expect("output layer");
        let loss = -labels.iter().enumerate().map(|(c, &l)| logp[(l, c)]).sum::<f64>();
        let correct = labels.iter().enumerate().filter(|(c, &l)| logp.column(*c).imax() == l).count();
        let mut delta = logp.map(f64::exp);
        for (c, &l) in labels.iter().enumerate() {
            delta[(l, c)] -= 1.0;
        }
        let n = self.weights.len();
        let mut gw = vec![DMatrix::zeros(0, 0); n];
        let mut gb = vec![DVector::zeros(0); n];
        for l in (0..n).rev() {
            gw[l] = &delta * acts[l].transpose();
            gb[l] = delta.column_sum();
            if l > 0 {
                let mut back = self.weights[l].tr_mul(&delta);
                back.zip_apply(&acts[l], |d, a| *d *= a * (1.0 - a));
                delta = back;
            }
        }
        Ok((loss, correct, Gradients { weights: gw, biases: gb }))
    }

    fn step(&mut self, g: &Gradients, lr: f64) {
        for (w, d) in self.weights.iter_mut().zip(&g.weights) {
            w.zip_apply(d, |a, g| *a -= lr * g);
        }
        for (b, d) in self.biases.iter_mut().zip(&g.biases) {
            b.zip_apply(d, |a, g| *a -= lr * g);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Analytic vs central-difference gradients for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerCheck {
    /// Largest `|a - n| / max(|a|, |n|)` over entries of magnitude at least
    /// the `min_magnitude` given to [`gradient_check`].
    pub max_relative: f64,
    /// Largest `|a - n|` over the remaining, smaller entries.
    pub max_absolute: f64,
    pub resolved: usize,
    pub unresolved: usize,
}

/// Rounding noise of a central difference with step `eps` on a loss of
/// magnitude `loss`, taking a few ulps of error per evaluation.
pub fn difference_resolution(loss: f64, eps: f64) -> f64 {
    16.0 * f64::EPSILON * loss.abs().max(1.0) / eps
}

/// Compares analytic gradients with central differences over every weight
/// and bias, layer by layer. Entries below `min_magnitude` cannot be
/// resolved to a relative precision by the difference quotient, so they are
/// reported by absolute error instead.
pub fn gradient_check(
    model: &MlpModel,
    x: &DMatrix<f64>,
    labels: &[usize],
    eps: f64,
    min_magnitude: f64,
) -> Result<Vec<LayerCheck>> {
    let (_, g) = model.loss_and_gradients(x, labels)?;
    let loss = |m: &MlpModel| m.loss_and_gradients(x, labels).map(|r| r.0);
    let mut out = Vec::with_capacity(model.weights.len());
    let mut probe = model.clone();
    for l in 0..model.weights.len() {
        let mut c = LayerCheck { max_relative: 0.0, max_absolute: 0.0, resolved: 0, unresolved: 0 };
        let mut record = |a: f64, n: f64| {
            let scale = a.abs().max(n.abs());
            if scale >= min_magnitude && scale > 0.0 {
                c.max_relative = c.max_relative.max((a - n).abs() / scale);
                c.resolved += 1;
            } else {
                c.max_absolute = c.max_absolute.max((a - n).abs());
                c.unresolved += 1;
            }
        };
        for idx in 0..model.weights[l].len() {
            let orig = probe.weights[l][idx];
            probe.weights[l][idx] = orig + eps;
            let up = loss(&probe)?;
            probe.weights[l][idx] = orig - eps;
            let down = loss(&probe)?;
            probe.weights[l][idx] = orig;
            record(g.weights[l][idx], (up - down) / (2.0 * eps));
        }
        for idx in 0..model.biases[l].len() {
            let orig = probe.biases[l][idx];
            probe.biases[l][idx] = orig + eps;
            let up = loss(&probe)?;
            probe.biases[l][idx] = orig - eps;
            let down = loss(&probe)?;
            probe.biases[l][idx] = orig;
            record(g.biases[l][idx], (up - down) / (2.0 * eps));
        }
        out.push(c);
    }
    Ok(out)
}

/// Mini-batch SGD on frame cross-entropy.
///
/// Gradients are summed over each mini-batch, so the learning rate is a
/// per-frame step. Frames are reshuffled every epoch from `cfg.seed`.
pub fn mlp_train<T: Real>(
    data: &[(&FeatureMatrix<T>, &[usize])],
    classes: usize,
    cfg: &MlpConfig,
) -> Result<(MlpModel, Vec<MlpEpoch>)> {
    cfg.validate()?;
    let dims = data.first().map(|(m, _)| m.dims()).ok_or(Error::EmptyUtterance)?;
    let mut columns: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (m, l) in data {
        if m.dims() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: m.dims() });
        }
        if m.frames() != l.len() {
            return Err(Error::LengthMismatch(m.frames(), l.len()));
        }
        if let Some(&bad) = l.iter().find(|&&v| v >= classes) {
            return Err(Error::InvalidLabel { label: bad, classes });
        }
        columns.extend(m.values().iter().map(|v| v.to_f64_lossy()));
        labels.extend_from_slice(l);
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyUtterance);
    }
    let all = DMatrix::from_vec(dims, n, columns);
    let mut sizes = vec![dims];
    sizes.extend(&cfg.hidden);
    sizes.push(classes);
    let mut model = MlpModel::new(&sizes, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs());
    for epoch in 1..=cfg.epochs() {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let x = all.select_columns(batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (l, c, g) = model.backprop(&x, &y)?;
            correct += c;
            loss += l;
            model.step(&g, lr);
        }
        if !model.is_finite() {
            return Err(Error::InvalidConfig(format!("mlp training diverged in epoch {epoch}; lower the learning rate")));
        }
        log.push(MlpEpoch { epoch, learning_rate: lr, cross_entropy: loss / n as f64, frame_accuracy: correct as f64 / n as f64 });
    }
    Ok((model, log))
}
