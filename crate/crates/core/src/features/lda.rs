use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{FeatureLayout, FeatureMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Scatter statistics for Fisher LDA. Accumulators over disjoint data can
/// be merged in any order.
#[derive(Debug, Clone)]
pub struct LdaAccumulator {
    dims: usize,
    counts: Vec<usize>,
    class_sums: Vec<DVector<f64>>,
    /// Sum of `x x^T` over all frames.
    scatter: DMatrix<f64>,
}

impl LdaAccumulator {
    pub fn new(dims: usize, classes: usize) -> Self {
        Self {
            dims,
            counts: vec![0; classes],
            class_sums: vec![DVector::zeros(dims); classes],
            scatter: DMatrix::zeros(dims, dims),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn frames(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Adds every frame of `m` with its class label.
    pub fn add<T: Real>(&mut self, m: &FeatureMatrix<T>, labels: &[usize]) -> Result<()> {
        if m.dims() != self.dims {
            return Err(Error::DimensionMismatch { expected: self.dims, got: m.dims() });
        }
        if labels.len() != m.frames() {
            return Err(Error::LengthMismatch(labels.len(), m.frames()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.classes()) {
            return Err(Error::InvalidLabel { label, classes: self.classes() });
        }
        if m.frames() == 0 {
            return Ok(());
        }
        let x = DMatrix::from_row_iterator(m.frames(), self.dims, m.values().iter().map(|v| v.to_f64_lossy()));
        self.scatter.gemm_tr(1.0, &x, &x, 1.0);
        for (t, &l) in labels.iter().enumerate() {
            self.counts[l] += 1;
            self.class_sums[l] += x.row(t).transpose();
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &LdaAccumulator) -> Result<()> {
        if other.dims != self.dims || other.classes() != self.classes() {
            return Err(Error::DimensionMismatch { expected: self.dims, got: other.dims });
        }
        self.scatter += &other.scatter;
        for c in 0..self.classes() {
            self.counts[c] += other.counts[c];
            self.class_sums[c] += &other.class_sums[c];
        }
        Ok(())
    }

    /// Within- and between-class scatter, both divided by the frame count,
    /// and the global mean.
    fn scatters(&self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let n = self.frames() as f64;
        let mean = self.class_sums.iter().fold(DVector::zeros(self.dims), |a, s| a + s) / n;
        let mut sw = self.scatter.clone();
        let mut sb = DMatrix::zeros(self.dims, self.dims);
        for (sum, &count) in self.class_sums.iter().zip(&self.counts) {
            if count == 0 {
                continue;
            }
            let mu = sum / count as f64;
            sw.ger(-(count as f64), &mu, &mu, 1.0);
            let d = &mu - &mean;
            sb.ger(count as f64, &d, &d, 1.0);
        }
        sw /= n;
        sb /= n;
        // Symmetrize away rounding from the rank-one updates.
        let sw = (&sw + sw.transpose()) * 0.5;
        (sw, sb, mean)
    }
}

/// Projection onto the leading Fisher discriminant directions.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaTransform {
    /// `lda_dim x input_dim`, row-major.
    pub matrix: Vec<f64>,
    /// Subtracted before projecting.
    pub mean: Vec<f64>,
    pub class_count: usize,
    pub input_dim: usize,
    pub lda_dim: usize,
    /// Generalized eigenvalues of the kept directions, descending.
    pub eigenvalues: Vec<f64>,
}

impl LdaTransform {
    /// Eigenvectors of `(S_w + lambda I)^-1 S_b` with
    /// `lambda = 1e-4 trace(S_w) / input_dim`, via Cholesky whitening.
    pub fn fit(acc: &LdaAccumulator, lda_dim: usize) -> Result<Self> {
        if let Some(c) = acc.counts.iter().position(|&n| n == 0) {
            return Err(Error::MissingClass(c.to_string()));
        }
        if acc.classes() < 2 {
            return Err(Error::MissingClass(format!("need at least 2 classes, got {}", acc.classes())));
        }
        let d = acc.dims;
        if lda_dim == 0 || lda_dim > d {
            return Err(Error::InvalidConfig(format!("lda-dim must lie in 1..={d}, got {lda_dim}")));
        }
        if lda_dim > acc.classes() - 1 {
            log::warn!(
                "lda-dim {lda_dim} exceeds the between-class rank {}; trailing directions come from the regularized within-class spectrum",
                acc.classes() - 1
            );
        }
        if acc.frames() <= d {
            log::warn!("LDA fit on {} frames for {d} dimensions relies on regularization", acc.frames());
        }
        let (mut sw, sb, mean) = acc.scatters();
        let lambda = (1e-4 * sw.trace() / d as f64).max(1e-12);
        for i in 0..d {
            sw[(i, i)] += lambda;
        }
        let chol = sw.cholesky().ok_or_else(|| Error::InvalidConfig("within-class scatter is not positive definite".into()))?;
        let l = chol.l();
        // M = L^-1 S_b L^-T
        let a = l.solve_lower_triangular(&sb).expect("triangular factor is nonsingular");
        let m = l.solve_lower_triangular(&a.transpose()).expect("triangular factor is nonsingular");
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let lt = l.transpose();
        let mut matrix = Vec::with_capacity(lda_dim * d);
        let mut eigenvalues = Vec::with_capacity(lda_dim);
        for &k in order.iter().take(lda_dim) {
            let v = eig.eigenvectors.column(k).into_owned();
            let mut w = lt.solve_upper_triangular(&v).expect("triangular factor is nonsingular");
            // Fix the sign so the largest component is positive.
            let imax = w.iamax();
            if w[imax] < 0.0 {
                w = -w;
            }
            matrix.extend(w.iter());
            eigenvalues.push(eig.eigenvalues[k]);
        }
        Ok(Self { matrix, mean: mean.iter().copied().collect(), class_count: acc.classes(), input_dim: d, lda_dim, eigenvalues })
    }

    /// Convenience fit from labelled matrices.
    pub fn fit_labelled<T: Real>(data: &[(&FeatureMatrix<T>, &[usize])], classes: usize, lda_dim: usize) -> Result<Self> {
        let dims = data.first().map_or(0, |(m, _)| m.dims());
        let mut acc = LdaAccumulator::new(dims, classes);
        for (m, l) in data {
            acc.add(m, l)?;
        }
        Self::fit(&acc, lda_dim)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.matrix[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn apply<T: Real>(&self, m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if m.dims() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: m.dims() });
        }
        let mut values = Vec::with_capacity(m.frames() * self.lda_dim);
        let mut centered = vec![0.0; self.input_dim];
        for row in m.rows() {
            for ((c, v), mu) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v.to_f64_lossy() - mu;
            }
            for k in 0..self.lda_dim {
                values.push(T::lit(self.row(k).iter().zip(&centered).map(|(a, b)| a * b).sum()));
            }
        }
        FeatureMatrix::new(FeatureLayout::Lda, m.frames(), self.lda_dim, values)
    }
}
