use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::RealSpectrum;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Guard below which the cosine phase is reported as zero.
pub const ENVELOPE_EPS: f64 = 1e-12;

/// Forward DFT of `x` zero-padded to `n_fft`. Returns full-length real and
/// imaginary parts.
pub fn dft_real<T: Real>(x: &[T], n_fft: usize) -> Result<(RealSpectrum<T>, RealSpectrum<T>)> {
    if n_fft == 0 || n_fft < x.len() {
        return Err(Error::InvalidLength { got: n_fft, reason: "n_fft must be >= 1 and >= input length" });
    }
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    buf.resize(n_fft, Complex::new(T::zero(), T::zero()));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let re = buf.iter().map(|c| c.re).collect();
    let im = buf.iter().map(|c| c.im).collect();
    Ok((RealSpectrum::full(re), RealSpectrum::full(im)))
}

/// Inverse of [`dft_real`]: real part of the normalized inverse transform.
pub fn idft_real<T: Real>(re: &RealSpectrum<T>, im: &RealSpectrum<T>) -> Result<Vec<T>> {
    let n = re.bins.len();
    if n == 0 || im.bins.len() != n {
        return Err(Error::LengthMismatch(n, im.bins.len()));
    }
    let mut buf: Vec<Complex<T>> =
        re.bins.iter().zip(&im.bins).map(|(&r, &i)| Complex::new(r, i)).collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = T::one() / T::from_usize_lossy(n);
    Ok(buf.iter().map(|c| c.re * scale).collect())
}

/// Planned Hilbert transform for one block length, with reusable buffers.
///
/// Implements the multiplier `-j` on positive and `+j` on negative
/// frequencies; DC and (for even lengths) Nyquist are zeroed.
pub struct HilbertTransformer<T: Real> {
    n: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    buf: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> HilbertTransformer<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidLength { got: n, reason: "Hilbert transform needs >= 2 samples" });
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        let zero = Complex::new(T::zero(), T::zero());
        Ok(Self { n, fwd, inv, buf: vec![zero; n], scratch: vec![zero; scratch_len] })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Fills `self.buf` with `x + j H{x}`.
    fn analytic(&mut self, x: &[T]) {
        assert_eq!(x.len(), self.n, "block length mismatch");
        for (b, &v) in self.buf.iter_mut().zip(x) {
            *b = Complex::new(v, T::zero());
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        // Spectrum of x + jH{x}: DC and Nyquist kept once, positive
        // frequencies doubled, negative frequencies removed.
        let n = self.n;
        let two = T::lit(2.0);
        let zero = Complex::new(T::zero(), T::zero());
        let nyq = if n.is_multiple_of(2) { Some(n / 2) } else { None };
        for k in 1..n {
            if Some(k) == nyq {
                continue;
            }
            if k < n.div_ceil(2) {
                self.buf[k] = self.buf[k] * two;
            } else {
                self.buf[k] = zero;
            }
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = T::one() / T::from_usize_lossy(n);
        for b in self.buf.iter_mut() {
            *b = *b * scale;
        }
    }

    /// Hilbert transform of `x` into `out`.
    pub fn transform(&mut self, x: &[T], out: &mut [T]) {
        self.analytic(x);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.im;
        }
    }

    /// Hilbert envelope `sqrt(x^2 + x_h^2)` of `x` into `env`.
    pub fn envelope(&mut self, x: &[T], env: &mut [T]) {
        self.analytic(x);
        for ((e, b), &v) in env.iter_mut().zip(&self.buf).zip(x) {
            *e = (v * v + b.im * b.im).sqrt();
        }
    }

    /// Envelopes of two blocks from one forward and one inverse transform:
    /// the Hilbert multiplier is real-linear, so transforming `a + j b`
    /// yields `H{a} + j H{b}`.
    pub fn envelope_pair(&mut self, a: &[T], b: &[T], env_a: &mut [T], env_b: &mut [T]) {
        let n = self.n;
        assert!(a.len() == n && b.len() == n, "block length mismatch");
        for ((z, &x), &y) in self.buf.iter_mut().zip(a).zip(b) {
            *z = Complex::new(x, y);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        let zero = Complex::new(T::zero(), T::zero());
        let scale = T::one() / T::from_usize_lossy(n);
        self.buf[0] = zero;
        for k in 1..n {
            let z = self.buf[k];
            self.buf[k] = if 2 * k == n {
                zero
            } else if 2 * k < n {
                // -j z
                Complex::new(z.im, -z.re) * scale
            } else {
                Complex::new(-z.im, z.re) * scale
            };
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (i, z) in self.buf.iter().enumerate() {
            env_a[i] = (a[i] * a[i] + z.re * z.re).sqrt();
            env_b[i] = (b[i] * b[i] + z.im * z.im).sqrt();
        }
    }

    /// Envelope and `cos(phase) = x / envelope` (zero where the envelope is
    /// below 1e-12).
    pub fn envelope_and_cos_phase(&mut self, x: &[T], env: &mut [T], cos_phase: &mut [T]) {
        self.envelope(x, env);
        let eps = T::lit(ENVELOPE_EPS);
        for ((c, &e), &v) in cos_phase.iter_mut().zip(env.iter()).zip(x) {
            *c = if e < eps { T::zero() } else { (v / e).max(-T::one()).min(T::one()) };
        }
    }
}

pub fn hilbert_transform<T: Real>(x: &[T]) -> Result<Vec<T>> {
    let mut h = HilbertTransformer::new(x.len())?;
    let mut out = vec![T::zero(); x.len()];
    h.transform(x, &mut out);
    Ok(out)
}

/// Hilbert envelope and cosine of the analytic-signal phase of `x`.
pub fn analytic_envelope_and_cos_phase<T: Real>(x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let mut h = HilbertTransformer::new(x.len())?;
    let mut env = vec![T::zero(); x.len()];
    let mut cos = vec![T::zero(); x.len()];
    h.envelope_and_cos_phase(x, &mut env, &mut cos);
    Ok((env, cos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delta_and_dc() {
        let (re, im) = dft_real(&[1.0f64, 0.0, 0.0, 0.0], 4).unwrap();
        assert_eq!(re.bins, vec![1.0; 4]);
        assert_eq!(im.bins, vec![0.0; 4]);
        let (re, _) = dft_real(&[1.0f64; 4], 4).unwrap();
        let expected = [4.0, 0.0, 0.0, 0.0];
        for (a, b) in re.bins.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_short_n_fft() {
        assert!(dft_real(&[1.0f64; 8], 4).is_err());
        assert!(dft_real::<f64>(&[], 0).is_err());
    }

    #[test]
    fn envelope_of_cosine() {
        let fs = 16000.0;
        let x: Vec<f64> =
            (0..16000).map(|n| (2.0 * std::f64::consts::PI * 50.0 * n as f64 / fs).cos()).collect();
        let (env, cos) = analytic_envelope_and_cos_phase(&x).unwrap();
        let edge = x.len() / 20;
        for e in &env[edge..x.len() - edge] {
            assert!((e - 1.0).abs() < 1e-3);
        }
        assert!(cos.iter().all(|c| (-1.0..=1.0).contains(c)));
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let (env3, _) = analytic_envelope_and_cos_phase(&x3).unwrap();
        for e in &env3[edge..x.len() - edge] {
            assert!((e - 3.0).abs() < 3e-3);
        }
    }

    #[test]
    fn zero_input_gives_zero_phase() {
        let (env, cos) = analytic_envelope_and_cos_phase(&[0.0f64; 16]).unwrap();
        assert!(env.iter().all(|&e| e == 0.0));
        assert!(cos.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn hilbert_of_cosine_is_sine() {
        let n = 256;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).cos()).collect();
        let h = hilbert_transform(&x).unwrap();
        for (i, v) in h.iter().enumerate() {
            let s = (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).sin();
            assert!((v - s).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn paired_envelopes_match_single(
            a in proptest::collection::vec(-1.0f64..1.0, 64),
            b in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            let mut h = HilbertTransformer::new(64).unwrap();
            let (mut ea, mut eb, mut pa, mut pb) = (vec![0.0; 64], vec![0.0; 64], vec![0.0; 64], vec![0.0; 64]);
            h.envelope(&a, &mut ea);
            h.envelope(&b, &mut eb);
            h.envelope_pair(&a, &b, &mut pa, &mut pb);
            for i in 0..64 {
                prop_assert!((ea[i] - pa[i]).abs() < 1e-12 && (eb[i] - pb[i]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(x in proptest::collection::vec(-1.0f64..1.0, 1..300)) {
            let n_fft = x.len().next_power_of_two();
            let (re, im) = dft_real(&x, n_fft).unwrap();
            let back = idft_real(&re, &im).unwrap();
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for b in &back[x.len()..] {
                prop_assert!(b.abs() < 1e-9);
            }
            let e_time: f64 = x.iter().map(|v| v * v).sum();
            let e_freq: f64 = re.bins.iter().zip(&im.bins).map(|(r, i)| r * r + i * i).sum::<f64>() / n_fft as f64;
            prop_assert!((e_time - e_freq).abs() <= 1e-6 * e_time.max(1e-300));
        }

        #[test]
        fn hilbert_isometry_on_zero_mean(x in proptest::collection::vec(-1.0f64..1.0, 4..200)) {
            let n = x.len();
            // Remove DC and Nyquist content so the multiplier is unitary.
            let (mut re, mut im) = dft_real(&x, n).unwrap();
            re.bins[0] = 0.0; im.bins[0] = 0.0;
            if n % 2 == 0 { re.bins[n / 2] = 0.0; im.bins[n / 2] = 0.0; }
            let y = idft_real(&re, &im).unwrap();
            let h = hilbert_transform(&y).unwrap();
            let ey: f64 = y.iter().map(|v| v * v).sum();
            let eh: f64 = h.iter().map(|v| v * v).sum();
            prop_assert!((ey - eh).abs() <= 1e-6 * ey.max(1e-12));
        }
    }
}
