use super::Kernel;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// First difference `y[n] = s[n] - s[n-1]` with `s[-1] = 0`.
pub fn difference<T: Real>(s: &[T]) -> Result<Vec<T>> {
    if s.is_empty() {
        return Err(Error::EmptySignal);
    }
    let mut out = Vec::with_capacity(s.len());
    out.push(s[0]);
    out.extend(s.windows(2).map(|w| w[1] - w[0]));
    Ok(out)
}

/// Centered moving average of odd `width`; the window shrinks at the edges.
pub fn mean_smooth<T: Real>(x: &[T], width: usize) -> Result<Vec<T>> {
    if width == 0 || width.is_multiple_of(2) {
        return Err(Error::InvalidWidth(width));
    }
    Ok(moving_average(x, width / 2))
}

/// Centered moving average over `[n - half, n + half]`, truncated at the
/// signal boundaries. Sums are formed directly per output sample so that
/// large-magnitude inputs do not accumulate running-sum drift.
pub fn moving_average<T: Real>(x: &[T], half: usize) -> Vec<T> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let s: T = x[lo..hi].iter().copied().sum();
            s / T::from_usize_lossy(hi - lo)
        })
        .collect()
}

/// Unit-sum Gaussian smoothing kernel for a nominal length `len`.
///
/// The standard deviation is `len / 4`. Taps sit at integer offsets
/// `-len/2 ..= len/2` around the center, so the kernel is exactly symmetric
/// and an even `len` yields `len + 1` taps.
pub fn gaussian_kernel<T: Real>(len: usize) -> Result<Kernel<T>> {
    if len == 0 {
        return Err(Error::InvalidLength { got: 0, reason: "Gaussian kernel needs L >= 1" });
    }
    let sigma = len as f64 / 4.0;
    let half = (len / 2) as i64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let raw: Vec<f64> = (-half..=half)
        .map(|n| norm * (-((n * n) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    // Pairwise-symmetric summation keeps the normalized taps mirror-exact.
    let total: f64 = raw.iter().sum();
    let coefficients = raw.iter().map(|&g| T::lit(g / total)).collect();
    Ok(Kernel { coefficients })
}

/// Linear convolution cropped to the input length, center aligned on
/// [`Kernel::center`], with zeros outside the input.
pub fn convolve_same<T: Real>(x: &[T], k: &Kernel<T>) -> Vec<T> {
    let n = x.len() as isize;
    let c = k.center() as isize;
    (0..n)
        .map(|i| {
            let mut acc = T::zero();
            for (j, &kj) in k.coefficients.iter().enumerate() {
                let idx = i + c - j as isize;
                if (0..n).contains(&idx) {
                    acc += kj * x[idx as usize];
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&[2.0f64, 2.0, 2.0, 2.0]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(difference(&[0.0f64, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, -1.0]);
        assert_eq!(difference::<f64>(&[]), Err(Error::EmptySignal));
        let fs = 16000.0;
        let ramp: Vec<f64> = (0..100).map(|n| n as f64 / fs).collect();
        let d = difference(&ramp).unwrap();
        for v in &d[1..] {
            assert!((v - 1.0 / fs).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_examples() {
        let c = vec![0.7f64; 9];
        for v in mean_smooth(&c, 5).unwrap() {
            assert!((v - 0.7).abs() < 1e-15);
        }
        let d = mean_smooth(&[0.0f64, 0.0, 1.0, 0.0, 0.0], 5).unwrap();
        assert!((d[2] - 0.2).abs() < 1e-15);
        let ramp: Vec<f64> = (0..20).map(|n| n as f64).collect();
        let r = mean_smooth(&ramp, 5).unwrap();
        for i in 2..18 {
            assert!((r[i] - ramp[i]).abs() < 1e-12);
        }
        assert_eq!(mean_smooth(&ramp, 4), Err(Error::InvalidWidth(4)));
        assert_eq!(mean_smooth(&ramp, 0), Err(Error::InvalidWidth(0)));
    }

    #[test]
    fn gaussian_examples() {
        let k = gaussian_kernel::<f64>(1).unwrap();
        assert_eq!(k.coefficients, vec![1.0]);
        let k = gaussian_kernel::<f64>(32).unwrap();
        let ratio = k[k.center()] / k[0];
        assert!((ratio - std::f64::consts::E.powi(2)).abs() < 1e-9);
        assert!(gaussian_kernel::<f64>(0).is_err());
    }

    #[test]
    fn convolution_examples() {
        let x = vec![1.0f64, -2.0, 3.0, 0.5];
        let id = Kernel { coefficients: vec![1.0] };
        assert_eq!(convolve_same(&x, &id), x);
        let k = Kernel { coefficients: vec![0.25, 0.5, 0.25] };
        let mut delta = vec![0.0f64; 7];
        delta[3] = 1.0;
        assert_eq!(convolve_same(&delta, &k), vec![0.0, 0.0, 0.25, 0.5, 0.25, 0.0, 0.0]);
        let g = gaussian_kernel::<f64>(9).unwrap();
        let c = vec![3.0f64; 50];
        let y = convolve_same(&c, &g);
        for v in &y[5..45] {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn difference_inverts_cumsum(x in proptest::collection::vec(-1.0f64..1.0, 1..200)) {
            let mut acc = 0.0;
            let cs: Vec<f64> = x.iter().map(|v| { acc += v; acc }).collect();
            let d = difference(&cs).unwrap();
            for (a, b) in d.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn gaussian_unit_sum_and_symmetric(len in 1usize..400) {
            let k = gaussian_kernel::<f64>(len).unwrap();
            prop_assert!((k.sum() - 1.0).abs() < 1e-12);
            let n = k.len();
            for i in 0..n {
                prop_assert!((k[i] - k[n - 1 - i]).abs() < 1e-12);
                prop_assert!(k[i] > 0.0);
            }
        }
    }
}
