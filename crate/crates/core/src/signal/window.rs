use super::Kernel;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Zero-time window `h1[n] = 1 / (4 sin^2(pi n / N))`, `h1[0] = 0`.
///
/// Callers square it before applying it to a segment.
pub fn window_h1<T: Real>(n: usize) -> Result<Kernel<T>> {
    if n < 2 {
        return Err(Error::InvalidLength { got: n, reason: "h1 window needs N >= 2" });
    }
    let nf = n as f64;
    let mut coefficients = Vec::with_capacity(n);
    coefficients.push(T::zero());
    for i in 1..n {
        // Fold onto 1..=N/2 so that h1[i] == h1[N - i] bit for bit.
        let j = i.min(n - i) as f64;
        let s = (std::f64::consts::PI * j / nf).sin();
        coefficients.push(T::lit(1.0 / (4.0 * s * s)));
    }
    Ok(Kernel { coefficients })
}

/// Truncation taper `h2[n] = 4 cos^2(pi n / (2M))`, `n = 0..M-1`.
pub fn window_h2<T: Real>(m: usize) -> Result<Kernel<T>> {
    if m < 1 {
        return Err(Error::InvalidLength { got: m, reason: "h2 window needs M >= 1" });
    }
    let mf = m as f64;
    let coefficients = (0..m)
        .map(|i| {
            let c = (std::f64::consts::PI * i as f64 / (2.0 * mf)).cos();
            T::lit(4.0 * c * c)
        })
        .collect();
    Ok(Kernel { coefficients })
}

/// Symmetric Hann window.
pub fn hann<T: Real>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::one()];
    }
    let d = (n - 1) as f64;
    (0..n)
        .map(|i| T::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / d).cos()))
        .collect()
}

/// Symmetric Hamming window.
pub fn hamming<T: Real>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::one()];
    }
    let d = (n - 1) as f64;
    (0..n)
        .map(|i| T::lit(0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / d).cos()))
        .collect()
}
