use super::window::hamming;
use crate::scalar::Real;

/// Predictor coefficients `a[1..=order]` (so that
/// `x[n] ~ sum_k a[k] x[n-k]`) from the autocorrelation method with
/// Levinson-Durbin recursion. Returns zeros for a silent frame.
pub fn lpc_coefficients<T: Real>(frame: &[T], order: usize) -> Vec<T> {
    let n = frame.len();
    let r: Vec<f64> = (0..=order)
        .map(|lag| {
            if lag >= n {
                return 0.0;
            }
            frame[..n - lag].iter().zip(&frame[lag..]).map(|(a, b)| a.to_f64_lossy() * b.to_f64_lossy()).sum()
        })
        .collect();
    let mut a = vec![0.0f64; order + 1];
    if r[0] <= 0.0 {
        return vec![T::zero(); order];
    }
    // Slight lag-zero lift keeps the recursion stable on near-singular frames.
    let mut err = r[0] * (1.0 + 1e-9);
    for i in 1..=order {
        let mut acc = r[i];
        for j in 1..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        let prev = a.clone();
        a[i] = k;
        for j in 1..i {
            a[j] = prev[j] - k * prev[i - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    a[1..].iter().map(|&v| T::lit(v)).collect()
}

/// Linear-prediction residual of `x` using coefficients re-estimated on
/// Hamming-windowed frames of `frame_len` samples every `hop` samples; each
/// hop is inverse-filtered with the frame centered on it.
pub fn lp_residual<T: Real>(x: &[T], order: usize, frame_len: usize, hop: usize) -> Vec<T> {
    let n = x.len();
    let mut out = vec![T::zero(); n];
    if n == 0 || hop == 0 || frame_len == 0 {
        return out;
    }
    let win: Vec<T> = hamming(frame_len);
    let mut frame = vec![T::zero(); frame_len];
    let mut start = 0;
    while start < n {
        let end = (start + hop).min(n);
        let center = (start + end) / 2;
        let f0 = center as isize - (frame_len / 2) as isize;
        for (i, f) in frame.iter_mut().enumerate() {
            let idx = f0 + i as isize;
            *f = if (0..n as isize).contains(&idx) { x[idx as usize] * win[i] } else { T::zero() };
        }
        let a = lpc_coefficients(&frame, order);
        for t in start..end {
            let mut pred = T::zero();
            for (k, &ak) in a.iter().enumerate() {
                if t > k {
                    pred += ak * x[t - k - 1];
                }
            }
            out[t] = x[t] - pred;
        }
        start = end;
    }
    out
}
