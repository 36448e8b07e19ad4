//! Spectral helpers for receive processing.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn spectrum(x: &[f64], n: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

fn inverse(mut buf: Vec<Complex<f64>>, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let n = buf.len();
    planner.plan_fft_inverse(n).process(&mut buf);
    let k = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= k);
    buf
}

/// Raised-cosine passband gain at frequency `f`: unity on `[lo, hi]`,
/// tapering to zero over `taper` on either side.
fn band_gain(f: f64, lo: f64, hi: f64, taper: f64) -> f64 {
    let f = f.abs();
    if f >= lo && f <= hi {
        1.0
    } else if f < lo && f > lo - taper {
        0.5 * (1.0 + (std::f64::consts::PI * (lo - f) / taper).cos())
    } else if f > hi && f < hi + taper {
        0.5 * (1.0 + (std::f64::consts::PI * (f - hi) / taper).cos())
    } else {
        0.0
    }
}

/// Zero-phase band-pass with flat response over `[lo, hi]` MHz and raised
/// cosine skirts of width `taper`. `fs` in MHz.
pub fn bandpass(x: &[f64], fs: f64, lo: f64, hi: f64, taper: f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = (2 * x.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut s = spectrum(x, n, &mut planner);
    for (k, c) in s.iter_mut().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } * fs / n as f64;
        *c *= band_gain(f, lo, hi, taper);
    }
    inverse(s, &mut planner).iter().take(x.len()).map(|c| c.re).collect()
}

/// Magnitude of the analytic signal.
pub fn envelope(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = (2 * x.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut s = spectrum(x, n, &mut planner);
    for (k, c) in s.iter_mut().enumerate() {
        if k == 0 || k == n / 2 {
            continue;
        }
        *c *= if k < n / 2 { 2.0 } else { 0.0 };
    }
    inverse(s, &mut planner).iter().take(x.len()).map(|c| c.norm()).collect()
}

/// First and last indices where `env` reaches `fraction` of its peak.
pub fn threshold_window(env: &[f64], fraction: f64) -> Option<(usize, usize)> {
    let peak = env.iter().fold(0.0f64, |m, v| m.max(*v));
    if !(peak > 0.0) {
        return None;
    }
    let t = fraction * peak;
    let first = env.iter().position(|v| *v >= t)?;
    let last = env.iter().rposition(|v| *v >= t)?;
    Some((first, last))
}

/// Full cross-correlation `c[d] = Σ a[i] b[i + d]` for `d ∈ [−(len a − 1), len b − 1]`,
/// returned with offset `len a − 1`.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let n = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let sa = spectrum(a, n, &mut planner);
    let sb = spectrum(b, n, &mut planner);
    let prod = sa.iter().zip(&sb).map(|(x, y)| x.conj() * y).collect();
    let c = inverse(prod, &mut planner);
    let (la, lb) = (a.len() as i64, b.len() as i64);
    (-(la - 1)..lb).map(|d| c[d.rem_euclid(n as i64) as usize].re).collect()
}

/// Lag (samples, fractional) maximising `Σ a[i] b[i + d]`, refined by a
/// parabola through the peak and its neighbours.
pub fn peak_lag(a: &[f64], b: &[f64]) -> Option<f64> {
    let c = cross_correlation(a, b);
    let (k, &v) = c.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1))?;
    if !(v > 0.0) {
        return None;
    }
    let off = a.len() as f64 - 1.0;
    let mut frac = 0.0;
    if k > 0 && k + 1 < c.len() {
        let (l, r) = (c[k - 1], c[k + 1]);
        let den = l - 2.0 * v + r;
        if den < 0.0 {
            frac = (0.5 * (l - r) / den).clamp(-0.5, 0.5);
        }
    }
    Some(k as f64 + frac - off)
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn burst(n: usize, f: f64, fs: f64, delay: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for k in 0..200 {
            v[delay + k] = (2.0 * PI * f * k as f64 / fs).sin() * (PI * k as f64 / 200.0).sin();
        }
        v
    }

    #[test]
    fn bandpass_keeps_carrier_and_rejects_dc() {
        let fs = 57.0;
        let x: Vec<f64> = (0..2000).map(|k| 1.0 + (2.0 * PI * 1.5 * k as f64 / fs).sin()).collect();
        let y = bandpass(&x, fs, 0.9, 2.1, 0.3);
        let mid = &y[500..1500];
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(mean.abs() < 0.02);
        assert!((amp - 1.0).abs() < 0.03);
    }

    #[test]
    fn envelope_of_sine() {
        let x: Vec<f64> = (0..4000).map(|k| 2.0 * (2.0 * PI * 0.05 * k as f64).cos()).collect();
        let e = envelope(&x);
        for v in &e[1000..3000] {
            assert!((v - 2.0).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn lag_recovers_shift() {
        let a = burst(800, 1.5, 57.0, 100);
        let b = burst(800, 1.5, 57.0, 137);
        assert!((peak_lag(&a, &b).unwrap() - 37.0).abs() < 1e-6);
        assert!((peak_lag(&b, &a).unwrap() + 37.0).abs() < 1e-6);
    }

    #[test]
    fn window_and_median() {
        let env = [0.0, 0.05, 0.5, 1.0, 0.3, 0.09, 0.0];
        assert_eq!(threshold_window(&env, 0.1), Some((2, 4)));
        assert_eq!(threshold_window(&[0.0; 4], 0.1), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
