//! Quadrature nodes and exponentially scaled modified Bessel functions.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

/// `e^{-s} I_k(s)` for `k = 0..=nmax`, by Miller's backward recurrence normalized with
/// `e^{-s} (I_0 + 2 sum_{k>=1} I_k) = 1`.
pub fn scaled_bessel_i(nmax: usize, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if s <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = nmax + 30 + (9.0 * s.sqrt()).ceil() as usize;
    let mut ip1 = 0.0f64;
    let mut i = 1e-280f64;
    let mut sum = 0.0f64;
    for k in (1..=start).rev() {
        let im1 = ip1 + (2.0 * k as f64 / s) * i;
        ip1 = i;
        i = im1;
        if k - 1 <= nmax {
            out[k - 1] = i;
        }
        if k - 1 >= 1 {
            sum += 2.0 * i;
        }
        if i.abs() > 1e250 {
            let f = 1e-250;
            i *= f;
            ip1 *= f;
            sum *= f;
            for v in out.iter_mut() {
                *v *= f;
            }
        }
    }
    sum += i;
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Coefficients `c_k` of the large-argument expansion
/// `e^{-s} I_n(s) ~ (2 pi s)^{-1/2} sum_k c_k s^{-k}`, `k < terms`.
pub fn bessel_asymptotic_coeffs(n: u64, terms: usize) -> Vec<f64> {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut c = Vec::with_capacity(terms);
    let mut cur = 1.0;
    c.push(cur);
    for k in 1..terms {
        let odd = (2 * k - 1) as f64;
        cur *= -(mu - odd * odd) / (k as f64 * 8.0);
        c.push(cur);
    }
    c
}
