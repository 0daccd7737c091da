//! Kolmogorov-Smirnov statistics and simple moment estimates.

use std::f64::consts::PI;

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series converges fast for small λ
        let y = -PI * PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=50 {
            let j = (2 * k - 1) as f64;
            let term = (j * j * y).exp();
            s += term;
            if term < 1e-18 {
                break;
            }
        }
        let cdf = (2.0 * PI).sqrt() / lambda * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += sign * term;
            sign = -sign;
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Sup-distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d.max((f - lo).abs()).max((hi - f).abs())
    })
}

/// Asymptotic p-value of a one-sample statistic `d` at sample size `n`.
pub fn ks_one_sample_p(d: f64, n: usize) -> f64 {
    let en = (n as f64).sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsTwoSample {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS statistic with the asymptotic p-value
/// `Q((√nₑ + 0.12 + 0.11/√nₑ) D)`, `nₑ = nm/(n+m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTwoSample {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "KS needs two nonempty samples"
    );
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
    KsTwoSample {
        statistic: d,
        p_value,
    }
}

/// Asymptotic one-sample critical value at level `alpha`:
/// `c(α)/√n` with `c(α) = sqrt(-ln(α/2)/2)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Mean and standard error `std/√n` (population std with n-1 denominator).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
