//! Small statistics toolkit: moments, regressions, two-sample tests.

use rand::seq::SliceRandom;
use rand::Rng;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean.
pub fn stderr(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    (variance(x) / x.len() as f64).sqrt()
}

/// Mean after discarding the lowest and highest `frac` of the values.
pub fn trimmed_mean(x: &[f64], frac: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = ((v.len() as f64) * frac).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    if kept.is_empty() {
        mean(&v)
    } else {
        mean(kept)
    }
}

/// Linear interpolated quantile, `q ∈ [0, 1]`.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Ordinary least squares fit `y ≈ a + b x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if n > 2.0 && sxx > 0.0 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LinearFit { intercept, slope, r2, slope_stderr }
}

/// Digamma function for positive arguments.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test; returns `(D, p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut dmax: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        dmax = dmax.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    (dmax, kolmogorov_q((sq + 0.12 + 0.11 / sq) * dmax))
}

/// Energy-distance two-sample test with a permutation p-value.
///
/// `dist` is any metric on the sample space; the statistic is
/// `2 E d(X,Y) − E d(X,X') − E d(Y,Y')`.
pub fn energy_test<T, D, R>(a: &[T], b: &[T], dist: D, permutations: usize, rng: &mut R) -> (f64, f64)
where
    D: Fn(&T, &T) -> f64,
    R: Rng + ?Sized,
{
    let pooled: Vec<&T> = a.iter().chain(b.iter()).collect();
    let n = pooled.len();
    let mut dm = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dist(pooled[i], pooled[j]);
            dm[i * n + j] = v;
            dm[j * n + i] = v;
        }
    }
    let na = a.len();
    let stat = |labels: &[usize]| {
        let (ga, gb) = labels.split_at(na);
        let cross: f64 = ga.iter().flat_map(|&i| gb.iter().map(move |&j| (i, j))).map(|(i, j)| dm[i * n + j]).sum();
        let within = |g: &[usize]| -> f64 {
            let k = g.len() as f64;
            let s: f64 = g.iter().flat_map(|&i| g.iter().map(move |&j| (i, j))).map(|(i, j)| dm[i * n + j]).sum();
            s / (k * k)
        };
        2.0 * cross / (ga.len() * gb.len()) as f64 - within(ga) - within(gb)
    };
    let mut labels: Vec<usize> = (0..n).collect();
    let observed = stat(&labels);
    let mut exceed = 0;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if stat(&labels) >= observed {
            exceed += 1;
        }
    }
    (observed, (exceed + 1) as f64 / (permutations + 1) as f64)
}
