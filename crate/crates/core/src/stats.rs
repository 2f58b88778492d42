//! Small statistical helpers: moments, the Kolmogorov–Smirnov test and
//! Gauss–Hermite quadrature.

use nalgebra::DMatrix;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); NaN for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One-sample KS statistic D = sup |F_n − F| against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value P(D > d) for sample size n (Stephens' small-sample correction).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let t = (sn + 0.12 + 0.11 / sn) * d;
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Nodes and weights of `n`-point Gauss–Hermite quadrature for ∫ f(t) e^{−t²} dt
/// (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = off;
        j[(k - 1, k)] = off;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// E[f(X)] for X ~ N(mean, LLᵀ) by tensor-product Gauss–Hermite with `n` nodes per axis.
pub fn gaussian_expectation(mean: &[f64], chol: &DMatrix<f64>, n: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let d = mean.len();
    let (t, w) = gauss_hermite(n);
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut weight = norm;
        for k in 0..d {
            z[k] = std::f64::consts::SQRT_2 * t[idx[k]];
            weight *= w[idx[k]];
        }
        for r in 0..d {
            x[r] = mean[r] + (0..=r).map(|c| chol[(r, c)] * z[c]).sum::<f64>();
        }
        total += weight * f(&x);
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
