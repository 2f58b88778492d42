//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use ipcc::{Dataset, GroupLabel};

// Gauss–Kronrod 7/15 nodes and weights on [−1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature to relative tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol * v.abs().max(1e-300) || err < 1e-300 || depth > 50 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, tol, depth + 1) + rec(f, m, b, tol, depth + 1)
    }
    if b <= a {
        return 0.0;
    }
    rec(&f, a, b, tol, 0)
}

/// Integral over [a, b] split at interior `breaks` (kinks of the integrand).
pub fn integrate_pieces(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(b);
    pts.windows(2).map(|w| integrate(&f, w[0], w[1], tol)).sum()
}

/// Kolmogorov distribution tail P(K > t).
pub fn kolmogorov_tail(t: f64) -> f64 {
    if t < 0.3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// KS statistic and asymptotic p-value of a sample against a CDF.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    (d, kolmogorov_tail(d * n.sqrt()))
}

/// Nelder–Mead maximization; returns (argmax, max).
pub fn nelder_mead_max(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let neg = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scale;
        simplex.push(x);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|x| neg(x)).collect();
    let mut evals = n + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = (vals[n] - vals[0]).abs();
        let size = simplex.iter().skip(1).map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if spread < 1e-13 && size < 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = neg(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = neg(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = neg(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = neg(&x);
                (x, v)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| 0.5 * (simplex[0][j] + simplex[i][j])).collect();
                    vals[i] = neg(&simplex[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap()).unwrap();
    (simplex[best].clone(), -vals[best])
}

/// Solution of the mass maximization.
#[derive(Debug, Clone)]
pub struct MassFit {
    pub value: f64,
    /// Dual multipliers, one per constraint row.
    pub multipliers: Vec<f64>,
    /// Condition number of the dual Hessian at the solution. Large values mean
    /// the rows are nearly collinear and the multipliers are poorly determined.
    pub condition: f64,
}

/// max Σ log pᵢ subject to Σ pᵢ a_{ki} = 1 for each row k, by Newton's method
/// on the convex dual. None if infeasible.
pub fn max_log_masses(rows: &[Vec<f64>]) -> Option<MassFit> {
    let m = rows.len();
    let n = rows[0].len();
    let mut mu = vec![0.0; m];
    mu[0] = n as f64;
    // dual objective g(μ) = Σμ − Σ log(Aᵀμ)ᵢ − n, minimized
    let denom = |mu: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..m).map(|k| mu[k] * rows[k][i]).sum()).collect() };
    let g = |mu: &[f64]| -> f64 {
        let d = denom(mu);
        if d.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        mu.iter().sum::<f64>() - d.iter().map(|v| v.ln()).sum::<f64>() - n as f64
    };
    for _ in 0..200 {
        let d = denom(&mu);
        let mut grad = vec![1.0; m];
        let mut hess = vec![vec![0.0; m]; m];
        for i in 0..n {
            for k in 0..m {
                grad[k] -= rows[k][i] / d[i];
                for l in 0..m {
                    hess[k][l] += rows[k][i] * rows[l][i] / (d[i] * d[i]);
                }
            }
        }
        let step = solve(&hess, &grad)?;
        let dec: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        // The rows can be nearly collinear, leaving a flat direction in which
        // the decrement is tiny long before the multipliers settle; stop on the step.
        if step.iter().all(|s| s.abs() < 1e-12 * n as f64) || dec.abs() < 1e-32 {
            break;
        }
        let g0 = g(&mu);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = mu.iter().zip(&step).map(|(m, s)| m - t * s).collect();
            let gc = g(&cand);
            if gc <= g0 - 0.25 * t * dec || (t == 1.0 && gc <= g0 + 1e-13 * g0.abs()) {
                mu = cand;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return None;
            }
        }
        if mu.iter().any(|v| v.abs() > 1e12) {
            return None;
        }
    }
    let d = denom(&mu);
    let p: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
    for row in rows {
        let r: f64 = row.iter().zip(&p).map(|(a, b)| a * b).sum();
        if (r - 1.0).abs() > 1e-9 {
            return None;
        }
    }
    let mut hess = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for k in 0..m {
            for l in 0..m {
                hess[(k, l)] += rows[k][i] * rows[l][i] / (d[i] * d[i]);
            }
        }
    }
    let eig = hess.symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(v.abs()), h.max(v.abs())));
    Some(MassFit { value: p.iter().map(|v| v.ln()).sum(), multipliers: mu, condition: hi / lo })
}

fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
        let mut r = r.clone();
        r.push(v);
        r
    }).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Full (unprofiled) log-likelihood of a one-covariate, exponential-hazard
/// instance at θ* = (α*, ν*, β, log rate, ζ), with the masses maximized out
/// numerically.
pub fn brute_force_loglik(data: &Dataset, xi: f64, theta: &[f64]) -> Option<MassFit> {
    let (a, nu, b, log_rate, z) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
    let rate = log_rate.exp();
    let n = data.len();
    let mut w1 = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    let mut fixed = 0.0;
    for s in &data.subjects {
        let x = s.covariates[0];
        let psi = rate * (z * x).exp();
        // μ by quadrature of the survival function, not the closed form; the
        // geometric breaks resolve the boundary layer of width 1/ψ at 0.
        let breaks: Vec<f64> = (1..80).map(|k| xi * 0.5f64.powi(k)).collect();
        let mu = integrate_pieces(|t| (-psi * t).exp(), 0.0, xi, &breaks, 1e-13);
        w1.push((a + b * x).exp());
        w2.push((nu + b * x).exp() * mu);
        match s.group {
            GroupLabel::Control => {}
            GroupLabel::IncidentCase => fixed += a + b * x,
            GroupLabel::PrevalentCase => {
                let t = s.backward_time.unwrap();
                // tilt × backward-time density S/μ
                fixed += nu + b * x + mu.ln() + (-psi * t) - mu.ln();
            }
        }
    }
    let mut fit = max_log_masses(&[vec![1.0; n], w1, w2])?;
    fit.value += fixed;
    Some(fit)
}

/// Central difference of `f` along coordinate `i`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}
