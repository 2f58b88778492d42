//! Dense BFGS minimizer with a strong-Wolfe line search.
//!
//! The objective returns `None` where it cannot be evaluated (overflow at an
//! aggressive trial step); such points are treated as +∞ and the step is
//! shortened.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when ‖∇f‖∞ falls below this.
    pub gradient_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iterations: 500, gradient_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub n_evals: usize,
    pub converged: bool,
    pub message: String,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 40;

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> Option<f64>> Counted<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evals += 1;
        match (self.f)(x, g) {
            Some(v) if v.is_finite() && g.iter().all(|gi| gi.is_finite()) => v,
            _ => f64::INFINITY,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `objective(x, grad) -> f(x)` starting at `x0`.
pub fn minimize<F>(objective: F, x0: &[f64], options: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut obj = Counted { f: objective, evals: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    if !f.is_finite() {
        return BfgsOutcome {
            x,
            f,
            grad: g,
            iterations: 0,
            n_evals: obj.evals,
            converged: false,
            message: "objective not finite at the starting point".into(),
        };
    }
    if n == 0 {
        return BfgsOutcome { x, f, grad: g, iterations: 0, n_evals: obj.evals, converged: true, message: "empty problem".into() };
    }

    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    let mut fresh = true;
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..options.max_iterations {
        if inf_norm(&g) <= options.gradient_tolerance {
            return BfgsOutcome { x, f, grad: g, iterations: iter, n_evals: obj.evals, converged: true, message: "gradient tolerance reached".into() };
        }
        for i in 0..n {
            dir[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            h = identity(n);
            fresh = true;
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = dot(&dir, &g);
        }
        let initial_step = if fresh { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };
        let found = line_search(&mut obj, &x, f, &dir, slope, initial_step, &mut x_new, &mut g_new);
        let Some((step, f_new)) = found else {
            if fresh {
                return BfgsOutcome { x, f, grad: g, iterations: iter, n_evals: obj.evals, converged: false, message: "line search failed along steepest descent".into() };
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = dir.iter().map(|d| d * step).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
    }
    let converged = inf_norm(&g) <= options.gradient_tolerance;
    BfgsOutcome {
        x,
        f,
        grad: g,
        iterations: options.max_iterations,
        n_evals: obj.evals,
        converged,
        message: if converged { "gradient tolerance reached".into() } else { "iteration limit reached".into() },
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

// H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    dir: &[f64],
    slope0: f64,
    initial_step: f64,
    x_out: &mut [f64],
    g_out: &mut [f64],
) -> Option<(f64, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let mut eval_at = |obj: &mut Counted<F>, t: f64, x_out: &mut [f64], g_out: &mut [f64]| {
        for i in 0..x.len() {
            x_out[i] = x[i] + t * dir[i];
        }
        let f = obj.eval(x_out, g_out);
        (f, dot(g_out, dir))
    };

    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = slope0;
    let mut t = initial_step;
    for k in 0..MAX_LINE_SEARCH {
        let (ft, dt) = eval_at(obj, t, x_out, g_out);
        if !ft.is_finite() {
            // Overflow: back off without treating this as a bracket end.
            t = t_prev + 0.25 * (t - t_prev);
            if t - t_prev < 1e-16 {
                return None;
            }
            continue;
        }
        if ft > f0 + C1 * t * slope0 || (k > 0 && ft >= f_prev) {
            return zoom(obj, &mut eval_at, f0, slope0, (t_prev, f_prev, d_prev), (t, ft, dt), x_out, g_out);
        }
        if dt.abs() <= -C2 * slope0 {
            return Some((t, ft));
        }
        if dt >= 0.0 {
            return zoom(obj, &mut eval_at, f0, slope0, (t, ft, dt), (t_prev, f_prev, d_prev), x_out, g_out);
        }
        t_prev = t;
        f_prev = ft;
        d_prev = dt;
        t *= 2.0;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F, E>(
    obj: &mut Counted<F>,
    eval_at: &mut E,
    f0: f64,
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    x_out: &mut [f64],
    g_out: &mut [f64],
) -> Option<(f64, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
    E: FnMut(&mut Counted<F>, f64, &mut [f64], &mut [f64]) -> (f64, f64),
{
    for _ in 0..MAX_LINE_SEARCH {
        let t = interpolate(lo, hi);
        let (ft, dt) = eval_at(obj, t, x_out, g_out);
        if !ft.is_finite() || ft > f0 + C1 * t * slope0 || ft >= lo.1 {
            hi = (t, ft, dt);
        } else {
            if dt.abs() <= -C2 * slope0 {
                return Some((t, ft));
            }
            if dt * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t, ft, dt);
        }
        if (hi.0 - lo.0).abs() < 1e-14 * lo.0.abs().max(1e-10) {
            break;
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    if lo.0 > 0.0 && lo.1 < f0 {
        let (ft, _) = eval_at(obj, lo.0, x_out, g_out);
        return Some((lo.0, ft));
    }
    None
}

// Cubic interpolation of the minimizer between two bracket ends, safeguarded to the interior.
fn interpolate(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (t0, f0, d0) = a;
    let (t1, f1, d1) = b;
    let lo = t0.min(t1);
    let hi = t0.max(t1);
    let width = hi - lo;
    if f1.is_finite() {
        let d1_ = d0 + d1 - 3.0 * (f0 - f1) / (t0 - t1);
        let disc = d1_ * d1_ - d0 * d1;
        if disc >= 0.0 {
            let d2 = (t1 - t0).signum() * disc.sqrt();
            let t = t1 - (t1 - t0) * (d1 + d2 - d1_) / (d1 - d0 + 2.0 * d2);
            if t.is_finite() && t > lo + 0.1 * width && t < hi - 0.1 * width {
                return t;
            }
        }
    }
    0.5 * (lo + hi)
}
