//! Bounded local optimizers: a projected limited-memory quasi-Newton method
//! for smooth objectives with gradients, and a compass pattern search for
//! derivative-free refinement. Both minimize.

use std::collections::VecDeque;

/// Result of a local minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub pgtol: f64,
    /// Stop when the relative decrease of the objective falls below this.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            memory: 8,
            pgtol: 1e-6,
            ftol: 1e-10,
        }
    }
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected L-BFGS over the box `[lower, upper]`.
///
/// `f` writes the gradient into its second argument and returns the value.
/// Coordinates pinned at a bound with the gradient pointing outward are held
/// fixed for the step; trial points are projected back into the box and
/// accepted on an Armijo condition along the projected path.
pub fn lbfgs_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LbfgsOptions,
) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    let mut x = x0.to_vec();
    clamp_into(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut iterations = 0;
    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations,
            evaluations,
        };
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];

    while iterations < opts.max_iters {
        iterations += 1;
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
            .collect();
        let pg: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { g[i] }).collect();
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_norm < opts.pgtol {
            break;
        }

        // two-loop recursion
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q
            .iter()
            .zip(&active)
            .map(|(v, &a)| if a { 0.0 } else { -v })
            .collect();
        if dot(&d, &g) >= 0.0 {
            d = pg.iter().map(|v| -v).collect();
            history.clear();
        }

        let mut t = if history.is_empty() {
            (1.0 / pg_norm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..n {
                xn[i] = x[i] + t * d[i];
            }
            clamp_into(&mut xn, lower, upper);
            if xn == x {
                break;
            }
            let fxn = f(&xn, &mut gn);
            evaluations += 1;
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fxn.is_finite() && fxn <= fx + 1e-4 * decrease {
                accepted = Some(fxn);
                break;
            }
            t *= 0.5;
        }
        let Some(fxn) = accepted else { break };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - fxn) / fx.abs().max(fxn.abs()).max(1.0);
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        fx = fxn;
        if rel <= opts.ftol {
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
    }
}

#[derive(Debug, Clone)]
pub struct PatternSearchOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evals: usize,
}

impl Default for PatternSearchOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            min_step: 1e-9,
            max_evals: 50,
        }
    }
}

/// Compass pattern search inside `[lower, upper]`, starting from `x0` whose
/// value `f0` is already known. Moves opportunistically along ±coordinate
/// directions and halves the step when no direction improves.
pub fn pattern_search<F>(
    mut f: F,
    x0: &[f64],
    f0: f64,
    lower: &[f64],
    upper: &[f64],
    opts: &PatternSearchOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp_into(&mut x, lower, upper);
    let mut fx = f0;
    let mut step = opts.initial_step;
    let mut evaluations = 0;
    let mut iterations = 0;
    let mut trial = x.clone();
    'outer: while step >= opts.min_step && evaluations < opts.max_evals {
        iterations += 1;
        let mut improved = false;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                if evaluations >= opts.max_evals {
                    break 'outer;
                }
                trial.copy_from_slice(&x);
                trial[i] = (x[i] + sign * step).clamp(lower[i], upper[i]);
                if trial[i] == x[i] {
                    continue;
                }
                let ft = f(&trial);
                evaluations += 1;
                if ft < fx {
                    fx = ft;
                    x.copy_from_slice(&trial);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
    }
}
