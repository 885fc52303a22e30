//! Small deterministic unconstrained minimizers: BFGS with forward-difference
//! gradients and Armijo backtracking, and a Nelder-Mead simplex fallback.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSettings {
    pub max_iterations: usize,
    /// Relative forward-difference step: `h_i = fd_step · max(|x_i|, 1)`.
    pub fd_step: f64,
    /// Stop as soon as the objective drops below this value.
    pub target: f64,
    pub gradient_tolerance: f64,
    /// Stop after this many consecutive iterations with relative decrease below `1e-10`.
    pub stall_limit: usize,
    /// Longest trial step (Euclidean norm) a line search may start from.
    pub max_step: f64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self { max_iterations: 500, fd_step: 1e-6, target: 0.0, gradient_tolerance: 1e-10, stall_limit: 5, max_step: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    None,
    Bfgs,
    BfgsThenNelderMead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Target,
    Gradient,
    Stalled,
    LineSearch,
    IterationCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective after each accepted iteration, starting with the initial value.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub method: Method,
    pub termination: Termination,
}

struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn forward_gradient<F: FnMut(&[f64]) -> f64>(f: &mut Counted<F>, x: &[f64], fx: f64, rel: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let g = (f.eval(&probe) - fx) / h;
            probe[i] = x[i];
            g
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimization with inverse-Hessian BFGS updates.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], s: &OptimSettings) -> OptimResult {
    let mut f = Counted { f, calls: 0 };
    let (res, _) = bfgs_inner(&mut f, x0, s);
    res
}

fn bfgs_inner<F: FnMut(&[f64]) -> f64>(f: &mut Counted<F>, x0: &[f64], s: &OptimSettings) -> (OptimResult, bool) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f.eval(&x);
    let mut history = vec![fx];
    let finish = |x: Vec<f64>, fx, history, it, calls, term| {
        OptimResult { x, value: fx, history, iterations: it, evaluations: calls, method: Method::Bfgs, termination: term }
    };
    if fx <= s.target || n == 0 {
        return (finish(x, fx, history, 0, f.calls, Termination::Target), false);
    }
    let mut g = forward_gradient(f, &x, fx, s.fd_step);
    let mut hinv = identity(n);
    let mut stalled = 0;
    for it in 1..=s.max_iterations {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < s.gradient_tolerance {
            return (finish(x, fx, history, it - 1, f.calls, Termination::Gradient), false);
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&hinv[i], &g)).collect();
        let mut slope = dot(&p, &g);
        if !(slope < 0.0) {
            hinv = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        // Armijo backtracking from a step no longer than `max_step`.
        let pnorm = dot(&p, &p).sqrt();
        let mut step = if pnorm > s.max_step { s.max_step / pnorm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + step * pi).collect();
            let ft = f.eval(&trial);
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            return (finish(x, fx, history, it - 1, f.calls, Termination::LineSearch), true);
        };
        let gn = forward_gradient(f, &xn, fnew, s.fd_step);
        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-12 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() {
            update_inverse_hessian(&mut hinv, &sv, &yv, sy);
        }
        let rel = (fx - fnew) / fx.abs().max(f64::MIN_POSITIVE);
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        if fx <= s.target {
            return (finish(x, fx, history, it, f.calls, Termination::Target), false);
        }
        stalled = if rel < 1e-10 { stalled + 1 } else { 0 };
        if stalled >= s.stall_limit {
            return (finish(x, fx, history, it, f.calls, Termination::Stalled), true);
        }
    }
    let it = s.max_iterations;
    (finish(x, fx, history, it, f.calls, Termination::IterationCap), false)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn update_inverse_hessian(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Nelder-Mead with standard coefficients (1, 2, ½, ½).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], initial_step: f64, s: &OptimSettings) -> OptimResult {
    let mut f = Counted { f, calls: 0 };
    let mut r = nelder_mead_inner(&mut f, x0, initial_step, s);
    r.evaluations = f.calls;
    r
}

fn nelder_mead_inner<F: FnMut(&[f64]) -> f64>(f: &mut Counted<F>, x0: &[f64], initial_step: f64, s: &OptimSettings) -> OptimResult {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f.eval(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += initial_step * x0[i].abs().max(1.0);
        let fv = f.eval(&v);
        simplex.push((v, fv));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    let mut history = vec![simplex[0].1];
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;
    for it in 1..=s.max_iterations {
        iterations = it;
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best <= s.target {
            termination = Termination::Target;
            iterations = it - 1;
            break;
        }
        if (worst - best).abs() <= 1e-14 * best.abs().max(1e-300) {
            termination = Termination::Stalled;
            iterations = it - 1;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = f.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(0.5);
                let fc = f.eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f.eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(worst) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    v.0 = v.0.iter().zip(&x_best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    v.1 = f.eval(&v.0);
                }
            }
        }
        order(&mut simplex);
        history.push(simplex[0].1);
    }
    let (x, value) = simplex.swap_remove(0);
    OptimResult { x, value, history, iterations, evaluations: 0, method: Method::BfgsThenNelderMead, termination }
}

/// BFGS; when the line search fails or progress stalls above the target, the
/// remaining iteration budget goes to a Nelder-Mead search from the best point.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], s: &OptimSettings) -> OptimResult {
    let mut f = Counted { f, calls: 0 };
    let (mut res, fallback) = bfgs_inner(&mut f, x0, s);
    if res.iterations == 0 && res.termination == Termination::Target {
        res.method = Method::None;
        res.evaluations = f.calls;
        return res;
    }
    if fallback && res.value > s.target && res.iterations < s.max_iterations {
        let budget = OptimSettings { max_iterations: s.max_iterations - res.iterations, ..*s };
        let nm = nelder_mead_inner(&mut f, &res.x, 1e-3, &budget);
        if nm.value < res.value {
            res.history.extend(nm.history.into_iter().skip(1));
            res.x = nm.x;
            res.value = nm.value;
        }
        res.iterations += nm.iterations;
        res.termination = nm.termination;
        res.method = Method::BfgsThenNelderMead;
    }
    res.evaluations = f.calls;
    res
}
