//! Memory-limited BFGS with a strong-Wolfe line search.
//!
//! The two-loop recursion (Nocedal & Wright, ch. 7) with curvature-guarded
//! history updates and the gamma scaling of the seed Hessian. The line
//! search is the bracket/zoom scheme of ch. 3 with quadratic interpolation
//! and bisection safeguards; non-finite trial values are treated as
//! overshoots and pull the bracket in.

use nalgebra::DVector;
use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the gradient 2-norm falls below this.
    pub grad_tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 20,
            max_iterations: 500,
            grad_tolerance: 1e-6,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub position: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Gradient tolerance reached.
    pub converged: bool,
    /// The line search gave up; the best point seen is returned.
    pub line_search_failed: bool,
    /// Objective at the start and after every accepted step
    /// (nonincreasing).
    pub history: Vec<f64>,
}

#[derive(Clone)]
struct Probe {
    alpha: f64,
    value: f64,
    deriv: f64,
    position: DVector<f64>,
    gradient: DVector<f64>,
}

struct Ray<'a> {
    origin: &'a DVector<f64>,
    direction: &'a DVector<f64>,
    f0: f64,
    descent: f64,
    c1: f64,
    c2: f64,
}

impl Ray<'_> {
    fn eval<F>(&self, objective: &mut F, alpha: f64) -> Probe
    where
        F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    {
        let position = self.origin + alpha * self.direction;
        let (value, gradient) = objective(&position);
        let deriv = if gradient.iter().all(|v| v.is_finite()) {
            gradient.dot(self.direction)
        } else {
            f64::NAN
        };
        Probe {
            alpha,
            value,
            deriv,
            position,
            gradient,
        }
    }

    fn armijo(&self, probe: &Probe) -> bool {
        probe.value <= self.f0 + self.c1 * probe.alpha * self.descent
    }

    fn curvature_ok(&self, probe: &Probe) -> bool {
        probe.deriv.abs() <= -self.c2 * self.descent
    }

    fn consider(&self, probe: &Probe, best: &mut Option<Probe>) {
        if probe.value.is_finite() && probe.value < self.f0 {
            let better = best.as_ref().map_or(true, |b| probe.value < b.value);
            if better {
                *best = Some(probe.clone());
            }
        }
    }
}

/// Minimize an objective returning `(value, gradient)`.
pub fn minimize<F>(mut objective: F, x0: DVector<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let memory = opts.memory.max(1);
    let (mut value, mut gradient) = objective(&x0);
    let mut position = x0;
    let mut history = vec![value];

    let mut s_list: VecDeque<DVector<f64>> = VecDeque::with_capacity(memory);
    let mut y_list: VecDeque<DVector<f64>> = VecDeque::with_capacity(memory);
    let mut rho_list: VecDeque<f64> = VecDeque::with_capacity(memory);

    let mut iterations = 0;
    let mut converged = false;
    let mut line_search_failed = false;

    for iter in 0..opts.max_iterations {
        let grad_norm = gradient.norm();
        if !grad_norm.is_finite() {
            line_search_failed = true;
            break;
        }
        if grad_norm <= opts.grad_tolerance {
            converged = true;
            break;
        }

        let mut direction = two_loop(&gradient, &s_list, &y_list, &rho_list);
        let mut descent = gradient.dot(&direction);
        if descent >= 0.0 || !descent.is_finite() {
            // The implicit Hessian has gone bad; restart from steepest
            // descent.
            s_list.clear();
            y_list.clear();
            rho_list.clear();
            direction = -&gradient;
            descent = -grad_norm * grad_norm;
        }

        let alpha_init = if iter == 0 {
            (1.0 / grad_norm).min(1.0)
        } else {
            1.0
        };

        let ray = Ray {
            origin: &position,
            direction: &direction,
            f0: value,
            descent,
            c1: opts.c1,
            c2: opts.c2,
        };
        let probe = match line_search(&mut objective, &ray, alpha_init) {
            Some(p) => p,
            None => {
                line_search_failed = true;
                break;
            }
        };
        iterations = iter + 1;

        let step = &probe.position - &position;
        let grad_diff = &probe.gradient - &gradient;
        let curvature = step.dot(&grad_diff);
        if curvature > 1e-10 * step.norm() * grad_diff.norm() {
            if s_list.len() == memory {
                s_list.pop_front();
                y_list.pop_front();
                rho_list.pop_front();
            }
            s_list.push_back(step);
            y_list.push_back(grad_diff);
            rho_list.push_back(1.0 / curvature);
        }

        position = probe.position;
        value = probe.value;
        gradient = probe.gradient;
        history.push(value);
    }

    if !converged && !line_search_failed && gradient.norm() <= opts.grad_tolerance {
        converged = true;
    }

    LbfgsOutcome {
        gradient_norm: gradient.norm(),
        position,
        value,
        iterations,
        converged,
        line_search_failed,
        history,
    }
}

/// Two-loop recursion: returns the quasi-Newton direction `-H_k grad`.
fn two_loop(
    gradient: &DVector<f64>,
    s_list: &VecDeque<DVector<f64>>,
    y_list: &VecDeque<DVector<f64>>,
    rho_list: &VecDeque<f64>,
) -> DVector<f64> {
    let mut q = gradient.clone();
    let k = s_list.len();
    let mut alphas = vec![0.0; k];
    for i in (0..k).rev() {
        alphas[i] = rho_list[i] * s_list[i].dot(&q);
        q.axpy(-alphas[i], &y_list[i], 1.0);
    }
    if let (Some(s), Some(y)) = (s_list.back(), y_list.back()) {
        let gamma = s.dot(y) / y.dot(y);
        q *= gamma;
    }
    for i in 0..k {
        let beta = rho_list[i] * y_list[i].dot(&q);
        q.axpy(alphas[i] - beta, &s_list[i], 1.0);
    }
    -q
}

/// Strong-Wolfe bracketing search. Returns an accepted probe, falling back
/// to the best simple-decrease point seen; `None` when no decrease at all
/// was found.
fn line_search<F>(objective: &mut F, ray: &Ray<'_>, alpha_init: f64) -> Option<Probe>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    const MAX_BRACKET: usize = 20;
    const ALPHA_MAX: f64 = 1e4;

    let mut best: Option<Probe> = None;
    let zero_probe = Probe {
        alpha: 0.0,
        value: ray.f0,
        deriv: ray.descent,
        position: ray.origin.clone(),
        gradient: DVector::zeros(0), // never used as a result
    };

    let mut prev = zero_probe.clone();
    let mut alpha = alpha_init.min(ALPHA_MAX);

    for i in 0..MAX_BRACKET {
        let probe = ray.eval(objective, alpha);
        ray.consider(&probe, &mut best);

        if !probe.value.is_finite() || !ray.armijo(&probe) || (i > 0 && probe.value >= prev.value) {
            return zoom(objective, ray, prev, probe, best);
        }
        if ray.curvature_ok(&probe) {
            return Some(probe);
        }
        if probe.deriv >= 0.0 {
            return zoom(objective, ray, probe, prev, best);
        }

        if alpha >= ALPHA_MAX {
            break;
        }
        alpha = (2.0 * alpha).min(ALPHA_MAX);
        prev = probe;
    }
    best
}

/// Narrow a bracket `[lo, hi]` (lo satisfies the sufficient-decrease
/// condition and has the smaller value) until a strong-Wolfe point is found.
fn zoom<F>(
    objective: &mut F,
    ray: &Ray<'_>,
    mut lo: Probe,
    mut hi: Probe,
    mut best: Option<Probe>,
) -> Option<Probe>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    const MAX_ZOOM: usize = 30;

    for _ in 0..MAX_ZOOM {
        if (hi.alpha - lo.alpha).abs() < 1e-14 * lo.alpha.abs().max(1.0) {
            break;
        }
        // Quadratic model from lo's value/slope and hi's value, safeguarded
        // toward the midpoint.
        let span = hi.alpha - lo.alpha;
        let denom = hi.value - lo.value - lo.deriv * span;
        let mut alpha = if denom.is_finite() && denom.abs() > 1e-300 {
            lo.alpha - 0.5 * lo.deriv * span * span / denom
        } else {
            f64::NAN
        };
        let (lo_a, hi_a) = if lo.alpha < hi.alpha {
            (lo.alpha, hi.alpha)
        } else {
            (hi.alpha, lo.alpha)
        };
        let margin = 0.1 * (hi_a - lo_a);
        if !alpha.is_finite() || alpha < lo_a + margin || alpha > hi_a - margin {
            alpha = 0.5 * (lo_a + hi_a);
        }

        let probe = ray.eval(objective, alpha);
        ray.consider(&probe, &mut best);
        if !probe.value.is_finite() || !ray.armijo(&probe) || probe.value >= lo.value {
            hi = probe;
        } else {
            if ray.curvature_ok(&probe) {
                return Some(probe);
            }
            if probe.deriv * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = probe;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn minimizes_a_quadratic_exactly() {
        // f(x) = 0.5 x^T D x - b^T x with D diagonal.
        let d = dvector![1.0, 4.0, 0.5, 10.0];
        let b = dvector![1.0, -2.0, 0.25, 3.0];
        let objective = |x: &DVector<f64>| {
            let dx = x.component_mul(&d);
            (0.5 * x.dot(&dx) - b.dot(x), dx - &b)
        };
        let out = minimize(objective, DVector::zeros(4), &LbfgsOptions::default());
        assert!(out.converged, "gradient norm {}", out.gradient_norm);
        let solution = b.component_div(&d);
        assert!((out.position - solution).amax() < 1e-6);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let objective = |x: &DVector<f64>| {
            let (a, b) = (1.0, 100.0);
            let f = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
            let g = dvector![
                -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0],
                2.0 * b * (x[1] - x[0] * x[0])
            ];
            (f, g)
        };
        let opts = LbfgsOptions {
            max_iterations: 200,
            grad_tolerance: 1e-8,
            ..LbfgsOptions::default()
        };
        let out = minimize(objective, dvector![-1.2, 1.0], &opts);
        assert!(out.converged, "gradient norm {}", out.gradient_norm);
        assert!((out.position[0] - 1.0).abs() < 1e-5);
        assert!((out.position[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn history_is_monotone_nonincreasing() {
        let objective = |x: &DVector<f64>| {
            let f = x[0].powi(4) + (x[1] - 2.0).powi(2) + (x[0] * x[1]).powi(2);
            let g = dvector![
                4.0 * x[0].powi(3) + 2.0 * x[0] * x[1] * x[1],
                2.0 * (x[1] - 2.0) + 2.0 * x[0] * x[0] * x[1]
            ];
            (f, g)
        };
        let out = minimize(objective, dvector![2.0, -3.0], &LbfgsOptions::default());
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "history not monotone: {w:?}");
        }
    }

    #[test]
    fn starting_at_the_minimum_stays_there() {
        let objective = |x: &DVector<f64>| (x.norm_squared(), 2.0 * x);
        let out = minimize(objective, DVector::zeros(3), &LbfgsOptions::default());
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.position, DVector::zeros(3));
    }

    #[test]
    fn pathological_objective_returns_best_seen_without_panicking() {
        // Discontinuous cliff: no Wolfe point exists past x = 1.
        let objective = |x: &DVector<f64>| {
            if x[0] < 1.0 {
                (-x[0], dvector![-1.0])
            } else {
                (f64::INFINITY, dvector![f64::NAN])
            }
        };
        let opts = LbfgsOptions {
            max_iterations: 50,
            ..LbfgsOptions::default()
        };
        let out = minimize(objective, dvector![0.0], &opts);
        assert!(out.value <= 0.0);
        assert!(out.position[0] < 1.0);
    }
}
