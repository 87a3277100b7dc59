//! BFGS with Armijo backtracking, maximizing a [`LogLikelihood`], with a
//! Newton polish for the last digits that `f` itself can no longer resolve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::likelihood::LogLikelihood;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Converged when the gradient max-norm falls below this.
    pub tol_grad: f64,
    /// Converged when both the last change in `f` and the gain predicted by
    /// the quasi-Newton model fall below `tol_rel_change * (1 + |f|)`.
    pub tol_rel_change: f64,
    /// Sufficient-increase constant of the Armijo condition.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Relative step of the difference Hessian used by Newton polishing.
    pub polish_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_grad: 1e-6,
            tol_rel_change: 1e-9,
            armijo: 1e-4,
            max_backtracks: 60,
            polish_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfgsReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_max_norm: f64,
    pub messages: Vec<String>,
    /// Objective after each accepted iteration, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Relative change in f treated as rounding noise.
const STALL: f64 = 1e-12;
const POLISH_STEPS: usize = 5;

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Central differences of the analytic gradient over the `free` indices.
pub fn difference_hessian<L: LogLikelihood + ?Sized>(
    objective: &L,
    at: &[f64],
    free: &[usize],
    rel_step: f64,
) -> DMatrix<f64> {
    let k = free.len();
    let mut hess = DMatrix::<f64>::zeros(k, k);
    let mut x = at.to_vec();
    for (c, &i) in free.iter().enumerate() {
        let h = rel_step * (1.0 + at[i].abs());
        x[i] = at[i] + h;
        let up = objective.gradient(&x);
        let hi = x[i];
        x[i] = at[i] - h;
        let down = objective.gradient(&x);
        let lo = x[i];
        x[i] = at[i];
        for (r, &j) in free.iter().enumerate() {
            hess[(r, c)] = (up[j] - down[j]) / (hi - lo);
        }
    }
    (&hess + hess.transpose()) * 0.5
}

/// Maximizes `objective` from `x0`. Parameters flagged in `fixed` stay at
/// their starting value.
pub fn maximize<L: LogLikelihood + ?Sized>(
    objective: &L,
    x0: &[f64],
    fixed: &[bool],
    opts: &BfgsOptions,
) -> BfgsReport {
    let n_all = x0.len();
    let free: Vec<usize> = (0..n_all).filter(|&i| !fixed.get(i).copied().unwrap_or(false)).collect();
    let n = free.len();
    let mut full = x0.to_vec();

    let eval = |full: &mut Vec<f64>, z: &DVector<f64>| -> (f64, DVector<f64>, Vec<f64>) {
        for (k, &i) in free.iter().enumerate() {
            full[i] = z[k];
        }
        let (f, g_all) = objective.value_and_gradient(full);
        let g = DVector::from_iterator(n, free.iter().map(|&i| g_all[i]));
        (f, g, g_all)
    };

    let mut x = DVector::from_iterator(n, free.iter().map(|&i| x0[i]));
    let (mut f, mut g, mut g_all) = eval(&mut full, &x);
    let mut messages = Vec::new();
    let mut trace = vec![f];
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        messages.push("objective is not finite at the starting point".into());
        return BfgsReport {
            x: full,
            value: f,
            grad_max_norm: f64::INFINITY,
            gradient: g_all,
            iterations: 0,
            converged: false,
            messages,
            trace,
        };
    }

    // Newton steps on the gradient alone, accepted while its norm shrinks
    // and f holds within rounding. Returns whether tol_grad was reached.
    let polish = |full: &mut Vec<f64>, x: &mut DVector<f64>, f: &mut f64, g: &mut DVector<f64>, g_all: &mut Vec<f64>| -> bool {
        for _ in 0..POLISH_STEPS {
            if max_norm(g.as_slice()) < opts.tol_grad {
                return true;
            }
            let info = -difference_hessian(objective, full, &free, opts.polish_step);
            let Some(chol) = info.cholesky() else {
                return false;
            };
            let x_new = &*x + chol.solve(g);
            let (f_new, g_new, g_all_new) = eval(full, &x_new);
            let noise = STALL * (1.0 + f.abs());
            if !(f_new >= *f - noise) || !(g_new.norm() < g.norm()) {
                let _ = eval(full, x);
                return false;
            }
            *x = x_new;
            *f = f_new;
            *g = g_new;
            *g_all = g_all_new;
        }
        max_norm(g.as_slice()) < opts.tol_grad
    };

    // Inverse Hessian approximation of the negated objective.
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut converged = false;
    let mut iterations = 0;

    if n == 0 || max_norm(g.as_slice()) < opts.tol_grad {
        converged = true;
        messages.push("gradient below tolerance at start".into());
    }

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        // Ascent direction.
        let mut dir = &h_inv * &g;
        let mut slope = g.dot(&dir);
        if !(slope > 0.0) {
            h_inv = DMatrix::identity(n, n);
            scaled = false;
            dir = g.clone();
            slope = g.dot(&dir);
            messages.push(format!("iteration {iterations}: reset to steepest ascent"));
        }
        let mut step = if scaled {
            1.0
        } else {
            // First step: move at most one unit in parameter space.
            1.0 / dir.amax().max(1.0)
        };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let x_new = &x + step * &dir;
            let (f_new, g_new, g_all_new) = eval(&mut full, &x_new);
            if f_new.is_finite() && g_new.iter().all(|v| v.is_finite()) {
                // Near the optimum the Armijo gain drops below the rounding
                // of f; fall back on the slope along the ray (approximate
                // Wolfe conditions) as long as f does not decrease.
                let slope_new = g_new.dot(&dir);
                let armijo = f_new >= f + opts.armijo * step * slope;
                let approx_wolfe = f_new >= f && slope_new <= 0.9 * slope && slope_new >= -0.8 * slope;
                if armijo || approx_wolfe {
                    accepted = Some((x_new, f_new, g_new, g_all_new));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new, g_all_new)) = accepted else {
            // Restore `full` to the current iterate.
            let _ = eval(&mut full, &x);
            messages.push(format!("iteration {iterations}: line search failed"));
            if polish(&mut full, &mut x, &mut f, &mut g, &mut g_all) {
                converged = true;
                messages.push(format!("gradient max-norm {:.3e} below tolerance after Newton polishing", max_norm(g.as_slice())));
                break;
            }
            if scaled {
                h_inv = DMatrix::identity(n, n);
                scaled = false;
                continue;
            }
            break;
        };

        let s = &x_new - &x;
        // Curvature pair for the minimization of -f.
        let yv = &g - &g_new;
        let sy = s.dot(&yv);
        let change = f_new - f;
        x = x_new;
        f = f_new;
        g = g_new;
        g_all = g_all_new;
        trace.push(f);

        if sy > 1e-12 * s.norm() * yv.norm() {
            if !scaled {
                h_inv *= sy / yv.dot(&yv);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (s y'H + H y s') + (rho^2 y'Hy + rho) s s'
            h_inv -= rho * (&s * hy.transpose() + &hy * s.transpose());
            h_inv += (rho * rho * yhy + rho) * (&s * s.transpose());
        }

        let gmax = max_norm(g.as_slice());
        // Gain still expected from a quasi-Newton step.
        let predicted = 0.5 * g.dot(&(&h_inv * &g));
        let rel_tol = opts.tol_rel_change * (1.0 + f.abs());
        if gmax < opts.tol_grad {
            converged = true;
            messages.push(format!("gradient max-norm {gmax:.3e} below tolerance"));
        } else if change.abs() < rel_tol && predicted < rel_tol {
            converged = true;
            if polish(&mut full, &mut x, &mut f, &mut g, &mut g_all) {
                messages.push(format!("gradient max-norm {:.3e} below tolerance after Newton polishing", max_norm(g.as_slice())));
            } else {
                messages.push(format!("relative log-likelihood change below tolerance (gradient max-norm {gmax:.3e})"));
            }
        } else if change.abs() <= STALL * (1.0 + f.abs()) {
            // f no longer resolves the remaining gain.
            if polish(&mut full, &mut x, &mut f, &mut g, &mut g_all) {
                converged = true;
                messages.push(format!("gradient max-norm {:.3e} below tolerance after Newton polishing", max_norm(g.as_slice())));
            } else {
                messages.push(format!("iteration {iterations}: objective stalled at rounding level"));
                break;
            }
        }
    }
    if !converged && iterations >= opts.max_iters {
        messages.push(format!("reached the iteration limit ({})", opts.max_iters));
    }

    for (k, &i) in free.iter().enumerate() {
        full[i] = x[k];
    }
    BfgsReport {
        grad_max_norm: max_norm(g.as_slice()),
        x: full,
        value: f,
        gradient: g_all,
        iterations,
        converged,
        messages,
        trace,
    }
}
