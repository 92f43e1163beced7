use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky_solve, Mat};

/// Twice-differentiable objective for [`damped_newton`].
pub trait SmoothObjective {
    fn value(&self, p: &[f64]) -> f64;

    /// Value, gradient and Hessian at `p`.
    fn value_grad_hess(&self, p: &[f64]) -> (f64, Vec<f64>, Mat<f64>);

    /// Quantity compared against `grad_tol`; the gradient norm by default.
    fn stationarity(&self, _value: f64, grad: &[f64]) -> f64 {
        grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Stop once [`SmoothObjective::stationarity`] falls below this.
    pub grad_tol: f64,
    /// Step norm considered stalled.
    pub step_tol: f64,
    /// Number of consecutive stalled steps before stopping.
    pub step_patience: usize,
    pub max_iters: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { grad_tol: 1e-10, step_tol: 1e-12, step_patience: 5, max_iters: 500 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonStatus {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    /// No decrease along either the damped or the steepest-descent direction.
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResult {
    pub p: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub status: NewtonStatus,
}

const SHRINK: f64 = 0.618_033_988_749_894_8;
const MAX_BACKTRACKS: usize = 60;

/// First `α = (1/φ)^j` with `F(p + α d) < F(p)`.
fn backtrack(obj: &dyn SmoothObjective, p: &[f64], d: &[f64], f0: f64) -> Option<(Vec<f64>, f64)> {
    let mut alpha = 1.0;
    for _ in 0..=MAX_BACKTRACKS {
        let trial: Vec<f64> = p.iter().zip(d).map(|(pi, di)| pi + alpha * di).collect();
        let f = obj.value(&trial);
        if f < f0 {
            return Some((trial, f));
        }
        alpha *= SHRINK;
    }
    None
}

/// Damped Newton iteration with steepest-descent fallback and golden-ratio
/// backtracking. Solves `(H + τI) s = -∇F`; `τ` shrinks tenfold after a
/// successful descent direction and grows otherwise.
pub fn damped_newton(obj: &dyn SmoothObjective, p0: &[f64], cfg: &NewtonConfig) -> NewtonResult {
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut tau = 0.0f64;
    let mut stalled = 0;
    let (mut f, mut grad, mut hess) = obj.value_grad_hess(&p);
    for iter in 0..cfg.max_iters {
        if obj.stationarity(f, &grad) < cfg.grad_tol {
            return NewtonResult { p, value: f, iterations: iter, status: NewtonStatus::GradientTolerance };
        }
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut damped = hess.clone();
        for i in 0..n {
            damped[(i, i)] += tau;
        }
        let newton_dir = cholesky_solve(&damped, &neg_grad)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .filter(|s| s.iter().zip(&grad).map(|(si, gi)| si * gi).sum::<f64>() < 0.0);

        let step = match newton_dir {
            Some(s) => {
                tau /= 10.0;
                backtrack(obj, &p, &s, f).or_else(|| {
                    tau = (10.0 * tau).max(1e-8);
                    backtrack(obj, &p, &neg_grad, f)
                })
            }
            None => {
                tau = (10.0 * tau).max(1e-8);
                backtrack(obj, &p, &neg_grad, f)
            }
        };
        let Some((next, _)) = step else {
            return NewtonResult { p, value: f, iterations: iter, status: NewtonStatus::LineSearchFailed };
        };
        let dist = next.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        p = next;
        (f, grad, hess) = obj.value_grad_hess(&p);
        if dist < cfg.step_tol {
            stalled += 1;
            if stalled >= cfg.step_patience {
                return NewtonResult { p, value: f, iterations: iter + 1, status: NewtonStatus::StepTolerance };
            }
        } else {
            stalled = 0;
        }
    }
    NewtonResult { p, value: f, iterations: cfg.max_iters, status: NewtonStatus::MaxIterations }
}
