use log::warn;

use super::objective::Misfit;
use crate::kernels::IsotropicKernel;
use crate::linalg::{least_squares, Mat};
use crate::orthopoly::GaussRule;

/// Lawson-Hanson active-set solution of `min ‖A x - y‖₂` subject to `x ≥ 0`.
pub fn nnls(a: &Mat<f64>, y: &[f64]) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    assert_eq!(m, y.len());
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let tol = 10.0 * f64::EPSILON * scale * (m.max(n) as f64);
    let rcond = 1e-14;

    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.mul_vec(x);
        y.iter().zip(ax).map(|(yi, ai)| yi - ai).collect()
    };
    let dual = |r: &[f64]| -> Vec<f64> {
        (0..n).map(|j| (0..m).map(|i| a[(i, j)] * r[i]).sum()).collect()
    };

    let solve_passive = |passive: &[bool]| -> Vec<f64> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = Mat::from_fn(m, cols.len(), |i, c| a[(i, cols[c])]);
        let zs = least_squares(&sub, y, rcond);
        let mut z = vec![0.0; n];
        for (c, &j) in cols.iter().enumerate() {
            z[j] = zs[c];
        }
        z
    };

    for _outer in 0..3 * n + 10 {
        let r = residual(&x);
        let w = dual(&r);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        if w[t] <= tol {
            break;
        }
        passive[t] = true;
        let mut inner = 0;
        loop {
            let z = solve_passive(&passive);
            let feasible = (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0);
            if feasible {
                x = z;
                break;
            }
            inner += 1;
            if inner > 3 * n + 10 {
                // Degenerate cycling; keep the feasible part of the step.
                for j in 0..n {
                    x[j] = z[j].max(0.0);
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = usize::MAX;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    let step = x[j] / (x[j] - z[j]);
                    if step < alpha {
                        alpha = step;
                        blocking = j;
                    }
                }
            }
            for j in 0..n {
                x[j] += alpha * (z[j] - x[j]);
            }
            x[blocking] = 0.0;
            for j in 0..n {
                if passive[j] && x[j] <= 0.0 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    x
}

/// Non-negative weights minimizing the discrete misfit at fixed exponents.
pub fn nnls_weights(theta: &[f64], kernel: &dyn IsotropicKernel, rule: &GaussRule<f64>) -> Vec<f64> {
    nnls_weights_with(&Misfit::new(kernel, rule), theta)
}

pub(crate) fn nnls_weights_with(misfit: &Misfit, theta: &[f64]) -> Vec<f64> {
    assert!(theta.iter().all(|t| t.is_finite()), "exponents must be finite");
    let mut sorted = theta.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[1] - w[0] < 1e-8) {
        warn!("nearly collinear exponents in the weight refit; the solution may be poorly conditioned");
    }
    let (g, y) = misfit.weighted_design(theta);
    nnls(&g, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelId, KernelSpec};
    use crate::orthopoly::composite_rule;
    use approx::assert_relative_eq;

    fn rule() -> GaussRule<f64> {
        composite_rule(2.0, 5, 0.2, 100).unwrap()
    }

    #[test]
    fn exact_member() {
        let a = nnls_weights(&[0.0], &KernelSpec::unit(KernelId::SquaredExponential), &rule());
        assert_relative_eq!(a[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn redundant_column_gets_zero() {
        let a = nnls_weights(&[0.0, 2f64.ln()], &KernelSpec::unit(KernelId::SquaredExponential), &rule());
        assert_relative_eq!(a[0], 1.0, max_relative = 1e-10);
        assert!(a[1].abs() < 1e-10);
    }

    #[test]
    fn single_column_projection() {
        let r = rule();
        let a = nnls_weights(&[0.0], &KernelSpec::unit(KernelId::Exponential), &r);
        let num = r.integrate(|x| (-x * x).exp() * (-x).exp());
        let den = r.integrate(|x| (-2.0 * x * x).exp());
        assert!(a[0] > 0.0);
        assert_relative_eq!(a[0], num / den, max_relative = 1e-12);
    }

    #[test]
    fn active_constraint() {
        // y = e0 - e1 direction; the best non-negative fit drops column 1.
        let a = Mat::from_row_major(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let x = nnls(&a, &[2.0, -1.0, 0.5]);
        assert_relative_eq!(x[0], 2.0, max_relative = 1e-14);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn kkt_conditions_on_random_problems() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..50 {
            let a = Mat::from_fn(12, 5, |_, _| next());
            let y: Vec<f64> = (0..12).map(|_| next()).collect();
            let x = nnls(&a, &y);
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = y.iter().zip(&ax).map(|(u, v)| u - v).collect();
            for j in 0..5 {
                let w: f64 = (0..12).map(|i| a[(i, j)] * r[i]).sum();
                assert!(x[j] >= 0.0);
                if x[j] > 0.0 {
                    assert!(w.abs() < 1e-10, "gradient on passive set {w}");
                } else {
                    assert!(w < 1e-10, "dual infeasible {w}");
                }
            }
        }
    }
}
