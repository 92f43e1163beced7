use crate::kernels::IsotropicKernel;
use crate::linalg::Mat;
use crate::orthopoly::GaussRule;

/// Discrete weighted least-squares misfit of a squared-exponential mixture
/// against a kernel, sampled on a fixed quadrature rule.
///
/// Parameters are packed as `p = (a_1..a_k, θ_1..θ_k)` with `b_i = e^{θ_i}`.
/// The smooth quantity minimized is `F = J²`.
pub struct Misfit {
    x2: Vec<f64>,
    w: Vec<f64>,
    target: Vec<f64>,
}

impl Misfit {
    pub fn new(kernel: &dyn IsotropicKernel, rule: &GaussRule<f64>) -> Self {
        Self {
            x2: rule.nodes().iter().map(|x| x * x).collect(),
            w: rule.weights().to_vec(),
            target: rule.nodes().iter().map(|&x| kernel.eval(x)).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.x2.len()
    }

    /// Residuals `r_j = Σ_i a_i e^{-b_i x_j²} - C(x_j)`.
    fn residuals(&self, a: &[f64], theta: &[f64]) -> Vec<f64> {
        let b: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        self.x2
            .iter()
            .zip(&self.target)
            .map(|(&x2, &f)| a.iter().zip(&b).map(|(&ai, &bi)| ai * (-bi * x2).exp()).sum::<f64>() - f)
            .collect()
    }

    /// `F = Σ_j w_j r_j²`.
    pub fn value_sq(&self, a: &[f64], theta: &[f64]) -> f64 {
        self.residuals(a, theta).iter().zip(&self.w).map(|(r, w)| w * r * r).sum()
    }

    /// `J = √F`.
    pub fn value(&self, a: &[f64], theta: &[f64]) -> f64 {
        self.value_sq(a, theta).sqrt()
    }

    pub fn value_sq_packed(&self, p: &[f64]) -> f64 {
        let k = p.len() / 2;
        self.value_sq(&p[..k], &p[k..])
    }

    /// Design matrix `G_{ji} = e^{-b_i x_j²}` scaled by `√w_j`, and the target
    /// likewise, so that `‖G a - y‖² = F`.
    pub fn weighted_design(&self, theta: &[f64]) -> (Mat<f64>, Vec<f64>) {
        let m = self.x2.len();
        let b: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let g = Mat::from_fn(m, theta.len(), |j, i| self.w[j].sqrt() * (-b[i] * self.x2[j]).exp());
        let y = self.target.iter().zip(&self.w).map(|(f, w)| f * w.sqrt()).collect();
        (g, y)
    }

    /// `F`, `∇F` and the exact Hessian of `F` at the packed point `p`.
    pub fn value_grad_hess(&self, p: &[f64]) -> (f64, Vec<f64>, Mat<f64>) {
        let k = p.len() / 2;
        let (a, theta) = p.split_at(k);
        let b: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let n = 2 * k;
        let mut grad = vec![0.0; n];
        let mut hess = Mat::zeros(n, n);
        let mut value = 0.0;
        let mut g = vec![0.0; k];
        let mut s = vec![0.0; k];
        let mut jr = vec![0.0; n];
        for ((&x2, &f), &w) in self.x2.iter().zip(&self.target).zip(&self.w) {
            let mut model = 0.0;
            for i in 0..k {
                s[i] = b[i] * x2;
                g[i] = (-s[i]).exp();
                model += a[i] * g[i];
            }
            let r = model - f;
            value += w * r * r;
            for i in 0..k {
                jr[i] = g[i];
                jr[k + i] = -a[i] * s[i] * g[i];
            }
            let two_w = 2.0 * w;
            for (gi, &ji) in grad.iter_mut().zip(&jr) {
                *gi += two_w * r * ji;
            }
            // Gauss-Newton part, upper triangle.
            for u in 0..n {
                let ju = two_w * jr[u];
                if ju == 0.0 {
                    continue;
                }
                let row = hess.row_mut(u);
                for v in u..n {
                    row[v] += ju * jr[v];
                }
            }
            // Second derivatives of the residual are block-diagonal per term.
            for i in 0..k {
                let c = two_w * r;
                hess[(i, k + i)] += c * (-s[i] * g[i]);
                hess[(k + i, k + i)] += c * a[i] * g[i] * (s[i] * s[i] - s[i]);
            }
        }
        for u in 0..n {
            for v in 0..u {
                hess[(u, v)] = hess[(v, u)];
            }
        }
        (value, grad, hess)
    }
}

/// Discrete objective `J(a, θ) = [Σ_j w_j (Σ_i a_i e^{-e^{θ_i} x_j²} - C(x_j))²]^{1/2}`.
pub fn objective(a: &[f64], theta: &[f64], kernel: &dyn IsotropicKernel, rule: &GaussRule<f64>) -> f64 {
    assert_eq!(a.len(), theta.len(), "weights and exponents must have equal length");
    Misfit::new(kernel, rule).value(a, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelId, KernelSpec};
    use crate::orthopoly::composite_rule;
    use approx::assert_relative_eq;

    fn default_rule() -> GaussRule<f64> {
        composite_rule(2.0, 5, 0.2, 100).unwrap()
    }

    #[test]
    fn exact_representation_has_zero_error() {
        let k = KernelSpec::unit(KernelId::SquaredExponential);
        assert!(objective(&[1.0], &[0.0], &k, &default_rule()) < 1e-15);
    }

    #[test]
    fn empty_mixture_is_kernel_norm() {
        let k = KernelSpec::unit(KernelId::Exponential);
        let expected = ((1.0 - (-4f64).exp()) / 2.0).sqrt();
        assert_relative_eq!(objective(&[], &[], &k, &default_rule()), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 0.700601, max_relative = 1e-6);
    }

    #[test]
    fn half_weight_misfit() {
        let k = KernelSpec::unit(KernelId::SquaredExponential);
        // 0.5 · ‖e^{-d²}‖ on [0, 2] = 0.5 · (√(π/8) erf(2√2))^{1/2}
        let erf = libm::erf(2.0 * 2f64.sqrt());
        let expected = 0.5 * ((std::f64::consts::PI / 8.0).sqrt() * erf).sqrt();
        assert_relative_eq!(objective(&[0.5], &[0.0], &k, &default_rule()), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 0.395796, max_relative = 1e-6);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let rule = default_rule();
        for id in KernelId::ALL {
            let m = Misfit::new(&KernelSpec::unit(id), &rule);
            let mut state = 0x2545_f491_4f6c_dd1du64;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            for _ in 0..20 {
                let mut p: Vec<f64> = (0..3).map(|_| 0.1 + 0.5 * next()).collect();
                p.extend((0..3).map(|_| -1.0 + 4.0 * next()));
                let (_, g, h) = m.value_grad_hess(&p);
                let step = 1e-6;
                for c in 0..p.len() {
                    let mut pp = p.clone();
                    let mut pm = p.clone();
                    pp[c] += step;
                    pm[c] -= step;
                    let fd = (m.value_sq_packed(&pp) - m.value_sq_packed(&pm)) / (2.0 * step);
                    let scale = g[c].abs().max(1e-8);
                    assert!((fd - g[c]).abs() / scale < 1e-5, "{id}: grad[{c}] {} vs fd {fd}", g[c]);
                    let (_, gp, _) = m.value_grad_hess(&pp);
                    let (_, gm, _) = m.value_grad_hess(&pm);
                    for r in 0..p.len() {
                        let fdh = (gp[r] - gm[r]) / (2.0 * step);
                        let hs = h[(r, c)].abs().max(1e-6);
                        assert!((fdh - h[(r, c)]).abs() / hs < 1e-4, "{id}: H[{r},{c}]");
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let rule = default_rule();
        let k = KernelSpec::unit(KernelId::Matern52);
        let j1 = objective(&[0.2, 0.5, 0.3], &[-1.0, 0.5, 2.0], &k, &rule);
        let j2 = objective(&[0.3, 0.2, 0.5], &[2.0, -1.0, 0.5], &k, &rule);
        assert_relative_eq!(j1, j2, max_relative = 1e-14);
    }
}
