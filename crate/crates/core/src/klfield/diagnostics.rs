use serde::{Deserialize, Serialize};

use super::KLExpansion;
use crate::error::{Error, Result};
use crate::kernels::IsotropicKernel;
use crate::linalg::Mat;
use crate::orthopoly::{gauss_rule, gauss_rule_panels, BasisSpec, Interval, Normalization};

/// Quadrature used by the one-dimensional diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticQuad {
    /// Gauss points on each side of the split at `y = x`.
    pub inner_per_panel: usize,
    pub outer_panels: usize,
    pub outer_per_panel: usize,
}

impl Default for DiagnosticQuad {
    fn default() -> Self {
        Self { inner_per_panel: 80, outer_panels: 4, outer_per_panel: 50 }
    }
}

impl KLExpansion {
    fn interval_1d(&self, what: &str) -> Result<Interval<f64>> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!("{what} is only available for one-dimensional expansions")));
        }
        Ok(self.domain.intervals()[0])
    }

    fn basis_1d(&self, iv: Interval<f64>) -> BasisSpec<f64> {
        BasisSpec::new(self.n, iv, Normalization::Orthonormal)
    }

    /// `R(u_j, λ_j) = ‖∫ C(|x-y|) φ_j(y) dy - λ_j φ_j(x)‖_{L²}` against the
    /// original kernel, with the inner integral split at `y = x`.
    pub fn residual(&self, j: usize, quad: &DiagnosticQuad) -> Result<f64> {
        let iv = self.interval_1d("the residual")?;
        self.check_index(j)?;
        let kernel = self.mixture.kernel_spec();
        let basis = self.basis_1d(iv);
        let coeffs = &self.coeffs[j];
        let mut buf = vec![0.0; self.n + 1];
        let mut phi = |y: f64| {
            basis.eval_point_into(y, &mut buf);
            buf.iter().zip(coeffs).map(|(b, c)| b * c).sum::<f64>()
        };
        let brk: Vec<f64> = (0..=quad.outer_panels)
            .map(|i| iv.lo + iv.len() * i as f64 / quad.outer_panels as f64)
            .collect();
        let outer = gauss_rule_panels(quad.outer_per_panel, &brk)?;
        let inner = gauss_rule::<f64>(quad.inner_per_panel, Interval::reference())?;
        let lam = self.eigenvalues[j];
        let mut total = 0.0f64;
        for (x, wx) in outer.iter() {
            let mut integral = 0.0f64;
            for (a, b) in [(iv.lo, x), (x, iv.hi)] {
                let half = (b - a) / 2.0;
                if half <= 0.0 {
                    continue;
                }
                for (t, wt) in inner.iter() {
                    let y = a + half * (t + 1.0);
                    integral += half * wt * kernel.eval((x - y).abs()) * phi(y);
                }
            }
            let r = integral - lam * phi(x);
            total += wx * r * r;
        }
        Ok(total.sqrt())
    }

    /// `Σ_{j ∈ range} λ_j u_j u_jᵀ` in the 1-D coefficient space.
    fn kernel_matrix(&self, range: std::ops::Range<usize>) -> Mat<f64> {
        let m = self.n + 1;
        let mut g = Mat::zeros(m, m);
        for j in range {
            let u = &self.coeffs[j];
            for a in 0..m {
                for b in 0..m {
                    g[(a, b)] += self.eigenvalues[j] * u[a] * u[b];
                }
            }
        }
        g
    }

    /// `2 ∫∫_{y<x} f(x, y)²` over the square, with the triangle mapped from
    /// `[0,1]²` by `x = ξ`, `y = ξ(1-η)` and a `q×q` Gauss rule.
    fn triangle_norm(&self, iv: Interval<f64>, q: usize, g: &Mat<f64>, kernel: Option<&dyn IsotropicKernel>) -> Result<f64> {
        if q < 2 {
            return Err(Error::Precondition("need at least 2 quadrature points".into()));
        }
        let rule = gauss_rule::<f64>(q, Interval::unit())?;
        let basis = self.basis_1d(iv);
        let h = iv.len();
        let m = self.n + 1;
        let mut bx = vec![0.0; m];
        let mut by = vec![0.0; m];
        let mut total = 0.0f64;
        for (xi, wxi) in rule.iter() {
            let x = iv.lo + h * xi;
            basis.eval_point_into(x, &mut bx);
            let gx = g.mul_vec(&bx);
            for (eta, weta) in rule.iter() {
                let y = iv.lo + h * xi * (1.0 - eta);
                basis.eval_point_into(y, &mut by);
                let cn: f64 = gx.iter().zip(&by).map(|(a, b)| a * b).sum();
                let c = kernel.map_or(0.0, |k| k.eval(h * xi * eta));
                let diff = c - cn;
                total += wxi * weta * h * h * xi * diff * diff;
            }
        }
        Ok((2.0 * total).sqrt())
    }

    /// `‖C - C_N‖_{L²}` against the original kernel.
    pub fn cov_l2_error(&self, n_trunc: usize, q: usize) -> Result<f64> {
        let iv = self.interval_1d("the covariance error")?;
        self.check_trunc(n_trunc)?;
        let kernel = self.mixture.kernel_spec();
        self.triangle_norm(iv, q, &self.kernel_matrix(0..n_trunc), Some(&kernel))
    }

    /// `‖C_M - C_N‖_{L²}` where `C_M` uses every stored pair; equals
    /// `(Σ_{N ≤ j < M} λ_j²)^{1/2}` by orthonormality.
    pub fn galerkin_truncation_error(&self, n_trunc: usize, q: usize) -> Result<f64> {
        let iv = self.interval_1d("the truncation error")?;
        self.check_trunc(n_trunc)?;
        self.triangle_norm(iv, q, &self.kernel_matrix(n_trunc..self.num_pairs()), None)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::flat_expansion;
    use super::super::{decompose, DecomposeOptions};
    use super::*;
    use crate::kernels::{KernelId, KernelSpec};
    use crate::kronop::Domain;
    use crate::sefit::{fit_mixture, FitConfig, SqExpMixture};
    use approx::assert_relative_eq;

    #[test]
    fn higher_dimensions_rejected() {
        let e = flat_expansion(2, 2, 2);
        assert!(matches!(e.residual(0, &DiagnosticQuad::default()), Err(Error::Unsupported(_))));
        assert!(matches!(e.cov_l2_error(1, 20), Err(Error::Unsupported(_))));
    }

    #[test]
    fn exact_squared_exponential_residual() {
        let m = SqExpMixture::from_terms(KernelSpec::unit(KernelId::SquaredExponential), vec![1.0], vec![1.0], 2.0).unwrap();
        let e = decompose(&m, &Domain::unit_cube(1), 40, 10, &DecomposeOptions::default()).unwrap();
        assert!(e.residual(0, &DiagnosticQuad::default()).unwrap() <= 1e-9);
        assert!(e.cov_l2_error(10, 60).unwrap() < 1e-6);
    }

    #[test]
    fn zero_truncation_is_kernel_norm() {
        let m = fit_mixture(&KernelSpec::unit(KernelId::Exponential), &FitConfig::with_tol(1e-2)).unwrap().0;
        let e = decompose(&m, &Domain::unit_cube(1), 5, 2, &DecomposeOptions::default()).unwrap();
        let exact = ((1.0 + (-2f64).exp()) / 2.0).sqrt();
        assert_relative_eq!(exact, 0.753437, max_relative = 1e-6);
        assert_relative_eq!(e.cov_l2_error(0, 40).unwrap(), exact, max_relative = 1e-10);
    }

    #[test]
    fn truncation_identity() {
        let m = fit_mixture(&KernelSpec::unit(KernelId::Exponential), &FitConfig::with_tol(1e-4)).unwrap().0;
        let n = 15;
        let e = decompose(&m, &Domain::unit_cube(1), n, n + 1, &DecomposeOptions::default()).unwrap();
        for cut in [0, 1, 4, 9, 16] {
            let tail: f64 = e.eigenvalues[cut..].iter().map(|l| l * l).sum();
            let got = e.galerkin_truncation_error(cut, 2 * n + 4).unwrap();
            assert!((got * got - tail).abs() <= 1e-10 * e.eigenvalues[0].powi(2), "N = {cut}");
        }
    }

    #[test]
    fn annihilated_direction_has_zero_residual() {
        let e = flat_expansion(1, 4, 5);
        assert!(e.eigenvalues[3] < 1e-9);
        let r = e.residual(3, &DiagnosticQuad::default()).unwrap();
        assert!(r < 1e-9, "{r}");
    }
}
