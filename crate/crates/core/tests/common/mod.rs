#![allow(dead_code)]

use kl_legendre::linalg::Mat;

/// Eigenvalues of `e^{-|x-y|}` on an interval of half-length `a`, largest first.
///
/// With `λ = 2 / (1 + ω²)`, even eigenfunctions need `ω tan(ωa) = 1` with
/// `ωa ∈ (kπ, kπ + π/2)` and odd ones `tan(ωa) = -ω` with
/// `ωa ∈ (kπ + π/2, (k+1)π)`.
pub fn exponential_kernel_eigenvalues(count: usize, a: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    let even = |w: f64| w * (w * a).sin() - (w * a).cos();
    let odd = |w: f64| (w * a).sin() + w * (w * a).cos();
    let mut omegas = Vec::new();
    for k in 0..count {
        let k = k as f64;
        omegas.push(bisect(even, k * PI / a, (k * PI + PI / 2.0) / a));
        omegas.push(bisect(odd, (k * PI + PI / 2.0) / a, (k + 1.0) * PI / a));
    }
    let mut lams: Vec<f64> = omegas.into_iter().map(|w| 2.0 / (1.0 + w * w)).collect();
    lams.sort_by(|x, y| y.partial_cmp(x).unwrap());
    lams.truncate(count);
    lams
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvalues of a symmetric matrix from nalgebra, largest first.
pub fn dense_eigenvalues(m: &Mat<f64>) -> Vec<f64> {
    let n = m.rows();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut v: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| y.partial_cmp(x).unwrap());
    v
}

/// `n!` as a float.
pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

/// `∫∫ C(|x-y|) K_n(x0, x) K_n(x0, y)` on `[0, 1]²` with the Christoffel-Darboux
/// kernel `K_n(x0, ·) = Σ_{α≤n} ψ_α(x0) ψ_α(·)` of the orthonormal Legendre basis:
/// the Galerkin projection of `C` evaluated at `(x0, x0)`.
pub fn projected_diagonal(c: impl Fn(f64) -> f64, n: usize, x0: f64) -> f64 {
    use kl_legendre::orthopoly::{gauss_rule, gauss_rule_panels, BasisSpec, Interval};
    let basis = BasisSpec::<f64>::orthonormal_unit(n);
    let p0 = basis.eval_point(x0).unwrap();
    let cd = |y: f64| basis.eval_point(y).unwrap().iter().zip(&p0).map(|(a, b)| a * b).sum::<f64>();
    let inner = gauss_rule::<f64>(120, Interval::reference()).unwrap();
    let outer = gauss_rule_panels::<f64>(60, &[0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0]).unwrap();
    let mut total = 0.0;
    for (x, wx) in outer.iter() {
        let mut s = 0.0;
        for (a, b) in [(0.0, x), (x, 1.0)] {
            let h = (b - a) / 2.0;
            for (t, wt) in inner.iter() {
                let y = a + h * (t + 1.0);
                s += h * wt * c((x - y).abs()) * cd(y);
            }
        }
        total += wx * s * cd(x);
    }
    total
}
