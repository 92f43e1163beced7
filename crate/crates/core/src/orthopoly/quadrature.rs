use serde::{Deserialize, Serialize};

use super::{beta_k, Interval};
use crate::error::{Error, Result};
use crate::linalg::{tridiagonal_eigen, Vectors};
use crate::scalar::Real;

/// Nodes and positive weights of a (possibly composite) Gauss-Legendre rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    interval: Interval<T>,
    total_mass: T,
}

impl<T: Real> GaussRule<T> {
    #[inline]
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    /// Sum of the weights.
    #[inline]
    pub fn total_mass(&self) -> T {
        self.total_mass
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Joins rules on abutting intervals, left to right.
    fn concat(parts: Vec<GaussRule<T>>) -> Self {
        let lo = parts.first().map(|r| r.interval.lo).unwrap_or_else(T::zero);
        let hi = parts.last().map(|r| r.interval.hi).unwrap_or_else(T::one);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in parts {
            nodes.extend(p.nodes);
            weights.extend(p.weights);
        }
        let total_mass = weights.iter().copied().sum();
        Self { nodes, weights, interval: Interval { lo, hi }, total_mass }
    }
}

/// `n`-point Gauss-Legendre rule on `interval` from the eigen-decomposition of
/// the Jacobi matrix (zero diagonal, off-diagonals `√β_k`).
pub fn gauss_rule<T: Real>(n: usize, interval: Interval<T>) -> Result<GaussRule<T>> {
    if n == 0 {
        return Err(Error::Precondition("a Gauss rule needs at least one node".into()));
    }
    let diag = vec![T::zero(); n];
    let off: Vec<T> = (1..n).map(|k| beta_k::<T>(k).sqrt()).collect();
    let eig = tridiagonal_eigen(&diag, &off, Vectors::FirstRow);
    let first = eig.vectors.expect("first row requested");
    let m0 = T::lit(2.0);
    let mut t = eig.values;
    let mut w: Vec<T> = (0..n).map(|i| m0 * first[(0, i)] * first[(0, i)]).collect();

    // The rule is symmetric about zero; enforce it exactly.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let node = (t[j] - t[i]) / T::lit(2.0);
        let weight = (w[i] + w[j]) / T::lit(2.0);
        t[i] = -node;
        t[j] = node;
        w[i] = weight;
        w[j] = weight;
    }
    if n % 2 == 1 {
        t[n / 2] = T::zero();
    }

    let half = interval.len() / T::lit(2.0);
    let nodes = t.into_iter().map(|ti| interval.from_reference(ti)).collect();
    let weights: Vec<T> = w.into_iter().map(|wi| wi * half).collect();
    let total_mass = weights.iter().copied().sum();
    Ok(GaussRule { nodes, weights, interval, total_mass })
}

/// Concatenated `n`-point rules on consecutive panels `[b_0, b_1], [b_1, b_2], ...`.
pub fn gauss_rule_panels<T: Real>(n: usize, breakpoints: &[T]) -> Result<GaussRule<T>> {
    if breakpoints.len() < 2 {
        return Err(Error::Precondition("need at least two breakpoints".into()));
    }
    let reference = gauss_rule(n, Interval::reference())?;
    let mut parts = Vec::with_capacity(breakpoints.len() - 1);
    for w in breakpoints.windows(2) {
        let iv = Interval::new(w[0], w[1])?;
        let half = iv.len() / T::lit(2.0);
        let nodes = reference.nodes.iter().map(|&t| iv.from_reference(t)).collect();
        let weights: Vec<T> = reference.weights.iter().map(|&wi| wi * half).collect();
        let total_mass = weights.iter().copied().sum();
        parts.push(GaussRule { nodes, weights, interval: iv, total_mass });
    }
    Ok(GaussRule::concat(parts))
}

/// Multi-level rule on `[0, L]` with geometric panels
/// `[0, Lρ^m], [Lρ^m, Lρ^{m-1}], ..., [Lρ, L]`, `n_per_panel` nodes each.
pub fn composite_rule<T: Real>(
    length: T,
    levels: usize,
    ratio: T,
    n_per_panel: usize,
) -> Result<GaussRule<T>> {
    if !(length > T::zero()) {
        return Err(Error::Precondition(format!("composite rule length must be positive, got {length}")));
    }
    if !(ratio > T::zero() && ratio < T::one()) {
        return Err(Error::Precondition(format!("division ratio must lie in (0, 1), got {ratio}")));
    }
    let mut breakpoints = Vec::with_capacity(levels + 2);
    breakpoints.push(T::zero());
    for level in (1..=levels).rev() {
        breakpoints.push(length * ratio.powi(level as i32));
    }
    breakpoints.push(length);
    gauss_rule_panels(n_per_panel, &breakpoints)
}
