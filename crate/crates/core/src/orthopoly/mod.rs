//! Legendre polynomials in three normalizations and the Gauss rules built
//! from their recurrence coefficients.
//!
//! The reference interval is `[-1, 1]`. A point `x` of an interval `[lo, hi]`
//! maps to `t = (2x - lo - hi) / (hi - lo)`; weights and norms scale by
//! `(hi - lo) / 2`. Every module in the crate uses this one convention.

mod quadrature;

pub use quadrature::{composite_rule, gauss_rule, gauss_rule_panels, GaussRule};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Real;

/// Closed non-degenerate interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("interval [{lo}, {hi}] is empty or not finite")));
        }
        Ok(Self { lo, hi })
    }

    /// `[0, 1]`.
    pub fn unit() -> Self {
        Self { lo: T::zero(), hi: T::one() }
    }

    /// `[-1, 1]`.
    pub fn reference() -> Self {
        Self { lo: -T::one(), hi: T::one() }
    }

    #[inline]
    pub fn len(&self) -> T {
        self.hi - self.lo
    }

    #[inline]
    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) / T::lit(2.0)
    }

    /// Maps `x` in this interval to `[-1, 1]`.
    #[inline]
    pub fn to_reference(&self, x: T) -> T {
        (T::lit(2.0) * x - self.lo - self.hi) / self.len()
    }

    /// Maps `t` in `[-1, 1]` to this interval.
    #[inline]
    pub fn from_reference(&self, t: T) -> T {
        self.midpoint() + self.len() / T::lit(2.0) * t
    }

    /// Membership test with a few ulps of slack at the endpoints.
    pub fn contains(&self, x: T) -> bool {
        let slack = T::lit(64.0) * T::epsilon() * (self.lo.abs() + self.hi.abs() + self.len());
        x >= self.lo - slack && x <= self.hi + slack
    }
}

/// Recurrence coefficients of the monic Legendre family,
/// `π_{k+1}(t) = (t - α_k) π_k(t) - β_k π_{k-1}(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceCoeffs<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

/// `α_k = 0` and `β_k = k² / (4k² - 1)` (with `β_0 = 0`) for `k = 0..=k_max`.
pub fn recurrence_coeffs<T: Real>(k_max: usize) -> RecurrenceCoeffs<T> {
    let beta = (0..=k_max).map(beta_k::<T>).collect();
    RecurrenceCoeffs { alpha: vec![T::zero(); k_max + 1], beta }
}

#[inline]
pub(crate) fn beta_k<T: Real>(k: usize) -> T {
    if k == 0 {
        return T::zero();
    }
    let k2 = T::from_count(k * k);
    k2 / (T::lit(4.0) * k2 - T::one())
}

/// `π_k(1) = 2^k (k!)² / (2k)!`, accumulated as `Π_{i≤k} i / (2i - 1)`.
pub fn monic_value_at_one<T: Real>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::from_count(i) / T::from_count(2 * i - 1))
}

/// `‖π_k‖² = 2^{2k+1} (k!)⁴ / ((2k+1) ((2k)!)²) = 2 π_k(1)² / (2k + 1)`.
pub fn monic_norm_sq<T: Real>(k: usize) -> T {
    let v = monic_value_at_one::<T>(k);
    T::lit(2.0) * v * v / T::from_count(2 * k + 1)
}

/// Which member of the Legendre family to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Leading coefficient one.
    Monic,
    /// Unit `L²` norm on the basis interval.
    Orthonormal,
    /// `P_k(1) = 1`.
    Classical,
}

/// Degrees `0..=degree_max` of one normalization on `interval`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec<T> {
    pub degree_max: usize,
    pub interval: Interval<T>,
    pub normalization: Normalization,
}

impl<T: Real> BasisSpec<T> {
    pub fn new(degree_max: usize, interval: Interval<T>, normalization: Normalization) -> Self {
        Self { degree_max, interval, normalization }
    }

    /// Orthonormal basis on `[0, 1]`, the workhorse of the Galerkin assembly.
    pub fn orthonormal_unit(degree_max: usize) -> Self {
        Self::new(degree_max, Interval::unit(), Normalization::Orthonormal)
    }

    /// Evaluates all degrees at `x` into `out[0..=degree_max]` without the
    /// interval check.
    #[inline]
    pub fn eval_point_into(&self, x: T, out: &mut [T]) {
        let t = self.interval.to_reference(x);
        match self.normalization {
            Normalization::Monic => monic_into(t, out),
            Normalization::Classical => classical_into(t, out),
            Normalization::Orthonormal => {
                let scale = (self.interval.len() / T::lit(2.0)).sqrt().recip();
                orthonormal_into(t, scale, out)
            }
        }
    }

    pub fn eval_point(&self, x: T) -> Result<Vec<T>> {
        if !self.interval.contains(x) {
            return Err(point_outside(x, &self.interval));
        }
        let mut out = vec![T::zero(); self.degree_max + 1];
        self.eval_point_into(x, &mut out);
        Ok(out)
    }
}

fn point_outside<T: Real>(x: T, iv: &Interval<T>) -> Error {
    Error::Domain(format!("point {x} lies outside [{}, {}]", iv.lo, iv.hi))
}

/// Table of basis values, rows indexed by degree and columns by point.
pub fn eval_basis<T: Real>(spec: &BasisSpec<T>, points: &[T]) -> Result<Mat<T>> {
    if let Some(&bad) = points.iter().find(|&&x| !spec.interval.contains(x)) {
        return Err(point_outside(bad, &spec.interval));
    }
    let rows = spec.degree_max + 1;
    let mut table = Mat::zeros(rows, points.len());
    let mut buf = vec![T::zero(); rows];
    for (j, &x) in points.iter().enumerate() {
        spec.eval_point_into(x, &mut buf);
        for (k, &v) in buf.iter().enumerate() {
            table[(k, j)] = v;
        }
    }
    Ok(table)
}

fn monic_into<T: Real>(t: T, out: &mut [T]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = T::one();
    if n > 1 {
        out[1] = t;
    }
    for k in 1..n.saturating_sub(1) {
        out[k + 1] = t * out[k] - beta_k::<T>(k) * out[k - 1];
    }
}

fn classical_into<T: Real>(t: T, out: &mut [T]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = T::one();
    if n > 1 {
        out[1] = t;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = T::from_count(k);
        out[k + 1] = (T::from_count(2 * k + 1) * t * out[k] - kf * out[k - 1]) / (kf + T::one());
    }
}

fn orthonormal_into<T: Real>(t: T, scale: T, out: &mut [T]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let four = T::lit(4.0);
    out[0] = T::lit(0.5).sqrt();
    if n > 1 {
        out[1] = T::lit(1.5).sqrt() * t;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = T::from_count(k);
        let k1 = kf + T::one();
        let up = (four - (k1 * k1).recip()).sqrt();
        let down = (four - (kf * kf).recip()).sqrt();
        out[k + 1] = up * (t * out[k] - out[k - 1] / down);
    }
    for v in out.iter_mut() {
        *v = *v * scale;
    }
}
