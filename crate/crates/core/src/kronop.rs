//! Kronecker-structured Galerkin operators `A^ε = Σ_i a_i ⊗_l B_{i,l}^{ε_l}`,
//! one per parity vector `ε ∈ {0,1}^D`.
//!
//! Multi-indices flatten row-major: direction 1 varies slowest.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{duffy_block, rescale_to_unit, BlockCache, DuffyConfig, Parity, ParityBlockSet};
use crate::error::{Error, Result};
use crate::linalg::{Mat, SymmetricOperator};
use crate::orthopoly::Interval;
use crate::scalar::Real;
use crate::sefit::SqExpMixture;

/// Largest dimension [`KronOperator::materialize`] will expand.
pub const MATERIALIZE_LIMIT: usize = 4096;

/// Axis-aligned box `Π_l [a_l, b_l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain<T> {
    intervals: Vec<Interval<T>>,
}

impl<T: Real> Domain<T> {
    pub fn new(intervals: Vec<Interval<T>>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Domain("a domain needs at least one direction".into()));
        }
        for iv in &intervals {
            Interval::new(iv.lo, iv.hi)?;
        }
        Ok(Self { intervals })
    }

    /// `[0, 1]^d`.
    pub fn unit_cube(d: usize) -> Self {
        Self { intervals: vec![Interval::unit(); d.max(1)] }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    pub fn volume(&self) -> T {
        self.intervals.iter().fold(T::one(), |v, iv| v * iv.len())
    }

    /// Largest distance between two points of the box.
    pub fn diameter(&self) -> T {
        self.intervals.iter().map(|iv| iv.len() * iv.len()).sum::<T>().sqrt()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && self.intervals.iter().zip(x).all(|(iv, &xi)| iv.contains(xi))
    }
}

impl FromStr for Domain<f64> {
    type Err = Error;

    /// `"lo,hi"` per direction, directions joined by `x`: `"0,1x0,2"`.
    fn from_str(s: &str) -> Result<Self> {
        let intervals = s
            .split('x')
            .map(|part| {
                let (lo, hi) = part
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("expected `lo,hi` in domain component `{part}`")))?;
                let parse = |v: &str| {
                    v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad bound `{v}` in domain: {e}")))
                };
                Interval::new(parse(lo)?, parse(hi)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Domain::new(intervals)
    }
}

impl fmt::Display for Domain<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.intervals.iter().map(|iv| format!("{},{}", iv.lo, iv.hi)).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Parity vector `ε`, one bit per direction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParityVector(pub Vec<Parity>);

impl ParityVector {
    /// All `2^D` vectors ordered by [`ParityVector::index`].
    pub fn all(d: usize) -> Vec<Self> {
        (0..1usize << d).map(|idx| Self::from_index(idx, d)).collect()
    }

    /// Bit `D-1-l` of `idx` is `ε_l`.
    pub fn from_index(idx: usize, d: usize) -> Self {
        Self((0..d).map(|l| Parity::from_bit(idx >> (d - 1 - l))).collect())
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, p| (acc << 1) | p.bit())
    }

    pub fn bits(&self) -> Vec<u8> {
        self.0.iter().map(|p| p.bit() as u8).collect()
    }

    /// `"01"`-style label.
    pub fn label(&self) -> String {
        self.0.iter().map(|p| if p.bit() == 0 { '0' } else { '1' }).collect()
    }

    pub fn dims(&self, n: usize) -> Vec<usize> {
        self.0.iter().map(|p| p.count(n)).collect()
    }
}

impl fmt::Display for ParityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// One weighted Kronecker product `a ⊗_l B_l`.
#[derive(Clone, Debug)]
pub struct KronTerm<T> {
    pub weight: T,
    pub factors: Vec<Arc<Mat<T>>>,
}

/// Symmetric operator `Σ_i a_i ⊗_l B_{i,l}` applied by mode products.
#[derive(Clone, Debug)]
pub struct KronOperator<T> {
    parity: Option<ParityVector>,
    sizes: Vec<usize>,
    terms: Vec<KronTerm<T>>,
    dim: usize,
}

impl<T: Real> KronOperator<T> {
    /// Checks that every term has one square factor per direction of the given sizes.
    pub fn new(parity: Option<ParityVector>, sizes: Vec<usize>, terms: Vec<KronTerm<T>>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Precondition("operator needs at least one direction".into()));
        }
        if let Some(p) = &parity {
            if p.0.len() != sizes.len() {
                return Err(Error::DimensionMismatch { expected: sizes.len(), got: p.0.len() });
            }
        }
        for t in &terms {
            if t.factors.len() != sizes.len() {
                return Err(Error::DimensionMismatch { expected: sizes.len(), got: t.factors.len() });
            }
            for (f, &s) in t.factors.iter().zip(&sizes) {
                if f.rows() != s || f.cols() != s {
                    return Err(Error::DimensionMismatch { expected: s, got: f.rows().max(f.cols()) });
                }
            }
        }
        let dim = sizes.iter().product();
        Ok(Self { parity, sizes, terms, dim })
    }

    /// `None` for the unsplit operator.
    pub fn parity(&self) -> Option<&ParityVector> {
        self.parity.as_ref()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn terms(&self) -> &[KronTerm<T>] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Legendre degrees `α_l = 2 i_l + ε_l` of local flat index `idx`
    /// (or `α_l = i_l` for the unsplit operator).
    pub fn degrees_of(&self, idx: usize) -> Vec<usize> {
        let mut rem = idx;
        let mut local = vec![0; self.sizes.len()];
        for l in (0..self.sizes.len()).rev() {
            local[l] = rem % self.sizes[l];
            rem /= self.sizes[l];
        }
        match &self.parity {
            Some(p) => local.iter().zip(&p.0).map(|(i, e)| 2 * i + e.bit()).collect(),
            None => local,
        }
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        let mut count = 0;
        self.matvec_counted(x, &mut count)
    }

    /// [`matvec`](Self::matvec) that adds the number of multiply-adds performed to `count`.
    pub fn matvec_counted(&self, x: &[T], count: &mut u64) -> Result<Vec<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut y = vec![T::zero(); self.dim];
        self.accumulate(x, &mut y, count);
        Ok(y)
    }

    fn accumulate(&self, x: &[T], y: &mut [T], count: &mut u64) {
        let mut cur = vec![T::zero(); self.dim];
        let mut next = vec![T::zero(); self.dim];
        for term in &self.terms {
            cur.copy_from_slice(x);
            for l in (0..self.sizes.len()).rev() {
                let s = self.sizes[l];
                let right: usize = self.sizes[l + 1..].iter().product();
                mode_product(&term.factors[l], &cur, &mut next, s, right);
                *count += (self.dim * s) as u64;
                std::mem::swap(&mut cur, &mut next);
            }
            for (yi, ci) in y.iter_mut().zip(&cur) {
                *yi = *yi + term.weight * *ci;
            }
            *count += self.dim as u64;
        }
    }

    /// `Σ_i a_i Π_l trace(B_{i,l})`.
    pub fn trace(&self) -> T {
        self.terms
            .iter()
            .map(|t| t.weight * t.factors.iter().fold(T::one(), |p, f| p * f.trace()))
            .sum()
    }

    /// Diagonal of the operator.
    pub fn diagonal(&self) -> Vec<T> {
        let d = self.sizes.len();
        (0..self.dim)
            .map(|idx| {
                let mut rem = idx;
                let mut local = vec![0; d];
                for l in (0..d).rev() {
                    local[l] = rem % self.sizes[l];
                    rem /= self.sizes[l];
                }
                self.terms
                    .iter()
                    .map(|t| t.weight * (0..d).fold(T::one(), |p, l| p * t.factors[l][(local[l], local[l])]))
                    .sum()
            })
            .collect()
    }

    /// Dense `Σ_i a_i ⊗_l B_{i,l}`; refused above [`MATERIALIZE_LIMIT`].
    pub fn materialize(&self) -> Result<Mat<T>> {
        if self.dim > MATERIALIZE_LIMIT {
            return Err(Error::TooLarge { dim: self.dim, limit: MATERIALIZE_LIMIT });
        }
        let mut out = Mat::zeros(self.dim, self.dim);
        for t in &self.terms {
            let k = t.factors[1..].iter().fold((*t.factors[0]).clone(), |acc, f| acc.kron(f));
            for (o, v) in out.as_mut_slice().iter_mut().zip(k.as_slice()) {
                *o = *o + t.weight * *v;
            }
        }
        Ok(out)
    }
}

impl<T: Real> SymmetricOperator<T> for KronOperator<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.dim, "operator input has wrong length");
        y.iter_mut().for_each(|v| *v = T::zero());
        let mut count = 0;
        self.accumulate(x, y, &mut count);
    }
}

/// `out[a, i, c] = Σ_j B[i, j] x[a, j, c]` with `x` viewed as `(left, s, right)`.
fn mode_product<T: Real>(b: &Mat<T>, x: &[T], out: &mut [T], s: usize, right: usize) {
    let slab = s * right;
    for (xs, os) in x.chunks_exact(slab).zip(out.chunks_exact_mut(slab)) {
        for i in 0..s {
            let orow = &mut os[i * right..(i + 1) * right];
            orow.iter_mut().for_each(|v| *v = T::zero());
            for (j, &bij) in b.row(i).iter().enumerate() {
                if bij == T::zero() {
                    continue;
                }
                let xrow = &xs[j * right..(j + 1) * right];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o = *o + bij * xv;
                }
            }
        }
    }
}

/// How the 1-D blocks are obtained.
#[derive(Clone, Debug, Default)]
pub struct AssemblyOptions {
    /// Overrides the per-exponent `(g, q)` heuristic.
    pub duffy: Option<DuffyConfig>,
    pub cache: Option<BlockCache>,
}

/// Physical-interval blocks for every `(term, distinct interval length)`.
fn assemble_factors(
    mixture: &SqExpMixture,
    domain: &Domain<f64>,
    n: usize,
    opts: &AssemblyOptions,
) -> Result<(Vec<u64>, HashMap<(usize, u64), Arc<ParityBlockSet<f64>>>)> {
    if mixture.rank() == 0 {
        return Err(Error::Precondition("mixture has no terms".into()));
    }
    let len_keys: Vec<u64> = domain.intervals().iter().map(|iv| iv.len().to_bits()).collect();
    let mut unique: Vec<(usize, u64)> = Vec::new();
    for i in 0..mixture.rank() {
        for &k in &len_keys {
            if !unique.contains(&(i, k)) {
                unique.push((i, k));
            }
        }
    }
    let built: Vec<Result<((usize, u64), Arc<ParityBlockSet<f64>>)>> = unique
        .par_iter()
        .map(|&(i, key)| {
            let len = f64::from_bits(key);
            let (b_eff, scale) = rescale_to_unit(mixture.b[i], Interval::new(0.0, len)?);
            let cfg = opts.duffy.unwrap_or_else(|| DuffyConfig::heuristic(n, b_eff));
            let unit = match &opts.cache {
                Some(cache) => cache.get_or_compute(n, b_eff, cfg)?,
                None => duffy_block(n, b_eff, cfg)?,
            };
            Ok(((i, key), Arc::new(unit.rescaled(scale))))
        })
        .collect();
    let map = built.into_iter().collect::<Result<HashMap<_, _>>>()?;
    Ok((len_keys, map))
}

/// The `2^D` parity operators of the mixture on `domain` at degree `n`,
/// ordered by [`ParityVector::index`].
pub fn build_operators(
    mixture: &SqExpMixture,
    domain: &Domain<f64>,
    n: usize,
    opts: &AssemblyOptions,
) -> Result<Vec<KronOperator<f64>>> {
    let (len_keys, blocks) = assemble_factors(mixture, domain, n, opts)?;
    let d = domain.dim();
    let mut cache: HashMap<(usize, u64, Parity), Arc<Mat<f64>>> = HashMap::new();
    ParityVector::all(d)
        .into_iter()
        .map(|eps| {
            let terms = (0..mixture.rank())
                .map(|i| {
                    let factors = (0..d)
                        .map(|l| {
                            let key = (i, len_keys[l], eps.0[l]);
                            cache
                                .entry(key)
                                .or_insert_with(|| Arc::new(blocks[&(i, len_keys[l])].block(eps.0[l]).clone()))
                                .clone()
                        })
                        .collect();
                    KronTerm { weight: mixture.a[i], factors }
                })
                .collect();
            let sizes = eps.dims(n);
            KronOperator::new(Some(eps), sizes, terms)
        })
        .collect()
}

/// Single operator on the full `(n+1)^D` space, without the parity split.
pub fn build_full_operator(
    mixture: &SqExpMixture,
    domain: &Domain<f64>,
    n: usize,
    opts: &AssemblyOptions,
) -> Result<KronOperator<f64>> {
    let (len_keys, blocks) = assemble_factors(mixture, domain, n, opts)?;
    let d = domain.dim();
    let mut fulls: HashMap<(usize, u64), Arc<Mat<f64>>> = HashMap::new();
    let terms = (0..mixture.rank())
        .map(|i| {
            let factors = (0..d)
                .map(|l| {
                    fulls.entry((i, len_keys[l])).or_insert_with(|| Arc::new(blocks[&(i, len_keys[l])].full())).clone()
                })
                .collect();
            KronTerm { weight: mixture.a[i], factors }
        })
        .collect();
    KronOperator::new(None, vec![n + 1; d], terms)
}

/// `Σ_ε N_ε`, which always equals `(n+1)^D`.
pub fn total_dim(ops: &[KronOperator<f64>]) -> usize {
    ops.iter().map(|o| o.dim()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelId, KernelSpec};
    use approx::assert_relative_eq;

    fn single_term(b: f64) -> SqExpMixture {
        SqExpMixture::from_terms(KernelSpec::unit(KernelId::SquaredExponential), vec![1.0], vec![b], 2.0).unwrap()
    }

    fn rng(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    fn random_symmetric(n: usize, next: &mut impl FnMut() -> f64) -> Mat<f64> {
        let m = Mat::from_fn(n, n, |_, _| next());
        Mat::from_fn(n, n, |i, j| m[(i, j)] + m[(j, i)])
    }

    #[test]
    fn domain_grammar() {
        let d: Domain<f64> = "0,1x-1,2".parse().unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.volume(), 3.0);
        assert_eq!(d.to_string(), "0,1x-1,2");
        assert!("0,1x1,0".parse::<Domain<f64>>().is_err());
        assert!("0;1".parse::<Domain<f64>>().is_err());
        assert!("a,b".parse::<Domain<f64>>().is_err());
    }

    #[test]
    fn parity_vector_ordering() {
        let all = ParityVector::all(2);
        let labels: Vec<String> = all.iter().map(|p| p.label()).collect();
        assert_eq!(labels, ["00", "01", "10", "11"]);
        for (i, p) in all.iter().enumerate() {
            assert_eq!(p.index(), i);
        }
    }

    #[test]
    fn operator_dimensions() {
        let m = single_term(1.0);
        let ops = build_operators(&m, &Domain::unit_cube(1), 4, &AssemblyOptions::default()).unwrap();
        assert_eq!(ops.iter().map(|o| o.dim()).collect::<Vec<_>>(), [3, 2]);
        let ops = build_operators(&m, &Domain::unit_cube(2), 4, &AssemblyOptions::default()).unwrap();
        assert_eq!(ops.iter().map(|o| o.dim()).collect::<Vec<_>>(), [9, 6, 6, 4]);
        assert_eq!(total_dim(&ops), 25);
    }

    #[test]
    fn flat_kernel_is_rank_one() {
        let m = single_term(1e-12);
        let ops = build_operators(&m, &Domain::unit_cube(2), 4, &AssemblyOptions::default()).unwrap();
        let e = crate::linalg::symmetric_eigen(&ops[0].materialize().unwrap());
        let top = *e.values.last().unwrap();
        assert_relative_eq!(top, 1.0, max_relative = 1e-9);
        assert!(e.values[..e.values.len() - 1].iter().all(|v| v.abs() < 1e-9));
        for op in &ops[1..] {
            assert!(op.materialize().unwrap().frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn identity_factors() {
        let terms = vec![KronTerm { weight: 1.0, factors: vec![Arc::new(Mat::identity(3)), Arc::new(Mat::identity(2))] }];
        let op = KronOperator::new(None, vec![3, 2], terms).unwrap();
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        assert_eq!(op.matvec(&x).unwrap(), x);
        assert_eq!(op.materialize().unwrap(), Mat::identity(6));
        let twice = KronOperator::new(
            None,
            vec![3, 2],
            vec![KronTerm { weight: 2.0, factors: vec![Arc::new(Mat::identity(3)), Arc::new(Mat::identity(2))] }],
        )
        .unwrap();
        assert_eq!(twice.trace(), 12.0);
        assert!(op.matvec(&[1.0; 5]).is_err());
    }

    #[test]
    fn unit_vector_picks_kron_column() {
        let mut next = rng(7);
        let b1 = random_symmetric(3, &mut next);
        let b2 = random_symmetric(2, &mut next);
        let op = KronOperator::new(
            None,
            vec![3, 2],
            vec![KronTerm { weight: 1.5, factors: vec![Arc::new(b1.clone()), Arc::new(b2.clone())] }],
        )
        .unwrap();
        let mut e0 = vec![0.0; 6];
        e0[0] = 1.0;
        let y = op.matvec(&e0).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_relative_eq!(y[i * 2 + j], 1.5 * b1[(i, 0)] * b2[(j, 0)], max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn matvec_matches_dense_on_random_operators() {
        let mut next = rng(0x1234_5678);
        for case in 0..50 {
            let d = 1 + case % 3;
            let sizes: Vec<usize> = (0..d).map(|l| 1 + (case + 2 * l) % 4).collect();
            let k = 1 + case % 4;
            let terms: Vec<KronTerm<f64>> = (0..k)
                .map(|_| KronTerm {
                    weight: next() + 0.5,
                    factors: sizes.iter().map(|&s| Arc::new(random_symmetric(s, &mut next))).collect(),
                })
                .collect();
            let op = KronOperator::new(None, sizes, terms).unwrap();
            let dense = op.materialize().unwrap();
            assert_eq!(dense.max_asymmetry(), 0.0);
            assert!((dense.trace() - op.trace()).abs() < 1e-13 * dense.trace().abs().max(1.0));
            let diag = op.diagonal();
            for (i, dv) in diag.iter().enumerate() {
                assert!((dense[(i, i)] - dv).abs() < 1e-13);
            }
            for _ in 0..20 {
                let x: Vec<f64> = (0..op.dim()).map(|_| next()).collect();
                let y = op.matvec(&x).unwrap();
                let yd = dense.mul_vec(&x);
                let scale = yd.iter().map(|v| v.abs()).fold(1.0, f64::max);
                for (a, b) in y.iter().zip(&yd) {
                    assert!((a - b).abs() <= 1e-13 * scale);
                }
            }
        }
    }

    #[test]
    fn split_and_full_traces_agree() {
        let m = SqExpMixture::from_terms(KernelSpec::unit(KernelId::Exponential), vec![0.3, 0.7], vec![0.5, 40.0], 2.0).unwrap();
        let dom: Domain<f64> = "0,1x0,2".parse().unwrap();
        let opts = AssemblyOptions::default();
        let ops = build_operators(&m, &dom, 6, &opts).unwrap();
        let full = build_full_operator(&m, &dom, 6, &opts).unwrap();
        let split: f64 = ops.iter().map(|o| o.trace()).sum();
        assert_relative_eq!(split, full.trace(), max_relative = 1e-13);
        assert_eq!(total_dim(&ops), full.dim());
    }

    #[test]
    fn materialize_guard() {
        let f = Arc::new(Mat::<f64>::identity(65));
        let op = KronOperator::new(None, vec![65, 65], vec![KronTerm { weight: 1.0, factors: vec![f.clone(), f] }]).unwrap();
        assert!(matches!(op.materialize(), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn mismatched_factor_sizes_rejected() {
        let terms = vec![KronTerm { weight: 1.0, factors: vec![Arc::new(Mat::<f64>::identity(2))] }];
        assert!(KronOperator::new(None, vec![3], terms).is_err());
    }

    #[test]
    fn degree_lookup() {
        let m = single_term(1.0);
        let ops = build_operators(&m, &Domain::unit_cube(2), 4, &AssemblyOptions::default()).unwrap();
        // ε = 01: sizes (3, 2); local index 3 is (1, 1), degrees (2, 3).
        assert_eq!(ops[1].degrees_of(3), vec![2, 3]);
    }
}
