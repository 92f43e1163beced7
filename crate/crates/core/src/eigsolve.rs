//! Leading eigenpairs of symmetric operators and the merged parity spectrum.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kronop::{KronOperator, ParityVector};
use crate::linalg::{symmetric_eigen, tridiagonal_eigen, Mat, SymmetricOperator, Vectors};
use crate::scalar::Real;

/// Operators up to this dimension are solved densely.
pub const DENSE_THRESHOLD: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigRequest {
    /// Pairs per block.
    pub num_pairs: usize,
    /// Accepted residual `‖Av - λv‖ ≤ tol·λ_1`.
    pub tol: f64,
    /// Krylov dimension cap; `None` allows the full space.
    pub max_lanczos_dim: Option<usize>,
    pub dense_threshold: usize,
}

impl EigRequest {
    pub fn new(num_pairs: usize) -> Self {
        Self { num_pairs, tol: 1e-10, max_lanczos_dim: None, dense_threshold: DENSE_THRESHOLD }
    }

    /// `⌈count / 2^D⌉` pairs per parity block.
    pub fn for_global_count(count: usize, d: usize) -> Self {
        Self::new(count.div_ceil(1 << d))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.num_pairs == 0 {
            return Err(Error::Precondition("request at least one eigenpair".into()));
        }
        if self.num_pairs > dim {
            return Err(Error::Precondition(format!("requested {} eigenpairs of a {dim}-dimensional operator", self.num_pairs)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Precondition(format!("eigen tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigStatus {
    Converged,
    /// Krylov cap reached; only the leading `converged` pairs met the tolerance.
    Partial { converged: usize },
}

/// Leading pairs of one operator, descending.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSpectrum<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
    pub status: EigStatus,
    /// Operator applications used.
    pub matvecs: usize,
}

fn normalize_sign<T: Real>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Two classical Gram-Schmidt passes against `basis`.
fn orthogonalize<T: Real>(w: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi = *wi - c * *qi;
            }
        }
    }
}

fn random_unit<T: Real>(rng: &mut ChaCha8Rng, dim: usize, basis: &[Vec<T>]) -> Option<Vec<T>> {
    for _ in 0..8 {
        let mut v: Vec<T> = (0..dim).map(|_| T::lit(StandardNormal.sample(rng))).collect();
        orthogonalize(&mut v, basis);
        let nv = norm(&v);
        if nv > T::lit(1e-8) {
            v.iter_mut().for_each(|x| *x = *x / nv);
            return Some(v);
        }
    }
    None
}

fn dense_topk<T: Real>(op: &dyn SymmetricOperator<T>, m: usize) -> PartialSpectrum<T> {
    let dim = op.dim();
    let mut a = Mat::zeros(dim, dim);
    let mut e = vec![T::zero(); dim];
    let mut col = vec![T::zero(); dim];
    for j in 0..dim {
        e[j] = T::one();
        op.apply_into(&e, &mut col);
        e[j] = T::zero();
        for i in 0..dim {
            a[(i, j)] = col[i];
        }
    }
    let half = T::lit(0.5);
    let sym = Mat::from_fn(dim, dim, |i, j| half * (a[(i, j)] + a[(j, i)]));
    let eig = symmetric_eigen(&sym);
    let vecs = eig.vectors.expect("dense eigensolver returns vectors");
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    for idx in (dim - m..dim).rev() {
        values.push(eig.values[idx]);
        let mut v = vecs.column(idx);
        normalize_sign(&mut v);
        vectors.push(v);
    }
    PartialSpectrum { values, vectors, status: EigStatus::Converged, matvecs: dim }
}

/// `M` largest eigenpairs. Lanczos with full reorthogonalization, grown until
/// the Ritz residual estimates and then the true residuals meet `tol·λ_1`;
/// small operators are solved densely.
pub fn lanczos_topk<T: Real>(op: &dyn SymmetricOperator<T>, req: &EigRequest, seed: u64) -> Result<PartialSpectrum<T>> {
    lanczos_stream(op, req, seed, 0)
}

fn lanczos_stream<T: Real>(op: &dyn SymmetricOperator<T>, req: &EigRequest, seed: u64, stream: u64) -> Result<PartialSpectrum<T>> {
    let dim = op.dim();
    req.validate(dim)?;
    let m_req = req.num_pairs;
    if dim <= req.dense_threshold {
        return Ok(dense_topk(op, m_req));
    }
    let cap = req.max_lanczos_dim.unwrap_or(dim).clamp(m_req, dim);
    let tol = T::lit(req.tol);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut basis: Vec<Vec<T>> = Vec::with_capacity(cap.min(4 * m_req + 64));
    let mut alpha: Vec<T> = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    let mut matvecs = 0;
    let mut w = vec![T::zero(); dim];
    let mut q = random_unit(&mut rng, dim, &basis).expect("random start vector");
    let mut next_check = (m_req + 10).min(cap);

    loop {
        op.apply_into(&q, &mut w);
        matvecs += 1;
        let a = dot(&q, &w);
        basis.push(q);
        orthogonalize(&mut w, &basis);
        alpha.push(a);
        let m = basis.len();
        let b = norm(&w);
        let scale = alpha.iter().fold(T::zero(), |s, v| s.max(v.abs()));

        let exhausted = m == cap;
        let check = m >= next_check || exhausted;
        if check {
            let eig = tridiagonal_eigen(&alpha, &beta, Vectors::Full);
            let s = eig.vectors.expect("ritz vectors");
            let lam1 = eig.values[m - 1].abs().max(T::min_positive_value());
            let top = (m - m_req..m).rev();
            let estimates_ok = top.clone().all(|i| b * s[(m - 1, i)].abs() <= tol * lam1);
            if estimates_ok || exhausted {
                let mut values = Vec::with_capacity(m_req);
                let mut vectors = Vec::with_capacity(m_req);
                let mut accepted = 0;
                let mut all_ok = true;
                let mut r = vec![T::zero(); dim];
                for i in top {
                    let mut v = vec![T::zero(); dim];
                    for (k, qk) in basis.iter().enumerate() {
                        let c = s[(k, i)];
                        for (vi, qi) in v.iter_mut().zip(qk) {
                            *vi = *vi + c * *qi;
                        }
                    }
                    let nv = norm(&v);
                    v.iter_mut().for_each(|x| *x = *x / nv);
                    op.apply_into(&v, &mut r);
                    matvecs += 1;
                    let theta = eig.values[i];
                    let res = r.iter().zip(&v).map(|(ri, vi)| (*ri - theta * *vi).powi(2)).sum::<T>().sqrt();
                    if res <= tol * lam1 && all_ok {
                        accepted += 1;
                    } else {
                        all_ok = false;
                    }
                    normalize_sign(&mut v);
                    values.push(theta);
                    vectors.push(v);
                }
                let status = if accepted == m_req { EigStatus::Converged } else { EigStatus::Partial { converged: accepted } };
                let spec = PartialSpectrum { values, vectors, status, matvecs };
                if status == EigStatus::Converged {
                    return Ok(spec);
                }
                if exhausted {
                    warn!("Lanczos reached its dimension cap {cap} with {accepted} of {m_req} pairs converged");
                    return Ok(spec);
                }
            }
            next_check = (m + (m / 8).max(5)).min(cap);
        }

        if b <= T::lit(1e-13) * scale.max(T::min_positive_value()) {
            // Invariant subspace: restart with a fresh direction orthogonal to the basis.
            q = random_unit(&mut rng, dim, &basis)
                .ok_or_else(|| Error::Unsupported("could not extend the Krylov basis after breakdown".into()))?;
            beta.push(T::zero());
        } else {
            q = w.iter().map(|x| *x / b).collect();
            beta.push(b);
        }
    }
}

/// One merged eigenpair with its block of origin.
#[derive(Clone, Debug, PartialEq)]
pub struct EigPair<T> {
    pub value: T,
    /// Unit vector in the coordinates of its parity operator.
    pub vector: Vec<T>,
    pub parity: Option<ParityVector>,
    pub block: usize,
}

/// Merged spectrum of all blocks, descending.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    pub pairs: Vec<EigPair<T>>,
    pub block_status: Vec<EigStatus>,
}

impl<T: Real> Spectrum<T> {
    pub fn eigenvalues(&self) -> Vec<T> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn truncate(&mut self, count: usize) {
        self.pairs.truncate(count);
    }

    pub fn all_converged(&self) -> bool {
        self.block_status.iter().all(|s| *s == EigStatus::Converged)
    }
}

/// Descending by value; exact ties are ordered by parity label.
fn merge_order<T: Real>(pairs: &mut [EigPair<T>]) {
    pairs.sort_by(|a, b| b.value.partial_cmp(&a.value).unwrap_or(std::cmp::Ordering::Equal).then(a.block.cmp(&b.block)));
}

/// Top `M` pairs of every parity operator, solved in parallel and merged.
/// Block `i` draws its start vector from stream `i` of the seeded generator.
pub fn solve_blocks<T: Real>(ops: &[KronOperator<T>], req: &EigRequest, seed: u64) -> Result<Spectrum<T>> {
    let parts: Vec<Result<PartialSpectrum<T>>> = ops
        .par_iter()
        .enumerate()
        .map(|(i, op)| {
            if op.dim() == 0 {
                return Ok(PartialSpectrum { values: vec![], vectors: vec![], status: EigStatus::Converged, matvecs: 0 });
            }
            let r = EigRequest { num_pairs: req.num_pairs.min(op.dim()), ..*req };
            lanczos_stream(op, &r, seed, i as u64)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut block_status = Vec::with_capacity(ops.len());
    for (i, part) in parts.into_iter().enumerate() {
        let part = part?;
        block_status.push(part.status);
        for (value, vector) in part.values.into_iter().zip(part.vectors) {
            pairs.push(EigPair { value, vector, parity: ops[i].parity().cloned(), block: i });
        }
    }
    merge_order(&mut pairs);
    let lam1 = pairs.first().map(|p| p.value).unwrap_or_else(T::zero);
    let floor = -T::lit(req.tol) * lam1.abs();
    for p in &mut pairs {
        if p.value < T::zero() {
            if p.value < floor {
                warn!("clipping eigenvalue {} of block {} to zero", p.value, p.block);
            }
            p.value = T::zero();
        }
    }
    Ok(Spectrum { pairs, block_status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kronop::KronTerm;
    use std::sync::Arc;

    fn diag_op(values: &[f64]) -> KronOperator<f64> {
        KronOperator::new(
            None,
            vec![values.len()],
            vec![KronTerm { weight: 1.0, factors: vec![Arc::new(Mat::diagonal(values))] }],
        )
        .unwrap()
    }

    #[test]
    fn diagonal_top_two() {
        let op = diag_op(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let s = lanczos_topk(&op, &EigRequest::new(2), 1).unwrap();
        assert_eq!(s.values, vec![5.0, 4.0]);
        let forced = EigRequest { dense_threshold: 0, ..EigRequest::new(2) };
        let s = lanczos_topk(&op, &forced, 1).unwrap();
        assert!((s.values[0] - 5.0).abs() < 1e-12 && (s.values[1] - 4.0).abs() < 1e-12);
        assert_eq!(s.status, EigStatus::Converged);
    }

    #[test]
    fn lanczos_matches_dense_on_large_diagonal() {
        let vals: Vec<f64> = (0..900).map(|i| 1.0 / (1.0 + i as f64).powi(2)).collect();
        let op = diag_op(&vals);
        let s = lanczos_topk(&op, &EigRequest::new(20), 3).unwrap();
        assert_eq!(s.status, EigStatus::Converged);
        for (i, v) in s.values.iter().enumerate() {
            assert!((v - vals[i]).abs() <= 1e-10 * vals[0]);
        }
        for (i, v) in s.vectors.iter().enumerate() {
            assert!((v[i] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let vals: Vec<f64> = (0..700).map(|i| (-(i as f64) / 50.0).exp()).collect();
        let op = diag_op(&vals);
        let a = lanczos_topk(&op, &EigRequest::new(10), 42).unwrap();
        let b = lanczos_topk(&op, &EigRequest::new(10), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn breakdown_restarts() {
        // A 300-fold eigenvalue: the Krylov space of one start vector sees it once.
        let mut vals = vec![3.0; 300];
        vals.extend(vec![1.0; 300]);
        let op = diag_op(&vals);
        let s = lanczos_topk(&op, &EigRequest { dense_threshold: 0, ..EigRequest::new(5) }, 9).unwrap();
        assert_eq!(s.status, EigStatus::Converged);
        for v in &s.values {
            assert!((v - 3.0).abs() < 1e-10);
        }
        for i in 0..5 {
            for j in 0..i {
                assert!(dot(&s.vectors[i], &s.vectors[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bad_requests_rejected() {
        let op = diag_op(&[1.0, 2.0]);
        assert!(lanczos_topk(&op, &EigRequest::new(0), 0).is_err());
        assert!(lanczos_topk(&op, &EigRequest::new(3), 0).is_err());
        assert!(lanczos_topk(&op, &EigRequest { tol: 0.0, ..EigRequest::new(1) }, 0).is_err());
    }

    #[test]
    fn global_count_split() {
        assert_eq!(EigRequest::for_global_count(500, 2).num_pairs, 125);
        assert_eq!(EigRequest::for_global_count(30, 1).num_pairs, 15);
        assert_eq!(EigRequest::for_global_count(7, 2).num_pairs, 2);
    }

    #[test]
    fn ties_ordered_by_block() {
        let ops = vec![diag_op(&[2.0, 1.0]), diag_op(&[2.0, 0.5]), diag_op(&[3.0, 1.0]), diag_op(&[])];
        let s = solve_blocks(&ops, &EigRequest::new(2), 0).unwrap();
        let blocks: Vec<usize> = s.pairs.iter().map(|p| p.block).collect();
        assert_eq!(blocks, [2, 0, 1, 0, 2, 1]);
        assert_eq!(s.block_status.len(), 4);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        normalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }
}
