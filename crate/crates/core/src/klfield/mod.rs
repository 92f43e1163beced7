//! Truncated Karhunen-Loève expansions: eigenfunction evaluation, sampling,
//! covariance reconstruction and error diagnostics.

mod diagnostics;
mod io;
mod sampling;

use serde::{Deserialize, Serialize};

pub use diagnostics::DiagnosticQuad;
pub use io::EXPANSION_LAYOUT;
pub use sampling::{grid_points, Sampler};

use crate::eigsolve::{solve_blocks, EigRequest, Spectrum};
use crate::error::{Error, Result};
use crate::kronop::{build_operators, AssemblyOptions, Domain, KronOperator, ParityVector};
use crate::orthopoly::{BasisSpec, Normalization};
use crate::sefit::SqExpMixture;

/// Solver settings recorded with an expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KLMeta {
    pub fit_tol: f64,
    pub eig_tol: f64,
    pub pairs_per_block: usize,
    pub block_dims: Vec<usize>,
    pub seed: u64,
    pub converged: bool,
}

/// Eigenpairs of the Galerkin operator with coefficients over the full
/// multi-index set `{0..=n}^D` (row-major, direction 1 slowest), zero on
/// multi-indices of the wrong parity.
#[derive(Clone, Debug, PartialEq)]
pub struct KLExpansion {
    pub domain: Domain<f64>,
    pub n: usize,
    pub mixture: SqExpMixture,
    pub eigenvalues: Vec<f64>,
    pub parity_labels: Vec<ParityVector>,
    pub coeffs: Vec<Vec<f64>>,
    pub meta: KLMeta,
}

/// Settings for [`decompose`].
#[derive(Clone, Debug)]
pub struct DecomposeOptions {
    pub eig_tol: f64,
    pub seed: u64,
    pub assembly: AssemblyOptions,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self { eig_tol: 1e-10, seed: 0, assembly: AssemblyOptions::default() }
    }
}

/// Builds the parity operators, solves `⌈num_pairs / 2^D⌉` pairs per block
/// (more if small blocks cannot supply their share) and keeps the leading
/// `num_pairs` of the merged spectrum.
pub fn decompose(
    mixture: &SqExpMixture,
    domain: &Domain<f64>,
    n: usize,
    num_pairs: usize,
    opts: &DecomposeOptions,
) -> Result<KLExpansion> {
    let full_dim = (n + 1).pow(domain.dim() as u32);
    if num_pairs == 0 || num_pairs > full_dim {
        return Err(Error::Precondition(format!("can compute 1..={full_dim} eigenpairs at degree {n}, asked for {num_pairs}")));
    }
    let ops = build_operators(mixture, domain, n, &opts.assembly)?;
    let mut req = EigRequest { tol: opts.eig_tol, ..EigRequest::for_global_count(num_pairs, domain.dim()) };
    while ops.iter().map(|o| o.dim().min(req.num_pairs)).sum::<usize>() < num_pairs {
        req.num_pairs += 1;
    }
    let mut spectrum = solve_blocks(&ops, &req, opts.seed)?;
    spectrum.truncate(num_pairs);
    let meta = KLMeta {
        fit_tol: mixture.tol,
        eig_tol: opts.eig_tol,
        pairs_per_block: req.num_pairs,
        block_dims: ops.iter().map(|o| o.dim()).collect(),
        seed: opts.seed,
        converged: spectrum.all_converged(),
    };
    KLExpansion::from_spectrum(domain.clone(), n, mixture.clone(), &ops, &spectrum, meta)
}

impl KLExpansion {
    /// Embeds per-block eigenvectors into the full multi-index set.
    pub fn from_spectrum(
        domain: Domain<f64>,
        n: usize,
        mixture: SqExpMixture,
        ops: &[KronOperator<f64>],
        spectrum: &Spectrum<f64>,
        meta: KLMeta,
    ) -> Result<Self> {
        let d = domain.dim();
        let full_dim = (n + 1).pow(d as u32);
        let mut coeffs = Vec::with_capacity(spectrum.len());
        let mut labels = Vec::with_capacity(spectrum.len());
        for pair in &spectrum.pairs {
            let op = &ops[pair.block];
            let mut c = vec![0.0; full_dim];
            for (local, &v) in pair.vector.iter().enumerate() {
                let flat = op.degrees_of(local).iter().fold(0, |acc, &a| acc * (n + 1) + a);
                c[flat] = v;
            }
            coeffs.push(c);
            labels.push(
                pair.parity
                    .clone()
                    .ok_or_else(|| Error::Precondition("expansion needs parity-split operators".into()))?,
            );
        }
        Ok(Self { domain, n, mixture, eigenvalues: spectrum.eigenvalues(), parity_labels: labels, coeffs, meta })
    }

    pub fn num_pairs(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn bases(&self) -> Vec<BasisSpec<f64>> {
        self.domain
            .intervals()
            .iter()
            .map(|&iv| BasisSpec::new(self.n, iv, Normalization::Orthonormal))
            .collect()
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.num_pairs() {
            return Err(Error::Precondition(format!("eigenpair index {j} out of range (have {})", self.num_pairs())));
        }
        Ok(())
    }

    fn check_trunc(&self, n_trunc: usize) -> Result<()> {
        if n_trunc > self.num_pairs() {
            return Err(Error::Precondition(format!(
                "truncation {n_trunc} exceeds the {} available eigenpairs",
                self.num_pairs()
            )));
        }
        Ok(())
    }

    /// Per-direction basis values `[φ_0(x_l), ..., φ_n(x_l)]` of one point.
    fn point_tables(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !self.domain.contains(x) {
            return Err(Error::Domain(format!("point {x:?} lies outside the domain {}", self.domain)));
        }
        Ok(self
            .bases()
            .iter()
            .zip(x)
            .map(|(b, &xl)| {
                let mut v = vec![0.0; self.n + 1];
                b.eval_point_into(xl, &mut v);
                v
            })
            .collect())
    }

    /// `Σ_α c_α Π_l φ_{α_l}(x_l)`, contracting the last direction first.
    fn contract(&self, c: &[f64], tables: &[Vec<f64>]) -> f64 {
        let m = self.n + 1;
        let mut cur = c.to_vec();
        for t in tables.iter().rev() {
            cur = cur.chunks_exact(m).map(|chunk| chunk.iter().zip(t).map(|(a, b)| a * b).sum()).collect();
        }
        cur[0]
    }

    /// `φ_j` at each point.
    pub fn eigenfunction_eval(&self, j: usize, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_index(j)?;
        points.iter().map(|x| Ok(self.contract(&self.coeffs[j], &self.point_tables(x)?))).collect()
    }

    /// `φ_j(x)` for all `j < n_trunc`.
    pub fn eigenfunctions_at(&self, n_trunc: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_trunc(n_trunc)?;
        let tables = self.point_tables(x)?;
        Ok(self.coeffs[..n_trunc].iter().map(|c| self.contract(c, &tables)).collect())
    }

    /// `C_N(x, y) = Σ_{j<N} λ_j φ_j(x) φ_j(y)`.
    pub fn covariance_n(&self, n_trunc: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        let fx = self.eigenfunctions_at(n_trunc, x)?;
        let fy = self.eigenfunctions_at(n_trunc, y)?;
        Ok(self.eigenvalues.iter().zip(fx.iter().zip(&fy)).map(|(l, (a, b))| l * a * b).sum())
    }

    /// `Σ_{j<N} λ_j φ_j(x)²`, the variance of the truncated field at `x`.
    pub fn variance_n(&self, n_trunc: usize, x: &[f64]) -> Result<f64> {
        let f = self.eigenfunctions_at(n_trunc, x)?;
        Ok(self.eigenvalues.iter().zip(&f).map(|(l, v)| l * v * v).sum())
    }

    /// Largest deviation of the coefficient Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.num_pairs() {
            for j in 0..=i {
                let g: f64 = self.coeffs[i].iter().zip(&self.coeffs[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - want).abs());
            }
        }
        worst
    }

    /// Whether every block met the eigen tolerance.
    pub fn converged(&self) -> bool {
        self.meta.converged
    }

    /// Copy with eigenvalues scaled by `factor`.
    pub fn with_scaled_eigenvalues(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.eigenvalues.iter_mut().for_each(|l| *l *= factor);
        out
    }
}
