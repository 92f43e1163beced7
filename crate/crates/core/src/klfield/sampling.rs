use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::KLExpansion;
use crate::error::{Error, Result};

/// Eigenfunction values at a fixed point set, ready for repeated sampling.
///
/// Sample `i` of seed `s` draws `ξ` from ChaCha8 seeded with `s` on stream `i`,
/// so batches give the same values in any order or thread count.
#[derive(Clone, Debug)]
pub struct Sampler {
    /// `sqrt_lambda[j] · φ_j(x_p)`, row `j`.
    scaled: Vec<Vec<f64>>,
    num_points: usize,
}

impl Sampler {
    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_terms(&self) -> usize {
        self.scaled.len()
    }

    /// The standard normals of one sample.
    pub fn normals(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        (0..self.scaled.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// `Z(x_p) = Σ_j √λ_j ξ_j φ_j(x_p)`.
    pub fn sample(&self, seed: u64, index: u64) -> Vec<f64> {
        let xi = self.normals(seed, index);
        let mut z = vec![0.0; self.num_points];
        for (row, x) in self.scaled.iter().zip(&xi) {
            for (zi, r) in z.iter_mut().zip(row) {
                *zi += x * r;
            }
        }
        z
    }

    /// Samples `first..first+count`, in parallel.
    pub fn sample_many(&self, seed: u64, first: u64, count: usize) -> Vec<Vec<f64>> {
        (0..count as u64).into_par_iter().map(|i| self.sample(seed, first + i)).collect()
    }

    /// Exact variance `Σ_j λ_j φ_j(x_p)²` of the truncated series.
    pub fn variances(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_points];
        for row in &self.scaled {
            for (vi, r) in v.iter_mut().zip(row) {
                *vi += r * r;
            }
        }
        v
    }
}

/// Row-major tensor grid from per-axis coordinate lists (axis 1 slowest).
pub fn grid_points(grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = grid.iter().map(|g| g.len()).product();
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; grid.len()];
            for l in (0..grid.len()).rev() {
                p[l] = grid[l][idx % grid[l].len()];
                idx /= grid[l].len();
            }
            p
        })
        .collect()
}

impl KLExpansion {
    /// Sampler for the leading `n_trunc` terms at arbitrary points.
    pub fn sampler(&self, n_trunc: usize, points: &[Vec<f64>]) -> Result<Sampler> {
        self.check_trunc(n_trunc)?;
        let mut scaled = vec![vec![0.0; points.len()]; n_trunc];
        for (p, x) in points.iter().enumerate() {
            let f = self.eigenfunctions_at(n_trunc, x)?;
            for j in 0..n_trunc {
                scaled[j][p] = self.eigenvalues[j].max(0.0).sqrt() * f[j];
            }
        }
        Ok(Sampler { scaled, num_points: points.len() })
    }

    /// Sampler on the tensor grid `grid[0] × grid[1] × ...`.
    pub fn grid_sampler(&self, n_trunc: usize, grid: &[Vec<f64>]) -> Result<Sampler> {
        if grid.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: grid.len() });
        }
        self.sampler(n_trunc, &grid_points(grid))
    }

    /// Sample 0 of `seed` on a tensor grid, flattened row-major.
    pub fn sample(&self, n_trunc: usize, seed: u64, grid: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.grid_sampler(n_trunc, grid)?.sample(seed, 0))
    }
}
