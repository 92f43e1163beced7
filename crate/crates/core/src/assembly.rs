//! One-dimensional Galerkin matrices of a single Gaussian term,
//! `∫∫ e^{-b(x-y)²} φ_α(x) φ_β(y) dx dy` over `[0, 1]²` in the orthonormal
//! Legendre basis, split into even and odd degree blocks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Mat};
use crate::orthopoly::{gauss_rule, BasisSpec, Interval};
use crate::scalar::Real;

/// Degree parity of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub const BOTH: [Parity; 2] = [Parity::Even, Parity::Odd];

    pub fn bit(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn from_bit(bit: usize) -> Self {
        if bit % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Number of degrees `0..=n` of this parity.
    pub fn count(self, n: usize) -> usize {
        match self {
            Parity::Even => n / 2 + 1,
            Parity::Odd => (n + 1) / 2,
        }
    }
}

/// Even and odd blocks of an `(n+1)×(n+1)` Galerkin matrix. Block entry `(i, j)`
/// couples degrees `2i+ε` and `2j+ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityBlockSet<T> {
    pub n: usize,
    pub even: Mat<T>,
    pub odd: Mat<T>,
    pub b_eff: T,
    pub interval_len: T,
}

impl<T: Real> ParityBlockSet<T> {
    pub fn block(&self, parity: Parity) -> &Mat<T> {
        match parity {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
        }
    }

    /// Reassembled `(n+1)×(n+1)` matrix with exact zeros where `α+β` is odd.
    pub fn full(&self) -> Mat<T> {
        let mut m = Mat::zeros(self.n + 1, self.n + 1);
        for p in Parity::BOTH {
            let blk = self.block(p);
            for i in 0..blk.rows() {
                for j in 0..blk.cols() {
                    m[(2 * i + p.bit(), 2 * j + p.bit())] = blk[(i, j)];
                }
            }
        }
        m
    }

    /// Blocks for the interval of length `len`, from unit-interval blocks.
    pub fn rescaled(&self, len: T) -> Self {
        let s = len / self.interval_len;
        Self {
            n: self.n,
            even: self.even.scaled(s),
            odd: self.odd.scaled(s),
            b_eff: self.b_eff,
            interval_len: len,
        }
    }

    /// Smallest eigenvalue over both blocks.
    pub fn min_eigenvalue(&self) -> T {
        Parity::BOTH
            .iter()
            .filter(|p| self.block(**p).rows() > 0)
            .map(|p| symmetric_eigen(self.block(*p)).values[0])
            .fold(T::infinity(), T::min)
    }

    pub fn trace(&self) -> T {
        self.even.trace() + self.odd.trace()
    }

    /// Relative Frobenius distance to another block set of the same size.
    pub fn rel_frobenius_error(&self, reference: &Self) -> T {
        let mut num = T::zero();
        let mut den = T::zero();
        for p in Parity::BOTH {
            let (a, b) = (self.block(p).as_slice(), reference.block(p).as_slice());
            for (x, y) in a.iter().zip(b) {
                num = num + (*x - *y) * (*x - *y);
                den = den + *y * *y;
            }
        }
        (num / den).sqrt()
    }
}

/// Stretching exponent and per-axis point count of the Duffy rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DuffyConfig {
    pub g: u32,
    pub q: usize,
}

impl DuffyConfig {
    pub fn new(g: u32, q: usize) -> Result<Self> {
        if g == 0 {
            return Err(Error::Precondition("stretching exponent g must be at least 1".into()));
        }
        if q < 2 {
            return Err(Error::Precondition(format!("need at least 2 quadrature points per axis, got {q}")));
        }
        Ok(Self { g, q })
    }

    /// `g` from [`default_stretching`] and `q` from [`default_points`].
    pub fn heuristic(n: usize, b_eff: f64) -> Self {
        let g = default_stretching(b_eff);
        Self { g, q: default_points(n, g) }
    }
}

/// Stretching exponent growing with the sharpness of the diagonal peak.
pub fn default_stretching(b_eff: f64) -> u32 {
    match b_eff {
        b if b < 1e2 => 1,
        b if b < 1e5 => 2,
        b if b < 1e8 => 3,
        b if b < 1e11 => 4,
        _ => 5,
    }
}

/// `2(n+1) + 32g` points per axis.
pub fn default_points(n: usize, g: u32) -> usize {
    2 * (n + 1) + 32 * g as usize
}

/// `(b·(hi-lo)², hi-lo)`: the exponent seen on `[0, 1]` and the factor that
/// maps the unit-interval matrix back to `[lo, hi]`.
pub fn rescale_to_unit<T: Real>(b: T, interval: Interval<T>) -> (T, T) {
    let h = interval.len();
    (b * h * h, h)
}

fn empty_blocks<T: Real>(n: usize, b_eff: T) -> ParityBlockSet<T> {
    ParityBlockSet {
        n,
        even: Mat::zeros(Parity::Even.count(n), Parity::Even.count(n)),
        odd: Mat::zeros(Parity::Odd.count(n), Parity::Odd.count(n)),
        b_eff,
        interval_len: T::one(),
    }
}

fn check_exponent<T: Real>(b_eff: T) -> Result<()> {
    if !(b_eff > T::zero() && b_eff.is_finite()) {
        return Err(Error::Domain(format!("exponent must be positive and finite, got {b_eff}")));
    }
    Ok(())
}

/// Fills both blocks from a full-matrix entry function evaluated for `α ≤ β`
/// of equal parity, mirroring the rest.
fn fill_blocks<T: Real>(n: usize, b_eff: T, mut entry: impl FnMut(usize, usize) -> T) -> ParityBlockSet<T> {
    let mut out = empty_blocks(n, b_eff);
    for p in Parity::BOTH {
        let m = p.count(n);
        let blk = match p {
            Parity::Even => &mut out.even,
            Parity::Odd => &mut out.odd,
        };
        for i in 0..m {
            for j in i..m {
                let v = entry(2 * i + p.bit(), 2 * j + p.bit());
                blk[(i, j)] = v;
                blk[(j, i)] = v;
            }
        }
    }
    out
}

/// Duffy split along the diagonal with algebraic stretching `ξ = u^g`,
/// `η = v^g`:
///
/// `A_{αβ} = 2 ∫₀¹∫₀¹ g² u^{2g-1} v^{g-1} e^{-b u^{2g} v^{2g}} φ_α(u^g) φ_β((1-v^g)u^g) du dv`,
///
/// valid for `α ≡ β (mod 2)`, on a `q×q` Gauss grid.
pub fn duffy_block<T: Real>(n: usize, b_eff: T, cfg: DuffyConfig) -> Result<ParityBlockSet<T>> {
    check_exponent(b_eff)?;
    let cfg = DuffyConfig::new(cfg.g, cfg.q)?;
    if cfg.q < n + 1 {
        return Err(Error::Precondition(format!(
            "q = {} points per axis cannot resolve degree {n}; need q ≥ {}",
            cfg.q,
            n + 1
        )));
    }
    let q = cfg.q;
    let g = cfg.g as i32;
    let rule = gauss_rule::<T>(q, Interval::unit())?;
    let basis = BasisSpec::<T>::orthonormal_unit(n);
    let gg = T::from_count((g * g) as usize);

    // Row i: φ(ξ_i); weighted inner sums R[i][β] = Σ_j W_ij φ_β(y_ij).
    let mut phi_x = Mat::zeros(q, n + 1);
    let mut inner = Mat::zeros(q, n + 1);
    let mut buf = vec![T::zero(); n + 1];
    let v_pow: Vec<(T, T)> = rule.iter().map(|(v, wv)| (v.powi(g), wv * v.powi(g - 1))).collect();
    for (i, (u, wu)) in rule.iter().enumerate() {
        let xi = u.powi(g);
        basis.eval_point_into(xi, phi_x.row_mut(i));
        let wu = wu * gg * u.powi(2 * g - 1);
        let row = inner.row_mut(i);
        for &(eta, wv) in &v_pow {
            let s = xi * eta;
            let w = wu * wv * (-b_eff * s * s).exp();
            if w == T::zero() {
                continue;
            }
            basis.eval_point_into((T::one() - eta) * xi, &mut buf);
            for (r, &p) in row.iter_mut().zip(&buf) {
                *r = *r + w * p;
            }
        }
    }
    let two = T::lit(2.0);
    Ok(fill_blocks(n, b_eff, |a, b| {
        two * (0..q).map(|i| phi_x[(i, a)] * inner[(i, b)]).sum::<T>()
    }))
}

/// Untransformed `q×q` tensor Gauss rule on `[0, 1]²`.
pub fn plain_tensor_block<T: Real>(n: usize, b_eff: T, q: usize) -> Result<ParityBlockSet<T>> {
    check_exponent(b_eff)?;
    let rule = gauss_rule::<T>(q, Interval::unit())?;
    let basis = BasisSpec::<T>::orthonormal_unit(n);
    let mut phi = Mat::zeros(q, n + 1);
    for (i, &x) in rule.nodes().iter().enumerate() {
        basis.eval_point_into(x, phi.row_mut(i));
    }
    let nodes = rule.nodes();
    let w = rule.weights();
    // K_ij = w_i w_j e^{-b(x_i-x_j)²}; entry = Φᵀ K Φ.
    let kphi = Mat::from_fn(q, n + 1, |i, b| {
        (0..q)
            .map(|j| {
                let d = nodes[i] - nodes[j];
                w[i] * w[j] * (-b_eff * d * d).exp() * phi[(j, b)]
            })
            .sum::<T>()
    });
    Ok(fill_blocks(n, b_eff, |a, b| (0..q).map(|i| phi[(i, a)] * kphi[(i, b)]).sum::<T>()))
}

/// High-accuracy Duffy evaluation used as ground truth: heuristic `g` and
/// `q = 4(n+1) + 200`.
pub fn reference_block<T: Real>(n: usize, b_eff: T) -> Result<ParityBlockSet<T>> {
    let g = default_stretching(b_eff.to_f64_lossy());
    duffy_block(n, b_eff, DuffyConfig { g, q: reference_points(n) })
}

pub fn reference_points(n: usize) -> usize {
    4 * (n + 1) + 200
}

/// `∫₀¹∫₀¹ e^{-b(x-y)²} dx dy = √π erf(√b)/√b + (e^{-b} - 1)/b`, given `erf`.
pub fn unit_integral_closed_form(b: f64, erf: impl Fn(f64) -> f64) -> f64 {
    let s = b.sqrt();
    std::f64::consts::PI.sqrt() * erf(s) / s + (-b).exp_m1() / b
}

/// On-disk cache of unit-interval blocks keyed by `(n, b_eff, g, q)`.
#[derive(Clone, Debug)]
pub struct BlockCache {
    dir: PathBuf,
}

const CACHE_MAGIC: &[u8; 8] = b"KLBLK001";

impl BlockCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn key(n: usize, b_eff: f64, cfg: DuffyConfig) -> String {
        let mut h = Sha256::new();
        h.update((n as u64).to_le_bytes());
        h.update(b_eff.to_le_bytes());
        h.update(cfg.g.to_le_bytes());
        h.update((cfg.q as u64).to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.blk"))
    }

    /// Cached blocks, or a fresh Duffy assembly that is then stored.
    pub fn get_or_compute(&self, n: usize, b_eff: f64, cfg: DuffyConfig) -> Result<ParityBlockSet<f64>> {
        let path = self.path(&Self::key(n, b_eff, cfg));
        if let Ok(bytes) = fs::read(&path) {
            if let Some(blocks) = decode_blocks(&bytes, n, b_eff) {
                return Ok(blocks);
            }
            log::warn!("ignoring unreadable cache entry {}", path.display());
        }
        let blocks = duffy_block(n, b_eff, cfg)?;
        write_atomic(&path, &encode_blocks(&blocks))?;
        Ok(blocks)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn encode_blocks(b: &ParityBlockSet<f64>) -> Vec<u8> {
    let mut out = CACHE_MAGIC.to_vec();
    out.extend((b.n as u64).to_le_bytes());
    out.extend(b.b_eff.to_le_bytes());
    for v in b.even.as_slice().iter().chain(b.odd.as_slice()) {
        out.extend(v.to_le_bytes());
    }
    out
}

fn decode_blocks(bytes: &[u8], n: usize, b_eff: f64) -> Option<ParityBlockSet<f64>> {
    let body = bytes.strip_prefix(CACHE_MAGIC.as_slice())?;
    let (head, data) = body.split_at_checked(16)?;
    let stored_n = u64::from_le_bytes(head[..8].try_into().ok()?) as usize;
    let stored_b = f64::from_le_bytes(head[8..].try_into().ok()?);
    if stored_n != n || stored_b.to_bits() != b_eff.to_bits() {
        return None;
    }
    let (ne, no) = (Parity::Even.count(n), Parity::Odd.count(n));
    if data.len() != 8 * (ne * ne + no * no) {
        return None;
    }
    let vals: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Some(ParityBlockSet {
        n,
        even: Mat::from_row_major(ne, ne, vals[..ne * ne].to_vec()),
        odd: Mat::from_row_major(no, no, vals[ne * ne..].to_vec()),
        b_eff,
        interval_len: 1.0,
    })
}
