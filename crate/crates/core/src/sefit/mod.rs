//! Non-negative squared-exponential mixtures `C(d) ≈ Σ a_i e^{-b_i d²}` fitted
//! by damped Newton over `(a, log b)` with rank continuation.

mod init;
mod newton;
mod nnls;
mod objective;

use std::fs;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

pub use init::init_theta;
pub use newton::{damped_newton, NewtonConfig, NewtonResult, NewtonStatus, SmoothObjective};
pub use nnls::{nnls, nnls_weights};
pub use objective::{objective, Misfit};

use crate::error::{Error, Result};
use crate::kernels::{IsotropicKernel, KernelId, KernelSpec};
use crate::linalg::Mat;
use crate::orthopoly::{composite_rule, GaussRule};

/// Geometric composite rule on `[0, L]` used for the fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub levels: usize,
    pub ratio: f64,
    pub n_per_panel: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { levels: 5, ratio: 0.2, n_per_panel: 100 }
    }
}

impl QuadConfig {
    pub fn rule(&self, length: f64) -> Result<GaussRule<f64>> {
        composite_rule(length, self.levels, self.ratio, self.n_per_panel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Target discrete error `J`.
    pub tol: f64,
    pub k_max: usize,
    #[serde(flatten)]
    pub newton: NewtonConfig,
    /// Fit range `[0, L]`; must cover the largest distance in the domain.
    #[serde(rename = "L")]
    pub domain_length: f64,
    pub quad: QuadConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { tol: 1e-6, k_max: 20, newton: NewtonConfig::default(), domain_length: 2.0, quad: QuadConfig::default() }
    }
}

impl FitConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Precondition(format!("fit tolerance must be positive, got {}", self.tol)));
        }
        if self.k_max == 0 {
            return Err(Error::Precondition("k_max must be at least 1".into()));
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::Precondition(format!("fit range L must be positive, got {}", self.domain_length)));
        }
        self.rule().map(|_| ())
    }

    pub fn rule(&self) -> Result<GaussRule<f64>> {
        self.quad.rule(self.domain_length)
    }
}

/// Optimum found at one rank of the continuation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    /// Ascending log-exponents.
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitHistory {
    pub ranks: Vec<RankRecord>,
}

impl FitHistory {
    pub fn push(&mut self, theta: Vec<f64>, a: Vec<f64>, error: f64) {
        self.ranks.push(RankRecord { theta, a, error });
    }

    /// Optimal θ at rank `k` (1-based).
    pub fn theta_for_rank(&self, k: usize) -> Option<&[f64]> {
        self.ranks.get(k.checked_sub(1)?).map(|r| r.theta.as_slice())
    }

    pub fn errors(&self) -> Vec<f64> {
        self.ranks.iter().map(|r| r.error).collect()
    }

    /// Whether the exponents of consecutive ranks alternate.
    pub fn interlaces(&self, k: usize) -> Option<bool> {
        let lo = self.theta_for_rank(k)?;
        let hi = self.theta_for_rank(k + 1)?;
        Some((0..lo.len()).all(|i| hi[i] < lo[i] && lo[i] < hi[i + 1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// `k_max` reached without meeting the tolerance.
    RankLimit,
}

/// Result of a local fit at a fixed rank.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub a: Vec<f64>,
    pub theta: Vec<f64>,
    pub error: f64,
    pub iterations: usize,
    pub status: NewtonStatus,
}

impl SmoothObjective for Misfit {
    fn value(&self, p: &[f64]) -> f64 {
        let v = self.value_sq_packed(p);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn value_grad_hess(&self, p: &[f64]) -> (f64, Vec<f64>, Mat<f64>) {
        Misfit::value_grad_hess(self, p)
    }

    /// `‖∇J‖ = ‖∇F‖ / (2√F)`, so the test does not fire early when `J` is small.
    fn stationarity(&self, value: f64, grad: &[f64]) -> f64 {
        let g = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if value > 0.0 {
            g / (2.0 * value.sqrt())
        } else {
            g
        }
    }
}

/// Damped Newton on `F = J²` from `(a0, θ0)`.
pub fn newton_minimize(
    a0: &[f64],
    theta0: &[f64],
    kernel: &dyn IsotropicKernel,
    rule: &GaussRule<f64>,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    newton_with(&Misfit::new(kernel, rule), a0, theta0, cfg)
}

fn newton_with(misfit: &Misfit, a0: &[f64], theta0: &[f64], cfg: &NewtonConfig) -> Result<NewtonOutcome> {
    if a0.len() != theta0.len() {
        return Err(Error::DimensionMismatch { expected: theta0.len(), got: a0.len() });
    }
    if a0.iter().chain(theta0).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("Newton start point must be finite".into()));
    }
    let k = a0.len();
    let p0: Vec<f64> = a0.iter().chain(theta0).copied().collect();
    let res = damped_newton(misfit, &p0, cfg);
    let (a, theta) = res.p.split_at(k);
    Ok(NewtonOutcome {
        a: a.to_vec(),
        theta: theta.to_vec(),
        error: res.value.max(0.0).sqrt(),
        iterations: res.iterations,
        status: res.status,
    })
}

/// Sorts by exponent, merges coincident exponents and makes weights non-negative.
fn tidy(misfit: &Misfit, a: Vec<f64>, theta: Vec<f64>) -> (Vec<f64>, Vec<f64>, f64) {
    let mut a = a;
    if a.iter().any(|&v| v < 0.0) {
        debug!("negative weights after Newton; refitting with NNLS");
        a = nnls::nnls_weights_with(misfit, &theta);
    }
    let mut pairs: Vec<(f64, f64)> = theta.into_iter().zip(a).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (t, w) in pairs {
        match merged.last_mut() {
            Some(last) if t - last.0 < 1e-12 * t.abs().max(1.0) => last.1 += w,
            _ => merged.push((t, w)),
        }
    }
    let theta: Vec<f64> = merged.iter().map(|p| p.0).collect();
    let a: Vec<f64> = merged.iter().map(|p| p.1.max(0.0)).collect();
    let err = misfit.value(&a, &theta);
    (a, theta, err)
}

fn fit_rank(misfit: &Misfit, theta0: Vec<f64>, a0: Option<Vec<f64>>, cfg: &NewtonConfig) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let a0 = a0.unwrap_or_else(|| nnls::nnls_weights_with(misfit, &theta0));
    let out = newton_with(misfit, &a0, &theta0, cfg)?;
    debug!("rank {}: J = {:.3e} after {} iterations ({:?})", theta0.len(), out.error, out.iterations, out.status);
    let (a, theta, err) = tidy(misfit, out.a, out.theta);
    if err.is_finite() {
        Ok((a, theta, err))
    } else {
        Ok(tidy(misfit, a0, theta0))
    }
}

/// Plain fitted terms, for kernels that are not in the registry.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub achieved_error: f64,
    pub history: FitHistory,
    pub status: FitStatus,
}

/// Rank continuation: each rank starts from an extrapolation of
/// the previous two optima, and falls back to extending the previous optimum
/// by a zero-weight term whenever the error would otherwise increase.
pub fn fit_kernel(kernel: &dyn IsotropicKernel, cfg: &FitConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let rule = cfg.rule()?;
    let misfit = Misfit::new(kernel, &rule);
    let mut history = FitHistory::default();
    let mut status = FitStatus::RankLimit;
    for k in 1..=cfg.k_max {
        let theta0 = init_theta(&history, k)?;
        let mut best = fit_rank(&misfit, theta0, None, &cfg.newton)?;
        if let Some(prev) = history.ranks.last() {
            if !(best.2 <= prev.error + 1e-12) || best.1.len() < k {
                let mut theta0 = prev.theta.clone();
                let mut a0 = prev.a.clone();
                theta0.push(theta0.last().copied().unwrap_or(0.0) + 1.0);
                a0.push(0.0);
                let retry = fit_rank(&misfit, theta0.clone(), Some(a0.clone()), &cfg.newton)?;
                if retry.1.len() == k && (retry.2 < best.2 || best.1.len() < k) {
                    best = retry;
                }
                if !(best.2 <= prev.error + 1e-12) || best.1.len() < k {
                    let err = misfit.value(&a0, &theta0);
                    best = (a0, theta0, err);
                }
            }
        }
        info!("{}: rank {k} J = {:.3e}", kernel.name(), best.2);
        history.push(best.1, best.0, best.2);
        if best.2 < cfg.tol {
            status = FitStatus::Converged;
            break;
        }
    }
    let last = history.ranks.last().expect("at least one rank fitted");
    Ok(FitOutcome {
        a: last.a.clone(),
        b: last.theta.iter().map(|t| t.exp()).collect(),
        achieved_error: last.error,
        status,
        history,
    })
}

/// Fits a registered kernel and packages the result.
pub fn fit_mixture(kernel: &KernelSpec, cfg: &FitConfig) -> Result<(SqExpMixture, FitHistory, FitStatus)> {
    let out = fit_kernel(kernel, cfg)?;
    let mixture = SqExpMixture {
        kernel: kernel.id,
        length_scale: kernel.length_scale,
        variance: kernel.variance,
        fit_domain_length: cfg.domain_length,
        tol: cfg.tol,
        a: out.a,
        b: out.b,
        achieved_error: out.achieved_error,
        quad: cfg.quad,
        generator: None,
    };
    Ok((mixture, out.history, out.status))
}

/// Non-negative squared-exponential mixture `Σ a_i e^{-b_i d²}` approximating
/// a registered kernel on `[0, L]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqExpMixture {
    pub kernel: KernelId,
    pub length_scale: f64,
    pub variance: f64,
    #[serde(rename = "L")]
    pub fit_domain_length: f64,
    pub tol: f64,
    pub a: Vec<f64>,
    /// Strictly ascending.
    pub b: Vec<f64>,
    pub achieved_error: f64,
    #[serde(default)]
    pub quad: QuadConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl SqExpMixture {
    /// Mixture from explicit terms; the error is measured on the default rule.
    pub fn from_terms(kernel: KernelSpec, a: Vec<f64>, b: Vec<f64>, fit_domain_length: f64) -> Result<Self> {
        let quad = QuadConfig::default();
        let mut m = Self {
            kernel: kernel.id,
            length_scale: kernel.length_scale,
            variance: kernel.variance,
            fit_domain_length,
            tol: 0.0,
            a,
            b,
            achieved_error: 0.0,
            quad,
            generator: None,
        };
        m.check_terms()?;
        m.achieved_error = m.recompute_error()?;
        m.tol = m.achieved_error;
        Ok(m)
    }

    pub fn rank(&self) -> usize {
        self.a.len()
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec { id: self.kernel, length_scale: self.length_scale, variance: self.variance }
    }

    pub fn theta(&self) -> Vec<f64> {
        self.b.iter().map(|b| b.ln()).collect()
    }

    /// Surrogate `Σ a_i e^{-b_i d²}`.
    pub fn eval(&self, d: f64) -> f64 {
        self.a.iter().zip(&self.b).map(|(a, b)| a * (-b * d * d).exp()).sum()
    }

    /// `Σ a_i`, the surrogate variance at zero lag.
    pub fn total_weight(&self) -> f64 {
        self.a.iter().sum()
    }

    pub fn recompute_error(&self) -> Result<f64> {
        let rule = self.quad.rule(self.fit_domain_length)?;
        Ok(objective(&self.a, &self.theta(), &self.kernel_spec(), &rule))
    }

    fn check_terms(&self) -> Result<()> {
        if self.a.len() != self.b.len() {
            return Err(Error::DimensionMismatch { expected: self.b.len(), got: self.a.len() });
        }
        if self.a.is_empty() {
            return Err(Error::Precondition("mixture has no terms".into()));
        }
        if let Some(a) = self.a.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::Domain(format!("mixture weights must be non-negative, got {a}")));
        }
        if let Some(b) = self.b.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::Domain(format!("mixture exponents must be positive, got {b}")));
        }
        if self.b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("mixture exponents must be strictly ascending".into()));
        }
        if !(self.fit_domain_length > 0.0) {
            return Err(Error::Domain("fit range L must be positive".into()));
        }
        Ok(())
    }

    /// Structural checks plus agreement of the stored error with a recomputation.
    pub fn validate(&self) -> Result<()> {
        self.check_terms()?;
        KernelSpec::new(self.kernel, self.length_scale, self.variance)?;
        let j = self.recompute_error()?;
        if (j - self.achieved_error).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "stored achieved_error {} disagrees with recomputed {j}",
                self.achieved_error
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn squared_exponential_is_rank_one() {
        let (m, h, status) = fit_mixture(&KernelSpec::unit(KernelId::SquaredExponential), &FitConfig::default()).unwrap();
        assert_eq!(status, FitStatus::Converged);
        assert_eq!(m.rank(), 1);
        assert_relative_eq!(m.a[0], 1.0, max_relative = 1e-8);
        assert_relative_eq!(m.b[0], 1.0, max_relative = 1e-8);
        assert_eq!(h.ranks.len(), 1);
    }

    #[test]
    fn newton_recovers_exact_representation() {
        let rule = FitConfig::default().rule().unwrap();
        let k = KernelSpec::unit(KernelId::SquaredExponential);
        let out = newton_minimize(&[1.0], &[0.1], &k, &rule, &NewtonConfig::default()).unwrap();
        assert!(out.theta[0].abs() < 1e-6 && (out.a[0] - 1.0).abs() < 1e-6, "{out:?}");
        assert!(objective(&out.a, &out.theta, &k, &rule) <= 1e-10);
    }

    #[test]
    fn exponential_rank_three() {
        let (m, h, _) = fit_mixture(&KernelSpec::unit(KernelId::Exponential), &FitConfig::with_tol(1e-2)).unwrap();
        assert_eq!(m.rank(), 3);
        assert!(m.achieved_error > 2e-3 && m.achieved_error < 1e-2, "{}", m.achieved_error);
        let errs = h.errors();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn mixture_invariants_and_json_round_trip() {
        let (m, _, _) = fit_mixture(&KernelSpec::unit(KernelId::Matern52), &FitConfig::with_tol(1e-4)).unwrap();
        m.validate().unwrap();
        let json = m.to_json().unwrap();
        let keys = ["\"kernel\"", "\"length_scale\"", "\"variance\"", "\"L\"", "\"tol\"", "\"a\"", "\"b\"", "\"achieved_error\""];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "field order {json}");
        assert_eq!(SqExpMixture::from_json(&json).unwrap(), m);
    }

    #[test]
    fn corrupted_mixture_rejected() {
        let (m, _, _) = fit_mixture(&KernelSpec::unit(KernelId::SquaredExponential), &FitConfig::default()).unwrap();
        let mut bad = m.clone();
        bad.achieved_error += 1e-6;
        assert!(bad.validate().is_err());
        let mut bad = m.clone();
        bad.a[0] = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let k = KernelSpec::unit(KernelId::Exponential);
        assert!(fit_mixture(&k, &FitConfig::with_tol(0.0)).is_err());
        assert!(fit_mixture(&k, &FitConfig { k_max: 0, ..Default::default() }).is_err());
        let q = QuadConfig { ratio: 1.5, ..Default::default() };
        assert!(fit_mixture(&k, &FitConfig { quad: q, ..Default::default() }).is_err());
    }
}
