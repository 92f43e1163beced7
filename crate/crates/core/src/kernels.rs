//! Isotropic covariance kernels `C(d)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Registered kernel families, unit length scale and unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelId {
    /// `e^{-d}`
    Exponential,
    /// Matérn with ν = 5/2: `(1 + √5 d + 5d²/3) e^{-√5 d}`
    Matern52,
    /// `e^{-d^{0.6}}`
    StretchedExponential,
    /// `(1 + d²/2)^{-1}`
    RationalQuadratic,
    /// `1 / (1 + d)`
    Cauchy,
    /// `e^{-d²}`
    SquaredExponential,
}

impl KernelId {
    pub const ALL: [KernelId; 6] = [
        KernelId::Exponential,
        KernelId::Matern52,
        KernelId::StretchedExponential,
        KernelId::RationalQuadratic,
        KernelId::Cauchy,
        KernelId::SquaredExponential,
    ];

    /// The five benchmark kernels (everything except the squared exponential).
    pub const BENCHMARKS: [KernelId; 5] = [
        KernelId::Exponential,
        KernelId::Matern52,
        KernelId::StretchedExponential,
        KernelId::RationalQuadratic,
        KernelId::Cauchy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelId::Exponential => "exponential",
            KernelId::Matern52 => "matern52",
            KernelId::StretchedExponential => "stretched_exponential",
            KernelId::RationalQuadratic => "rational_quadratic",
            KernelId::Cauchy => "cauchy",
            KernelId::SquaredExponential => "squared_exponential",
        }
    }

    /// Unit-scale profile, `d ≥ 0`.
    pub fn unit_profile<T: Real>(self, d: T) -> T {
        let one = T::one();
        match self {
            KernelId::Exponential => (-d).exp(),
            KernelId::Matern52 => {
                let s5 = T::lit(5.0).sqrt();
                (one + s5 * d + T::lit(5.0 / 3.0) * d * d) * (-s5 * d).exp()
            }
            KernelId::StretchedExponential => (-d.powf(T::lit(0.6))).exp(),
            KernelId::RationalQuadratic => (one + d * d / T::lit(2.0)).recip(),
            KernelId::Cauchy => (one + d).recip(),
            KernelId::SquaredExponential => (-d * d).exp(),
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelId::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = KernelId::ALL.iter().map(|k| k.as_str()).collect();
                Error::Parse(format!("unknown kernel `{s}` (known: {})", known.join(", ")))
            })
    }
}

/// A registered kernel with its scale parameters:
/// `C(d) = variance · C_unit(d / length_scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub id: KernelId,
    pub length_scale: f64,
    pub variance: f64,
}

impl KernelSpec {
    /// Unit length scale and variance.
    pub fn unit(id: KernelId) -> Self {
        Self { id, length_scale: 1.0, variance: 1.0 }
    }

    pub fn new(id: KernelId, length_scale: f64, variance: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::Domain(format!("length_scale must be positive, got {length_scale}")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Domain(format!("variance must be positive, got {variance}")));
        }
        Ok(Self { id, length_scale, variance })
    }

    #[inline]
    fn eval_unchecked<T: Real>(&self, d: T) -> T {
        T::lit(self.variance) * self.id.unit_profile(d / T::lit(self.length_scale))
    }
}

/// `C(d)` for `d ≥ 0`.
pub fn kernel_eval<T: Real>(spec: &KernelSpec, d: T) -> Result<T> {
    if !(d >= T::zero()) {
        return Err(Error::Domain(format!("kernel distance must be non-negative, got {d}")));
    }
    Ok(spec.eval_unchecked(d))
}

pub fn kernel_eval_batch<T: Real>(spec: &KernelSpec, ds: &[T]) -> Result<Vec<T>> {
    ds.iter().map(|&d| kernel_eval(spec, d)).collect()
}

/// Evaluation contract the fitter and the diagnostics rely on. Anything that
/// can supply `C(d)` on the fitting range can be fitted; no derivatives are
/// required.
pub trait IsotropicKernel: Send + Sync {
    fn eval(&self, d: f64) -> f64;

    fn name(&self) -> String;
}

impl IsotropicKernel for KernelSpec {
    #[inline]
    fn eval(&self, d: f64) -> f64 {
        self.eval_unchecked(d.abs())
    }

    fn name(&self) -> String {
        self.id.as_str().to_owned()
    }
}

/// Wraps a closure as a kernel.
pub struct FnKernel<F> {
    name: String,
    f: F,
}

impl<F: Fn(f64) -> f64 + Send + Sync> FnKernel<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> IsotropicKernel for FnKernel<F> {
    fn eval(&self, d: f64) -> f64 {
        (self.f)(d)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn examples() {
        let e = KernelSpec::unit(KernelId::Exponential);
        assert_eq!(kernel_eval(&e, 0.0).unwrap(), 1.0);
        let c = KernelSpec::unit(KernelId::Cauchy);
        assert_eq!(kernel_eval(&c, 1.0).unwrap(), 0.5);
        let m = KernelSpec::unit(KernelId::Matern52);
        let s5 = 5f64.sqrt();
        let expected = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert_relative_eq!(kernel_eval(&m, 1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.523994, max_relative = 1e-6);
    }

    #[test]
    fn batch_examples() {
        let e = KernelSpec::unit(KernelId::Exponential);
        let v = kernel_eval_batch(&e, &[0.0, 1.0, 2.0]).unwrap();
        assert_relative_eq!(v[1], (-1f64).exp());
        assert_relative_eq!(v[2], (-2f64).exp());
        let rq = KernelSpec::unit(KernelId::RationalQuadratic);
        assert_eq!(kernel_eval_batch(&rq, &[0.0]).unwrap(), vec![1.0]);
        let se = KernelSpec::unit(KernelId::StretchedExponential);
        assert_relative_eq!(kernel_eval_batch(&se, &[1.0]).unwrap()[0], 0.3678794, max_relative = 1e-6);
    }

    #[test]
    fn negative_distance_rejected() {
        let e = KernelSpec::unit(KernelId::Exponential);
        assert!(matches!(kernel_eval(&e, -0.1), Err(Error::Domain(_))));
        assert!(kernel_eval_batch(&e, &[0.0, -1.0]).is_err());
    }

    #[test]
    fn monotone_and_bounded_on_fit_range() {
        for id in KernelId::ALL {
            let k = KernelSpec::unit(id);
            let c0 = kernel_eval(&k, 0.0).unwrap();
            assert_eq!(c0, 1.0);
            let mut prev = c0;
            for i in 1..=1000 {
                let d = 2.0 * i as f64 / 1000.0;
                let v = kernel_eval(&k, d).unwrap();
                assert!(v <= prev && v > 0.0, "{id} not monotone at {d}");
                prev = v;
            }
        }
    }

    #[test]
    fn scale_parameters() {
        let k = KernelSpec::new(KernelId::Exponential, 0.5, 2.0).unwrap();
        assert_relative_eq!(kernel_eval(&k, 1.0).unwrap(), 2.0 * (-2f64).exp());
        assert!(KernelSpec::new(KernelId::Exponential, 0.0, 1.0).is_err());
        assert!(KernelSpec::new(KernelId::Exponential, 1.0, -1.0).is_err());
    }

    #[test]
    fn ids_round_trip_through_strings() {
        for id in KernelId::ALL {
            assert_eq!(id.as_str().parse::<KernelId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
        }
        assert!("gaussian".parse::<KernelId>().is_err());
    }
}
