use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{ParamState, ParamStateF64};

/// Initialization law for [`random_init`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitLaw {
    /// `a, b` i.i.d. standard normal, rescaled to the target `λ`.
    GaussianBalancedFree,
    /// As above, then `a → −a` if needed so that `aᵀb < 0`.
    RegionCForced,
}

/// Deterministic random start with `‖a‖² + ‖b‖² = scale_target`.
///
/// The draw depends only on `(d, seed)`; `scale_target` only rescales it, so
/// a seed gives the same direction at every initial scale.
pub fn random_init(d: usize, scale_target: f64, law: InitLaw, seed: u64) -> Result<ParamStateF64> {
    if d == 0 {
        return Err(Error::InvalidState("d must be >= 1".into()));
    }
    if !(scale_target > 0.0 && scale_target.is_finite()) {
        return Err(Error::InvalidState(format!("scale target {scale_target} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut a: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let lam: f64 = a.iter().chain(&b).map(|x| x * x).sum();
        let p: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        if lam == 0.0 || (law == InitLaw::RegionCForced && p == 0.0) {
            continue;
        }
        if law == InitLaw::RegionCForced && p > 0.0 {
            a.iter_mut().for_each(|x| *x = -*x);
        }
        let c = (scale_target / lam).sqrt();
        let a = a.into_iter().map(|x| x * c).collect();
        let b = b.into_iter().map(|x| x * c).collect();
        return ParamState::new(a, b);
    }
}

/// A one-dimensional state with the given residual and scale.
///
/// Needs `λ ≥ 2|ε + Φ|`; returns `a ≥ |b|`, so `Q ≥ 0`.
pub fn scalar_from_summary(residual: f64, scale: f64, phi: f64) -> Result<ParamStateF64> {
    let p = residual + phi;
    if !(scale >= 2.0 * p.abs()) {
        return Err(Error::InconsistentSummary(format!("scale {scale} < 2|p| = {}", 2.0 * p.abs())));
    }
    // (a + b)² = λ + 2p, (a − b)² = λ − 2p.
    let (u, v) = ((scale + 2.0 * p).sqrt(), (scale - 2.0 * p).sqrt());
    ParamState::scalar((u + v) / 2.0, (u - v) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_rescaled() {
        let x = random_init(4, 5.0, InitLaw::GaussianBalancedFree, 7).unwrap();
        let y = random_init(4, 5.0, InitLaw::GaussianBalancedFree, 7).unwrap();
        assert_eq!(x, y);
        assert!((x.scale() - 5.0).abs() < 1e-12);
        let z = random_init(4, 5.0, InitLaw::GaussianBalancedFree, 8).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn direction_independent_of_scale() {
        let x = random_init(3, 2.0, InitLaw::GaussianBalancedFree, 1).unwrap();
        let y = random_init(3, 8.0, InitLaw::GaussianBalancedFree, 1).unwrap();
        for (u, v) in x.a().iter().zip(y.a()) {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn region_c_forced() {
        for seed in 0..200 {
            let s = random_init(2, 3.0, InitLaw::RegionCForced, seed).unwrap();
            assert!(s.product() < 0.0);
        }
    }

    #[test]
    fn scalar_from_summary_hits_targets() {
        let s = scalar_from_summary(1e-3, 4.0, 1.0).unwrap();
        assert!((s.residual(1.0) - 1e-3).abs() < 1e-15);
        assert!((s.scale() - 4.0).abs() < 1e-14);
        let s = scalar_from_summary(1.0, 5.0, 1.0).unwrap();
        assert_eq!((s.a()[0], s.b()[0]), (2.0, 1.0));
        assert!(scalar_from_summary(1.0, 3.0, 1.0).is_err());
    }
}
