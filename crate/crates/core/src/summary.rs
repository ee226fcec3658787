//! Reduced dynamics in the coordinates `(ε, λ, Qᵢ)`.
//!
//! With `ε = aᵀb − Φ`, `λ = ‖a‖² + ‖b‖²` and `Qᵢ = aᵢ² − bᵢ²`, one GD step maps
//!
//! ```text
//! ε' = ε [1 − ηλ + η²ε(ε + Φ)]
//! λ' = (1 + η²ε²) λ − 4ηε(ε + Φ)
//! Qᵢ' = (1 − η²ε²) Qᵢ
//! ```
//!
//! exactly, which is what the commutation tests check against [`crate::model::gd_step`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::roots::smallest_positive_root;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryState<T> {
    residual: T,
    scale: T,
    imbalances: Vec<T>,
    product: T,
    gap: T,
}

impl<T: Scalar> SummaryState<T> {
    pub(crate) fn from_raw(residual: T, scale: T, imbalances: Vec<T>, product: T, gap: T) -> Self {
        Self { residual, scale, imbalances, product, gap }
    }

    /// Builds a summary without an underlying parameter state.
    ///
    /// `product` is set to `residual + phi`. Only finiteness and `scale ≥ 0`
    /// are enforced; use [`SummaryState::is_realizable`] for the Cauchy–Schwarz
    /// constraint.
    pub fn synthetic(residual: T, scale: T, imbalances: Vec<T>, phi: T) -> Result<Self> {
        if !residual.is_finite() || !scale.is_finite() || scale < T::zero() {
            return Err(Error::InconsistentSummary(format!(
                "residual {residual} / scale {scale} not admissible"
            )));
        }
        if imbalances.iter().any(|q| !q.is_finite()) {
            return Err(Error::InconsistentSummary("non-finite imbalance".into()));
        }
        let product = residual + phi;
        let gap = scale * scale - T::four() * product * product;
        Ok(Self { residual, scale, imbalances, product, gap })
    }

    /// `ε = aᵀb − Φ`.
    pub fn residual(&self) -> T {
        self.residual
    }

    /// `λ = ‖a‖² + ‖b‖²`.
    pub fn scale(&self) -> T {
        self.scale
    }

    /// Per-unit imbalances `Qᵢ = aᵢ² − bᵢ²`.
    pub fn imbalances(&self) -> &[T] {
        &self.imbalances
    }

    /// `p = aᵀb`.
    pub fn product(&self) -> T {
        self.product
    }

    /// `Q = Σ|Qᵢ|`.
    pub fn total_imbalance(&self) -> T {
        self.imbalances.iter().fold(T::zero(), |acc, q| acc + q.abs())
    }

    /// `S = ΣQᵢ = ‖a‖² − ‖b‖²`.
    pub fn signed_imbalance(&self) -> T {
        self.imbalances.iter().fold(T::zero(), |acc, &q| acc + q)
    }

    /// `C = λ/|p|`, the Cauchy–Schwarz ratio; `None` when `p = 0`.
    pub fn cs_ratio(&self) -> Option<T> {
        (self.product != T::zero()).then(|| self.scale / self.product.abs())
    }

    /// `G = λ² − 4p² = ‖a − b‖²‖a + b‖²`, which is also `S² + 4(‖a‖²‖b‖² − p²) ≥ S²`.
    ///
    /// Built from a parameter state it is evaluated in the factored form, so it
    /// stays accurate near the balanced manifold where `λ ≈ 2|p|`.
    pub fn gap(&self) -> T {
        self.gap
    }

    /// Whether some real `(a, b)` could produce this summary: `λ ≥ 2|p|` and
    /// `λ ≥ Q`, up to a relative rounding allowance.
    pub fn is_realizable(&self) -> bool {
        let slack = T::lit(1e3) * T::epsilon() * self.scale.max(T::one());
        self.scale + slack >= T::two() * self.product.abs()
            && self.scale + slack >= self.total_imbalance()
    }
}

pub fn residual_step<T: Scalar>(s: &SummaryState<T>, hp: &HyperParams<T>) -> T {
    residual_factor(s, hp.eta, hp.phi) * s.residual
}

/// `1 − ηλ + η²ε(ε+Φ)`: the multiplier in `ε' = factor·ε`.
pub fn residual_factor<T: Scalar>(s: &SummaryState<T>, eta: T, phi: T) -> T {
    let eps = s.residual;
    T::one() - eta * s.scale + eta * eta * eps * (eps + phi)
}

pub fn scale_step<T: Scalar>(s: &SummaryState<T>, hp: &HyperParams<T>) -> Result<T> {
    let eps = s.residual;
    let eta = hp.eta;
    let next = (T::one() + eta * eta * eps * eps) * s.scale - T::four() * eta * eps * (eps + hp.phi);
    if next < T::zero() {
        return Err(Error::InconsistentSummary(format!("scale update went negative ({next})")));
    }
    Ok(next)
}

pub fn imbalance_step<T: Scalar>(q: T, s: &SummaryState<T>, hp: &HyperParams<T>) -> T {
    imbalance_factor(s.residual, hp.eta) * q
}

/// `1 − η²ε²`.
pub fn imbalance_factor<T: Scalar>(residual: T, eta: T) -> T {
    let x = eta * residual;
    T::one() - x * x
}

/// All reduced coordinates after one GD step.
pub fn summary_step<T: Scalar>(s: &SummaryState<T>, hp: &HyperParams<T>) -> Result<SummaryState<T>> {
    let residual = residual_step(s, hp);
    let scale = scale_step(s, hp)?;
    let f = imbalance_factor(s.residual, hp.eta);
    let imbalances = s.imbalances.iter().map(|&q| f * q).collect();
    // a − b scales by (1 + ηε) and a + b by (1 − ηε).
    let gap = f * f * s.gap;
    Ok(SummaryState { residual, scale, imbalances, product: residual + hp.phi, gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    /// `ε > 0`.
    A,
    /// `ε < 0 < aᵀb`.
    B,
    /// `aᵀb < 0`.
    C,
    OnMinimum,
    OnZeroProduct,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionLabel::A => "A",
            RegionLabel::B => "B",
            RegionLabel::C => "C",
            RegionLabel::OnMinimum => "OnMinimum",
            RegionLabel::OnZeroProduct => "OnZeroProduct",
        })
    }
}

pub fn classify_region<T: Scalar>(s: &SummaryState<T>, _phi: T) -> RegionLabel {
    let zero = T::zero();
    if s.residual == zero {
        RegionLabel::OnMinimum
    } else if s.product == zero {
        RegionLabel::OnZeroProduct
    } else if s.residual > zero {
        RegionLabel::A
    } else if s.product < zero {
        RegionLabel::C
    } else {
        RegionLabel::B
    }
}

/// `α = λ² − 8ε(ε+Φ) + 4ε²`, conserved by gradient flow.
///
/// Equivalently `α = λ² − 4p² + 4Φ²`, so `α ≥ 4Φ²` for any real state.
pub fn alpha<T: Scalar>(s: &SummaryState<T>, phi: T) -> T {
    let eps = s.residual;
    s.scale * s.scale - T::lit(8.0) * eps * (eps + phi) + T::four() * eps * eps
}

/// Exact one-step change `α(t+1) − α(t) = −η²ε²(λ² − 4p²)(2 − η²ε²)`.
pub fn alpha_decrement<T: Scalar>(s: &SummaryState<T>, hp: &HyperParams<T>) -> T {
    let x = hp.eta * s.residual;
    let x2 = x * x;
    -x2 * s.gap() * (T::two() - x2)
}

/// Critical step sizes for a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds<T> {
    /// `λ̄ = √(λ₀² + 4Φ²)`.
    pub lambda_bar: T,
    /// `min{1/(2|ε|), 2/λ̄}`.
    pub theorem_cap: T,
    pub sqrt2_over_abs_res: T,
    pub two_over_abs_res: T,
    /// `2/λ + 2ε(ε+Φ)/λ³`.
    pub eos_cap: T,
    /// Step that zeroes the residual in one step.
    pub eta1: Option<T>,
    /// Step that exactly negates the residual in one step.
    pub eta2: Option<T>,
}

impl<T: Scalar> Thresholds<T> {
    /// `η̄ = min{η, 2/λ̄ − η}`.
    pub fn eta_bar(&self, eta: T) -> T {
        eta.min(T::two() / self.lambda_bar - eta)
    }
}

fn over_abs<T: Scalar>(num: T, x: T) -> T {
    if x == T::zero() {
        T::infinity()
    } else {
        num / x.abs()
    }
}

/// Thresholds for the state `s`, with `lambda0` the initial scale entering `λ̄`.
///
/// `η₁` and `η₂` are the smallest positive roots of `c − ηλ + η²ε(ε+Φ) = 0`
/// for `c = 1` and `c = 2`; when `ε(ε+Φ) = 0` they reduce to `c/λ`.
pub fn thresholds<T: Scalar>(s: &SummaryState<T>, lambda0: T, phi: T) -> Thresholds<T> {
    let two = T::two();
    let eps = s.residual;
    let lam = s.scale;
    let lambda_bar = (lambda0 * lambda0 + T::four() * phi * phi).sqrt();
    let k = eps * (eps + phi);

    let eos_cap = if lam == T::zero() {
        T::infinity()
    } else {
        two / lam + two * k / (lam * lam * lam)
    };

    Thresholds {
        lambda_bar,
        theorem_cap: over_abs(T::one() / two, eps).min(two / lambda_bar),
        sqrt2_over_abs_res: over_abs(two.sqrt(), eps),
        two_over_abs_res: over_abs(two, eps),
        eos_cap,
        eta1: smallest_positive_root(k, -lam, T::one()),
        eta2: smallest_positive_root(k, -lam, two),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    TheoremRange,
    EosSlow,
    SignFlip,
    DivergentRisk,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::TheoremRange => "theorem-range",
            Regime::EosSlow => "eos-slow",
            Regime::SignFlip => "sign-flip",
            Regime::DivergentRisk => "divergent-risk",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a step size. The ranges overlap; precedence is
/// theorem-range, then sign-flip, then eos-slow.
pub fn regime<T: Scalar>(eta: T, th: &Thresholds<T>) -> Regime {
    if eta < th.theorem_cap {
        return Regime::TheoremRange;
    }
    if let (Some(e1), Some(e2)) = (th.eta1, th.eta2) {
        if e1 < eta && eta < e2 {
            return Regime::SignFlip;
        }
    }
    let two_over_bar = T::two() / th.lambda_bar;
    let lo = th.sqrt2_over_abs_res.min(two_over_bar);
    let hi = th.two_over_abs_res.min(th.eos_cap);
    if lo < eta && eta < hi {
        Regime::EosSlow
    } else {
        Regime::DivergentRisk
    }
}
