//! Closed-form certification chains: anticommutator-norm → overlap → rate,
//! the robust self-testing chain ε → δ → c_A★ → uncertainty-relation rate,
//! and the converter from a certified anticommutator-square moment to an
//! effective overlap.
//!
//! The moment converter rests on the block decomposition of two binary
//! projective measurements: each block k is at most two-dimensional with
//! overlap c_k = (1+|cosθ_k|)/2 and ⟨{A,B}²⟩ = 4·∑ p_k cos²θ_k, so
//! Cauchy–Schwarz gives c★ = ∑ p_k c_k ≤ 1/2 + √s/4. The
//! [`jordan_overlap_oracle`] sandwich test guards this derivation.

use serde::{Deserialize, Serialize};

use crate::entropy::binary_entropy;
use crate::error::{Error, Result};

/// Method tier that produced a rate certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "analytic-prop2")]
    AnalyticProp2,
    #[serde(rename = "analytic-thm1")]
    AnalyticThm1,
    #[serde(rename = "npo-eur")]
    NpoEur,
    #[serde(rename = "npo-entropy")]
    NpoEntropy,
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tier::AnalyticProp2 => "analytic-prop2",
            Tier::AnalyticThm1 => "analytic-thm1",
            Tier::NpoEur => "npo-eur",
            Tier::NpoEntropy => "npo-entropy",
        };
        f.write_str(s)
    }
}

/// Residual summary carried over from an SDP solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Key-rate lower bound with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateCertificate {
    pub rate: f64,
    pub tier: Tier,
    pub epsilon: Option<f64>,
    pub delta_constant: Option<f64>,
    pub c_star: Option<f64>,
    pub q_x: Option<f64>,
    pub q_z: Option<f64>,
    pub residuals: Option<ResidualSummary>,
}

/// Self-testing deficit ε with the dilation constant making δ = C·√ε exact.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelfTestParams {
    pub epsilon: f64,
    pub delta_constant: f64,
    pub delta: f64,
}

impl SelfTestParams {
    pub fn new(epsilon: f64, delta_constant: f64) -> Result<Self> {
        if epsilon < 0.0 {
            return Err(Error::RangeError(format!("epsilon {epsilon} below 0")));
        }
        if delta_constant <= 0.0 {
            return Err(Error::RangeError(format!(
                "dilation constant {delta_constant} must be positive"
            )));
        }
        Ok(Self {
            epsilon,
            delta_constant,
            delta: delta_constant * epsilon.sqrt(),
        })
    }
}

/// Overlap bounds; when both are present, c★ ≤ 2·c_A★.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OverlapBound {
    pub c_a_star: Option<f64>,
    pub c_star: f64,
}

impl OverlapBound {
    pub fn new(c_a_star: Option<f64>, c_star: f64) -> Result<Self> {
        if !(0.5..=1.0 + 1e-12).contains(&c_star) {
            return Err(Error::RangeError(format!("c_star {c_star} outside [1/2,1]")));
        }
        if let Some(ca) = c_a_star {
            if !(0.25..=1.0 + 1e-12).contains(&ca) {
                return Err(Error::RangeError(format!("c_A_star {ca} outside [1/4,1]")));
            }
            if c_star > 2.0 * ca + 1e-12 {
                return Err(Error::RangeError(
                    "c_star exceeds twice c_A_star".into(),
                ));
            }
        }
        Ok(Self { c_a_star, c_star })
    }
}

/// Block decomposition of two binary projective measurements: weights p_k
/// and principal angles θ_k.
#[derive(Debug, Clone)]
pub struct JordanBlocks {
    weights: Vec<f64>,
    angles: Vec<f64>,
}

impl JordanBlocks {
    pub fn new(weights: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        if weights.len() != angles.len() || weights.is_empty() {
            return Err(Error::ShapeError(
                "weights and angles must be nonempty and equally long".into(),
            ));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::RangeError("negative block weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::RangeError(format!("weights sum to {sum}, not 1")));
        }
        if angles.iter().any(|&t| !(0.0..=std::f64::consts::PI).contains(&t)) {
            return Err(Error::RangeError("angle outside [0, π]".into()));
        }
        Ok(Self { weights, angles })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// c = (1 + ‖{A,B}‖/2)/2 from the anticommutator norm of two qubit
/// observables.
pub fn overlap_from_anticommutator_norm(norm: f64) -> Result<f64> {
    if !(0.0..=2.0 + 1e-12).contains(&norm) {
        return Err(Error::RangeError(format!(
            "anticommutator norm {norm} outside [0,2]"
        )));
    }
    Ok((1.0 + norm.min(2.0) / 2.0) / 2.0)
}

/// Rate 1 − log2(1 + ‖{A,B}‖/2) − h(q) = −log2 c − h(q).
pub fn prop2_rate(norm: f64, q: f64) -> Result<RateCertificate> {
    let c = overlap_from_anticommutator_norm(norm)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::RangeError(format!("QBER {q} outside [0,1]")));
    }
    let rate = -c.log2() - binary_entropy(q)?;
    Ok(RateCertificate {
        rate,
        tier: Tier::AnalyticProp2,
        epsilon: None,
        delta_constant: None,
        c_star: Some(c),
        q_x: None,
        q_z: Some(q),
        residuals: None,
    })
}

/// Effective-overlap bound c★ ≤ 1/2 + √s/4 from a certified cap on
/// ⟨{A_Z,A_X}²⟩.
pub fn overlap_from_moment_bound(s: f64) -> Result<f64> {
    if !(0.0..=4.0 + 1e-9).contains(&s) {
        return Err(Error::RangeError(format!(
            "anticommutator-square moment {s} outside [0,4]"
        )));
    }
    Ok((0.5 + s.max(0.0).sqrt() / 4.0).min(1.0))
}

/// Rate −log2(c★) − h(q_x) − h(q_z) from the uncertainty relation with
/// quantum memory plus the error-correction cost.
pub fn eur_rate(c_star: f64, q_x: f64, q_z: f64) -> Result<RateCertificate> {
    if !(0.5..=1.0 + 1e-12).contains(&c_star) {
        return Err(Error::RangeError(format!(
            "effective overlap {c_star} outside [1/2,1]"
        )));
    }
    let rate = -c_star.min(1.0).log2() - binary_entropy(q_x)? - binary_entropy(q_z)?;
    Ok(RateCertificate {
        rate,
        tier: Tier::NpoEur,
        epsilon: None,
        delta_constant: None,
        c_star: Some(c_star),
        q_x: Some(q_x),
        q_z: Some(q_z),
        residuals: None,
    })
}

/// Robust self-testing chain: c_A★ = min(1, 1/4 + 8δ) with δ = C·√ε, then
/// rate = −1 − log2(c_A★) − h(q_x) − h(q_z). When 1/4 + 8δ reaches 1 the
/// certificate is vacuous (rate −1 − h − h).
pub fn thm1_rate(params: &SelfTestParams, q_x: f64, q_z: f64) -> Result<RateCertificate> {
    let c_a_star = (0.25 + 8.0 * params.delta).min(1.0);
    let rate = -1.0 - c_a_star.log2() - binary_entropy(q_x)? - binary_entropy(q_z)?;
    Ok(RateCertificate {
        rate,
        tier: Tier::AnalyticThm1,
        epsilon: Some(params.epsilon),
        delta_constant: Some(params.delta_constant),
        c_star: Some((2.0 * c_a_star).min(1.0)),
        q_x: Some(q_x),
        q_z: Some(q_z),
        residuals: None,
    })
}

/// Exact overlap and anticommutator-square moment of a block model:
/// c★ = ∑ p_k (1+|cosθ_k|)/2 and ⟨{A,B}²⟩ = 4·∑ p_k cos²θ_k.
pub fn jordan_overlap_oracle(blocks: &JordanBlocks) -> (f64, f64) {
    let mut c_star = 0.0;
    let mut moment = 0.0;
    for (&p, &t) in blocks.weights().iter().zip(blocks.angles()) {
        c_star += p * (1.0 + t.cos().abs()) / 2.0;
        moment += p * 4.0 * t.cos() * t.cos();
    }
    (c_star, moment)
}
