//! Entropic quantities in bits: binary entropy, von Neumann entropy,
//! quantum conditional entropy, measured conditional entropies, and the
//! Devetak–Winter rate difference.

use crate::error::{Error, Result};
use crate::linalg::{apply_factor_op, eigh};
use crate::model::{DensityMatrix, PureState, Pvm};

/// Eigenvalues below this are treated as exact zeros before taking logs.
const LOG_CLIP: f64 = 1e-14;

/// h(q) = −q·log2(q) − (1−q)·log2(1−q), with 0·log 0 = 0.
pub fn binary_entropy(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::RangeError(format!("probability {q} outside [0,1]")));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(q) + term(1.0 - q))
}

fn shannon(probs: &[f64]) -> f64 {
    probs
        .iter()
        .map(|&p| if p > LOG_CLIP { -p * p.log2() } else { 0.0 })
        .sum()
}

/// S(ρ) = −∑ λ log2 λ.
pub fn von_neumann(rho: &DensityMatrix) -> Result<f64> {
    let (vals, _) = eigh(rho.mat())?;
    Ok(shannon(&vals))
}

/// Conditional entropy S(full) − S(condition marginal); `condition` lists
/// the conditioning factors of `rho`.
pub fn cond_entropy(rho: &DensityMatrix, condition: &[usize]) -> Result<f64> {
    let joint = von_neumann(rho)?;
    let marg = rho.reduced(condition)?;
    Ok(joint - von_neumann(&marg)?)
}

/// Conditional entropy of the outcome of a projective measurement on one
/// factor of a pure state, given the listed conditioning factors:
/// S(Z C) − S(C) for the classical–quantum post-measurement state.
pub fn measured_cond_entropy(
    psi: &PureState,
    pvm: &Pvm,
    measured_factor: usize,
    condition: &[usize],
) -> Result<f64> {
    let space = psi.space();
    if measured_factor >= space.factor_count() {
        return Err(Error::BadFactorIndex {
            index: measured_factor,
            count: space.factor_count(),
        });
    }
    if condition.contains(&measured_factor) {
        return Err(Error::BadFactorIndex {
            index: measured_factor,
            count: space.factor_count(),
        });
    }
    if pvm.dim() != space.dims()[measured_factor] {
        return Err(Error::DimensionMismatch(format!(
            "PVM dimension {} does not match factor {} of dimension {}",
            pvm.dim(),
            measured_factor,
            space.dims()[measured_factor]
        )));
    }

    let mut probs = Vec::with_capacity(pvm.outcomes());
    let mut cond_terms = 0.0;
    for a in 0..pvm.outcomes() {
        let branch = apply_factor_op(psi.amps(), space, pvm.projector(a), measured_factor)?;
        let unnorm = crate::linalg::ComplexMatrix::outer(&branch, &branch);
        let sigma = crate::linalg::partial_trace(&unnorm, space, condition)?;
        let p = sigma.trace().re;
        probs.push(p.max(0.0));
        if p > LOG_CLIP {
            let (vals, _) = eigh(&sigma.scale_re(1.0 / p))?;
            cond_terms += p * shannon(&vals);
        }
    }
    let rho_c = psi.reduced(condition)?;
    Ok(shannon(&probs) + cond_terms - von_neumann(&rho_c)?)
}

/// Devetak–Winter difference H(A|E) − H(A|B); callers clamp for reporting.
pub fn devetak_winter(h_a_given_e: f64, h_a_given_b: f64) -> f64 {
    h_a_given_e - h_a_given_b
}
