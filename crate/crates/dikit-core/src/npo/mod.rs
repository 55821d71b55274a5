//! Noncommutative polynomial optimization: canonical word algebra,
//! moment-matrix relaxations, a self-contained dense interior-point SDP
//! solver, and certified moment bounds from observed statistics.

pub mod bounds;
pub mod moment;
pub mod sdp;
pub mod word;

#[cfg(feature = "entropy-npo")]
pub mod bff;

pub use bounds::{
    anticom_sq_problem, bound_anticom_sq, bound_com_sq, max_chsh_score, sdp_selftest_battery,
    SelfTestCheck, DEFAULT_LEVEL,
};
pub use moment::{build_moment_problem, AffineBlock, LinearConstraint, MomentProblem, Sense};
pub use sdp::{solve_sdp, SdpSolution, SdpStatus};
pub use word::{canonicalize, class_rep, Letter, PartySpec, Polynomial, Scenario, Word};
