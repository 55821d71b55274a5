//! Certified moment bounds from observed local-test statistics: upper
//! bounds on the anticommutator square ⟨{A₀,A₁}²⟩ and lower bounds on the
//! commutator square ⟨[A₀,A₁]†[A₀,A₁]⟩ over all quantum models reproducing
//! the table (or just its CHSH score), plus the solver conformance battery.

use crate::error::{Error, Result};
use crate::npo::moment::{build_moment_problem, MomentProblem, Sense};
use crate::npo::sdp::{solve_sdp, SdpSolution, SdpStatus};
use crate::npo::word::{Letter, Polynomial, Scenario, Word};
use crate::stats::{chsh_winning_prob, StatisticsTable};

/// Default relaxation level; the degree-4 objectives need 2L ≥ 4.
pub const DEFAULT_LEVEL: usize = 2;

fn gen_word(party: u8, gens: &[u8]) -> Word {
    Word::from_letters(gens.iter().map(|&g| Letter { party, gen: g }).collect())
}

/// {A₀,A₁}² as a polynomial over one party's two involutions.
pub fn anticommutator_square(sc: &Scenario, party: u8) -> Polynomial {
    let a01 = Polynomial::from_word(&gen_word(party, &[0, 1]), 1.0, sc);
    let a10 = Polynomial::from_word(&gen_word(party, &[1, 0]), 1.0, sc);
    let anti = a01.add(&a10);
    anti.mul(&anti, sc)
}

/// [A₀,A₁]†[A₀,A₁] as a polynomial over one party's two involutions.
pub fn commutator_square(sc: &Scenario, party: u8) -> Polynomial {
    let a01 = Polynomial::from_word(&gen_word(party, &[0, 1]), 1.0, sc);
    let a10 = Polynomial::from_word(&gen_word(party, &[1, 0]), 1.0, sc);
    let comm = a01.sub(&a10);
    comm.adjoint(sc).mul(&comm, sc)
}

/// ⟨A₀F₀⟩ + ⟨A₀F₁⟩ + ⟨A₁F₀⟩ − ⟨A₁F₁⟩.
pub fn chsh_polynomial(sc: &Scenario) -> Polynomial {
    let term = |x: u8, y: u8, s: f64| {
        Polynomial::from_word(
            &Word::from_letters(vec![
                Letter { party: 0, gen: x },
                Letter { party: 1, gen: y },
            ]),
            s,
            sc,
        )
    };
    term(0, 0, 1.0)
        .add(&term(0, 1, 1.0))
        .add(&term(1, 0, 1.0))
        .add(&term(1, 1, -1.0))
}

fn check_table(t: &StatisticsTable) -> Result<()> {
    if t.shape() != (2, 2, 2, 2) {
        return Err(Error::ShapeError(format!(
            "local-test bounds need a 2x2x2x2 table, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Moment relaxation of a local test with either the full 8 moment
/// constraints or only the CHSH score.
fn local_problem(
    table: &StatisticsTable,
    level: usize,
    use_full_stats: bool,
    objective: &Polynomial,
    sense: Sense,
) -> Result<MomentProblem> {
    check_table(table)?;
    let sc = Scenario::chsh_local();
    let mut problem = build_moment_problem(&sc, level, &[], objective, sense)?;
    if use_full_stats {
        for x in 0..2u8 {
            let p = Polynomial::generator(0, x);
            problem.add_equality(&p, table.alice_marginal(x as usize)?)?;
        }
        for y in 0..2u8 {
            let p = Polynomial::generator(1, y);
            problem.add_equality(&p, table.bob_marginal(y as usize)?)?;
        }
        for x in 0..2u8 {
            for y in 0..2u8 {
                let w = Word::from_letters(vec![
                    Letter { party: 0, gen: x },
                    Letter { party: 1, gen: y },
                ]);
                let p = Polynomial::from_word(&w, 1.0, &sc);
                problem.add_equality(&p, table.correlator(x as usize, y as usize)?)?;
            }
        }
    } else {
        let omega = chsh_winning_prob(table)?;
        // ω = 1/2 + S/8 for the a⊕b = x·y convention.
        problem.add_equality(&chsh_polynomial(&sc), 8.0 * omega - 4.0)?;
    }
    Ok(problem)
}

/// The moment problem behind [`bound_anticom_sq`], exposed for audit dumps.
pub fn anticom_sq_problem(
    table: &StatisticsTable,
    level: usize,
    use_full_stats: bool,
) -> Result<MomentProblem> {
    let sc = Scenario::chsh_local();
    let objective = anticommutator_square(&sc, 0);
    local_problem(table, level, use_full_stats, &objective, Sense::Max)
}

/// Certified upper bound on ⟨{A₀,A₁}²⟩ over all models reproducing the
/// local-test statistics; clamped at the algebraic cap 4.
pub fn bound_anticom_sq(
    table: &StatisticsTable,
    level: usize,
    use_full_stats: bool,
) -> Result<(f64, SdpSolution)> {
    let problem = anticom_sq_problem(table, level, use_full_stats)?;
    let solution = solve_sdp(&problem)?;
    if solution.status == SdpStatus::Infeasible {
        return Err(Error::Infeasible(format!(
            "local-test statistics admit no quantum model at level {level} \
             (primal residual {:.3e})",
            solution.primal_residual
        )));
    }
    let s_max = solution.certified_value.min(4.0);
    Ok((s_max, solution))
}

/// Certified lower bound on ⟨[A₀,A₁]†[A₀,A₁]⟩; clamped at 0.
pub fn bound_com_sq(table: &StatisticsTable, level: usize) -> Result<(f64, SdpSolution)> {
    let sc = Scenario::chsh_local();
    let objective = commutator_square(&sc, 0);
    let problem = local_problem(table, level, true, &objective, Sense::Min)?;
    let solution = solve_sdp(&problem)?;
    if solution.status == SdpStatus::Infeasible {
        return Err(Error::Infeasible(format!(
            "local-test statistics admit no quantum model at level {level} \
             (primal residual {:.3e})",
            solution.primal_residual
        )));
    }
    let s_min = solution.certified_value.max(0.0);
    Ok((s_min, solution))
}

/// Certified maximum CHSH score with no statistics constraints
/// (the Tsirelson bound 2√2 at every level).
pub fn max_chsh_score(level: usize) -> Result<(f64, SdpSolution)> {
    let sc = Scenario::chsh_local();
    let objective = chsh_polynomial(&sc);
    let problem = build_moment_problem(&sc, level, &[], &objective, Sense::Max)?;
    let solution = solve_sdp(&problem)?;
    Ok((solution.certified_value, solution))
}

/// One line of the solver conformance battery.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SelfTestCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SelfTestCheck {
    fn at_most(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: value <= target + tolerance,
        }
    }

    fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }
}

/// Solver conformance battery: Tsirelson score, the commuting 4-cap, the
/// self-testing forcing at the ideal point, and monotonicity in visibility.
/// `inject_loose_tolerance` shrinks every tolerance to force failures
/// (negative-control hook).
pub fn sdp_selftest_battery(inject_loose_tolerance: bool) -> Result<Vec<SelfTestCheck>> {
    let squeeze = if inject_loose_tolerance { 1e-12 } else { 1.0 };
    let mut checks = Vec::new();

    let (score, _) = max_chsh_score(1)?;
    checks.push(SelfTestCheck::near(
        "chsh-level1-tsirelson",
        score,
        2.0 * std::f64::consts::SQRT_2,
        1e-5 * squeeze,
    ));

    let uniform = crate::stats::werner_chsh_table(0.0)?;
    let (s_uniform, _) = bound_anticom_sq(&uniform, DEFAULT_LEVEL, true)?;
    checks.push(SelfTestCheck::near(
        "anticom-sq-uniform-cap",
        s_uniform,
        4.0,
        1e-5 * squeeze,
    ));

    let ideal = crate::stats::werner_chsh_table(1.0)?;
    let (s_ideal, _) = bound_anticom_sq(&ideal, DEFAULT_LEVEL, true)?;
    checks.push(SelfTestCheck::at_most(
        "anticom-sq-ideal-forcing",
        s_ideal,
        0.0,
        1e-4 * squeeze,
    ));

    let t_low = crate::stats::werner_chsh_table(0.9)?;
    let t_high = crate::stats::werner_chsh_table(0.99)?;
    let (s_low, _) = bound_anticom_sq(&t_low, DEFAULT_LEVEL, true)?;
    let (s_high, _) = bound_anticom_sq(&t_high, DEFAULT_LEVEL, true)?;
    checks.push(SelfTestCheck::at_most(
        "anticom-sq-monotone-in-visibility",
        s_high,
        s_low,
        1e-6 * squeeze,
    ));

    Ok(checks)
}
