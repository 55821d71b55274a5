//! Measurement statistics: full correlation tables from explicit models,
//! CHSH scores and winning probabilities, and BB84 error rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bloch_pvm, werner_state, DensityMatrix, DichotomicObservable, Pvm};

/// Quantum winning probability of the CHSH game, (2+√2)/4.
pub const TSIRELSON_OMEGA: f64 = 0.8535533905932737;

/// Observed two-party correlations p(a,b|x,y), stored row-major over
/// `[x][y][a][b]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct StatisticsTable {
    x_count: usize,
    y_count: usize,
    a_count: usize,
    b_count: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    x_count: usize,
    y_count: usize,
    a_count: usize,
    b_count: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawTable> for StatisticsTable {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        StatisticsTable::new(raw.x_count, raw.y_count, raw.a_count, raw.b_count, raw.probs)
    }
}

impl From<StatisticsTable> for RawTable {
    fn from(t: StatisticsTable) -> Self {
        RawTable {
            x_count: t.x_count,
            y_count: t.y_count,
            a_count: t.a_count,
            b_count: t.b_count,
            probs: t.probs,
        }
    }
}

impl StatisticsTable {
    pub fn new(
        x_count: usize,
        y_count: usize,
        a_count: usize,
        b_count: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if x_count == 0 || y_count == 0 || a_count == 0 || b_count == 0 {
            return Err(Error::ShapeError("all counts must be positive".into()));
        }
        if probs.len() != x_count * y_count * a_count * b_count {
            return Err(Error::ShapeError(format!(
                "expected {} probabilities, got {}",
                x_count * y_count * a_count * b_count,
                probs.len()
            )));
        }
        let t = Self {
            x_count,
            y_count,
            a_count,
            b_count,
            probs,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        for &p in &self.probs {
            if p < -1e-12 {
                return Err(Error::ShapeError(format!("negative probability {p}")));
            }
        }
        for x in 0..self.x_count {
            for y in 0..self.y_count {
                let mut sum = 0.0;
                for a in 0..self.a_count {
                    for b in 0..self.b_count {
                        sum += self.prob(x, y, a, b);
                    }
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::ShapeError(format!(
                        "probabilities for inputs ({x},{y}) sum to {sum}"
                    )));
                }
            }
        }
        let ns = self.no_signalling_residual();
        if ns > 1e-9 {
            return Err(Error::ShapeError(format!(
                "no-signalling residual {ns:.3e} exceeds 1e-9"
            )));
        }
        Ok(())
    }

    /// Worst-case dependence of either marginal on the other input.
    pub fn no_signalling_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.x_count {
            for a in 0..self.a_count {
                let m0: f64 = (0..self.b_count).map(|b| self.prob(x, 0, a, b)).sum();
                for y in 1..self.y_count {
                    let m: f64 = (0..self.b_count).map(|b| self.prob(x, y, a, b)).sum();
                    worst = worst.max((m - m0).abs());
                }
            }
        }
        for y in 0..self.y_count {
            for b in 0..self.b_count {
                let m0: f64 = (0..self.a_count).map(|a| self.prob(0, y, a, b)).sum();
                for x in 1..self.x_count {
                    let m: f64 = (0..self.a_count).map(|a| self.prob(x, y, a, b)).sum();
                    worst = worst.max((m - m0).abs());
                }
            }
        }
        worst
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.x_count, self.y_count, self.a_count, self.b_count)
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        let idx = ((x * self.y_count + y) * self.a_count + a) * self.b_count + b;
        self.probs[idx]
    }

    /// ⟨A_x B_y⟩ for binary outcome tables.
    pub fn correlator(&self, x: usize, y: usize) -> Result<f64> {
        if self.a_count != 2 || self.b_count != 2 {
            return Err(Error::ShapeError(
                "correlators need binary outcomes on both sides".into(),
            ));
        }
        Ok(self.prob(x, y, 0, 0) + self.prob(x, y, 1, 1)
            - self.prob(x, y, 0, 1)
            - self.prob(x, y, 1, 0))
    }

    /// ⟨A_x⟩ marginal for binary outcomes, averaged over the other input.
    pub fn alice_marginal(&self, x: usize) -> Result<f64> {
        if self.a_count != 2 {
            return Err(Error::ShapeError("marginals need binary outcomes".into()));
        }
        let y = 0;
        let p0: f64 = (0..self.b_count).map(|b| self.prob(x, y, 0, b)).sum();
        let p1: f64 = (0..self.b_count).map(|b| self.prob(x, y, 1, b)).sum();
        Ok(p0 - p1)
    }

    /// ⟨B_y⟩ marginal for binary outcomes.
    pub fn bob_marginal(&self, y: usize) -> Result<f64> {
        if self.b_count != 2 {
            return Err(Error::ShapeError("marginals need binary outcomes".into()));
        }
        let x = 0;
        let p0: f64 = (0..self.a_count).map(|a| self.prob(x, y, a, 0)).sum();
        let p1: f64 = (0..self.a_count).map(|a| self.prob(x, y, a, 1)).sum();
        Ok(p0 - p1)
    }
}

/// Bit-error rates of the two BB84 bases.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bb84Errors {
    pub q_x: f64,
    pub q_z: f64,
}

impl Bb84Errors {
    pub fn new(q_x: f64, q_z: f64) -> Result<Self> {
        for q in [q_x, q_z] {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::RangeError(format!("error rate {q} outside [0,1]")));
            }
        }
        Ok(Self { q_x, q_z })
    }
}

/// Born-rule table p(a,b|x,y) = tr[ρ (M_{a|x} ⊗ N_{b|y})].
pub fn correlations(
    rho: &DensityMatrix,
    alice_pvms: &[Pvm],
    bob_pvms: &[Pvm],
) -> Result<StatisticsTable> {
    let dims = rho.space().dims();
    if dims.len() != 2 {
        return Err(Error::DimensionMismatch(
            "correlations need a bipartite state".into(),
        ));
    }
    let (da, db) = (dims[0], dims[1]);
    if alice_pvms.is_empty()
        || bob_pvms.is_empty()
        || alice_pvms.iter().any(|p| p.dim() != da)
        || bob_pvms.iter().any(|p| p.dim() != db)
    {
        return Err(Error::DimensionMismatch(
            "measurement dimensions do not match the state".into(),
        ));
    }
    let a_count = alice_pvms[0].outcomes();
    let b_count = bob_pvms[0].outcomes();
    if alice_pvms.iter().any(|p| p.outcomes() != a_count)
        || bob_pvms.iter().any(|p| p.outcomes() != b_count)
    {
        return Err(Error::ShapeError(
            "all inputs must share one outcome count per side".into(),
        ));
    }
    let mut probs = Vec::with_capacity(alice_pvms.len() * bob_pvms.len() * a_count * b_count);
    for apvm in alice_pvms {
        for bpvm in bob_pvms {
            for a in 0..a_count {
                for b in 0..b_count {
                    let op = apvm.projector(a).kron(bpvm.projector(b));
                    probs.push(rho.mat().mul(&op).trace().re.max(0.0));
                }
            }
        }
    }
    StatisticsTable::new(alice_pvms.len(), bob_pvms.len(), a_count, b_count, probs)
}

/// ω = (1/4)·∑_{x,y} Pr[a⊕b = x·y | x,y].
pub fn chsh_winning_prob(t: &StatisticsTable) -> Result<f64> {
    if t.shape() != (2, 2, 2, 2) {
        return Err(Error::ShapeError(format!(
            "CHSH needs a 2x2x2x2 table, got {:?}",
            t.shape()
        )));
    }
    let mut omega = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    if (a ^ b) == (x & y) {
                        omega += t.prob(x, y, a, b);
                    }
                }
            }
        }
    }
    Ok(omega / 4.0)
}

/// ε = max(0, ω_Tsirelson − ω).
pub fn chsh_epsilon(omega: f64) -> Result<f64> {
    if !(0.0..=TSIRELSON_OMEGA + 1e-12).contains(&omega) {
        return Err(Error::RangeError(format!(
            "winning probability {omega} outside [0, (2+√2)/4]"
        )));
    }
    Ok((TSIRELSON_OMEGA - omega).max(0.0))
}

/// Disagreement probabilities q_z = Pr[Z_A ≠ Z_B], q_x = Pr[X_A ≠ X_B]
/// given per-side (Z, X) measurement pairs.
pub fn bb84_errors(
    rho: &DensityMatrix,
    alice: &[Pvm; 2],
    bob: &[Pvm; 2],
) -> Result<Bb84Errors> {
    for p in alice.iter().chain(bob.iter()) {
        if p.outcomes() != 2 {
            return Err(Error::ShapeError("BB84 needs binary measurements".into()));
        }
    }
    let table = correlations(rho, alice, bob)?;
    let disagree =
        |x: usize, y: usize| (table.prob(x, y, 0, 1) + table.prob(x, y, 1, 0)).clamp(0.0, 1.0);
    Bb84Errors::new(disagree(1, 1), disagree(0, 0))
}

/// Standard CHSH measurement angles in the x–z plane: Alice {0, π/2},
/// the local tester {π/4, −π/4}.
pub fn optimal_chsh_observables() -> ([DichotomicObservable; 2], [DichotomicObservable; 2]) {
    let alice = [
        DichotomicObservable::in_xz_plane(0.0),
        DichotomicObservable::in_xz_plane(std::f64::consts::FRAC_PI_2),
    ];
    let fred = [
        DichotomicObservable::in_xz_plane(std::f64::consts::FRAC_PI_4),
        DichotomicObservable::in_xz_plane(-std::f64::consts::FRAC_PI_4),
    ];
    (alice, fred)
}

/// CHSH table of a Werner state measured at the standard optimal angles.
pub fn werner_chsh_table(v: f64) -> Result<StatisticsTable> {
    let rho = werner_state(v)?;
    let (alice, fred) = optimal_chsh_observables();
    let apvms: Vec<Pvm> = alice
        .iter()
        .enumerate()
        .map(|(x, o)| bloch_pvm(o, format!("x{x}")))
        .collect();
    let fpvms: Vec<Pvm> = fred
        .iter()
        .enumerate()
        .map(|(y, o)| bloch_pvm(o, format!("y{y}")))
        .collect();
    correlations(&rho, &apvms, &fpvms)
}

/// Aligned Z/X measurement pairs for both BB84 parties.
pub fn bb84_pvms() -> ([Pvm; 2], [Pvm; 2]) {
    let z = DichotomicObservable::new([0.0, 0.0, 1.0]).unwrap();
    let x = DichotomicObservable::new([1.0, 0.0, 0.0]).unwrap();
    (
        [bloch_pvm(&z, "Z_A"), bloch_pvm(&x, "X_A")],
        [bloch_pvm(&z, "Z_B"), bloch_pvm(&x, "X_B")],
    )
}

/// BB84 error rates of a Werner state under aligned Z/X bases;
/// q_x = q_z = (1−v)/2.
pub fn werner_bb84_errors(v: f64) -> Result<Bb84Errors> {
    let rho = werner_state(v)?;
    let (alice, bob) = bb84_pvms();
    bb84_errors(&rho, &alice, &bob)
}

/// Table of a deterministic local strategy a(x), b(y).
pub fn deterministic_table(a_of_x: [usize; 2], b_of_y: [usize; 2]) -> StatisticsTable {
    let mut probs = vec![0.0; 16];
    for x in 0..2 {
        for y in 0..2 {
            let idx = ((x * 2 + y) * 2 + a_of_x[x]) * 2 + b_of_y[y];
            probs[idx] = 1.0;
        }
    }
    StatisticsTable::new(2, 2, 2, 2, probs).unwrap()
}

/// Exhaustive maximum of ω over the 16 deterministic strategies (= 3/4).
pub fn classical_chsh_max() -> f64 {
    let mut best: f64 = 0.0;
    for bits in 0..16usize {
        let a = [bits & 1, (bits >> 1) & 1];
        let b = [(bits >> 2) & 1, (bits >> 3) & 1];
        let t = deterministic_table(a, b);
        best = best.max(chsh_winning_prob(&t).unwrap());
    }
    best
}
