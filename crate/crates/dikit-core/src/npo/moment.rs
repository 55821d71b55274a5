//! Moment-matrix relaxations: an index set of words up to a per-party
//! level, one real variable per {w, w†} class, a PSD block with entry
//! (u,v) ↦ canonical(u†·v), and linear equality constraints from observed
//! statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npo::word::{adjoint, canonicalize, class_rep, Polynomial, Scenario, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "min")]
    Min,
    #[serde(rename = "max")]
    Max,
}

/// Affine symmetric block C₀ + Σ yᵥ·Aᵥ required to be PSD.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    pub dim: usize,
    /// Row-major dim×dim constant part.
    pub constant: Vec<f64>,
    /// Per-variable sparse symmetric coefficient lists (i, j, coeff).
    pub terms: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

/// Σ coeffs·y = rhs.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Σ coeffs·y (the identity word is an ordinary variable pinned to 1).
#[derive(Debug, Clone, Default)]
pub struct LinearExpr {
    pub coeffs: Vec<(usize, f64)>,
}

/// One NPO relaxation: canonical-word index set, moment variables, PSD
/// blocks, equality constraints, and a linear objective.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    scenario: Scenario,
    level: usize,
    index_words: Vec<Word>,
    var_words: Vec<Word>,
    var_ids: BTreeMap<Word, usize>,
    pub blocks: Vec<AffineBlock>,
    pub eq_constraints: Vec<LinearConstraint>,
    pub objective: LinearExpr,
    pub sense: Sense,
}

/// Words of length ≤ level over one party's generators; involutive parties
/// skip immediate repetitions (already reducible).
fn party_words(party: u8, generators: usize, involutive: bool, level: usize) -> Vec<Word> {
    let mut out = vec![Word::identity()];
    let mut frontier = vec![Word::identity()];
    for _ in 0..level {
        let mut next = Vec::new();
        for w in &frontier {
            for g in 0..generators as u8 {
                if involutive {
                    if let Some(last) = w.letters().last() {
                        if last.gen == g {
                            continue;
                        }
                    }
                }
                let mut ext = w.letters().to_vec();
                ext.push(crate::npo::word::Letter { party, gen: g });
                next.push(Word::from_letters(ext));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Cartesian product of per-party word lists in party-major order.
pub fn level_words(sc: &Scenario, level: usize) -> Vec<Word> {
    let per_party: Vec<Vec<Word>> = sc
        .parties()
        .iter()
        .enumerate()
        .map(|(p, spec)| party_words(p as u8, spec.generators, spec.involutive, level))
        .collect();
    let mut out = vec![Word::identity()];
    for list in per_party {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for w in &out {
            for v in &list {
                next.push(w.concat(v));
            }
        }
        out = next;
    }
    out
}

impl MomentProblem {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn index_words(&self) -> &[Word] {
        &self.index_words
    }

    pub fn var_words(&self) -> &[Word] {
        &self.var_words
    }

    pub fn var_count(&self) -> usize {
        self.var_words.len()
    }

    pub fn identity_var(&self) -> usize {
        self.var_ids[&Word::identity()]
    }

    fn var_of(&self, w: &Word) -> Result<usize> {
        let rep = class_rep(w, &self.scenario);
        self.var_ids.get(&rep).copied().ok_or_else(|| {
            let mut req = 0usize;
            for p in 0..self.scenario.party_count() {
                req = req.max(w.party_degree(p as u8).div_ceil(2));
            }
            Error::LevelTooLow {
                level: self.level,
                required: req,
                word: w.display(&self.scenario),
            }
        })
    }

    /// Polynomial → linear expression over moment variables.
    pub fn linearize(&self, poly: &Polynomial) -> Result<LinearExpr> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (w, c) in poly.terms() {
            let v = self.var_of(w)?;
            *acc.entry(v).or_insert(0.0) += c;
        }
        Ok(LinearExpr {
            coeffs: acc.into_iter().filter(|(_, c)| c.abs() > 1e-15).collect(),
        })
    }

    /// Pin a polynomial's moment to an observed value.
    pub fn add_equality(&mut self, poly: &Polynomial, rhs: f64) -> Result<()> {
        let expr = self.linearize(poly)?;
        self.eq_constraints.push(LinearConstraint {
            coeffs: expr.coeffs,
            rhs,
        });
        Ok(())
    }

    /// Require ⟨poly⟩ ≤ cap via a 1×1 slack block.
    pub fn add_upper_bound(&mut self, poly: &Polynomial, cap: f64) -> Result<()> {
        let expr = self.linearize(poly)?;
        self.blocks.push(AffineBlock {
            dim: 1,
            constant: vec![cap],
            terms: expr
                .coeffs
                .into_iter()
                .map(|(v, c)| (v, vec![(0usize, 0usize, -c)]))
                .collect(),
        });
        Ok(())
    }

    /// Require ⟨poly⟩ ≥ floor via a 1×1 slack block.
    pub fn add_lower_bound(&mut self, poly: &Polynomial, floor: f64) -> Result<()> {
        let expr = self.linearize(poly)?;
        self.blocks.push(AffineBlock {
            dim: 1,
            constant: vec![-floor],
            terms: expr
                .coeffs
                .into_iter()
                .map(|(v, c)| (v, vec![(0usize, 0usize, c)]))
                .collect(),
        });
        Ok(())
    }

    /// Audit dump of the full constraint system.
    pub fn to_json(&self) -> serde_json::Value {
        let sc = &self.scenario;
        serde_json::json!({
            "level": self.level,
            "parties": sc.parties().iter().map(|p| serde_json::json!({
                "label": p.label.to_string(),
                "generators": p.generators,
                "involutive": p.involutive,
            })).collect::<Vec<_>>(),
            "index_words": self.index_words.iter().map(|w| w.display(sc)).collect::<Vec<_>>(),
            "variables": self.var_words.iter().map(|w| w.display(sc)).collect::<Vec<_>>(),
            "blocks": self.blocks.iter().map(|b| serde_json::json!({
                "dim": b.dim,
                "constant": b.constant,
                "terms": b.terms.iter().map(|(v, entries)| serde_json::json!({
                    "var": v,
                    "entries": entries,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "eq_constraints": self.eq_constraints.iter().map(|c| serde_json::json!({
                "coeffs": c.coeffs,
                "rhs": c.rhs,
            })).collect::<Vec<_>>(),
            "objective": serde_json::json!({
                "coeffs": self.objective.coeffs,
            }),
            "sense": match self.sense { Sense::Min => "min", Sense::Max => "max" },
        })
    }
}

/// Build the level-L moment relaxation with the given pinned word moments
/// and polynomial objective.
pub fn build_moment_problem(
    sc: &Scenario,
    level: usize,
    stats: &[(Word, f64)],
    objective: &Polynomial,
    sense: Sense,
) -> Result<MomentProblem> {
    if level < 1 {
        return Err(Error::LevelTooLow {
            level,
            required: 1,
            word: "1".into(),
        });
    }
    let index_words = level_words(sc, level);
    let n = index_words.len();

    // Variables in first-appearance order of the moment-matrix scan.
    let mut var_ids: BTreeMap<Word, usize> = BTreeMap::new();
    let mut var_words: Vec<Word> = Vec::new();
    let mut entry_vars = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i..n {
            let w = canonicalize(
                &adjoint(&index_words[i], sc).concat(&index_words[j]),
                sc,
            );
            let rep = class_rep(&w, sc);
            let next = var_words.len();
            let id = *var_ids.entry(rep.clone()).or_insert_with(|| {
                var_words.push(rep);
                next
            });
            entry_vars[i][j] = id;
            entry_vars[j][i] = id;
        }
    }

    // Moment block: every entry is a bare variable.
    let mut per_var: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            per_var
                .entry(entry_vars[i][j])
                .or_default()
                .push((i, j, 1.0));
        }
    }
    let block = AffineBlock {
        dim: n,
        constant: vec![0.0; n * n],
        terms: per_var.into_iter().collect(),
    };

    let mut problem = MomentProblem {
        scenario: sc.clone(),
        level,
        index_words,
        var_words,
        var_ids,
        blocks: vec![block],
        eq_constraints: Vec::new(),
        objective: LinearExpr::default(),
        sense,
    };

    // ⟨1⟩ = 1.
    let id_var = problem.identity_var();
    problem.eq_constraints.push(LinearConstraint {
        coeffs: vec![(id_var, 1.0)],
        rhs: 1.0,
    });
    for (w, value) in stats {
        let v = problem.var_of(w)?;
        problem.eq_constraints.push(LinearConstraint {
            coeffs: vec![(v, 1.0)],
            rhs: *value,
        });
    }
    problem.objective = problem.linearize(objective)?;
    Ok(problem)
}
