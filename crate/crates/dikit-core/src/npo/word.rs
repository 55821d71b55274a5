//! Canonical word algebra for noncommutative polynomial optimization:
//! letters tagged by party and generator, cross-party commutation, and
//! involution cancellation.

use std::collections::BTreeMap;

/// One party's generator family.
#[derive(Debug, Clone)]
pub struct PartySpec {
    pub label: char,
    pub generators: usize,
    /// Hermitian involutions (g² = 1, g† = g). Non-involutive parties carry
    /// generators in adjoint pairs (2k, 2k+1).
    pub involutive: bool,
}

/// Parties in commutation order; letters of different parties commute.
#[derive(Debug, Clone)]
pub struct Scenario {
    parties: Vec<PartySpec>,
}

impl Scenario {
    pub fn new(parties: Vec<PartySpec>) -> Self {
        assert!(
            parties.len() <= u8::MAX as usize,
            "too many parties for letter encoding"
        );
        for p in &parties {
            if !p.involutive {
                assert!(
                    p.generators % 2 == 0,
                    "non-involutive generators must come in adjoint pairs"
                );
            }
        }
        Self { parties }
    }

    /// Two dichotomic observables per side of a local Bell test.
    pub fn chsh_local() -> Self {
        Self::new(vec![
            PartySpec {
                label: 'A',
                generators: 2,
                involutive: true,
            },
            PartySpec {
                label: 'F',
                generators: 2,
                involutive: true,
            },
        ])
    }

    pub fn parties(&self) -> &[PartySpec] {
        &self.parties
    }

    pub fn party_count(&self) -> usize {
        self.parties.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub party: u8,
    pub gen: u8,
}

/// Product of generators; the empty word is the identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn single(party: u8, gen: u8) -> Self {
        Self {
            letters: vec![Letter { party, gen }],
        }
    }

    pub fn from_letters(letters: Vec<Letter>) -> Self {
        Self { letters }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word { letters }
    }

    pub fn party_degree(&self, party: u8) -> usize {
        self.letters.iter().filter(|l| l.party == party).count()
    }

    /// Human-readable form for audit dumps.
    pub fn display(&self, sc: &Scenario) -> String {
        if self.letters.is_empty() {
            return "1".into();
        }
        self.letters
            .iter()
            .map(|l| {
                let spec = &sc.parties()[l.party as usize];
                if spec.involutive {
                    format!("{}{}", spec.label, l.gen)
                } else if l.gen % 2 == 0 {
                    format!("{}{}", spec.label, l.gen / 2)
                } else {
                    format!("{}{}†", spec.label, l.gen / 2)
                }
            })
            .collect::<Vec<_>>()
            .join("·")
    }
}

/// Canonical form: different-party letters commute into party-major order
/// (stable, so same-party letters keep their order), then adjacent equal
/// involution letters cancel in pairs.
pub fn canonicalize(w: &Word, sc: &Scenario) -> Word {
    let mut letters = w.letters().to_vec();
    letters.sort_by_key(|l| l.party);
    let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
    for l in letters {
        let involutive = sc.parties()[l.party as usize].involutive;
        if involutive {
            if let Some(top) = out.last() {
                if *top == l {
                    out.pop();
                    continue;
                }
            }
        }
        out.push(l);
    }
    Word { letters: out }
}

/// w†: reversed letter order with per-letter adjoints.
pub fn adjoint(w: &Word, sc: &Scenario) -> Word {
    let letters = w
        .letters()
        .iter()
        .rev()
        .map(|l| {
            if sc.parties()[l.party as usize].involutive {
                *l
            } else {
                Letter {
                    party: l.party,
                    gen: l.gen ^ 1,
                }
            }
        })
        .collect();
    Word { letters }
}

/// Representative of the {w, w†} class (moments of both coincide for the
/// real relaxation): the lexicographically smaller canonical form.
pub fn class_rep(w: &Word, sc: &Scenario) -> Word {
    let c = canonicalize(w, sc);
    let a = canonicalize(&adjoint(&c, sc), sc);
    if a < c {
        a
    } else {
        c
    }
}

/// Real-coefficient polynomial in canonical words (the identity is the
/// empty word).
#[derive(Debug, Clone, Default)]
pub struct Polynomial {
    terms: BTreeMap<Word, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(Word::identity(), c);
        }
        Self { terms }
    }

    pub fn from_word(w: &Word, coeff: f64, sc: &Scenario) -> Self {
        let mut p = Self::zero();
        p.accumulate(canonicalize(w, sc), coeff);
        p
    }

    /// Single-generator observable.
    pub fn generator(party: u8, gen: u8) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Word::single(party, gen), 1.0);
        Self { terms }
    }

    fn accumulate(&mut self, w: Word, coeff: f64) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(w) {
            Entry::Vacant(e) => {
                if coeff != 0.0 {
                    e.insert(coeff);
                }
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += coeff;
                if e.get().abs() < 1e-15 {
                    e.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.terms.iter().map(|(w, &c)| (w, c))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in other.terms() {
            out.accumulate(w.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(w, c)| (w.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Self, sc: &Scenario) -> Self {
        let mut out = Self::zero();
        for (w1, c1) in self.terms() {
            for (w2, c2) in other.terms() {
                out.accumulate(canonicalize(&w1.concat(w2), sc), c1 * c2);
            }
        }
        out
    }

    pub fn adjoint(&self, sc: &Scenario) -> Self {
        let mut out = Self::zero();
        for (w, c) in self.terms() {
            out.accumulate(canonicalize(&adjoint(w, sc), sc), c);
        }
        out
    }

    /// Smallest per-party relaxation level whose moment matrix can index
    /// every term: max over parties of ⌈degree/2⌉.
    pub fn required_level(&self, sc: &Scenario) -> usize {
        let mut req = 0usize;
        for (w, _) in self.terms() {
            for p in 0..sc.party_count() {
                let deg = w.party_degree(p as u8);
                req = req.max(deg.div_ceil(2));
            }
        }
        req
    }

    pub fn display(&self, sc: &Scenario) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(w, c)| format!("{c:+.6}·{}", w.display(sc)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn a(g: u8) -> Letter {
        Letter { party: 0, gen: g }
    }

    fn f(g: u8) -> Letter {
        Letter { party: 1, gen: g }
    }

    #[test]
    fn involution_cancels() {
        let sc = Scenario::chsh_local();
        let w = Word::from_letters(vec![a(0), a(0)]);
        assert_eq!(canonicalize(&w, &sc), Word::identity());
    }

    #[test]
    fn cross_party_commutes_to_party_major_order() {
        let sc = Scenario::chsh_local();
        let w = Word::from_letters(vec![f(0), a(1)]);
        let c = canonicalize(&w, &sc);
        assert_eq!(c.letters(), &[a(1), f(0)]);
    }

    #[test]
    fn same_party_letters_keep_their_order() {
        let sc = Scenario::chsh_local();
        let w = Word::from_letters(vec![a(0), a(1), a(0), a(1)]);
        let c = canonicalize(&w, &sc);
        assert_eq!(c, w, "non-commuting pair must be preserved");
    }

    #[test]
    fn canonicalize_is_idempotent_and_confluent() {
        // Random words, random interleavings of the same multiset with the
        // same per-party subsequences: all reduce to one canonical form.
        let sc = Scenario::chsh_local();
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        for _ in 0..300 {
            let len = rng.gen_range(0..10);
            let letters: Vec<Letter> = (0..len)
                .map(|_| Letter {
                    party: rng.gen_range(0..2),
                    gen: rng.gen_range(0..2),
                })
                .collect();
            let w = Word::from_letters(letters.clone());
            let c = canonicalize(&w, &sc);
            assert_eq!(canonicalize(&c, &sc), c, "not idempotent");

            // Interleave parties differently while preserving each party's
            // internal order; the canonical form must not change.
            let mut per_party: Vec<Vec<Letter>> = vec![Vec::new(), Vec::new()];
            for l in &letters {
                per_party[l.party as usize].push(*l);
            }
            let mut shuffled: Vec<Letter> = Vec::new();
            let mut idx = [0usize; 2];
            let mut order: Vec<u8> = letters.iter().map(|l| l.party).collect();
            order.shuffle(&mut rng);
            for p in order {
                shuffled.push(per_party[p as usize][idx[p as usize]]);
                idx[p as usize] += 1;
            }
            let w2 = Word::from_letters(shuffled);
            assert_eq!(canonicalize(&w2, &sc), c, "reduction order changed the result");
        }
    }

    #[test]
    fn adjoint_reverses_and_pairs() {
        let sc = Scenario::chsh_local();
        let w = Word::from_letters(vec![a(0), a(1)]);
        let adj = adjoint(&w, &sc);
        assert_eq!(adj.letters(), &[a(1), a(0)]);

        let sc2 = Scenario::new(vec![PartySpec {
            label: 'Z',
            generators: 2,
            involutive: false,
        }]);
        let z = Word::single(0, 0);
        assert_eq!(adjoint(&z, &sc2).letters(), &[Letter { party: 0, gen: 1 }]);
    }

    #[test]
    fn class_folds_adjoint_pairs() {
        let sc = Scenario::chsh_local();
        let w = Word::from_letters(vec![a(0), a(1)]);
        let v = Word::from_letters(vec![a(1), a(0)]);
        assert_eq!(class_rep(&w, &sc), class_rep(&v, &sc));
        // Self-adjoint words are their own class.
        let s = Word::from_letters(vec![a(0), a(1), a(0)]);
        assert_eq!(class_rep(&s, &sc), canonicalize(&s, &sc));
    }

    #[test]
    fn anticommutator_square_expands_as_expected() {
        let sc = Scenario::chsh_local();
        let a0a1 = Polynomial::from_word(&Word::from_letters(vec![a(0), a(1)]), 1.0, &sc);
        let a1a0 = Polynomial::from_word(&Word::from_letters(vec![a(1), a(0)]), 1.0, &sc);
        let anti = a0a1.add(&a1a0);
        let sq = anti.mul(&anti, &sc);
        // (A0A1 + A1A0)² = 2·1 + A0A1A0A1 + A1A0A1A0.
        let terms: Vec<(Word, f64)> = sq.terms().map(|(w, c)| (w.clone(), c)).collect();
        assert_eq!(terms.len(), 3);
        let id_coeff = sq
            .terms()
            .find(|(w, _)| w.is_empty())
            .map(|(_, c)| c)
            .unwrap();
        assert_eq!(id_coeff, 2.0);
        assert_eq!(sq.required_level(&sc), 2);
    }
}
