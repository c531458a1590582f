use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::rcnf::literal_masks;
use super::{check_read_once, BooleanFunction, Literal, ReadOnceCnf, Restriction};
use crate::bits::SignVector;
use crate::error::{Error, Result};
use crate::rational::{inv_pow2, ratio};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Or,
    Xor,
}

/// An OR of literals, or an XOR of literal truth values required to equal `parity`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub kind: TermKind,
    pub lits: Vec<Literal>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parity: bool,
}

impl Term {
    pub fn or(lits: Vec<Literal>) -> Self {
        Term { kind: TermKind::Or, lits, parity: false }
    }

    pub fn xor(lits: Vec<Literal>, parity: bool) -> Self {
        Term { kind: TermKind::Xor, lits, parity }
    }

    pub fn eval(&self, x: &SignVector) -> bool {
        match self.kind {
            TermKind::Or => self.lits.iter().any(|l| l.eval(x)),
            TermKind::Xor => (self.lits.iter().filter(|l| l.eval(x)).count() % 2 == 1) == self.parity,
        }
    }

    pub fn expectation(&self) -> BigRational {
        match self.kind {
            TermKind::Or => BigRational::one() - inv_pow2(self.lits.len()),
            TermKind::Xor => ratio(1, 2),
        }
    }
}

/// AND of OR-terms and XOR-terms on pairwise disjoint variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "XorCnfJson", into = "XorCnfJson")]
pub struct XorCnf {
    n: usize,
    terms: Vec<Term>,
    falsified: bool,
    masks: Vec<(u64, u64)>,
}

#[derive(Serialize, Deserialize)]
struct XorCnfJson {
    n: usize,
    #[serde(default)]
    terms: Vec<Term>,
    #[serde(default, rename = "false", skip_serializing_if = "std::ops::Not::not")]
    falsified: bool,
}

impl TryFrom<XorCnfJson> for XorCnf {
    type Error = Error;
    fn try_from(j: XorCnfJson) -> Result<Self> {
        if j.falsified {
            return Ok(XorCnf::falsified(j.n));
        }
        XorCnf::new(j.n, j.terms)
    }
}

impl From<XorCnf> for XorCnfJson {
    fn from(f: XorCnf) -> Self {
        XorCnfJson { n: f.n, terms: f.terms, falsified: f.falsified }
    }
}

impl XorCnf {
    pub fn new(n: usize, terms: Vec<Term>) -> Result<Self> {
        check_read_once(n, terms.iter().map(|t| t.lits.as_slice()))
            .map_err(|e| Error::Usage(e.replace("read-once", "terms must be disjoint")))?;
        let masks = terms.iter().map(|t| literal_masks(n, &t.lits)).collect();
        Ok(XorCnf { n, terms, falsified: false, masks })
    }

    pub fn falsified(n: usize) -> Self {
        XorCnf { n, terms: vec![], falsified: true, masks: vec![] }
    }

    pub fn from_rcnf(f: &ReadOnceCnf) -> Self {
        if f.is_falsified() {
            return XorCnf::falsified(f.num_vars());
        }
        let terms = f.clauses().iter().map(|c| Term::or(c.clone())).collect();
        XorCnf::new(f.num_vars(), terms).expect("read-once clauses are disjoint")
    }

    pub fn is_falsified(&self) -> bool {
        self.falsified
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Same terms over a relabelled variable set: variable `i` becomes `map[i]`.
    pub fn relabel(&self, n: usize, map: &[usize]) -> Result<XorCnf> {
        if self.falsified {
            return Ok(XorCnf::falsified(n));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                kind: t.kind,
                parity: t.parity,
                lits: t.lits.iter().map(|l| Literal { var: map[l.var], positive: l.positive }).collect(),
            })
            .collect();
        XorCnf::new(n, terms)
    }

    pub fn apply_restriction(&self, rho: &Restriction) -> XorCnf {
        if self.falsified {
            return self.clone();
        }
        let mut out = Vec::new();
        for t in &self.terms {
            let mut kept = Vec::new();
            let mut sat = false;
            let mut parity = t.parity;
            for l in &t.lits {
                match rho.value(l.var) {
                    Some(s) => match t.kind {
                        TermKind::Or => sat |= l.value(s),
                        TermKind::Xor => parity ^= l.value(s),
                    },
                    None => kept.push(*l),
                }
            }
            match t.kind {
                TermKind::Or if sat => continue,
                TermKind::Xor if kept.is_empty() && !parity => continue,
                _ if kept.is_empty() => return XorCnf::falsified(self.n),
                _ => out.push(Term { kind: t.kind, lits: kept, parity }),
            }
        }
        XorCnf::new(self.n, out).expect("restriction keeps terms disjoint")
    }
}

impl BooleanFunction for XorCnf {
    fn num_vars(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &SignVector) -> bool {
        !self.falsified && self.terms.iter().all(|t| t.eval(x))
    }

    fn eval_packed(&self, neg: u64) -> bool {
        debug_assert!(self.n <= 64);
        if self.falsified {
            return false;
        }
        self.terms.iter().zip(&self.masks).all(|(t, &(p, q))| {
            let true_lits = (!neg & p) | (neg & q);
            match t.kind {
                TermKind::Or => true_lits != 0,
                TermKind::Xor => (true_lits.count_ones() % 2 == 1) == t.parity,
            }
        })
    }

    fn exact_expectation(&self) -> BigRational {
        if self.falsified {
            return BigRational::zero();
        }
        self.terms.iter().fold(BigRational::one(), |acc, t| acc * t.expectation())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::FALSE;
    use crate::models::brute_expectation;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn random_xorcnf(n: usize, seed: u64) -> XorCnf {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut vars: Vec<usize> = (0..n).collect();
        vars.shuffle(&mut rng);
        let used = rng.gen_range(0..=n);
        let mut terms = vec![];
        let mut i = 0;
        while i < used {
            let w = rng.gen_range(1..=4).min(used - i);
            let lits = vars[i..i + w].iter().map(|&v| Literal { var: v, positive: rng.gen() }).collect();
            terms.push(if rng.gen() { Term::or(lits) } else { Term::xor(lits, rng.gen()) });
            i += w;
        }
        XorCnf::new(n, terms).unwrap()
    }

    #[test]
    fn overlapping_terms_rejected() {
        let e = XorCnf::new(3, vec![Term::or(vec![Literal::pos(0)]), Term::xor(vec![Literal::pos(0)], true)]);
        assert!(e.unwrap_err().to_string().contains("disjoint"));
    }

    #[test]
    fn parity_term_half() {
        let f = XorCnf::new(3, vec![Term::xor(vec![Literal::pos(0), Literal::pos(1), Literal::pos(2)], true)]).unwrap();
        assert_eq!(f.exact_expectation(), ratio(1, 2));
        assert_eq!(brute_expectation(&f), ratio(1, 2));
    }

    #[test]
    fn fully_fixed_parity_resolves() {
        let f = XorCnf::new(2, vec![Term::xor(vec![Literal::pos(0), Literal::pos(1)], true)]).unwrap();
        let mut rho = Restriction::none(2);
        rho.fix(0, FALSE);
        rho.fix(1, FALSE);
        assert!(f.apply_restriction(&rho).is_falsified());
        rho.fix(1, 1);
        assert!(f.apply_restriction(&rho).terms().is_empty());
    }

    proptest! {
        #[test]
        fn product_formula_matches_enumeration(n in 1usize..12, seed in any::<u64>()) {
            let f = random_xorcnf(n, seed);
            prop_assert_eq!(f.exact_expectation(), brute_expectation(&f));
        }

        #[test]
        fn restriction_commutes_with_eval(n in 1usize..10, seed in any::<u64>(), xs in any::<u64>(), fixed in any::<u64>()) {
            let f = random_xorcnf(n, seed);
            let x = SignVector::from_packed(n, xs & ((1 << n) - 1));
            let set = crate::bits::IndexSet::from_mask(fixed & ((1 << n) - 1));
            let rho = Restriction::from_set(&set, &x);
            prop_assert_eq!(f.apply_restriction(&rho).eval(&x), f.eval(&x));
            prop_assert_eq!(f.eval_packed(x.packed()), f.eval(&x));
        }
    }
}
