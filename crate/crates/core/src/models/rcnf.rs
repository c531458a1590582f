use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::{check_read_once, BooleanFunction, Literal, Restriction};
use crate::bits::SignVector;
use crate::error::{Error, Result};
use crate::rational::inv_pow2;

/// Read-once CNF over `n` variables. No clauses means constant 1; the falsified
/// formula is a separate value, not an empty clause.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RcnfJson", into = "RcnfJson")]
pub struct ReadOnceCnf {
    n: usize,
    clauses: Vec<Vec<Literal>>,
    falsified: bool,
    masks: Vec<(u64, u64)>,
}

#[derive(Serialize, Deserialize)]
struct RcnfJson {
    n: usize,
    #[serde(default)]
    clauses: Vec<Vec<Literal>>,
    #[serde(default, rename = "false", skip_serializing_if = "std::ops::Not::not")]
    falsified: bool,
}

impl TryFrom<RcnfJson> for ReadOnceCnf {
    type Error = Error;
    fn try_from(j: RcnfJson) -> Result<Self> {
        if j.falsified {
            return Ok(ReadOnceCnf::falsified(j.n));
        }
        ReadOnceCnf::new(j.n, j.clauses)
    }
}

impl From<ReadOnceCnf> for RcnfJson {
    fn from(f: ReadOnceCnf) -> Self {
        RcnfJson { n: f.n, clauses: f.clauses, falsified: f.falsified }
    }
}

pub(crate) fn literal_masks(n: usize, lits: &[Literal]) -> (u64, u64) {
    if n > 64 {
        return (0, 0);
    }
    let mut pos = 0u64;
    let mut neg = 0u64;
    for l in lits {
        if l.positive {
            pos |= 1 << l.var;
        } else {
            neg |= 1 << l.var;
        }
    }
    (pos, neg)
}

impl ReadOnceCnf {
    pub fn new(n: usize, clauses: Vec<Vec<Literal>>) -> Result<Self> {
        check_read_once(n, clauses.iter().map(|c| c.as_slice())).map_err(Error::Usage)?;
        let masks = clauses.iter().map(|c| literal_masks(n, c)).collect();
        Ok(ReadOnceCnf { n, clauses, falsified: false, masks })
    }

    pub fn falsified(n: usize) -> Self {
        ReadOnceCnf { n, clauses: vec![], falsified: true, masks: vec![] }
    }

    pub fn is_falsified(&self) -> bool {
        self.falsified
    }

    pub fn clauses(&self) -> &[Vec<Literal>] {
        &self.clauses
    }

    pub fn widths(&self) -> Vec<usize> {
        self.clauses.iter().map(|c| c.len()).collect()
    }

    /// Drops satisfied clauses and fixed-false literals; a clause losing all
    /// literals falsifies the formula.
    pub fn apply_restriction(&self, rho: &Restriction) -> ReadOnceCnf {
        if self.falsified {
            return self.clone();
        }
        let mut out = Vec::new();
        for c in &self.clauses {
            let mut kept = Vec::new();
            let mut sat = false;
            for l in c {
                match rho.value(l.var) {
                    Some(s) if l.value(s) => sat = true,
                    Some(_) => {}
                    None => kept.push(*l),
                }
            }
            if sat {
                continue;
            }
            if kept.is_empty() {
                return ReadOnceCnf::falsified(self.n);
            }
            out.push(kept);
        }
        ReadOnceCnf::new(self.n, out).expect("restriction keeps the formula read-once")
    }

    pub fn expectation_f64(&self) -> f64 {
        if self.falsified {
            return 0.0;
        }
        self.clauses.iter().map(|c| 1.0 - (-(c.len() as f64)).exp2()).product()
    }
}

impl BooleanFunction for ReadOnceCnf {
    fn num_vars(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &SignVector) -> bool {
        !self.falsified && self.clauses.iter().all(|c| c.iter().any(|l| l.eval(x)))
    }

    fn eval_packed(&self, neg: u64) -> bool {
        debug_assert!(self.n <= 64);
        !self.falsified && self.masks.iter().all(|&(p, q)| (!neg & p) | (neg & q) != 0)
    }

    fn exact_expectation(&self) -> BigRational {
        if self.falsified {
            return BigRational::zero();
        }
        self.clauses
            .iter()
            .fold(BigRational::one(), |acc, c| acc * (BigRational::one() - inv_pow2(c.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{FALSE, TRUE};
    use crate::models::brute_expectation;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn random_rcnf(n: usize, seed: u64) -> ReadOnceCnf {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut vars: Vec<usize> = (0..n).collect();
        vars.shuffle(&mut rng);
        let used = rng.gen_range(0..=n);
        let mut clauses = vec![];
        let mut i = 0;
        while i < used {
            let w = rng.gen_range(1..=4).min(used - i);
            clauses.push(vars[i..i + w].iter().map(|&v| Literal { var: v, positive: rng.gen() }).collect());
            i += w;
        }
        ReadOnceCnf::new(n, clauses).unwrap()
    }

    #[test]
    fn rejects_repeated_variable() {
        let err = ReadOnceCnf::new(3, vec![vec![Literal::pos(0)], vec![Literal::neg(0)]]).unwrap_err();
        assert!(err.to_string().contains("read-once"));
    }

    #[test]
    fn empty_formula_is_true_and_falsified_is_false() {
        let t = ReadOnceCnf::new(4, vec![]).unwrap();
        assert!(t.exact_expectation().is_one());
        let f = ReadOnceCnf::falsified(4);
        assert!(f.exact_expectation().is_zero());
        assert!(!f.eval(&SignVector::all_true(4)));
    }

    #[test]
    fn restriction_falsifies_clause() {
        let f = ReadOnceCnf::new(2, vec![vec![Literal::pos(0), Literal::neg(1)]]).unwrap();
        let mut rho = Restriction::none(2);
        rho.fix(0, FALSE);
        rho.fix(1, TRUE);
        assert!(f.apply_restriction(&rho).is_falsified());
    }

    proptest! {
        #[test]
        fn product_formula_matches_enumeration(n in 1usize..12, seed in any::<u64>()) {
            let f = random_rcnf(n, seed);
            prop_assert_eq!(f.exact_expectation(), brute_expectation(&f));
        }

        #[test]
        fn restriction_commutes_with_eval(n in 1usize..10, seed in any::<u64>(), xs in any::<u64>(), fixed in any::<u64>()) {
            let f = random_rcnf(n, seed);
            let x = SignVector::from_packed(n, xs & ((1 << n) - 1));
            let set = crate::bits::IndexSet::from_mask(fixed & ((1 << n) - 1));
            let rho = Restriction::from_set(&set, &x);
            prop_assert_eq!(f.apply_restriction(&rho).eval(&x), f.eval(&x));
            prop_assert_eq!(f.eval_packed(x.packed()), f.eval(&x));
        }
    }
}
