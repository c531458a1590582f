//! Boolean function classes: read-once CNFs, CNFs with parity terms,
//! combinatorial rectangles and read-once branching programs.
//!
//! Each class has exact analytics (in rationals) alongside evaluation, a
//! line-oriented text format and a JSON mirror.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::bits::{IndexSet, Sign, SignVector, FALSE, TRUE};
use crate::error::{usage, Error, Result};

mod rcnf;
mod rect;
mod robp;
mod text;
mod xorcnf;

pub use rcnf::ReadOnceCnf;
pub use rect::{block_index, eval_clauses, CombRect, TruthTable};
pub use robp::{random_robp, Robp, ACC, REJ};
pub use text::{parse_model, Model};
pub use xorcnf::{Term, TermKind, XorCnf};

pub trait BooleanFunction: Sync {
    fn num_vars(&self) -> usize;

    fn eval(&self, x: &SignVector) -> bool;

    /// Evaluation on a packed input whose set bits are the false positions.
    /// Only meaningful when `num_vars() <= 64`.
    fn eval_packed(&self, neg: u64) -> bool {
        self.eval(&SignVector::from_packed(self.num_vars(), neg))
    }

    /// `Pr[f = 1]` under uniform input.
    fn exact_expectation(&self) -> BigRational;
}

/// A variable with a polarity. Serialized as a signed 1-based integer.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, positive: true }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, positive: false }
    }

    pub fn negate(self) -> Self {
        Literal { var: self.var, positive: !self.positive }
    }

    pub fn eval(&self, x: &SignVector) -> bool {
        x.is_true(self.var) == self.positive
    }

    /// Truth value given the sign of its variable.
    pub fn value(&self, s: Sign) -> bool {
        (s == TRUE) == self.positive
    }

    /// The sign of the variable that makes this literal true.
    pub fn satisfying_sign(&self) -> Sign {
        if self.positive {
            TRUE
        } else {
            FALSE
        }
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var as i64 + 1;
        if self.positive {
            v
        } else {
            -v
        }
    }

    pub fn from_dimacs(v: i64) -> Result<Self> {
        if v == 0 {
            return usage("literal 0 is a terminator, not a variable");
        }
        Ok(Literal { var: v.unsigned_abs() as usize - 1, positive: v > 0 })
    }
}

impl From<Literal> for i64 {
    fn from(l: Literal) -> i64 {
        l.to_dimacs()
    }
}

impl TryFrom<i64> for Literal {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        Literal::from_dimacs(v)
    }
}

/// Checks literals are in range and no variable repeats. Returns the variable set.
pub(crate) fn check_read_once<'a>(
    n: usize,
    groups: impl IntoIterator<Item = &'a [Literal]>,
) -> std::result::Result<IndexSet, String> {
    let mut seen = vec![false; n];
    for (g, lits) in groups.into_iter().enumerate() {
        if lits.is_empty() {
            return Err(format!("term {} is empty", g + 1));
        }
        for l in lits {
            if l.var >= n {
                return Err(format!("variable {} out of range 1..={n}", l.var + 1));
            }
            if seen[l.var] {
                return Err(format!("variable {} appears twice (formula must be read-once)", l.var + 1));
            }
            seen[l.var] = true;
        }
    }
    Ok((0..n).filter(|&i| seen[i]).collect())
}

/// A partial assignment: `values[i]` is the fixed sign of variable `i`, if any.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restriction {
    values: Vec<Option<Sign>>,
}

impl Restriction {
    pub fn none(n: usize) -> Self {
        Restriction { values: vec![None; n] }
    }

    /// Fixes the variables in `set` to their signs in `x`.
    pub fn from_set(set: &IndexSet, x: &SignVector) -> Self {
        let mut r = Restriction::none(x.len());
        for i in set.iter() {
            r.values[i] = Some(x.get(i));
        }
        r
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fix(&mut self, i: usize, s: Sign) {
        self.values[i] = Some(s);
    }

    pub fn value(&self, i: usize) -> Option<Sign> {
        self.values[i]
    }

    pub fn fixed(&self) -> IndexSet {
        (0..self.values.len()).filter(|&i| self.values[i].is_some()).collect()
    }

    /// Fixed positions from `self`, the rest from `y`.
    pub fn fill(&self, y: &SignVector) -> SignVector {
        let mut out = y.clone();
        for (i, v) in self.values.iter().enumerate() {
            if let Some(s) = v {
                out.set(i, *s);
            }
        }
        out
    }
}

/// Tribes: `m` disjoint ORs of `w` positive literals over `n = w*m` variables.
pub fn tribes(w: usize, m: usize) -> ReadOnceCnf {
    let clauses = (0..m).map(|i| (0..w).map(|j| Literal::pos(i * w + j)).collect()).collect();
    ReadOnceCnf::new(w * m, clauses).expect("tribes is read-once")
}

/// Exact expectation by listing all `2^n` inputs. Test oracle; `n <= 24`.
pub fn brute_expectation(f: &dyn BooleanFunction) -> BigRational {
    let n = f.num_vars();
    assert!(n <= 24);
    let count = (0..1u64 << n).filter(|&x| f.eval_packed(x)).count();
    crate::rational::int(count as u128) * crate::rational::inv_pow2(n)
}
