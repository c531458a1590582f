use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use super::{BooleanFunction, Literal};
use crate::bits::SignVector;
use crate::error::{usage, Error, Result};

pub const MAX_RECT_WIDTH: u32 = 24;

/// Truth table on `{+-1}^w`. Entry `a` is indexed by the block whose sign `j` is
/// `-1` exactly when bit `j` of `a` is set.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "TableJson", into = "TableJson")]
pub struct TruthTable {
    w: u32,
    bits: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    w: u32,
    hex: String,
}

impl TryFrom<TableJson> for TruthTable {
    type Error = Error;
    fn try_from(j: TableJson) -> Result<Self> {
        TruthTable::from_hex(j.w, &j.hex)
    }
}

impl From<TruthTable> for TableJson {
    fn from(t: TruthTable) -> Self {
        TableJson { w: t.w, hex: t.to_hex() }
    }
}

impl TruthTable {
    pub fn empty(w: u32) -> Self {
        assert!(w <= MAX_RECT_WIDTH);
        TruthTable { w, bits: vec![0; (1usize << w).div_ceil(64)] }
    }

    pub fn from_fn(w: u32, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut t = Self::empty(w);
        for a in 0..1usize << w {
            t.set(a, f(a));
        }
        t
    }

    pub fn width(&self) -> u32 {
        self.w
    }

    pub fn size(&self) -> usize {
        1 << self.w
    }

    pub fn get(&self, a: usize) -> bool {
        (self.bits[a / 64] >> (a % 64)) & 1 == 1
    }

    pub fn set(&mut self, a: usize, v: bool) {
        if v {
            self.bits[a / 64] |= 1 << (a % 64);
        } else {
            self.bits[a / 64] &= !(1 << (a % 64));
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|b| b.count_ones() as u64).sum()
    }

    fn hex_digits(&self) -> usize {
        (self.size() / 4).max(1)
    }

    /// The table as the integer `sum_a t[a] 2^a`, in hex, most significant digit first.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.hex_digits());
        for d in (0..self.hex_digits()).rev() {
            let mut nib = 0u32;
            for b in 0..4 {
                let a = d * 4 + b;
                if a < self.size() && self.get(a) {
                    nib |= 1 << b;
                }
            }
            s.push(char::from_digit(nib, 16).unwrap());
        }
        s
    }

    pub fn from_hex(w: u32, hex: &str) -> Result<Self> {
        if w > MAX_RECT_WIDTH {
            return usage(format!("rectangle width {w} above {MAX_RECT_WIDTH}"));
        }
        let mut t = Self::empty(w);
        let want = t.hex_digits();
        if hex.len() != want {
            return usage(format!("table for width {w} needs {want} hex digits, got {}", hex.len()));
        }
        for (i, c) in hex.chars().enumerate() {
            let nib = c.to_digit(16).ok_or_else(|| Error::Usage(format!("bad hex digit {c:?}")))?;
            let d = want - 1 - i;
            for b in 0..4 {
                if nib >> b & 1 == 1 {
                    let a = d * 4 + b;
                    if a >= t.size() {
                        return usage(format!("table for width {w} has bits past entry {}", t.size()));
                    }
                    t.set(a, true);
                }
            }
        }
        Ok(t)
    }
}

/// `f(x) = AND_i f_i(x_i)` with `m` blocks of `w` signs, block `i` occupying
/// positions `i*w .. (i+1)*w`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RectJson", into = "RectJson")]
pub struct CombRect {
    m: usize,
    w: u32,
    tables: Vec<TruthTable>,
}

#[derive(Serialize, Deserialize)]
struct RectJson {
    m: usize,
    w: u32,
    tables: Vec<String>,
}

impl TryFrom<RectJson> for CombRect {
    type Error = Error;
    fn try_from(j: RectJson) -> Result<Self> {
        let tables = j.tables.iter().map(|h| TruthTable::from_hex(j.w, h)).collect::<Result<Vec<_>>>()?;
        CombRect::new(j.m, j.w, tables)
    }
}

impl From<CombRect> for RectJson {
    fn from(r: CombRect) -> Self {
        RectJson { m: r.m, w: r.w, tables: r.tables.iter().map(|t| t.to_hex()).collect() }
    }
}

pub fn block_index(x: &SignVector, start: usize, w: u32) -> usize {
    (0..w as usize).filter(|&j| x.is_false(start + j)).fold(0, |a, j| a | (1 << j))
}

impl CombRect {
    pub fn new(m: usize, w: u32, tables: Vec<TruthTable>) -> Result<Self> {
        if tables.len() != m {
            return usage(format!("rectangle declares {m} blocks but has {} tables", tables.len()));
        }
        if let Some(t) = tables.iter().find(|t| t.width() != w) {
            return usage(format!("table of width {} in a width-{w} rectangle", t.width()));
        }
        Ok(CombRect { m, w, tables })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn w(&self) -> u32 {
        self.w
    }

    pub fn tables(&self) -> &[TruthTable] {
        &self.tables
    }

    /// Evaluation on `m` block indices.
    pub fn eval_blocks(&self, blocks: &[usize]) -> bool {
        self.tables.iter().zip(blocks).all(|(t, &a)| t.get(a))
    }

    /// `Pr[f_i = 1]` for each block.
    pub fn block_probs(&self) -> Vec<BigRational> {
        self.tables
            .iter()
            .map(|t| BigRational::new(BigInt::from(t.count_ones()), BigInt::from(t.size())))
            .collect()
    }

    /// One clause per rejected block value: the same function as a (non read-once) CNF.
    pub fn reject_clauses(&self) -> Vec<Vec<Literal>> {
        let mut out = Vec::new();
        for (i, t) in self.tables.iter().enumerate() {
            for a in 0..t.size() {
                if !t.get(a) {
                    let base = i * self.w as usize;
                    out.push(
                        (0..self.w as usize)
                            .map(|j| Literal { var: base + j, positive: a >> j & 1 == 1 })
                            .collect(),
                    );
                }
            }
        }
        out
    }
}

impl BooleanFunction for CombRect {
    fn num_vars(&self) -> usize {
        self.m * self.w as usize
    }

    fn eval(&self, x: &SignVector) -> bool {
        (0..self.m).all(|i| self.tables[i].get(block_index(x, i * self.w as usize, self.w)))
    }

    fn eval_packed(&self, neg: u64) -> bool {
        let w = self.w as usize;
        let mask = (1u64 << w) - 1;
        (0..self.m).all(|i| self.tables[i].get(((neg >> (i * w)) & mask) as usize))
    }

    fn exact_expectation(&self) -> BigRational {
        self.block_probs().into_iter().fold(BigRational::one(), |a, p| a * p)
    }
}

/// Evaluates an arbitrary CNF given as clause lists.
pub fn eval_clauses(clauses: &[Vec<Literal>], x: &SignVector) -> bool {
    clauses.iter().all(|c| c.iter().any(|l| l.eval(x)))
}
