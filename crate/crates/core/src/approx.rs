//! Multilinear polynomials over `{+-1}^n`, sandwiching approximations and
//! their composition through a multilinear combiner on disjoint blocks.

use std::collections::BTreeMap;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::bits::{IndexSet, SignVector};
use crate::error::{usage, Result};
use crate::models::{Literal, Term, TermKind};
use crate::sympoly::Scalar;

/// Sparse multilinear polynomial under `x_i^2 = 1`. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct MultilinearPoly<T> {
    n: usize,
    terms: BTreeMap<IndexSet, T>,
}

#[derive(Serialize, Deserialize)]
struct JsonTerm {
    indices: IndexSet,
    coeff: f64,
}

impl<T: Scalar> MultilinearPoly<T> {
    pub fn zero(n: usize) -> Self {
        MultilinearPoly { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: T) -> Self {
        Self::monomial(n, IndexSet::empty(), c)
    }

    pub fn monomial(n: usize, set: IndexSet, c: T) -> Self {
        let mut p = Self::zero(n);
        p.add_term(set, c);
        p
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<IndexSet, T> {
        &self.terms
    }

    pub fn add_term(&mut self, set: IndexSet, c: T) {
        debug_assert!(set.iter().all(|i| i < self.n));
        let v = self.terms.remove(&set).map_or(c.clone(), |old| old + c);
        if !v.is_zero() {
            self.terms.insert(set, v);
        }
    }

    pub fn constant_term(&self) -> T {
        self.terms.get(&IndexSet::empty()).cloned().unwrap_or_else(T::zero)
    }

    /// `E[p]` under uniform input.
    pub fn expectation(&self) -> T {
        self.constant_term()
    }

    pub fn l1_norm(&self) -> T {
        self.terms.values().fold(T::zero(), |a, c| a + c.abs())
    }

    pub fn support(&self) -> IndexSet {
        self.terms.keys().fold(IndexSet::empty(), |a, s| a.union(s))
    }

    /// Same polynomial viewed over `n >= self.n` variables.
    pub fn embed(&self, n: usize) -> Self {
        assert!(n >= self.n);
        MultilinearPoly { n, terms: self.terms.clone() }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        same_vars(self, other)?;
        Ok(self.add(other))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        same_vars(self, other)?;
        Ok(self.mul(other))
    }

    /// Panics on a variable-count mismatch; see [`try_add`](Self::try_add).
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "variable-count mismatch");
        let mut out = self.clone();
        for (s, c) in &other.terms {
            out.add_term(s.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &T) -> Self {
        let mut out = Self::zero(self.n);
        for (s, v) in &self.terms {
            out.add_term(s.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-T::one()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "variable-count mismatch");
        let mut out = Self::zero(self.n);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                out.add_term(a.symmetric_difference(b), ca.clone() * cb.clone());
            }
        }
        out
    }

    /// `1 - p`.
    pub fn complement(&self) -> Self {
        Self::constant(self.n, T::one()).sub(self)
    }

    pub fn eval(&self, x: &SignVector) -> T {
        self.terms.iter().fold(T::zero(), |acc, (s, c)| {
            let neg = s.iter().filter(|&i| x.is_false(i)).count() % 2 == 1;
            if neg {
                acc - c.clone()
            } else {
                acc + c.clone()
            }
        })
    }

    /// Values at all `2^n` points, indexed by packed false-positions; `n <= 20`.
    pub fn to_table(&self) -> Vec<T> {
        assert!(self.n <= 20);
        let mut a = vec![T::zero(); 1 << self.n];
        for (s, c) in &self.terms {
            a[s.mask() as usize] = c.clone();
        }
        hadamard(&mut a);
        a
    }

    /// Fourier expansion of a table indexed like [`to_table`](Self::to_table).
    pub fn from_table(n: usize, values: &[T]) -> Self {
        assert_eq!(values.len(), 1 << n);
        let mut a = values.to_vec();
        hadamard(&mut a);
        let scale = T::one() / T::from_u64(1u64 << n).expect("fits");
        let mut p = Self::zero(n);
        for (s, c) in a.into_iter().enumerate() {
            p.add_term(IndexSet::from_mask(s as u64), c * scale.clone());
        }
        p
    }
}

impl MultilinearPoly<f64> {
    pub fn to_json(&self) -> serde_json::Value {
        let v: Vec<JsonTerm> =
            self.terms.iter().map(|(s, c)| JsonTerm { indices: s.clone(), coeff: *c }).collect();
        serde_json::to_value(v).expect("plain data")
    }

    pub fn from_json(n: usize, v: &serde_json::Value) -> Result<Self> {
        let terms: Vec<JsonTerm> = serde_json::from_value(v.clone())?;
        let mut p = Self::zero(n);
        for t in terms {
            if t.indices.iter().any(|i| i >= n) {
                return usage(format!("monomial index out of range in {:?}", t.indices));
            }
            p.add_term(t.indices, t.coeff);
        }
        Ok(p)
    }
}

impl MultilinearPoly<BigRational> {
    pub fn to_f64(&self) -> MultilinearPoly<f64> {
        let mut p = MultilinearPoly::zero(self.n);
        for (s, c) in &self.terms {
            p.add_term(s.clone(), c.to_f64_lossy());
        }
        p
    }
}

fn same_vars<T>(a: &MultilinearPoly<T>, b: &MultilinearPoly<T>) -> Result<()> {
    if a.n != b.n {
        return usage(format!("variable-count mismatch: {} vs {}", a.n, b.n));
    }
    Ok(())
}

fn hadamard<T: Scalar>(a: &mut [T]) {
    let mut len = 1;
    while len < a.len() {
        for block in a.chunks_mut(2 * len) {
            let (x, y) = block.split_at_mut(len);
            for (u, v) in x.iter_mut().zip(y.iter_mut()) {
                let (p, q) = (u.clone(), v.clone());
                *u = p.clone() + q.clone();
                *v = p - q;
            }
        }
        len *= 2;
    }
}

fn half<T: Scalar>() -> T {
    T::one() / T::from_u8(2).expect("fits")
}

/// `(1 -/+ x)/2`: the indicator that a literal is false.
fn literal_false<T: Scalar>(n: usize, l: &Literal) -> MultilinearPoly<T> {
    let mut p = MultilinearPoly::constant(n, half());
    let c: T = if l.positive { -half::<T>() } else { half() };
    p.add_term(IndexSet::new(vec![l.var]), c);
    p
}

/// Exact polynomial of an OR of literals.
pub fn or_poly<T: Scalar>(n: usize, lits: &[Literal]) -> MultilinearPoly<T> {
    lits.iter()
        .fold(MultilinearPoly::constant(n, T::one()), |acc, l| acc.mul(&literal_false(n, l)))
        .complement()
}

/// Exact polynomial of an XOR term: `(1 + (-1)^(parity + #positive) prod x_i) / 2`.
pub fn xor_poly<T: Scalar>(n: usize, lits: &[Literal], parity: bool) -> MultilinearPoly<T> {
    let positives = lits.iter().filter(|l| l.positive).count();
    let sign: T = if (positives + parity as usize) % 2 == 0 { half() } else { -half::<T>() };
    let mut p = MultilinearPoly::constant(n, half());
    p.add_term(lits.iter().map(|l| l.var).collect(), sign);
    p
}

/// Exact polynomial of an AND of parity terms on disjoint variables. Its L1 norm is 1.
pub fn and_of_parities_poly<T: Scalar>(n: usize, terms: &[Term]) -> Result<MultilinearPoly<T>> {
    let mut used = IndexSet::empty();
    let mut p = MultilinearPoly::constant(n, T::one());
    for t in terms {
        if t.kind != TermKind::Xor {
            return usage("and_of_parities_poly takes XOR terms only");
        }
        let vars: IndexSet = t.lits.iter().map(|l| l.var).collect();
        if vars.len() != t.lits.len() || vars.intersects(&used) {
            return usage("parity terms overlap");
        }
        used = used.union(&vars);
        p = p.mul(&xor_poly(n, &t.lits, t.parity));
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SandwichPair<T> {
    pub lower: MultilinearPoly<T>,
    pub upper: MultilinearPoly<T>,
}

impl<T: Scalar> SandwichPair<T> {
    pub fn exact(p: MultilinearPoly<T>) -> Self {
        SandwichPair { lower: p.clone(), upper: p }
    }

    /// `E[upper - lower]`.
    pub fn gap(&self) -> T {
        self.upper.expectation() - self.lower.expectation()
    }

    pub fn l1(&self) -> T {
        let (a, b) = (self.lower.l1_norm(), self.upper.l1_norm());
        if a > b {
            a
        } else {
            b
        }
    }

    pub fn support(&self) -> IndexSet {
        self.lower.support().union(&self.upper.support())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SandwichReport {
    pub valid: bool,
    pub mode: CheckMode,
    pub points: u64,
    pub violations: u64,
    pub gap: f64,
    pub l1_lower: f64,
    pub l1_upper: f64,
    /// `gap + t * epsilon`, when a bias `epsilon` was supplied.
    pub fooling_bound: Option<f64>,
}

pub const EXHAUSTIVE_SANDWICH_VARS: usize = 20;

/// Checks `lower <= target <= upper` pointwise (up to `tol`), exhaustively for
/// `n <= 20`, else on `samples` points drawn from a fixed seed.
pub fn verify_sandwich<T: Scalar>(
    n: usize,
    target: impl Fn(&SignVector) -> T,
    pair: &SandwichPair<T>,
    epsilon: Option<f64>,
    tol: &T,
    samples: u64,
) -> SandwichReport {
    let mut violations = 0u64;
    let mut check = |x: &SignVector, lo: T, hi: T| {
        let v = target(x);
        if lo > v.clone() + tol.clone() || v > hi + tol.clone() {
            violations += 1;
        }
    };
    let (mode, points) = if n <= EXHAUSTIVE_SANDWICH_VARS {
        let lo = pair.lower.to_table();
        let hi = pair.upper.to_table();
        for x in 0..1u64 << n {
            let xv = SignVector::from_words(n, &[x]);
            check(&xv, lo[x as usize].clone(), hi[x as usize].clone());
        }
        (CheckMode::Exhaustive, 1u64 << n)
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5a4d);
        for _ in 0..samples {
            let words: Vec<u64> = (0..n.div_ceil(64)).map(|_| rng.gen()).collect();
            let xv = SignVector::from_words(n, &words);
            check(&xv, pair.lower.eval(&xv), pair.upper.eval(&xv));
        }
        (CheckMode::Sampled, samples)
    };
    let gap = pair.gap().to_f64_lossy();
    let l1_lower = pair.lower.l1_norm().to_f64_lossy();
    let l1_upper = pair.upper.l1_norm().to_f64_lossy();
    SandwichReport {
        valid: violations == 0,
        mode,
        points,
        violations,
        gap,
        l1_lower,
        l1_upper,
        fooling_bound: epsilon.map(|e| gap + l1_lower.max(l1_upper) * e),
    }
}

/// `sum_S H(1_S) prod_{i in S} y_i prod_{j not in S} (1 - y_j)` at real `y`.
pub fn multilinear_extension<T: Scalar>(h: &[T], y: &[T]) -> T {
    let k = y.len();
    assert_eq!(h.len(), 1 << k);
    (0..h.len()).fold(T::zero(), |acc, s| {
        let w = (0..k).fold(T::one(), |a, i| {
            if s >> i & 1 == 1 {
                a * y[i].clone()
            } else {
                a * (T::one() - y[i].clone())
            }
        });
        acc + h[s].clone() * w
    })
}

/// Sandwiching pair for `H(f^1, ..., f^k)` from pairs for each `f^i`.
///
/// `h[s]` is `H` at the indicator of the set `s` (bit `i` for `f^i`). Blocks must
/// be on disjoint variables and every `H` value in `[0, 1]`.
pub fn xor_compose<T: Scalar>(h: &[T], pairs: &[SandwichPair<T>]) -> Result<SandwichPair<T>> {
    let k = pairs.len();
    if h.len() != 1 << k {
        return usage(format!("combiner needs {} values for {k} blocks, got {}", 1 << k, h.len()));
    }
    if h.iter().any(|v| *v < T::zero() || *v > T::one()) {
        return usage("combiner values must lie in [0, 1]");
    }
    let mut used = IndexSet::empty();
    for p in pairs {
        let s = p.support();
        if s.intersects(&used) {
            return usage("blocks share variables");
        }
        used = used.union(&s);
    }
    let n = pairs.iter().map(|p| p.lower.num_vars().max(p.upper.num_vars())).max().unwrap_or(0);
    let pairs: Vec<SandwichPair<T>> = pairs
        .iter()
        .map(|p| SandwichPair { lower: p.lower.embed(n), upper: p.upper.embed(n) })
        .collect();
    let one_minus_lower: Vec<MultilinearPoly<T>> = pairs.iter().map(|p| p.lower.complement()).collect();
    let m_upper: Vec<MultilinearPoly<T>> = (0..1usize << k)
        .map(|s| {
            (0..k).fold(MultilinearPoly::constant(n, T::one()), |acc, i| {
                if s >> i & 1 == 1 {
                    acc.mul(&pairs[i].upper)
                } else {
                    acc.mul(&one_minus_lower[i])
                }
            })
        })
        .collect();
    let total = m_upper.iter().fold(MultilinearPoly::zero(n), |a, m| a.add(m));
    let mut upper = MultilinearPoly::zero(n);
    let mut lower = MultilinearPoly::zero(n);
    for (s, mu) in m_upper.iter().enumerate() {
        if h[s].is_zero() {
            continue;
        }
        // 1 - sum_{T != S} M^T_u
        let ml = MultilinearPoly::constant(n, T::one()).sub(&total.sub(mu));
        upper = upper.add(&mu.scale(&h[s]));
        lower = lower.add(&ml.scale(&h[s]));
    }
    Ok(SandwichPair { lower, upper })
}

/// Indices of component pairs whose expectations leave `[-gap, 1 + gap]`.
pub fn flag_component_ranges<T: Scalar>(pairs: &[SandwichPair<T>]) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let g = p.gap();
            p.upper.expectation() > T::one() + g.clone() || p.lower.expectation() < -g
        })
        .map(|(i, _)| i)
        .collect()
}

/// A composition instance: `[0,1]`-valued block functions, loosened sandwiching
/// pairs for each, and a combiner table.
#[derive(Clone, Debug)]
pub struct ComposeInstance {
    pub n: usize,
    pub h: Vec<BigRational>,
    pub components: Vec<MultilinearPoly<BigRational>>,
    pub pairs: Vec<SandwichPair<BigRational>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComposeCheck {
    pub k: usize,
    pub n: usize,
    pub pointwise: bool,
    pub epsilon: f64,
    pub t: f64,
    pub gap: f64,
    pub gap_bound: f64,
    pub l1: f64,
    pub l1_bound: f64,
    pub ok: bool,
}

/// `f` plus `scale * (1 + sign * chi_T)`, which is `>= f` for `scale >= 0`.
fn shifted(f: &MultilinearPoly<BigRational>, set: IndexSet, negative: bool, scale: &BigRational) -> MultilinearPoly<BigRational> {
    let one = BigRational::from_integer(1.into());
    let mut bump = MultilinearPoly::constant(f.num_vars(), one.clone());
    bump.add_term(set, if negative { -one } else { one });
    f.add(&bump.scale(scale))
}

/// Random instance with `k` blocks of `block` variables each and component gap at most `epsilon`.
pub fn random_compose_instance(rng: &mut impl Rng, k: usize, block: usize, epsilon: &BigRational) -> ComposeInstance {
    let n = k * block;
    let mut components = Vec::with_capacity(k);
    let mut pairs = Vec::with_capacity(k);
    for b in 0..k {
        let vars: Vec<usize> = (b * block..(b + 1) * block).collect();
        let values: Vec<BigRational> =
            (0..1usize << block).map(|_| crate::rational::ratio(rng.gen_range(0..=8), 8)).collect();
        let local = MultilinearPoly::from_table(block, &values);
        let mut f = MultilinearPoly::zero(n);
        for (s, c) in local.terms() {
            f.add_term(s.iter().map(|i| vars[i]).collect(), c.clone());
        }
        let pick = |rng: &mut dyn rand::RngCore| -> IndexSet {
            vars.iter().copied().filter(|_| rng.gen::<bool>()).collect()
        };
        let up = epsilon * crate::rational::ratio(rng.gen_range(0..=4), 8);
        let down = epsilon * crate::rational::ratio(rng.gen_range(0..=4), 8);
        let (su, sd) = (pick(rng), pick(rng));
        let upper = shifted(&f, su, rng.gen(), &up);
        let lower = shifted(&f, sd, rng.gen(), &-down);
        components.push(f);
        pairs.push(SandwichPair { lower, upper });
    }
    let h = (0..1usize << k).map(|_| crate::rational::ratio(rng.gen_range(0..=4), 4)).collect();
    ComposeInstance { n, h, components, pairs }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Rational,
    Float,
}

/// Composes the instance and checks the three conclusions exhaustively (`n <= 20`).
/// Rational mode is exact; float mode allows `1e-9` slack.
pub fn check_compose(inst: &ComposeInstance, mode: Arithmetic) -> Result<ComposeCheck> {
    match mode {
        Arithmetic::Rational => {
            check_generic(inst.n, &inst.h, &inst.components, &inst.pairs, BigRational::from_integer(0.into()))
        }
        Arithmetic::Float => {
            let h: Vec<f64> = inst.h.iter().map(|v| v.to_f64_lossy()).collect();
            let comps: Vec<_> = inst.components.iter().map(|c| c.to_f64()).collect();
            let pairs: Vec<_> = inst
                .pairs
                .iter()
                .map(|p| SandwichPair { lower: p.lower.to_f64(), upper: p.upper.to_f64() })
                .collect();
            check_generic(inst.n, &h, &comps, &pairs, 1e-9)
        }
    }
}

fn max_of<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::zero(), |a, g| if g > a { g } else { a })
}

fn check_generic<T: Scalar>(
    n: usize,
    h: &[T],
    components: &[MultilinearPoly<T>],
    pairs: &[SandwichPair<T>],
    tol: T,
) -> Result<ComposeCheck> {
    let k = pairs.len();
    let out = xor_compose(h, pairs)?;
    let tables: Vec<Vec<T>> = components.iter().map(|c| c.embed(n).to_table()).collect();
    let lo = out.lower.to_table();
    let hi = out.upper.to_table();
    let pointwise = (0..1usize << n).all(|x| {
        let y: Vec<T> = tables.iter().map(|t| t[x].clone()).collect();
        let v = multilinear_extension(h, &y);
        lo[x] <= v.clone() + tol.clone() && v <= hi[x].clone() + tol.clone()
    });
    let eps = max_of(pairs.iter().map(|p| p.gap()));
    let t = max_of(pairs.iter().map(|p| p.l1()));
    let gap = out.gap();
    let l1 = out.l1();
    let pow = |b: u64, e: usize| (0..e).fold(T::one(), |a, _| a * T::from_u64(b).expect("fits"));
    let gap_bound = pow(16, k) * eps.clone();
    let t1 = t.clone() + T::one();
    let l1_bound = (0..k).fold(pow(4, k), |a, _| a * t1.clone());
    let ok = pointwise && gap <= gap_bound.clone() + tol.clone() && l1 <= l1_bound.clone() + tol;
    Ok(ComposeCheck {
        k,
        n,
        pointwise,
        epsilon: eps.to_f64_lossy(),
        t: t.to_f64_lossy(),
        gap: gap.to_f64_lossy(),
        gap_bound: gap_bound.to_f64_lossy(),
        l1: l1.to_f64_lossy(),
        l1_bound: l1_bound.to_f64_lossy(),
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use num_traits::{Signed, Zero};
    use proptest::prelude::*;

    type Q = BigRational;

    #[test]
    fn single_parity() {
        let p = and_of_parities_poly::<Q>(2, &[Term::xor(vec![Literal::pos(0), Literal::pos(1)], true)]).unwrap();
        let mut want = MultilinearPoly::constant(2, ratio(1, 2));
        want.add_term(IndexSet::new(vec![0, 1]), ratio(-1, 2));
        assert_eq!(p, want);
    }

    #[test]
    fn empty_and_is_one() {
        let p = and_of_parities_poly::<Q>(3, &[]).unwrap();
        assert_eq!(p, MultilinearPoly::constant(3, ratio(1, 1)));
    }

    #[test]
    fn overlapping_parities_refused() {
        let t = Term::xor(vec![Literal::pos(0), Literal::pos(1)], true);
        let u = Term::xor(vec![Literal::pos(1)], true);
        assert!(and_of_parities_poly::<Q>(2, &[t, u]).is_err());
    }

    #[test]
    fn poly_json_round_trip() {
        let p = or_poly::<f64>(3, &[Literal::pos(0), Literal::neg(2)]);
        let back = MultilinearPoly::from_json(3, &p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn combiner_out_of_range_refused() {
        let p = SandwichPair::exact(or_poly::<Q>(2, &[Literal::pos(0)]));
        assert!(xor_compose(&[ratio(0, 1), ratio(3, 2)], &[p]).is_err());
        let a = SandwichPair::exact(or_poly::<Q>(2, &[Literal::pos(0)]));
        let b = SandwichPair::exact(or_poly::<Q>(2, &[Literal::pos(0), Literal::pos(1)]));
        assert!(xor_compose(&vec![ratio(0, 1); 4], &[a, b]).is_err());
    }

    #[test]
    fn exact_components_compose_exactly() {
        let a = SandwichPair::exact(or_poly::<Q>(4, &[Literal::pos(0), Literal::neg(1)]));
        let b = SandwichPair::exact(xor_poly::<Q>(4, &[Literal::pos(2), Literal::pos(3)], true));
        let h = vec![ratio(0, 1), ratio(1, 1), ratio(1, 1), ratio(0, 1)];
        let c = xor_compose(&h, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.lower, c.upper);
        for x in 0..16u64 {
            let xv = SignVector::from_packed(4, x);
            let want = multilinear_extension(&h, &[a.lower.eval(&xv), b.lower.eval(&xv)]);
            assert_eq!(c.upper.eval(&xv), want);
        }
    }

    #[test]
    fn involution_and_l1() {
        let x1 = MultilinearPoly::monomial(2, IndexSet::new(vec![0]), ratio(1, 1));
        assert_eq!(x1.mul(&x1), MultilinearPoly::constant(2, ratio(1, 1)));
        let mut p = MultilinearPoly::constant(2, ratio(1, 2));
        p.add_term(IndexSet::new(vec![0, 1]), ratio(-1, 2));
        assert_eq!(p.l1_norm(), ratio(1, 1));
        assert!(MultilinearPoly::<Q>::zero(2).try_mul(&MultilinearPoly::zero(3)).is_err());
    }

    #[test]
    fn identity_combiner_keeps_pair() {
        let f = or_poly::<Q>(3, &[Literal::pos(0), Literal::neg(2)]);
        let mut up = f.clone();
        up.add_term(IndexSet::empty(), ratio(1, 10));
        let pair = SandwichPair { lower: f.clone(), upper: up };
        let out = xor_compose(&[ratio(0, 1), ratio(1, 1)], &[pair.clone()]).unwrap();
        assert_eq!(out, pair);
    }

    #[test]
    fn loosened_clauses_under_and() {
        // Two 3-variable clauses, each loosened by 0.01 in total.
        let eps = ratio(1, 100);
        let mk = |base: usize| {
            let lits: Vec<Literal> = (base..base + 3).map(Literal::pos).collect();
            let f = or_poly::<Q>(6, &lits);
            let up = shifted(&f, IndexSet::new(vec![base]), false, &(eps.clone() * ratio(1, 2)));
            let lo = shifted(&f, IndexSet::new(vec![base + 1, base + 2]), true, &(-eps.clone() * ratio(1, 2)));
            (f, SandwichPair { lower: lo, upper: up })
        };
        let (fa, pa) = mk(0);
        let (fb, pb) = mk(3);
        let inst = ComposeInstance {
            n: 6,
            h: vec![ratio(0, 1), ratio(0, 1), ratio(0, 1), ratio(1, 1)],
            components: vec![fa, fb],
            pairs: vec![pa, pb],
        };
        let c = check_compose(&inst, Arithmetic::Rational).unwrap();
        assert!(c.ok, "{c:?}");
        assert!(c.pointwise);
        assert!(c.gap <= 256.0 * 0.01);
        assert!(check_compose(&inst, Arithmetic::Float).unwrap().ok);
    }

    #[test]
    fn verify_exact_and_vacuous() {
        let f = or_poly::<Q>(3, &[Literal::pos(0), Literal::pos(1)]);
        let target = |x: &SignVector| if x.is_true(0) || x.is_true(1) { ratio(1, 1) } else { ratio(0, 1) };
        let r = verify_sandwich(3, target, &SandwichPair::exact(f.clone()), Some(0.125), &ratio(0, 1), 0);
        assert!(r.valid);
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.fooling_bound, Some(f.l1_norm().to_f64_lossy() * 0.125));
        let vac = SandwichPair { lower: MultilinearPoly::zero(3), upper: MultilinearPoly::constant(3, ratio(1, 1)) };
        let r = verify_sandwich(3, target, &vac, None, &ratio(0, 1), 0);
        assert!(r.valid);
        assert_eq!(r.gap, 1.0);
        let bad = SandwichPair { lower: MultilinearPoly::constant(3, ratio(1, 1)), upper: MultilinearPoly::constant(3, ratio(1, 1)) };
        assert!(!verify_sandwich(3, target, &bad, None, &ratio(0, 1), 0).valid);
    }

    #[test]
    fn range_flags() {
        let ok = SandwichPair::exact(MultilinearPoly::constant(1, ratio(1, 2)));
        let bad = SandwichPair::exact(MultilinearPoly::constant(1, ratio(3, 2)));
        assert_eq!(flag_component_ranges(&[ok, bad]), vec![1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn compose_conclusions_hold(seed in any::<u64>(), k in 1usize..4, block in 1usize..4) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let inst = random_compose_instance(&mut rng, k, block, &ratio(1, 50));
            let c = check_compose(&inst, Arithmetic::Rational).unwrap();
            prop_assert!(c.ok, "{:?}", c);
            prop_assert!(flag_component_ranges(&inst.pairs).is_empty());
        }

        #[test]
        fn l1_submultiplicative(a in proptest::collection::vec((0u64..64, -4i64..5), 0..6),
                                b in proptest::collection::vec((0u64..64, -4i64..5), 0..6)) {
            let mk = |v: &[(u64, i64)]| {
                let mut p = MultilinearPoly::<Q>::zero(6);
                for &(m, c) in v { p.add_term(IndexSet::from_mask(m), ratio(c, 3)); }
                p
            };
            let (p, q) = (mk(&a), mk(&b));
            prop_assert!(p.mul(&q).l1_norm() <= p.l1_norm() * q.l1_norm());
            prop_assert!(p.mul(&q).terms().values().all(|c| !c.is_zero()));
        }

        #[test]
        fn biased_space_transfer(seed in any::<u64>(), kdeg in 3u32..7) {
            // |E_D[f] - E[f]| <= gap + L1 * bias for a loosened single block.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let inst = random_compose_instance(&mut rng, 1, 4, &ratio(1, 10));
            let f = inst.components[0].clone();
            let pair = &inst.pairs[0];
            let space = crate::smallbias::BiasedSpaceSpec::with_degree(4, kdeg).unwrap();
            let bias = crate::smallbias::exact_bias(&space).unwrap().max_bias_exact;
            let table = f.to_table();
            let pts = space.packed_table().unwrap();
            let ed = pts.iter().fold(ratio(0, 1), |a, &x| a + table[x as usize].clone())
                / Q::from_integer((pts.len() as i64).into());
            let diff = (ed - f.expectation()).abs();
            prop_assert!(diff <= pair.gap() + pair.l1() * bias);
        }
    }

    proptest! {
        #[test]
        fn table_round_trip(vals in proptest::collection::vec(-5i64..5, 8)) {
            let t: Vec<Q> = vals.iter().map(|&v| ratio(v, 3)).collect();
            let p = MultilinearPoly::from_table(3, &t);
            prop_assert_eq!(p.to_table(), t.clone());
            for x in 0..8u64 {
                prop_assert_eq!(p.eval(&SignVector::from_packed(3, x)), t[x as usize].clone());
            }
        }

        #[test]
        fn clause_poly_is_indicator(signs in proptest::collection::vec(any::<bool>(), 1..5), x in any::<u64>()) {
            let n = signs.len();
            let lits: Vec<Literal> = signs.iter().enumerate().map(|(i, &s)| Literal { var: i, positive: s }).collect();
            let xv = SignVector::from_packed(n, x & ((1 << n) - 1));
            let want = if lits.iter().any(|l| l.eval(&xv)) { 1.0 } else { 0.0 };
            prop_assert_eq!(or_poly::<f64>(n, &lits).eval(&xv), want);
        }

        #[test]
        fn parity_product_l1_at_most_one(sizes in proptest::collection::vec(1usize..4, 0..4), bits in any::<u64>()) {
            let mut terms = vec![];
            let mut at = 0;
            for (j, s) in sizes.iter().enumerate() {
                let lits = (at..at + s).map(|v| Literal { var: v, positive: bits >> v & 1 == 1 }).collect();
                terms.push(Term::xor(lits, bits >> (40 + j) & 1 == 1));
                at += s;
            }
            let n = at.max(1);
            let p = and_of_parities_poly::<Q>(n, &terms).unwrap();
            prop_assert!(p.l1_norm() <= ratio(1, 1));
            for x in 0..1u64 << n {
                let xv = SignVector::from_packed(n, x);
                let want = if terms.iter().all(|t| t.eval(&xv)) { 1 } else { 0 };
                prop_assert_eq!(p.eval(&xv), ratio(want, 1));
            }
        }
    }
}
