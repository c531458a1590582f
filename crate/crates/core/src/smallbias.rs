//! Small-bias sample spaces from the powering construction and subset samplers built on them.
//!
//! A seed is a pair `(r, s)` of field elements, `r` in the low `k` seed bits and
//! `s` in the next `k`. Output bit `i` (for `i = 0..n`) is `<r, s^i>`, the GF(2)
//! inner product of coefficient vectors, so bit `0` is the low bit of `r`. The bit
//! `0` becomes sign `+1` and `1` becomes `-1`.
//!
//! For a nonempty set `S` the character `prod_{i in S} x_i` has expectation
//! `Pr_s[sum_{i in S} s^i = 0]`, at most `(n-1)/2^k` since that polynomial has
//! degree at most `n-1`. [`BiasedSpaceSpec::new`] picks
//! `k = ceil(log2(n/eps)) + 1`, which puts the bound below `eps`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::bits::{IndexSet, Seed, SignVector};
use crate::error::{limit, usage, Result};
use crate::gf2k::{Gf2k, MAX_DEGREE};

pub const EXACT_MAX_N: usize = 20;
pub const EXACT_MAX_SEED_BITS: usize = 24;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    #[default]
    Powering,
    /// Seed copied to the output; bias zero.
    Uniform,
}

fn is_powering(k: &SpaceKind) -> bool {
    *k == SpaceKind::Powering
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BiasedSpaceSpec {
    pub n: usize,
    pub epsilon: f64,
    pub field_degree: u32,
    #[serde(default, skip_serializing_if = "is_powering")]
    pub kind: SpaceKind,
}

/// Smallest admissible field degree for `n` outputs at bias `eps`.
pub fn field_degree_for(n: usize, eps: f64) -> Result<u32> {
    if n == 0 {
        return usage("biased space needs n >= 1");
    }
    if !(eps > 0.0) || eps.is_nan() {
        return usage(format!("bias must be positive, got {eps}"));
    }
    let k = ((n as f64 / eps).log2().ceil() as i64 + 1).max(1);
    if k > MAX_DEGREE as i64 {
        return limit(format!("bias {eps:e} at n = {n} needs field degree {k} > {MAX_DEGREE}"));
    }
    Ok(k as u32)
}

impl BiasedSpaceSpec {
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        let field_degree = field_degree_for(n, epsilon)?;
        Ok(BiasedSpaceSpec { n, epsilon, field_degree, kind: SpaceKind::Powering })
    }

    /// Fixed field degree; `epsilon` is set to the guaranteed bound `(n-1)/2^k`.
    pub fn with_degree(n: usize, field_degree: u32) -> Result<Self> {
        if n == 0 {
            return usage("biased space needs n >= 1");
        }
        Gf2k::new(field_degree)?;
        let mut s = BiasedSpaceSpec { n, epsilon: 0.0, field_degree, kind: SpaceKind::Powering };
        s.epsilon = s.bias_bound();
        Ok(s)
    }

    pub fn uniform(n: usize) -> Self {
        BiasedSpaceSpec { n, epsilon: 0.0, field_degree: 0, kind: SpaceKind::Uniform }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return usage("biased space needs n >= 1");
        }
        if self.kind == SpaceKind::Uniform {
            return Ok(());
        }
        Gf2k::new(self.field_degree)?;
        if self.bias_bound() > self.epsilon * (1.0 + 1e-12) {
            return usage(format!(
                "field degree {} only guarantees bias {:e} > epsilon {:e}",
                self.field_degree,
                self.bias_bound(),
                self.epsilon
            ));
        }
        Ok(())
    }

    pub fn seed_bits(&self) -> usize {
        match self.kind {
            SpaceKind::Powering => 2 * self.field_degree as usize,
            SpaceKind::Uniform => self.n,
        }
    }

    /// `(n-1)/2^k`, or zero for the uniform space.
    pub fn bias_bound(&self) -> f64 {
        match self.kind {
            SpaceKind::Powering => (self.n as f64 - 1.0) / (self.field_degree as f64).exp2(),
            SpaceKind::Uniform => 0.0,
        }
    }

    pub fn bias_bound_exact(&self) -> BigRational {
        match self.kind {
            SpaceKind::Powering => BigRational::new(
                BigInt::from(self.n - 1),
                BigInt::one() << self.field_degree as usize,
            ),
            SpaceKind::Uniform => BigRational::zero(),
        }
    }

    fn words(&self) -> usize {
        self.n.div_ceil(64)
    }

    pub fn generate(&self, seed: &Seed) -> Result<SignVector> {
        if seed.len() != self.seed_bits() {
            return usage(format!("seed has {} bits, space needs {}", seed.len(), self.seed_bits()));
        }
        Ok(match self.kind {
            SpaceKind::Uniform => {
                let bits: Vec<i8> = (0..self.n).map(|i| if seed.bit(i) { -1 } else { 1 }).collect();
                SignVector::from_signs(&bits)
            }
            SpaceKind::Powering => {
                let k = self.field_degree as usize;
                let (r, s) = (seed.read_u64(0, k), seed.read_u64(k, k));
                SignVector::from_words(self.n, &self.output_words(r, s))
            }
        })
    }

    /// Raw output bits for the seed `(r, s)`, low word first.
    pub fn output_words(&self, r: u64, s: u64) -> Vec<u64> {
        let f = Gf2k::new(self.field_degree).expect("validated degree");
        let mut out = vec![0u64; self.words()];
        let mut p = 1u64;
        for i in 0..self.n {
            if (r & p).count_ones() & 1 == 1 {
                out[i / 64] |= 1 << (i % 64);
            }
            p = f.mul(p, s);
        }
        out
    }

    /// Output bit `i` alone, via square-and-multiply.
    pub fn output_bit(&self, r: u64, s: u64, i: u64) -> bool {
        let f = Gf2k::new(self.field_degree).expect("validated degree");
        (r & f.pow(s, i)).count_ones() & 1 == 1
    }

    /// Calls `visit(r, words)` for every `r`, with `s` fixed. Seed index is `r | s << k`.
    pub fn visit_outputs_for_s(&self, s: u64, mut visit: impl FnMut(u64, &[u64])) {
        let k = self.field_degree;
        let f = Gf2k::new(k).expect("validated degree");
        let pows = f.powers(s, self.n);
        let nw = self.words();
        // basis[j] is the output for r = e_j
        let mut basis = vec![0u64; k as usize * nw];
        for (i, &p) in pows.iter().enumerate() {
            let mut bits = p;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                basis[j * nw + i / 64] |= 1 << (i % 64);
                bits &= bits - 1;
            }
        }
        let mut cur = vec![0u64; nw];
        let mut r = 0u64;
        visit(0, &cur);
        let count = 1u64 << k;
        for g in 1..count {
            let j = g.trailing_zeros() as usize;
            r ^= 1 << j;
            for (c, b) in cur.iter_mut().zip(&basis[j * nw..(j + 1) * nw]) {
                *c ^= b;
            }
            visit(r, &cur);
        }
    }

    /// Calls `visit(seed_index, words)` once per seed.
    pub fn visit_outputs(&self, mut visit: impl FnMut(u64, &[u64])) {
        match self.kind {
            SpaceKind::Uniform => {
                assert!(self.n <= 63);
                for x in 0..(1u64 << self.n) {
                    visit(x, &[x]);
                }
            }
            SpaceKind::Powering => {
                let k = self.field_degree;
                for s in 0..(1u64 << k) {
                    self.visit_outputs_for_s(s, |r, w| visit(r | (s << k), w));
                }
            }
        }
    }

    /// Packed output for every seed, indexed by seed index; `n <= 64`.
    pub fn packed_table(&self) -> Result<Vec<u64>> {
        if self.n > 64 {
            return limit("packed table needs n <= 64");
        }
        if self.seed_bits() > 30 {
            return limit(format!("{} seed bits is too many to tabulate", self.seed_bits()));
        }
        let mut table = vec![0u64; 1 << self.seed_bits()];
        self.visit_outputs(|i, w| table[i as usize] = w[0]);
        Ok(table)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BiasReport {
    pub max_bias: f64,
    #[serde(with = "crate::ratio_serde")]
    pub max_bias_exact: BigRational,
    /// Lexicographically first character (by mask) attaining the maximum.
    pub witness: IndexSet,
}

/// Signed character sums `sum_x count[x] (-1)^{|x & S|}` for every `S`.
fn walsh_hadamard(h: &mut [i64]) {
    let mut len = 1;
    while len < h.len() {
        for block in h.chunks_mut(2 * len) {
            let (a, b) = block.split_at_mut(len);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        len *= 2;
    }
}

/// Maximum bias over all nonempty characters, by enumerating every seed.
pub fn exact_bias(spec: &BiasedSpaceSpec) -> Result<BiasReport> {
    spec.validate()?;
    if spec.n > EXACT_MAX_N || spec.seed_bits() > EXACT_MAX_SEED_BITS {
        return limit(format!(
            "exact bias needs n <= {EXACT_MAX_N} and seed bits <= {EXACT_MAX_SEED_BITS}, got n = {} and {} bits",
            spec.n,
            spec.seed_bits()
        ));
    }
    let mut hist = vec![0i64; 1 << spec.n];
    spec.visit_outputs(|_, w| hist[w[0] as usize] += 1);
    walsh_hadamard(&mut hist);
    let (mut best, mut arg) = (0i64, 1usize);
    for (s, &v) in hist.iter().enumerate().skip(1) {
        if v.abs() > best {
            best = v.abs();
            arg = s;
        }
    }
    let exact = BigRational::new(BigInt::from(best), BigInt::one() << spec.seed_bits());
    Ok(BiasReport {
        max_bias: best as f64 / (spec.seed_bits() as f64).exp2(),
        max_bias_exact: exact,
        witness: IndexSet::from_mask(arg as u64),
    })
}

/// Samples `I` with `Pr[i in I] = 2^-b` under uniform bits: index `i` owns
/// positions `i*b .. i*b+b` of a biased string and joins `I` iff all are `-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubsetSamplerSpec {
    pub n: usize,
    pub bits_per_index: u32,
    pub delta: f64,
    pub max_arity: usize,
    pub space: BiasedSpaceSpec,
}

impl SubsetSamplerSpec {
    /// Underlying bias `delta * 2^(-b * max_arity)`.
    pub fn new(n: usize, bits_per_index: u32, delta: f64, max_arity: usize) -> Result<Self> {
        if bits_per_index == 0 {
            return usage("sampler needs at least one bit per index");
        }
        let eps = delta * (-((bits_per_index as usize * max_arity) as f64)).exp2();
        let space = BiasedSpaceSpec::new(n * bits_per_index as usize, eps)?;
        Ok(SubsetSamplerSpec { n, bits_per_index, delta, max_arity, space })
    }

    /// Fixed underlying field degree; `delta` is the implied guarantee, capped at 1.
    pub fn with_space_degree(n: usize, bits_per_index: u32, field_degree: u32, max_arity: usize) -> Result<Self> {
        if bits_per_index == 0 {
            return usage("sampler needs at least one bit per index");
        }
        let space = BiasedSpaceSpec::with_degree(n * bits_per_index as usize, field_degree)?;
        let delta = (space.bias_bound() * ((bits_per_index as usize * max_arity) as f64).exp2()).min(1.0);
        Ok(SubsetSamplerSpec { n, bits_per_index, delta, max_arity, space })
    }

    pub fn alpha(&self) -> f64 {
        (-(self.bits_per_index as f64)).exp2()
    }

    pub fn seed_bits(&self) -> usize {
        self.space.seed_bits()
    }

    /// Membership words from raw biased output words.
    pub fn membership(&self, raw: &[u64]) -> Vec<u64> {
        let b = self.bits_per_index as usize;
        let mut out = vec![0u64; self.n.div_ceil(64)];
        for i in 0..self.n {
            let all = (i * b..(i + 1) * b).all(|p| (raw[p / 64] >> (p % 64)) & 1 == 1);
            if all {
                out[i / 64] |= 1 << (i % 64);
            }
        }
        out
    }

    pub fn sample(&self, seed: &Seed) -> Result<IndexSet> {
        let raw = self.space.generate(seed)?;
        Ok(IndexSet::from_words(&self.membership(raw.words()), self.n))
    }

    /// Membership mask for every seed, indexed by seed index; `n <= 64`.
    pub fn membership_table(&self) -> Result<Vec<u64>> {
        if self.n > 64 {
            return limit("membership table needs n <= 64");
        }
        if self.seed_bits() > 30 {
            return limit(format!("{} seed bits is too many to tabulate", self.seed_bits()));
        }
        let mut table = vec![0u64; 1 << self.seed_bits()];
        self.space.visit_outputs(|i, w| table[i as usize] = self.membership(w)[0]);
        Ok(table)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JointDeviation {
    pub value: f64,
    #[serde(with = "crate::ratio_serde")]
    pub value_exact: BigRational,
    pub indices: Vec<usize>,
    /// `true` where the witness pattern has the index inside `I`.
    pub pattern: Vec<bool>,
}

/// Max over index sets of size `2..=max_indices` and membership patterns of
/// `|Pr[pattern] - prod_j Pr[marginal_j]|`, marginals taken under the same space.
pub fn exact_joint_deviation(spec: &SubsetSamplerSpec, max_indices: usize) -> Result<JointDeviation> {
    let n = spec.n;
    if n > EXACT_MAX_N || spec.seed_bits() > EXACT_MAX_SEED_BITS {
        return limit(format!(
            "joint deviation needs n <= {EXACT_MAX_N} and seed bits <= {EXACT_MAX_SEED_BITS}"
        ));
    }
    let total = 1u64 << spec.seed_bits();
    // sup[T] = number of seeds whose I contains T
    let mut sup = vec![0u64; 1 << n];
    spec.space.visit_outputs(|_, w| sup[spec.membership(w)[0] as usize] += 1);
    for j in 0..n {
        for t in 0..sup.len() {
            if t & (1 << j) == 0 {
                sup[t] += sup[t | (1 << j)];
            }
        }
    }
    let mut best = JointDeviation {
        value: 0.0,
        value_exact: BigRational::zero(),
        indices: vec![],
        pattern: vec![],
    };
    let big_total = BigInt::from(total);
    for u in 1usize..(1 << n) {
        let size = u.count_ones() as usize;
        if size < 2 || size > max_indices {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|&i| u & (1 << i) != 0).collect();
        for pat in 0usize..(1 << size) {
            let mut inside = 0usize;
            let mut outside = 0usize;
            let mut marg = BigInt::one();
            for (j, &i) in idx.iter().enumerate() {
                let p_in = sup[1 << i];
                if pat & (1 << j) != 0 {
                    inside |= 1 << i;
                    marg *= BigInt::from(p_in);
                } else {
                    outside |= 1 << i;
                    marg *= BigInt::from(total - p_in);
                }
            }
            // inclusion-exclusion over the indices required outside I
            let mut joint: i128 = 0;
            let mut c = outside;
            loop {
                let term = sup[inside | c] as i128;
                if c.count_ones() % 2 == 0 {
                    joint += term;
                } else {
                    joint -= term;
                }
                if c == 0 {
                    break;
                }
                c = (c - 1) & outside;
            }
            let lhs = BigInt::from(joint) * num_traits::pow(big_total.clone(), size - 1);
            let dev = BigRational::new((lhs - marg).abs(), num_traits::pow(big_total.clone(), size));
            if dev > best.value_exact {
                best.value = num_traits::ToPrimitive::to_f64(&dev).unwrap_or(f64::NAN);
                best.value_exact = dev;
                best.indices = idx.clone();
                best.pattern = (0..size).map(|j| pat & (1 << j) != 0).collect();
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct character sums over every seed, no transform.
    fn brute_bias(spec: &BiasedSpaceSpec) -> BigRational {
        let outs: Vec<u64> = {
            let mut v = vec![];
            spec.visit_outputs(|_, w| v.push(w[0]));
            v
        };
        let mut best = 0i64;
        for s in 1u64..(1 << spec.n) {
            let sum: i64 = outs.iter().map(|&x| if (x & s).count_ones() % 2 == 0 { 1 } else { -1 }).sum();
            best = best.max(sum.abs());
        }
        BigRational::new(BigInt::from(best), BigInt::from(outs.len()))
    }

    #[test]
    fn degree_choice() {
        assert_eq!(field_degree_for(16, 0.25).unwrap(), 7);
        assert_eq!(field_degree_for(1, 1.0).unwrap(), 1);
        let s = BiasedSpaceSpec::new(20, 1.0 / 64.0).unwrap();
        assert!(s.bias_bound() <= s.epsilon);
    }

    #[test]
    fn bit_zero_is_low_bit_of_r() {
        let spec = BiasedSpaceSpec::with_degree(5, 4).unwrap();
        for r in 0..16u64 {
            for s in 0..16u64 {
                let seed = Seed::from_index(r | s << 4, 8);
                let x = spec.generate(&seed).unwrap();
                assert_eq!(x.is_false(0), r & 1 == 1);
                for i in 0..5 {
                    assert_eq!(x.is_false(i), spec.output_bit(r, s, i as u64));
                }
            }
        }
    }

    #[test]
    fn gray_enumeration_matches_direct() {
        let spec = BiasedSpaceSpec::with_degree(70, 5).unwrap();
        spec.visit_outputs(|idx, w| {
            let x = spec.generate(&Seed::from_index(idx, 10)).unwrap();
            assert_eq!(x.words(), w);
        });
    }

    #[test]
    fn transform_matches_brute_force() {
        for (n, k) in [(1, 1), (2, 2), (5, 3), (8, 4), (10, 5)] {
            let spec = BiasedSpaceSpec::with_degree(n, k).unwrap();
            let r = exact_bias(&spec).unwrap();
            assert_eq!(r.max_bias_exact, brute_bias(&spec), "n={n} k={k}");
            assert!(r.max_bias_exact <= spec.bias_bound_exact());
        }
    }

    #[test]
    fn single_output_is_unbiased() {
        let spec = BiasedSpaceSpec::new(1, 0.5).unwrap();
        let r = exact_bias(&spec).unwrap();
        assert!(r.max_bias_exact.is_zero());
    }

    #[test]
    fn uniform_space_has_zero_bias() {
        let r = exact_bias(&BiasedSpaceSpec::uniform(10)).unwrap();
        assert!(r.max_bias_exact.is_zero());
    }

    // n = 8, k = 4 is frozen from the brute-force oracle above.
    #[test]
    fn frozen_bias_n8_k4() {
        let spec = BiasedSpaceSpec::with_degree(8, 4).unwrap();
        let b = brute_bias(&spec);
        assert_eq!(exact_bias(&spec).unwrap().max_bias_exact, b);
        assert_eq!(b, BigRational::new(7.into(), 16.into()));
    }

    #[test]
    fn wrong_seed_length_rejected() {
        let spec = BiasedSpaceSpec::with_degree(8, 4).unwrap();
        assert!(spec.generate(&Seed::zero(7)).is_err());
    }

    #[test]
    fn limits_reported() {
        let spec = BiasedSpaceSpec::with_degree(21, 4).unwrap();
        assert!(matches!(exact_bias(&spec), Err(crate::Error::Limit(_))));
        let spec = BiasedSpaceSpec::with_degree(10, 13).unwrap();
        assert!(matches!(exact_bias(&spec), Err(crate::Error::Limit(_))));
    }

    #[test]
    fn degenerate_sampler_uniform_marginals() {
        let mut spec = SubsetSamplerSpec::with_space_degree(3, 2, 4, 3).unwrap();
        spec.space = BiasedSpaceSpec::uniform(6);
        let mut hits = [0u32; 3];
        spec.space.visit_outputs(|_, w| {
            let m = spec.membership(w)[0];
            for (i, h) in hits.iter_mut().enumerate() {
                *h += ((m >> i) & 1) as u32;
            }
        });
        assert_eq!(hits, [16, 16, 16]);
        let d = exact_joint_deviation(&spec, 3).unwrap();
        assert!(d.value_exact.is_zero());
    }

    // Joint probabilities recomputed by listing every seed's set.
    fn brute_joint(spec: &SubsetSamplerSpec, k: usize) -> BigRational {
        let mut sets = vec![];
        spec.space.visit_outputs(|_, w| sets.push(spec.membership(w)[0]));
        let total = BigInt::from(sets.len());
        let n = spec.n;
        let mut best = BigRational::zero();
        let mut stack: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        while let Some(idx) = stack.pop() {
            if idx.len() < k {
                for j in idx.last().unwrap() + 1..n {
                    let mut e = idx.clone();
                    e.push(j);
                    stack.push(e);
                }
            }
            if idx.len() < 2 {
                continue;
            }
            for pat in 0..(1usize << idx.len()) {
                let want = |m: u64, j: usize| ((m >> idx[j]) & 1 == 1) == (pat >> j & 1 == 1);
                let joint = sets.iter().filter(|&&m| (0..idx.len()).all(|j| want(m, j))).count();
                let mut prod = BigRational::one();
                for j in 0..idx.len() {
                    let c = sets.iter().filter(|&&m| want(m, j)).count();
                    prod *= BigRational::new(BigInt::from(c), total.clone());
                }
                let dev = (BigRational::new(BigInt::from(joint), total.clone()) - prod).abs();
                if dev > best {
                    best = dev;
                }
            }
        }
        best
    }

    #[test]
    fn joint_deviation_matches_listing() {
        for (n, b, k, arity) in [(3, 2, 4, 3), (4, 1, 3, 2), (5, 2, 4, 3)] {
            let spec = SubsetSamplerSpec::with_space_degree(n, b, k, arity).unwrap();
            let d = exact_joint_deviation(&spec, arity).unwrap();
            assert_eq!(d.value_exact, brute_joint(&spec, arity), "n={n} b={b} k={k}");
        }
    }

    #[test]
    fn joint_deviation_small_example() {
        let spec = SubsetSamplerSpec::with_space_degree(3, 2, 4, 3).unwrap();
        let d = exact_joint_deviation(&spec, 3).unwrap();
        assert!(d.value <= spec.delta);
        assert_eq!(d.value_exact, brute_joint(&spec, 3));
        assert!(exact_joint_deviation(&spec, 1).unwrap().value_exact.is_zero());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = BiasedSpaceSpec::new(12, 0.01).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"fieldDegree\""));
        let back: BiasedSpaceSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
