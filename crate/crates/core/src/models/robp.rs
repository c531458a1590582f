use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{BooleanFunction, Restriction};
use crate::bits::SignVector;
use crate::error::{precondition, usage, Error, Result};

/// Index of the accepting state in the final layer.
pub const ACC: usize = 0;
/// Index of the rejecting state in the final layer.
pub const REJ: usize = 1;

/// Largest length whose path counts fit in `u128`.
pub const MAX_ROBP_LEN: usize = 126;

/// Read-once branching program.
///
/// Layer `0` holds the start state, layers `1..n` hold `d` states each and layer
/// `n` holds `ACC` and `REJ`. Layer `t` reads variable `order[t]`; bit `1` (edge
/// `next[t][s][1]`) is taken when that variable is true. With `sudden_death` set,
/// interior state `d - 1` is an absorbing reject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RobpJson", into = "RobpJson")]
pub struct Robp {
    n: usize,
    d: usize,
    order: Vec<usize>,
    next: Vec<Vec<[usize; 2]>>,
    sudden_death: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RobpJson {
    n: usize,
    d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order: Option<Vec<usize>>,
    next: Vec<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    sudden_death: bool,
}

impl TryFrom<RobpJson> for Robp {
    type Error = Error;
    fn try_from(j: RobpJson) -> Result<Self> {
        Robp::new(j.n, j.d, j.order, j.next, j.sudden_death)
    }
}

impl From<Robp> for RobpJson {
    fn from(p: Robp) -> Self {
        let identity = p.order.iter().enumerate().all(|(i, &v)| i == v);
        RobpJson {
            n: p.n,
            d: p.d,
            order: if identity { None } else { Some(p.order) },
            next: p.next,
            sudden_death: p.sudden_death,
        }
    }
}

impl Robp {
    pub fn new(
        n: usize,
        d: usize,
        order: Option<Vec<usize>>,
        next: Vec<Vec<[usize; 2]>>,
        sudden_death: bool,
    ) -> Result<Self> {
        if n == 0 || n > MAX_ROBP_LEN {
            return usage(format!("program length {n} outside 1..={MAX_ROBP_LEN}"));
        }
        if d < 2 {
            return usage("program width must be at least 2");
        }
        let order = order.unwrap_or_else(|| (0..n).collect());
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
            return usage("variable order must be a permutation of 0..n");
        }
        let p = Robp { n, d, order, next, sudden_death: false };
        if p.next.len() != n {
            return usage(format!("expected {n} transition layers, got {}", p.next.len()));
        }
        for t in 0..n {
            if p.next[t].len() != p.width(t) {
                return usage(format!("layer {t} has {} states, expected {}", p.next[t].len(), p.width(t)));
            }
            for (s, e) in p.next[t].iter().enumerate() {
                for &v in e {
                    if v >= p.width(t + 1) {
                        return usage(format!("layer {t} state {s} points to missing state {v}"));
                    }
                }
            }
        }
        if sudden_death && !p.has_sudden_death_shape() {
            return usage("program is flagged sudden-death but its bottom state is not an absorbing reject");
        }
        Ok(Robp { sudden_death, ..p })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn next(&self) -> &[Vec<[usize; 2]>] {
        &self.next
    }

    pub fn is_sudden_death(&self) -> bool {
        self.sudden_death
    }

    /// Number of states in layer `t`.
    pub fn width(&self, t: usize) -> usize {
        if t == 0 {
            1
        } else if t == self.n {
            2
        } else {
            self.d
        }
    }

    /// Interior bottom states are absorbing and feed `REJ`.
    pub fn has_sudden_death_shape(&self) -> bool {
        let b = self.d - 1;
        (1..self.n).all(|t| {
            let target = if t + 1 == self.n { REJ } else { b };
            self.next[t][b] == [target, target]
        })
    }

    /// Sets the flag after checking the shape.
    pub fn mark_sudden_death(mut self) -> Result<Self> {
        if !self.has_sudden_death_shape() {
            return precondition("bottom states are not absorbing rejects");
        }
        self.sudden_death = true;
        Ok(self)
    }

    /// Final state index (`ACC` or `REJ`) on a bit string, bit `t` feeding layer `t`.
    pub fn run_bits(&self, bits: impl Fn(usize) -> usize) -> usize {
        let mut s = 0;
        for t in 0..self.n {
            s = self.next[t][s][bits(self.order[t])];
        }
        s
    }

    /// States visited, one per layer.
    pub fn path(&self, x: &SignVector) -> Vec<usize> {
        let mut s = 0;
        let mut out = vec![0];
        for t in 0..self.n {
            s = self.next[t][s][x.is_true(self.order[t]) as usize];
            out.push(s);
        }
        out
    }

    /// `count[t][s]` = number of suffixes from state `s` of layer `t` that accept.
    pub fn accept_counts(&self) -> Vec<Vec<u128>> {
        let mut c: Vec<Vec<u128>> = (0..=self.n).map(|t| vec![0; self.width(t)]).collect();
        c[self.n][ACC] = 1;
        for t in (0..self.n).rev() {
            for s in 0..self.width(t) {
                let [a, b] = self.next[t][s];
                c[t][s] = c[t + 1][a] + c[t + 1][b];
            }
        }
        c
    }

    /// `fwd[t][s]` = number of prefixes of length `t` reaching `s`.
    pub fn forward_counts(&self) -> Vec<Vec<u128>> {
        let mut f: Vec<Vec<u128>> = (0..=self.n).map(|t| vec![0; self.width(t)]).collect();
        f[0][0] = 1;
        for t in 0..self.n {
            for s in 0..self.width(t) {
                for &v in &self.next[t][s] {
                    f[t + 1][v] += f[t][s];
                }
            }
        }
        f
    }

    /// `p(v)`: acceptance probability from every state.
    pub fn accept_prob_all_states(&self) -> Vec<Vec<BigRational>> {
        self.accept_counts()
            .into_iter()
            .enumerate()
            .map(|(t, row)| {
                let den = BigInt::from(1u8) << (self.n - t);
                row.into_iter().map(|c| BigRational::new(BigInt::from(c), den.clone())).collect()
            })
            .collect()
    }

    /// `q(v) = Pr[path visits v | f(x) = 1]`.
    pub fn conditional_visit_probs(&self) -> Result<Vec<Vec<BigRational>>> {
        let acc = self.accept_counts();
        let fwd = self.forward_counts();
        let total = acc[0][0];
        if total == 0 {
            return precondition("conditional visit probabilities need E[f] > 0");
        }
        let den = BigInt::from(total);
        Ok((0..=self.n)
            .map(|t| {
                (0..self.width(t))
                    .map(|s| {
                        BigRational::new(BigInt::from(fwd[t][s]) * BigInt::from(acc[t][s]), den.clone())
                    })
                    .collect()
            })
            .collect())
    }

    /// Hardwires fixed variables: both edges follow the fixed value.
    pub fn apply_restriction(&self, rho: &Restriction) -> Robp {
        let mut out = self.clone();
        for t in 0..self.n {
            if let Some(s) = rho.value(self.order[t]) {
                let b = (s == crate::bits::TRUE) as usize;
                for e in out.next[t].iter_mut() {
                    *e = [e[b], e[b]];
                }
            }
        }
        out.sudden_death = out.sudden_death && out.has_sudden_death_shape();
        out
    }

    /// Relabels states in interior layer `t`: old state `s` becomes `perm[s]`.
    pub fn permute_layer(&mut self, t: usize, perm: &[usize]) {
        assert!(t >= 1 && t < self.n && perm.len() == self.d);
        let mut moved = vec![[0, 0]; self.d];
        for s in 0..self.d {
            moved[perm[s]] = self.next[t][s];
        }
        self.next[t] = moved;
        for e in self.next[t - 1].iter_mut() {
            e[0] = perm[e[0]];
            e[1] = perm[e[1]];
        }
        self.sudden_death = self.sudden_death && self.has_sudden_death_shape();
    }

    /// Same program with each interior layer sorted by acceptance probability,
    /// highest first, ties by original index.
    pub fn sorted_by_acceptance(&self) -> Robp {
        let mut out = self.clone();
        let counts = self.accept_counts();
        for t in 1..self.n {
            let mut idx: Vec<usize> = (0..self.d).collect();
            idx.sort_by(|&a, &b| counts[t][b].cmp(&counts[t][a]).then(a.cmp(&b)));
            let mut perm = vec![0; self.d];
            for (new, &old) in idx.iter().enumerate() {
                perm[old] = new;
            }
            out.permute_layer(t, &perm);
        }
        out
    }
}

/// Uniformly random transitions; the variable order is shuffled when `shuffle` is set.
pub fn random_robp(n: usize, d: usize, shuffle: bool, rng: &mut impl rand::Rng) -> Robp {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    }
    let next = (0..n)
        .map(|t| {
            let w = if t == 0 { 1 } else { d };
            let nw = if t + 1 == n { 2 } else { d };
            (0..w).map(|_| [rng.gen_range(0..nw), rng.gen_range(0..nw)]).collect()
        })
        .collect();
    Robp::new(n, d, Some(order), next, false).expect("well-formed")
}

impl BooleanFunction for Robp {
    fn num_vars(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &SignVector) -> bool {
        self.run_bits(|v| x.is_true(v) as usize) == ACC
    }

    fn eval_packed(&self, neg: u64) -> bool {
        self.run_bits(|v| ((neg >> v) & 1 ^ 1) as usize) == ACC
    }

    fn exact_expectation(&self) -> BigRational {
        let c = self.accept_counts()[0][0];
        if c == 0 {
            return BigRational::zero();
        }
        BigRational::new(BigInt::from(c), BigInt::from(1u8) << self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::brute_expectation;
    use proptest::prelude::*;
    use rand::SeedableRng;

    pub(crate) fn random_robp(n: usize, d: usize, seed: u64) -> Robp {
        super::random_robp(n, d, true, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    // Exact p(v) by enumerating suffixes from each state.
    fn brute_state_probs(p: &Robp) -> Vec<Vec<BigRational>> {
        (0..=p.len())
            .map(|t| {
                (0..p.width(t))
                    .map(|s| {
                        let len = p.len() - t;
                        let hits = (0u64..1 << len)
                            .filter(|&y| {
                                let mut st = s;
                                for (j, layer) in p.next()[t..].iter().enumerate() {
                                    st = layer[st][(y >> j & 1) as usize];
                                }
                                st == ACC
                            })
                            .count();
                        BigRational::new(BigInt::from(hits), BigInt::from(1u64 << len))
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn and_of_two() {
        // x1 AND x2, width 2
        let next = vec![vec![[1, 0]], vec![[REJ, ACC], [REJ, REJ]]];
        let p = Robp::new(2, 2, None, next, true).unwrap();
        assert_eq!(p.exact_expectation(), crate::rational::ratio(1, 4));
        let q = p.conditional_visit_probs().unwrap();
        assert!(q[1][0] == crate::rational::ratio(1, 1) && q[1][1].is_zero());
    }

    #[test]
    fn zero_program_refuses_conditionals() {
        let next = vec![vec![[0, 0]], vec![[REJ, REJ], [REJ, REJ]]];
        let p = Robp::new(2, 2, None, next, false).unwrap();
        assert!(p.conditional_visit_probs().is_err());
    }

    #[test]
    fn bad_sudden_death_flag_rejected() {
        let next = vec![vec![[0, 1]], vec![[REJ, ACC], [ACC, REJ]]];
        assert!(Robp::new(2, 2, None, next, true).is_err());
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(n in 1usize..9, d in 2usize..5, seed in any::<u64>()) {
            let p = random_robp(n, d, seed);
            prop_assert_eq!(p.exact_expectation(), brute_expectation(&p));
            let mut ident = p.clone();
            ident.order = (0..n).collect();
            prop_assert_eq!(ident.accept_prob_all_states(), brute_state_probs(&ident));
        }

        #[test]
        fn visit_probs_sum_to_one_per_layer(n in 1usize..9, seed in any::<u64>()) {
            let p = random_robp(n, 3, seed);
            if let Ok(q) = p.conditional_visit_probs() {
                for row in q {
                    let s: BigRational = row.into_iter().sum();
                    prop_assert!(s == BigRational::from_integer(1.into()));
                }
            }
        }

        #[test]
        fn sorting_preserves_function(n in 2usize..8, seed in any::<u64>(), xs in any::<u64>()) {
            let p = random_robp(n, 3, seed);
            let s = p.sorted_by_acceptance();
            let x = xs & ((1 << n) - 1);
            prop_assert_eq!(p.eval_packed(x), s.eval_packed(x));
            let probs = s.accept_prob_all_states();
            for row in &probs[1..n] {
                prop_assert!(row.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
