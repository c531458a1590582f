//! Hitting sets for width-3 read-once branching programs.
//!
//! A program `f` with `E[f] >= eps` is reduced in three steps to a CNF⊕ `g`
//! with `0^k ∘ g^{-1}(1) ⊆ f^{-1}(1)`:
//!
//! 1. [`sudden_death_reduce`]: skip a prefix of false inputs and turn one state
//!    per layer into a reject so the bottom row becomes absorbing.
//! 2. [`intersection_reduce`]: drop rarely visited bad states, hardwire the
//!    variables read by the frequent ones, and cut the program at layers with a
//!    single live state into width-2 segments.
//! 3. [`width2_to_decision_list`] and [`dl_to_cnfx`]: each segment becomes a
//!    decision list with parity leaves, from which an OR term or an AND of
//!    literals with one parity is extracted.
//!
//! [`HsgParams`] pads a CNF⊕ generator with a random number of leading false
//! signs.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{Seed, SignVector, FALSE, TRUE};
use crate::error::{invariant, precondition, usage, Error, Result};
use crate::models::{BooleanFunction, Literal, Restriction, Robp, Term, XorCnf, ACC, REJ};
use crate::rational::{inv_pow2, ratio, ratio_serde};
use crate::rcnf_prg::{RcnfConstants, RcnfGenParams};

/// Largest number of variables whose fixings are searched exhaustively.
pub const MAX_FIXED_VARS: usize = 20;
/// Largest program length for which subset properties are checked exhaustively.
pub const MAX_VERIFY_VARS: usize = 20;

fn log2_ratio(r: &BigRational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = |b: &BigInt| b.bits() as i64;
    let (n, d) = (r.numer(), r.denom());
    // shift both to ~60 significant bits before converting
    let sn = (bits(n) - 60).max(0);
    let sd = (bits(d) - 60).max(0);
    let nf = (n >> sn as usize).to_f64().unwrap_or(0.0);
    let df = (d >> sd as usize).to_f64().unwrap_or(1.0);
    nf.log2() - df.log2() + (sn - sd) as f64
}

/// Exact rational value of a finite float.
pub fn exact_ratio(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Usage(format!("{x} is not a finite number")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuddenDeathOutcome {
    /// Length of the skipped false prefix.
    pub k: usize,
    /// Original variables fixed to false by the prefix.
    pub prefix_vars: Vec<usize>,
    /// Original variable read by each layer of `g`.
    pub var_map: Vec<usize>,
    pub g: Robp,
    /// First layer whose lowest state has acceptance at most `eps/2`.
    pub first_low_layer: usize,
    /// Layer of most likely first arrival at the top row.
    pub top_arrival_layer: usize,
    #[serde(with = "ratio_serde")]
    pub q_top_arrival: BigRational,
    #[serde(with = "ratio_serde")]
    pub e_f: BigRational,
    #[serde(with = "ratio_serde")]
    pub e_g: BigRational,
    /// `eps^2 / 4n`, asserted.
    #[serde(with = "ratio_serde")]
    pub proven_bound: BigRational,
    /// `E[f]^2 / 2n`, reported only.
    #[serde(with = "ratio_serde")]
    pub stated_bound: BigRational,
    pub meets_stated_bound: bool,
}

/// Redirects both edges of each listed `(layer, state)` to the bottom state of
/// the next layer (`REJ` in the final layer).
pub fn convert_to_rej(prog: &Robp, states: &[(usize, usize)]) -> Result<Robp> {
    let n = prog.len();
    let mut next = prog.next().to_vec();
    for &(t, s) in states {
        if t >= n || s >= prog.width(t) {
            return usage(format!("no state {s} in layer {t}"));
        }
        let target = if t + 1 == n { REJ } else { prog.d() - 1 };
        next[t][s] = [target, target];
    }
    Robp::new(n, prog.d(), Some(prog.order().to_vec()), next, false)
}

/// Turns `f` into a sudden-death program on a suffix of its layers.
pub fn sudden_death_reduce(f: &Robp, eps: &BigRational) -> Result<SuddenDeathOutcome> {
    let n = f.len();
    let d = f.d();
    let e_f = f.exact_expectation();
    if !eps.is_positive() || e_f < *eps {
        return precondition(format!("need 0 < eps <= E[f]; E[f] = {e_f}, eps = {eps}"));
    }
    let p = f.sorted_by_acceptance();
    let probs = p.accept_prob_all_states();
    let half = eps / BigRational::from_integer(2.into());
    let i = (1..=n)
        .find(|&t| probs[t].iter().any(|v| *v <= half))
        .expect("the final layer holds a state with acceptance 0");
    let k = i - 1;
    let mut v = 0;
    for t in 0..k {
        v = p.next()[t][v][0];
    }

    // first arrival at the top row, starting from v
    let (j, q_j) = if v == 0 {
        (k, BigRational::one())
    } else {
        let mut dist = vec![0u128; p.width(k)];
        dist[v] = 1;
        let mut best = (k, BigRational::zero());
        for t in k..n {
            let mut nd = vec![0u128; p.width(t + 1)];
            for (s, &c) in dist.iter().enumerate() {
                for &u in &p.next()[t][s] {
                    nd[u] += c;
                }
            }
            let q = BigRational::new(BigInt::from(nd[0]), BigInt::from(1u8) << (t + 1 - k));
            if q > best.1 {
                best = (t + 1, q);
            }
            nd[0] = 0;
            dist = nd;
        }
        best
    };

    let n2 = n - k;
    let conv = |t: usize| if t < j { 0 } else { d - 1 };
    let mut next: Vec<Vec<[usize; 2]>> = Vec::with_capacity(n2);
    next.push(vec![p.next()[k][v]]);
    next.extend(p.next()[k + 1..].iter().cloned());
    for t in k + 1..n {
        let target = if t + 1 < n { conv(t + 1) } else { REJ };
        next[t - k][conv(t)] = [target, target];
    }
    let mut g = Robp::new(n2, d, None, next, false)?;
    for t in k + 1..n {
        let c = conv(t);
        if c != d - 1 {
            let mut perm: Vec<usize> = (0..d).collect();
            perm.swap(c, d - 1);
            g.permute_layer(t - k, &perm);
        }
    }
    let g = g.mark_sudden_death()?;
    let e_g = g.exact_expectation();
    let nn = BigRational::from_integer(n.into());
    let proven_bound = eps * eps / (BigRational::from_integer(4.into()) * &nn);
    let stated_bound = &e_f * &e_f / (BigRational::from_integer(2.into()) * &nn);
    if e_g < proven_bound {
        return invariant(format!("sudden-death step kept E = {e_g} < {proven_bound}"));
    }
    Ok(SuddenDeathOutcome {
        k,
        prefix_vars: p.order()[..k].to_vec(),
        var_map: p.order()[k..].to_vec(),
        meets_stated_bound: e_g >= stated_bound,
        g,
        first_low_layer: i,
        top_arrival_layer: j,
        q_top_arrival: q_j,
        e_f,
        e_g,
        proven_bound,
        stated_bound,
    })
}

/// Checks `x ∈ f^{-1}(1)` for every `x` that puts false on `prefix_vars`,
/// `y_i` on `var_map[i]`, and satisfies `g(y)`. Needs `len(var_map) <= 20`.
pub fn check_prefix_subset(
    f: &dyn BooleanFunction,
    prefix_vars: &[usize],
    var_map: &[usize],
    g: &(dyn Fn(&SignVector) -> bool + Sync),
) -> Result<bool> {
    let m = var_map.len();
    if m > MAX_VERIFY_VARS {
        return Err(Error::Limit(format!("subset check over {m} variables")));
    }
    let n = f.num_vars();
    Ok((0..1u64 << m).into_par_iter().all(|y| {
        let yv = SignVector::from_packed(m, y);
        if !g(&yv) {
            return true;
        }
        let mut x = SignVector::all_true(n);
        for &v in prefix_vars {
            x.set(v, FALSE);
        }
        for (i, &v) in var_map.iter().enumerate() {
            x.set(v, yv.get(i));
        }
        f.eval(&x)
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BadAnalysis {
    /// Live states with an edge into an acceptance-0 state, as `(layer, state)`.
    pub bad: Vec<(usize, usize)>,
    /// Bad states visited by fewer than a quarter of accepting inputs.
    pub bad_small: Vec<(usize, usize)>,
    pub bad_large: Vec<(usize, usize)>,
    #[serde(with = "ratio_serde")]
    pub p: BigRational,
    /// `sum of q(v)` over bad states, which equals `E[Bad(x) | accept]`.
    #[serde(with = "ratio_serde")]
    pub bad_mass: BigRational,
    /// `8 log2(2/p)`.
    pub large_bound: f64,
}

pub fn bad_state_analysis(g: &Robp) -> Result<BadAnalysis> {
    let acc = g.accept_counts();
    if acc[0][0] == 0 {
        return precondition("bad-state analysis needs E[g] > 0");
    }
    let q = g.conditional_visit_probs()?;
    let quarter = ratio(1, 4);
    let mut bad = Vec::new();
    for t in 0..g.len() {
        for s in 0..g.width(t) {
            if acc[t][s] > 0 && g.next()[t][s].iter().any(|&u| acc[t + 1][u] == 0) {
                bad.push((t, s));
            }
        }
    }
    let (bad_small, bad_large): (Vec<_>, Vec<_>) = bad.iter().partition(|&&(t, s)| q[t][s] < quarter);
    let bad_mass = bad.iter().map(|&(t, s)| q[t][s].clone()).sum();
    let p = g.exact_expectation();
    let large_bound = 8.0 * (1.0 - log2_ratio(&p));
    if bad_large.len() as f64 > large_bound {
        return invariant(format!("{} frequent bad states exceed 8 log2(2/p) = {large_bound:.3}", bad_large.len()));
    }
    Ok(BadAnalysis { bad, bad_small, bad_large, p, bad_mass, large_bound })
}

/// Number of inputs visiting exactly `t` bad states, over all inputs and over
/// accepting inputs.
pub fn bad_count_distribution(g: &Robp, bad: &[(usize, usize)]) -> (Vec<u128>, Vec<u128>) {
    let n = g.len();
    let is_bad = |t: usize, s: usize| bad.binary_search(&(t, s)).is_ok();
    // dist[s][c]: prefixes at state s having visited c bad states
    let mut dist = vec![vec![0u128; n + 2]];
    dist[0][0] = 1;
    for t in 0..n {
        let mut nd = vec![vec![0u128; n + 2]; g.width(t + 1)];
        for (s, row) in dist.iter().enumerate() {
            let add = is_bad(t, s) as usize;
            for (c, &cnt) in row.iter().enumerate() {
                if cnt == 0 {
                    continue;
                }
                for &u in &g.next()[t][s] {
                    nd[u][c + add] += cnt;
                }
            }
        }
        dist = nd;
    }
    let all = (0..n + 2).map(|c| dist[ACC][c] + dist[REJ][c]).collect();
    (all, dist[ACC].clone())
}

/// A width-2 program between two consecutive single-live-state layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Segment {
    pub start_layer: usize,
    pub end_layer: usize,
    /// Variable (of the input program) read by each layer.
    pub vars: Vec<usize>,
    pub program: Robp,
}

impl Segment {
    pub fn eval(&self, x: &SignVector) -> bool {
        self.program.run_bits(|t| x.is_true(self.vars[t]) as usize) == ACC
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntersectionOutcome {
    pub analysis: BadAnalysis,
    /// Literals fixing the variables read by frequent bad states.
    pub fixed: Vec<Literal>,
    pub anchors: Vec<usize>,
    pub segments: Vec<Segment>,
    #[serde(with = "ratio_serde")]
    pub e_in: BigRational,
    /// `E[fixed ∧ segments]`.
    #[serde(with = "ratio_serde")]
    pub e_out: BigRational,
    /// `(p/2)^13`, asserted.
    #[serde(with = "ratio_serde")]
    pub bound: BigRational,
}

impl IntersectionOutcome {
    pub fn eval(&self, x: &SignVector) -> bool {
        self.fixed.iter().all(|l| l.eval(x)) && self.segments.iter().all(|s| s.eval(x))
    }
}

/// Rewrites a sudden-death width-3 program as literals and width-2 segments
/// whose conjunction is at most `g`.
pub fn intersection_reduce(g: &Robp) -> Result<IntersectionOutcome> {
    if !g.is_sudden_death() || g.d() > 3 {
        return usage("intersection step needs a sudden-death program of width at most 3");
    }
    let n = g.len();
    let analysis = bad_state_analysis(g)?;
    let g1 = convert_to_rej(g, &analysis.bad_small)?;
    let mut vars: Vec<usize> = analysis.bad_large.iter().map(|&(t, _)| g.order()[t]).collect();
    vars.sort_unstable();
    vars.dedup();
    if vars.len() > MAX_FIXED_VARS {
        return Err(Error::Limit(format!(
            "{} variables read by frequent bad states; at most {MAX_FIXED_VARS} can be searched",
            vars.len()
        )));
    }
    let restrict = |mask: u64| {
        let mut rho = Restriction::none(n);
        for (b, &v) in vars.iter().enumerate() {
            rho.fix(v, if mask >> b & 1 == 1 { TRUE } else { FALSE });
        }
        rho
    };
    let counts: Vec<u128> = (0..1u64 << vars.len())
        .into_par_iter()
        .map(|m| g1.apply_restriction(&restrict(m)).accept_counts()[0][0])
        .collect();
    // lowest mask wins ties
    let best = (0..counts.len()).fold(0, |b, m| if counts[m] > counts[b] { m } else { b }) as u64;
    let rho = restrict(best);
    let h = g1.apply_restriction(&rho);
    let fixed: Vec<Literal> =
        vars.iter().enumerate().map(|(b, &v)| Literal { var: v, positive: best >> b & 1 == 1 }).collect();

    let acc = h.accept_counts();
    if acc[0][0] == 0 {
        return invariant("no fixing keeps an accepting input");
    }
    let live: Vec<Vec<usize>> =
        (0..=n).map(|t| (0..h.width(t)).filter(|&s| acc[t][s] > 0).collect()).collect();
    let anchors: Vec<usize> = (0..=n).filter(|&t| live[t].len() == 1).collect();
    let mut segments = Vec::new();
    for w in anchors.windows(2) {
        let (a, b) = (w[0], w[1]);
        let target = live[b][0];
        let mut next = Vec::with_capacity(b - a);
        for t in a..b {
            let states: &[usize] = if t == a { &live[a][..1] } else { &live[t] };
            let mut layer = Vec::with_capacity(states.len());
            for &s in states {
                let mut e = [0; 2];
                for (bit, slot) in e.iter_mut().enumerate() {
                    let u = h.next()[t][s][bit];
                    *slot = if t + 1 == b {
                        if u == target {
                            ACC
                        } else {
                            REJ
                        }
                    } else {
                        match live[t + 1].iter().position(|&x| x == u) {
                            Some(i) => i,
                            None => return invariant(format!("segment edge into a dead state at layer {}", t + 1)),
                        }
                    };
                }
                layer.push(e);
            }
            next.push(layer);
        }
        let program = Robp::new(b - a, 2, None, next, false)?;
        segments.push(Segment { start_layer: a, end_layer: b, vars: h.order()[a..b].to_vec(), program });
    }
    let e_out = BigRational::new(BigInt::from(acc[0][0]), BigInt::from(1u8) << n) * inv_pow2(vars.len());
    let half_p = &analysis.p / BigRational::from_integer(2.into());
    let bound = (0..13).fold(BigRational::one(), |a, _| a * &half_p);
    if e_out < bound {
        return invariant(format!("intersection step kept E = {e_out} < (p/2)^13"));
    }
    Ok(IntersectionOutcome { e_in: analysis.p.clone(), analysis, fixed, anchors, segments, e_out, bound })
}

/// `constant ⊕ XOR of the truth values of vars`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affine {
    pub vars: Vec<usize>,
    pub constant: bool,
}

impl Affine {
    pub fn constant(c: bool) -> Self {
        Affine { vars: vec![], constant: c }
    }

    pub fn eval(&self, x: &SignVector) -> bool {
        self.vars.iter().fold(self.constant, |a, &v| a ^ x.is_true(v))
    }

    pub fn as_constant(&self) -> Option<bool> {
        self.vars.is_empty().then_some(self.constant)
    }

    pub fn expectation(&self) -> BigRational {
        match self.as_constant() {
            Some(c) => ratio(c as i64, 1),
            None => ratio(1, 2),
        }
    }

    /// The same function as a CNF⊕ term; `None` for constants.
    pub fn to_term(&self) -> Option<Term> {
        if self.vars.is_empty() {
            return None;
        }
        Some(Term::xor(self.vars.iter().map(|&v| Literal::pos(v)).collect(), !self.constant))
    }

    /// `x_v ? b : a`, defined when `a ⊕ b` is constant.
    fn select(a: &Affine, b: &Affine, v: usize) -> Result<Affine> {
        if a.vars != b.vars {
            return invariant("width-2 tails differ by a non-constant");
        }
        let mut out = a.clone();
        if a.constant != b.constant {
            let at = out.vars.binary_search(&v).expect_err("variable read twice");
            out.vars.insert(at, v);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlNode {
    pub var: usize,
    /// The node fires when the variable is true iff `value`.
    pub value: bool,
    pub leaf: Affine,
}

/// Tests `nodes` in order; the first that fires returns its leaf, otherwise
/// `last` is returned. Leaves never read a variable tested at or before their node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionList {
    pub nodes: Vec<DlNode>,
    pub last: Affine,
}

impl DecisionList {
    pub fn eval(&self, x: &SignVector) -> bool {
        for nd in &self.nodes {
            if x.is_true(nd.var) == nd.value {
                return nd.leaf.eval(x);
            }
        }
        self.last.eval(x)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.len() + 1
    }

    /// The tested variables, in order.
    pub fn variables(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.var).collect()
    }

    /// `(leaf, probability of reaching it)` for every leaf.
    fn leaves(&self) -> Vec<(&Affine, BigRational)> {
        let k = self.nodes.len();
        let mut out: Vec<_> = self.nodes.iter().enumerate().map(|(j, n)| (&n.leaf, inv_pow2(j + 1))).collect();
        out.push((&self.last, inv_pow2(k)));
        out
    }

    pub fn expectation(&self) -> BigRational {
        self.leaves().into_iter().map(|(l, w)| l.expectation() * w).sum()
    }
}

/// Decision list computing a width-2 program; layer `t` reads `vars[order[t]]`.
///
/// Scans layers backwards keeping, for each of the two states, the function
/// computed when no node has fired so far. Those two tails always differ by a
/// constant. A layer where both states agree on some input value becomes a
/// node whose leaf is the tail of the common target.
pub fn width2_to_decision_list(prog: &Robp, vars: &[usize]) -> Result<DecisionList> {
    if prog.d() != 2 {
        return usage(format!("decision lists need a width-2 program, got width {}", prog.d()));
    }
    let n = prog.len();
    let mut tails = vec![Affine::constant(true), Affine::constant(false)];
    let mut nodes = Vec::new();
    for t in (1..n).rev() {
        let e = &prog.next()[t];
        let var = vars[prog.order()[t]];
        let all_same = e[0][0] == e[0][1] && e[0] == e[1];
        tails = if all_same {
            vec![tails[e[0][0]].clone(); 2]
        } else if let Some(b) = (0..2).find(|&b| e[0][b] == e[1][b]) {
            nodes.push(DlNode { var, value: b == 1, leaf: tails[e[0][b]].clone() });
            vec![tails[e[0][1 - b]].clone(), tails[e[1][1 - b]].clone()]
        } else {
            vec![
                Affine::select(&tails[e[0][0]], &tails[e[0][1]], var)?,
                Affine::select(&tails[e[1][0]], &tails[e[1][1]], var)?,
            ]
        };
    }
    let e = prog.next()[0][0];
    let last = if e[0] == e[1] {
        tails[e[0]].clone()
    } else {
        Affine::select(&tails[e[0]], &tails[e[1]], vars[prog.order()[0]])?
    };
    Ok(DecisionList { nodes, last })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CnfxBranch {
    /// `E >= 5/6`: an OR of node literals.
    Or,
    /// A reach condition and one parity leaf.
    AndXor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CnfxPiece {
    pub branch: CnfxBranch,
    pub terms: Vec<Term>,
    #[serde(with = "ratio_serde")]
    pub e_in: BigRational,
    #[serde(with = "ratio_serde")]
    pub e_out: BigRational,
    /// `E^9` or `E/3`, asserted.
    #[serde(with = "ratio_serde")]
    pub bound: BigRational,
}

/// CNF⊕ terms whose conjunction is at most the decision list.
pub fn dl_to_cnfx(dl: &DecisionList) -> Result<CnfxPiece> {
    let e = dl.expectation();
    let leaves = dl.leaves();
    if e >= ratio(5, 6) {
        let bound = (0..9).fold(BigRational::one(), |a, _| a * &e);
        let (terms, e_out) = match leaves.iter().position(|(l, _)| l.as_constant() != Some(true)) {
            None => (vec![], BigRational::one()),
            Some(j) => {
                let lits: Vec<Literal> =
                    dl.nodes[..j].iter().map(|n| Literal { var: n.var, positive: n.value }).collect();
                (vec![Term::or(lits)], BigRational::one() - inv_pow2(j))
            }
        };
        if e_out < bound {
            return invariant(format!("OR extraction kept {e_out} < E^9 for E = {e}"));
        }
        return Ok(CnfxPiece { branch: CnfxBranch::Or, terms, e_in: e, e_out, bound });
    }
    let Some(j) = leaves.iter().position(|(l, _)| l.as_constant() != Some(false)) else {
        return precondition("decision list is constant 0");
    };
    let mut terms: Vec<Term> =
        dl.nodes[..j].iter().map(|n| Term::or(vec![Literal { var: n.var, positive: !n.value }])).collect();
    if let Some(n) = dl.nodes.get(j) {
        terms.push(Term::or(vec![Literal { var: n.var, positive: n.value }]));
    }
    terms.extend(leaves[j].0.to_term());
    let e_out = leaves[j].1.clone() * leaves[j].0.expectation();
    let bound = &e / BigRational::from_integer(3.into());
    if e_out < bound {
        return invariant(format!("AND-XOR extraction kept {e_out} < E/3 for E = {e}"));
    }
    Ok(CnfxPiece { branch: CnfxBranch::AndXor, terms, e_in: e, e_out, bound })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReductionCertificate {
    pub n: usize,
    pub k: usize,
    pub prefix_vars: Vec<usize>,
    /// Original variable of each variable of `g`.
    pub var_map: Vec<usize>,
    pub g: XorCnf,
    #[serde(with = "ratio_serde")]
    pub e_f: BigRational,
    #[serde(with = "ratio_serde")]
    pub e_g: BigRational,
    pub sudden_death: SuddenDeathOutcome,
    pub intersection: IntersectionOutcome,
    pub pieces: Vec<CnfxPiece>,
    /// `log2` of the composed lower bound on `E[g]` from the three steps.
    pub log2_composed_bound: f64,
    /// `log E[g] / log(E[f]/n)`: the exponent actually achieved.
    pub achieved_exponent: f64,
    /// Exponent `c` with `(E[f]/n)^c` equal to the composed bound.
    pub pipeline_exponent: f64,
    /// Exhaustive check of `0^k ∘ g^{-1}(1) ⊆ f^{-1}(1)`; `None` above the size limit.
    pub verified: Option<bool>,
}

/// All three steps, with the subset property checked exhaustively when `n <= 20`.
pub fn full_reduce(f: &Robp, eps: &BigRational) -> Result<ReductionCertificate> {
    if f.d() > 3 {
        return usage(format!("reduction handles width at most 3, got {}", f.d()));
    }
    let sd = sudden_death_reduce(f, eps)?;
    let it = intersection_reduce(&sd.g)?;
    let mut terms: Vec<Term> = it.fixed.iter().map(|&l| Term::or(vec![l])).collect();
    let mut pieces = Vec::with_capacity(it.segments.len());
    for seg in &it.segments {
        let dl = width2_to_decision_list(&seg.program, &seg.vars)?;
        let piece = dl_to_cnfx(&dl)?;
        terms.extend(piece.terms.iter().cloned());
        pieces.push(piece);
    }
    let n2 = sd.g.len();
    let g = XorCnf::new(n2, terms)?;
    let e_g = g.exact_expectation();
    let e14 = (0..14).fold(BigRational::one(), |a, _| a * &it.e_out);
    if e_g < e14 {
        return invariant(format!("CNF⊕ step kept E = {e_g} < E^14"));
    }
    let verified = if n2 <= MAX_VERIFY_VARS {
        let ok = check_prefix_subset(f, &sd.prefix_vars, &sd.var_map, &|y| g.eval(y))?;
        if !ok {
            return invariant("0^k ∘ g^{-1}(1) is not contained in f^{-1}(1)");
        }
        Some(ok)
    } else {
        None
    };
    let n = f.len();
    let log2_base = log2_ratio(&sd.e_f) - (n as f64).log2();
    let log2_sd = log2_ratio(&sd.proven_bound);
    let log2_composed_bound = 14.0 * 13.0 * (log2_sd - 1.0);
    let log2_eg = log2_ratio(&e_g);
    Ok(ReductionCertificate {
        n,
        k: sd.k,
        prefix_vars: sd.prefix_vars.clone(),
        var_map: sd.var_map.clone(),
        g,
        e_f: sd.e_f.clone(),
        e_g,
        log2_composed_bound,
        achieved_exponent: if log2_base == 0.0 { 0.0 } else { log2_eg / log2_base },
        pipeline_exponent: if log2_base == 0.0 { 0.0 } else { log2_composed_bound / log2_base },
        sudden_death: sd,
        intersection: it,
        pieces,
        verified,
    })
}

/// Hitting-set generator: `r` false signs, then the first `n - r` outputs of a
/// CNF⊕ generator on `n` variables. `r` is the first `ceil(log2 n)` seed bits
/// read as an integer, reduced mod `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HsgParams {
    pub n: usize,
    pub epsilon: f64,
    pub r_bits: usize,
    pub prg: RcnfGenParams,
}

impl HsgParams {
    pub fn new(n: usize, epsilon: f64, prg: RcnfGenParams) -> Result<Self> {
        if prg.n != n {
            return usage(format!("generator is for {} variables, not {n}", prg.n));
        }
        let r_bits = (usize::BITS - (n - 1).leading_zeros()) as usize;
        Ok(HsgParams { n, epsilon, r_bits, prg })
    }

    /// Desk preset: one round with field degrees `(2, 2, 5)`.
    pub fn desk(n: usize, epsilon: f64) -> Result<Self> {
        let prg = RcnfGenParams::with_degrees(n, epsilon, 1, DESK_HSG_DEGREES, RcnfConstants::default())?;
        Self::new(n, epsilon, prg)
    }

    pub fn seed_bits(&self) -> usize {
        self.r_bits + self.prg.seed_bits()
    }

    pub fn decode_r(&self, seed: &Seed) -> usize {
        seed.read_u64(0, self.r_bits) as usize % self.n
    }

    pub fn sample(&self, seed: &Seed) -> Result<SignVector> {
        if seed.len() != self.seed_bits() {
            return usage(format!("seed has {} bits, generator needs {}", seed.len(), self.seed_bits()));
        }
        let r = self.decode_r(seed);
        let y = self.prg.sample_for_xorcnf(&seed.slice(self.r_bits, self.prg.seed_bits()))?;
        let mut x = SignVector::all_false(self.n);
        for i in 0..self.n - r {
            x.set(r + i, y.get(i));
        }
        Ok(x)
    }

    /// `(r, multiplicity)` over all values of the `r` block.
    pub fn r_multiplicities(&self) -> Vec<u64> {
        let mut m = vec![0u64; self.n];
        for v in 0..1usize << self.r_bits {
            m[v % self.n] += 1;
        }
        m
    }

    /// Seeds whose output satisfies `pred` (on packed false-positions), out of
    /// `2^seed_bits`. Needs `n <= 20`.
    pub fn count_hits(&self, pred: &(dyn Fn(u64) -> bool + Sync)) -> Result<u64> {
        let hist = self.prg.output_histogram()?;
        let n = self.n;
        let mult = self.r_multiplicities();
        let full = (1u64 << n) - 1;
        Ok((0..n)
            .filter(|&r| mult[r] > 0)
            .map(|r| {
                let prefix = (1u64 << r) - 1;
                let keep = (1u64 << (n - r)) - 1;
                let hits: u64 = hist
                    .par_iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .filter(|(y, _)| pred((prefix | ((*y as u64 & keep) << r)) & full))
                    .map(|(_, &c)| c)
                    .sum();
                hits * mult[r]
            })
            .sum())
    }
}

pub const DESK_HSG_DEGREES: [u32; 3] = [2, 2, 5];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::brute_expectation;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn eps(num: i64, den: i64) -> BigRational {
        ratio(num, den)
    }

    /// Width-3 program for `x0 ∧ x1 ∧ ... ∧ x_{n-1}`.
    fn and_program(n: usize) -> Robp {
        let mut next = vec![vec![[1, 0]]];
        for t in 1..n {
            let (ok, bad) = if t + 1 == n { (ACC, REJ) } else { (0, 2) };
            next.push(vec![[bad, ok], [bad, bad], [bad, bad]]);
        }
        Robp::new(n, 3, None, next, false).unwrap()
    }

    fn random_with_mass(n: usize, seed: u64, min: &BigRational) -> Robp {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        loop {
            let p = crate::models::random_robp(n, 3, false, &mut rng);
            if p.exact_expectation() >= *min {
                return p;
            }
        }
    }

    #[test]
    fn and_reduces_to_literals() {
        let f = and_program(3);
        let cert = full_reduce(&f, &eps(1, 8)).unwrap();
        assert_eq!(cert.e_g, cert.e_f);
        assert_eq!(cert.verified, Some(true));
        assert!(cert.g.terms().iter().all(|t| t.lits.len() == 1));
    }

    #[test]
    fn constant_one_program() {
        let next = vec![vec![[0, 1]], vec![[0, 0], [1, 1], [2, 2]], vec![[ACC, ACC], [ACC, ACC], [REJ, REJ]]];
        let f = Robp::new(3, 3, None, next, false).unwrap();
        let sd = sudden_death_reduce(&f, &eps(1, 2)).unwrap();
        assert!(sd.e_g >= ratio(1, 6));
        let cert = full_reduce(&f, &eps(1, 2)).unwrap();
        assert_eq!(cert.verified, Some(true));
    }

    #[test]
    fn threshold_epsilon_is_accepted() {
        let f = and_program(2);
        assert!(sudden_death_reduce(&f, &eps(1, 4)).is_ok());
        assert!(sudden_death_reduce(&f, &eps(1, 3)).is_err());
    }

    #[test]
    fn parity_is_a_single_leaf() {
        // x0 ⊕ x1 ⊕ x2 = 1
        let next = vec![vec![[0, 1]], vec![[0, 1], [1, 0]], vec![[REJ, ACC], [ACC, REJ]]];
        let p = Robp::new(3, 2, None, next, false).unwrap();
        let dl = width2_to_decision_list(&p, &[0, 1, 2]).unwrap();
        assert!(dl.nodes.is_empty());
        assert_eq!(dl.last, Affine { vars: vec![0, 1, 2], constant: false });
        let piece = dl_to_cnfx(&dl).unwrap();
        assert_eq!(piece.branch, CnfxBranch::AndXor);
        assert_eq!(piece.e_out, ratio(1, 2));
    }

    #[test]
    fn and_of_two_decision_list() {
        let next = vec![vec![[1, 0]], vec![[REJ, ACC], [REJ, REJ]]];
        let p = Robp::new(2, 2, None, next, false).unwrap();
        let dl = width2_to_decision_list(&p, &[0, 1]).unwrap();
        assert_eq!(dl.variables(), vec![1]);
        assert_eq!(dl.nodes[0].leaf, Affine::constant(false));
        for x in 0..4 {
            let xv = SignVector::from_packed(2, x);
            assert_eq!(dl.eval(&xv), p.eval(&xv));
        }
    }

    #[test]
    fn or_decision_list_has_true_leaves() {
        // x0 ∨ x1 ∨ x2
        let next = vec![vec![[0, 1]], vec![[0, 1], [1, 1]], vec![[REJ, ACC], [ACC, ACC]]];
        let p = Robp::new(3, 2, None, next, false).unwrap();
        let dl = width2_to_decision_list(&p, &[0, 1, 2]).unwrap();
        assert!(dl.nodes.iter().all(|n| n.leaf == Affine::constant(true)));
        let piece = dl_to_cnfx(&dl).unwrap();
        assert_eq!(piece.branch, CnfxBranch::Or);
        // the final parity leaf is dropped, so only two literals remain
        assert_eq!(piece.e_out, ratio(3, 4));
    }

    #[test]
    fn constant_lists() {
        let one = DecisionList { nodes: vec![], last: Affine::constant(true) };
        assert!(dl_to_cnfx(&one).unwrap().terms.is_empty());
        let zero = DecisionList { nodes: vec![], last: Affine::constant(false) };
        assert!(dl_to_cnfx(&zero).is_err());
    }

    #[test]
    fn no_bad_states() {
        // x0 and x1 both free, accept always: no edge into a dead state.
        let next = vec![vec![[0, 0]], vec![[0, 0], [0, 0], [2, 2]], vec![[ACC, ACC], [ACC, ACC], [REJ, REJ]]];
        let g = Robp::new(3, 3, None, next, true).unwrap();
        let a = bad_state_analysis(&g).unwrap();
        assert!(a.bad.is_empty());
        let it = intersection_reduce(&g).unwrap();
        assert!(it.fixed.is_empty());
        for x in 0..8 {
            let xv = SignVector::from_packed(3, x);
            assert_eq!(it.eval(&xv), g.eval(&xv));
        }
    }

    #[test]
    fn one_frequent_bad_state() {
        // layer 1 reads x1: state 0 rejects on false; accepted inputs always pass it.
        let next = vec![vec![[0, 0]], vec![[2, 0], [2, 2], [2, 2]], vec![[ACC, ACC], [REJ, REJ], [REJ, REJ]]];
        let g = Robp::new(3, 3, None, next, true).unwrap();
        let a = bad_state_analysis(&g).unwrap();
        assert_eq!(a.bad_large, vec![(1, 0)]);
        let q = g.conditional_visit_probs().unwrap();
        assert_eq!(q[1][0], ratio(1, 1));
        let it = intersection_reduce(&g).unwrap();
        assert_eq!(it.fixed, vec![Literal::pos(1)]);
        assert_eq!(it.e_out, g.exact_expectation());
    }

    #[test]
    fn hsg_prefix_decoding() {
        let h = HsgParams::desk(10, 0.25).unwrap();
        assert_eq!(h.r_bits, 4);
        let bits = h.seed_bits();
        let s0 = Seed::from_index(0, bits);
        let x = h.sample(&s0).unwrap();
        let y = h.prg.sample(&s0.slice(4, h.prg.seed_bits())).unwrap();
        assert_eq!(x, y);
        let s9 = Seed::from_index(9, bits);
        let x = h.sample(&s9).unwrap();
        assert!((0..9).all(|i| x.is_false(i)));
        assert_eq!(x.get(9), h.prg.sample(&s9.slice(4, h.prg.seed_bits())).unwrap().get(0));
    }

    #[test]
    fn hsg_counts_match_direct_sampling() {
        let h = HsgParams::desk(6, 0.25).unwrap();
        let f = random_with_mass(6, 5, &ratio(1, 4));
        let direct = (0..1u64 << h.seed_bits())
            .filter(|&s| f.eval(&h.sample(&Seed::from_index(s, h.seed_bits())).unwrap()))
            .count() as u64;
        assert_eq!(h.count_hits(&|x| f.eval_packed(x)).unwrap(), direct);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn chain_certificates_validate(n in 2usize..11, seed in any::<u64>()) {
            let f = random_with_mass(n, seed, &ratio(1, 4));
            let cert = full_reduce(&f, &ratio(1, 4)).unwrap();
            prop_assert_eq!(cert.verified, Some(true));
            prop_assert!(cert.e_g.is_positive());
        }

        #[test]
        fn sudden_death_is_below_f(n in 2usize..10, seed in any::<u64>()) {
            let f = random_with_mass(n, seed, &ratio(1, 8));
            let sd = sudden_death_reduce(&f, &ratio(1, 8)).unwrap();
            prop_assert!(sd.g.is_sudden_death());
            prop_assert!(check_prefix_subset(&f, &sd.prefix_vars, &sd.var_map, &|y| sd.g.eval(y)).unwrap());
            prop_assert_eq!(sd.e_g.clone(), brute_expectation(&sd.g));
        }

        #[test]
        fn decision_lists_match_programs(n in 1usize..10, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = crate::models::random_robp(n, 2, true, &mut rng);
            let vars: Vec<usize> = (0..n).collect();
            let dl = width2_to_decision_list(&p, &vars).unwrap();
            for x in 0..1u64 << n {
                let xv = SignVector::from_packed(n, x);
                prop_assert_eq!(dl.eval(&xv), p.eval(&xv));
            }
            prop_assert_eq!(dl.expectation(), p.exact_expectation());
            if dl.expectation().is_positive() {
                let piece = dl_to_cnfx(&dl).unwrap();
                let g = XorCnf::new(n, piece.terms.clone()).unwrap();
                for x in 0..1u64 << n {
                    let xv = SignVector::from_packed(n, x);
                    prop_assert!(!g.eval(&xv) || p.eval(&xv));
                }
                prop_assert_eq!(g.exact_expectation(), piece.e_out);
            }
        }

        #[test]
        fn intersection_below_input(n in 2usize..11, seed in any::<u64>()) {
            let f = random_with_mass(n, seed, &ratio(1, 4));
            let sd = sudden_death_reduce(&f, &ratio(1, 4)).unwrap();
            let it = intersection_reduce(&sd.g).unwrap();
            let m = sd.g.len();
            let mut hits = 0u64;
            for x in 0..1u64 << m {
                let xv = SignVector::from_packed(m, x);
                let v = it.eval(&xv);
                prop_assert!(!v || sd.g.eval(&xv));
                hits += v as u64;
            }
            prop_assert_eq!(ratio(hits as i64, 1) * inv_pow2(m), it.e_out);
        }

        #[test]
        fn bad_mass_is_expected_bad_count(n in 2usize..11, seed in any::<u64>()) {
            let f = random_with_mass(n, seed, &ratio(1, 4));
            let g = sudden_death_reduce(&f, &ratio(1, 4)).unwrap().g;
            let a = bad_state_analysis(&g).unwrap();
            // enumerate accepting inputs and count bad states on their paths
            let m = g.len();
            let (mut total, mut acc) = (0u64, 0u64);
            for x in 0..1u64 << m {
                let xv = SignVector::from_packed(m, x);
                if g.eval(&xv) {
                    let path = g.path(&xv);
                    total += path.iter().enumerate().filter(|&(t, &s)| a.bad.contains(&(t, s))).count() as u64;
                    acc += 1;
                }
            }
            prop_assert_eq!(a.bad_mass.clone(), ratio(total as i64, acc as i64));
            let (all, accepting) = bad_count_distribution(&g, &a.bad);
            prop_assert_eq!(all.iter().sum::<u128>(), 1u128 << m);
            prop_assert_eq!(accepting.iter().sum::<u128>(), acc as u128);
            for t in 1..all.len() {
                let tail: u128 = all[t..].iter().sum();
                prop_assert!(tail << (t - 1) <= 1u128 << m);
            }
        }

        #[test]
        fn small_reject_lowers_by_at_most_mu(n in 2usize..9, seed in any::<u64>(), pick in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = crate::models::random_robp(n, 3, false, &mut rng).sorted_by_acceptance();
            let probs = f.accept_prob_all_states();
            let r: Vec<(usize, usize)> = (1..n)
                .flat_map(|t| (0..3).map(move |s| (t, s)))
                .filter(|&(t, s)| pick >> ((t * 3 + s) % 64) & 1 == 1)
                .collect();
            let mu = r.iter().map(|&(t, s)| probs[t][s].clone()).fold(BigRational::zero(), |a, b| if b > a { b } else { a });
            let f2 = convert_to_rej(&f, &r).unwrap();
            let after = f2.accept_prob_all_states();
            for t in 0..=n {
                for s in 0..f.width(t) {
                    prop_assert!(after[t][s] >= &probs[t][s] - &mu);
                }
            }
        }
    }
}
