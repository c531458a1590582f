//! Elementary symmetric polynomials, power sums, moment bounds and truncation.

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// Coefficient type for the exact (rational) and floating-point modes.
pub trait Scalar: Clone + Debug + Num + Signed + PartialOrd + FromPrimitive + Send + Sync {
    fn to_f64_lossy(&self) -> f64;
}

impl Scalar for f64 {
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn from_usize<T: Scalar>(v: usize) -> T {
    T::from_usize(v).expect("small integer")
}

fn pow<T: Scalar>(x: &T, e: usize) -> T {
    (0..e).fold(T::one(), |acc, _| acc * x.clone())
}

/// `S_0..S_k`, read off `prod_i (1 + z_i t)` truncated at degree `k`.
pub fn elem_sym_all<T: Scalar>(z: &[T], k: usize) -> Vec<T> {
    let mut s = vec![T::zero(); k + 1];
    s[0] = T::one();
    for (i, zi) in z.iter().enumerate() {
        for j in (1..=k.min(i + 1)).rev() {
            let add = s[j - 1].clone() * zi.clone();
            s[j] = s[j].clone() + add;
        }
    }
    s
}

/// `E_0..E_k` with `E_j = sum_i z_i^j` (so `E_0 = m`).
pub fn power_sums<T: Scalar>(z: &[T], k: usize) -> Vec<T> {
    let mut e = vec![T::zero(); k + 1];
    for zi in z {
        let mut p = T::one();
        for ej in e.iter_mut() {
            *ej = ej.clone() + p.clone();
            p = p * zi.clone();
        }
    }
    e
}

/// Residuals `S_j - (1/j) sum_{i=1..j} (-1)^(i-1) S_{j-i} E_i` for `j = 1..=k`.
pub fn newton_girard_residual<T: Scalar>(z: &[T], k: usize) -> Vec<T> {
    let s = elem_sym_all(z, k);
    let e = power_sums(z, k);
    (1..=k)
        .map(|j| {
            let mut acc = T::zero();
            for i in 1..=j {
                let term = s[j - i].clone() * e[i].clone();
                if i % 2 == 1 {
                    acc = acc + term;
                } else {
                    acc = acc - term;
                }
            }
            s[j].clone() - acc / from_usize::<T>(j)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum S1S2Outcome {
    /// Hypothesis held and `|S_j| <= mu^j` for every `j >= 2`. `worst_ratio` is
    /// the largest `|S_j| / mu^j` seen.
    Holds { worst_ratio: f64 },
    Violated { j: usize, value: f64, bound: f64 },
    /// `|sum z| <= mu` or `sum z^2 <= mu^2` failed; nothing to check.
    Precondition { reason: String },
}

/// Checks `|S_j| <= mu^j (1 + tol)` for `j = 2..=m` when `|sum z| <= mu` and
/// `sum z^2 <= mu^2`. Use `tol = 0` with rationals.
pub fn check_s1s2_bound<T: Scalar>(z: &[T], mu: &T, tol: f64) -> S1S2Outcome {
    let m = z.len();
    let e = power_sums(z, 2);
    let s1: T = z.iter().cloned().fold(T::zero(), |a, b| a + b);
    if s1.abs() > *mu {
        return S1S2Outcome::Precondition { reason: "|sum z| > mu".into() };
    }
    if e[2] > mu.clone() * mu.clone() {
        return S1S2Outcome::Precondition { reason: "sum z^2 > mu^2".into() };
    }
    let s = elem_sym_all(z, m);
    let slack = T::from_f64(1.0 + tol).expect("finite tolerance");
    let mut worst = 0f64;
    for j in 2..=m {
        let bound = pow(mu, j);
        if s[j].abs() > bound.clone() * slack.clone() {
            return S1S2Outcome::Violated { j, value: s[j].to_f64_lossy(), bound: bound.to_f64_lossy() };
        }
        if !bound.is_zero() {
            worst = worst.max(s[j].abs().to_f64_lossy() / bound.to_f64_lossy());
        }
    }
    S1S2Outcome::Holds { worst_ratio: worst }
}

/// `P = sum_i c_i S_i` with `|c_i| <= C`, truncated at degree `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TruncationSpec {
    pub k: usize,
    pub coefficients: Vec<f64>,
    pub coeff_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TruncatedValue {
    pub full: f64,
    pub truncated: f64,
    /// `C sum_{l=k+1..m} delta^(l/k)`, present when the good event holds.
    pub tail_bound: Option<f64>,
    pub good_event: bool,
}

/// Evaluates `P` and `P_<=k` at `z`. The tail bound applies when
/// `|sum z| <= delta^(1/k)` and `sum z^2 <= delta^(2/k)`.
pub fn truncated_eval(spec: &TruncationSpec, z: &[f64], delta: f64) -> Result<TruncatedValue> {
    if spec.k == 0 {
        return usage("truncation degree must be positive");
    }
    if spec.coefficients.iter().any(|c| c.abs() > spec.coeff_bound) {
        return usage("coefficient exceeds the declared bound C");
    }
    let m = spec.coefficients.len().saturating_sub(1).max(z.len());
    let s = elem_sym_all(z, m);
    let at = |i: usize| spec.coefficients.get(i).copied().unwrap_or(0.0) * s[i];
    let full: f64 = (0..=m).map(at).sum();
    let truncated: f64 = (0..=spec.k.min(m)).map(at).sum();
    let mu = delta.powf(1.0 / spec.k as f64);
    let s1: f64 = z.iter().sum();
    let s2: f64 = z.iter().map(|v| v * v).sum();
    let good = s1.abs() <= mu && s2 <= mu * mu;
    let tail_bound = good.then(|| {
        spec.coeff_bound * (spec.k + 1..=m).map(|l| delta.powf(l as f64 / spec.k as f64)).sum::<f64>()
    });
    Ok(TruncatedValue { full, truncated, tail_bound, good_event: good })
}

/// A mean-zero variable with finite support and its certified scale `sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteVar<T> {
    pub values: Vec<T>,
    pub probs: Vec<T>,
    pub sigma: T,
}

impl<T: Scalar> FiniteVar<T> {
    pub fn moment(&self, p: usize) -> T {
        self.values
            .iter()
            .zip(&self.probs)
            .fold(T::zero(), |a, (v, q)| a + q.clone() * pow(v, p))
    }

    pub fn variance(&self) -> T {
        self.moment(2) - pow(&self.moment(1), 2)
    }

    /// The same variable shifted to mean zero.
    pub fn centered(&self) -> Self {
        let mu = self.moment(1);
        FiniteVar {
            values: self.values.iter().map(|v| v.clone() - mu.clone()).collect(),
            probs: self.probs.clone(),
            sigma: self.sigma.clone(),
        }
    }
}

fn binom(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Moments `0..=p` of a sum of independent variables, each given by its moments.
fn sum_moments<T: Scalar>(parts: &[Vec<T>], p: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); p + 1];
    acc[0] = T::one();
    for m in parts {
        let mut next = vec![T::zero(); p + 1];
        for (q, slot) in next.iter_mut().enumerate() {
            for j in 0..=q {
                let c = T::from_u128(binom(q, j)).expect("binomial fits");
                *slot = slot.clone() + c * acc[j].clone() * m[q - j].clone();
            }
        }
        acc = next;
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MomentRow {
    pub k: usize,
    /// `E[g_i^(2k')] <= (2k')^(2k') sigma_i^(2k')` for every `k' <= k` and every `i`.
    pub certified: bool,
    pub sum_moment: f64,
    pub sum_bound: f64,
    pub square_moment: f64,
    pub square_bound: f64,
    pub holds: bool,
}

/// For each `k` in `ks` (all `>= 2`): `E[(sum g)^(2k)]` against
/// `(2k)^(4k) (sum sigma^2)^k` and `E[(sum g^2)^k]` against `(2k)^(3k) (sum sigma^2)^k`.
pub fn moment_sweep<T: Scalar>(vars: &[FiniteVar<T>], ks: &[usize]) -> Result<Vec<MomentRow>> {
    if ks.iter().any(|&k| k < 2) {
        return usage("moment sweep needs k >= 2");
    }
    for v in vars {
        if !v.moment(1).is_zero() && v.moment(1).abs().to_f64_lossy() > 1e-12 {
            return usage("moment sweep needs mean-zero variables");
        }
    }
    let sig2: T = vars.iter().fold(T::zero(), |a, v| a + v.sigma.clone() * v.sigma.clone());
    let mut rows = Vec::new();
    for &k in ks {
        let certified = vars.iter().all(|v| {
            (1..=k).all(|kk| {
                let lhs = v.moment(2 * kk);
                let rhs = pow(&from_usize::<T>(2 * kk), 2 * kk) * pow(&v.sigma, 2 * kk);
                lhs <= rhs
            })
        });
        let lin: Vec<Vec<T>> = vars.iter().map(|v| (0..=2 * k).map(|p| v.moment(p)).collect()).collect();
        let sq: Vec<Vec<T>> = vars.iter().map(|v| (0..=k).map(|p| v.moment(2 * p)).collect()).collect();
        let sum_moment = sum_moments(&lin, 2 * k)[2 * k].clone();
        let square_moment = sum_moments(&sq, k)[k].clone();
        let base = pow(&sig2, k);
        let kk = from_usize::<T>(2 * k);
        let sum_bound = pow(&kk, 4 * k) * base.clone();
        let square_bound = pow(&kk, 3 * k) * base;
        rows.push(MomentRow {
            k,
            certified,
            holds: sum_moment <= sum_bound && square_moment <= square_bound,
            sum_moment: sum_moment.to_f64_lossy(),
            sum_bound: sum_bound.to_f64_lossy(),
            square_moment: square_moment.to_f64_lossy(),
            square_bound: square_bound.to_f64_lossy(),
        });
    }
    Ok(rows)
}

/// Gram matrix `E[S_i S_j]` for `i, j <= k` under the product distribution,
/// by enumerating the joint support.
pub fn symmetric_gram<T: Scalar>(vars: &[FiniteVar<T>], k: usize) -> Vec<Vec<T>> {
    let mut gram = vec![vec![T::zero(); k + 1]; k + 1];
    let mut idx = vec![0usize; vars.len()];
    loop {
        let z: Vec<T> = vars.iter().zip(&idx).map(|(v, &i)| v.values[i].clone()).collect();
        let p = vars.iter().zip(&idx).fold(T::one(), |a, (v, &i)| a * v.probs[i].clone());
        let s = elem_sym_all(&z, k);
        for i in 0..=k {
            for j in 0..=k {
                gram[i][j] = gram[i][j].clone() + p.clone() * s[i].clone() * s[j].clone();
            }
        }
        let mut pos = 0;
        loop {
            if pos == vars.len() {
                return gram;
            }
            idx[pos] += 1;
            if idx[pos] < vars[pos].values.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Clause-bias variable of a width-`w` clause split in halves: `1` with
/// probability `1 - 2^(-w/2)`, else `1 - 2^(-w/2)`. Mean `1 - 2^(-w)`; `w` even.
pub fn half_clause_bias_var(w: usize) -> FiniteVar<BigRational> {
    assert!(w % 2 == 0 && w >= 2);
    let h = crate::rational::inv_pow2(w / 2);
    let one = BigRational::one();
    let v = FiniteVar {
        values: vec![one.clone(), one.clone() - h.clone()],
        probs: vec![one.clone() - h.clone(), h.clone()],
        sigma: BigRational::zero(),
    };
    let var = v.variance();
    let mut c = v.centered();
    c.sigma = sqrt_upper(&var);
    c
}

/// A rational no smaller than `sqrt(x)`, within a factor `1 + 2^-20`.
pub fn sqrt_upper(x: &BigRational) -> BigRational {
    if x.is_zero() {
        return BigRational::zero();
    }
    let f = x.to_f64().unwrap_or(0.0).sqrt() * (1.0 + 2f64.powi(-30));
    let mut r = BigRational::from_float(f).expect("finite");
    while r.clone() * r.clone() < *x {
        r = r.clone() * BigRational::new(1_048_577.into(), 1_048_576.into());
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    // S_j as a sum over j-subsets.
    fn brute_sym(z: &[BigRational], j: usize) -> BigRational {
        let m = z.len();
        (0u32..1 << m)
            .filter(|s| s.count_ones() as usize == j)
            .map(|s| (0..m).filter(|i| s >> i & 1 == 1).fold(BigRational::one(), |a, i| a * z[i].clone()))
            .sum()
    }

    fn rationals(v: &[i64]) -> Vec<BigRational> {
        v.iter().map(|&x| ratio(x, 7)).collect()
    }

    #[test]
    fn small_examples() {
        let z = rationals(&[7, 14, 21]);
        let s = elem_sym_all(&z, 4);
        assert_eq!(s, vec![ratio(1, 1), ratio(6, 1), ratio(11, 1), ratio(6, 1), ratio(0, 1)]);
        assert!(elem_sym_all::<f64>(&[], 2) == vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn s1s2_precondition_is_not_failure() {
        let z = vec![1.0, 1.0];
        assert!(matches!(check_s1s2_bound(&z, &1.0, 0.0), S1S2Outcome::Precondition { .. }));
    }

    #[test]
    fn coin_flip_moments() {
        let sigma = ratio(1, 3);
        let var = FiniteVar { values: vec![sigma.clone(), -sigma.clone()], probs: vec![ratio(1, 2), ratio(1, 2)], sigma };
        let rows = moment_sweep(&vec![var; 4], &[2, 3]).unwrap();
        // E[(sum g)^4] = 3 m^2 s^4 - 2 m s^4 for m = 4 signs of size 1/3
        assert_eq!(rows[0].sum_moment, (3.0 * 16.0 - 8.0) / 81.0);
        assert!(rows.iter().all(|r| r.certified && r.holds));
        assert!(moment_sweep::<BigRational>(&[], &[1]).is_err());
    }

    #[test]
    fn tribes_intro_variance() {
        let v = half_clause_bias_var(4);
        assert_eq!(v.variance(), ratio(3, 256));
        let total: BigRational = (0..8).map(|_| v.variance()).sum();
        assert_eq!(total, ratio(3, 32));
        // within a factor 2 of m 2^(-3w/2)
        let scale = ratio(8, 64);
        assert!(total.clone() <= scale.clone() && total * ratio(2, 1) >= scale);
        let rows = moment_sweep(&vec![v; 8], &[2, 3]).unwrap();
        assert!(rows.iter().all(|r| r.holds));
    }

    #[test]
    fn orthogonality_of_symmetric_polys() {
        let s = ratio(1, 2);
        let coin = FiniteVar { values: vec![s.clone(), -s.clone()], probs: vec![ratio(1, 2), ratio(1, 2)], sigma: s };
        let skew = FiniteVar { values: vec![ratio(3, 1), ratio(-1, 1)], probs: vec![ratio(1, 4), ratio(3, 4)], sigma: ratio(2, 1) };
        let vars = vec![coin.clone(), skew.clone(), coin, skew.clone(), skew];
        let g = symmetric_gram(&vars, 5);
        for i in 0..=5 {
            for j in 0..=5 {
                if i != j {
                    assert!(g[i][j].is_zero(), "E[S_{i} S_{j}] = {}", g[i][j]);
                }
            }
        }
    }

    #[test]
    fn truncation_tail() {
        let spec = TruncationSpec { k: 3, coefficients: vec![0.5, -1.0, 1.0, 0.25, -0.75, 1.0, 0.5], coeff_bound: 1.0 };
        let z = [0.05, -0.04, 0.03, 0.02, -0.06, 0.01];
        let v = truncated_eval(&spec, &z, 0.1).unwrap();
        assert!(v.good_event);
        let tail = v.tail_bound.unwrap();
        assert!((v.full - v.truncated).abs() <= tail);
        assert!(tail <= 2.0 * 0.1);
    }

    proptest! {
        #[test]
        fn rational_identities(v in proptest::collection::vec(-20i64..20, 0..9)) {
            let z = rationals(&v);
            let k = z.len() + 2;
            let s = elem_sym_all(&z, k);
            for j in 0..=k {
                prop_assert_eq!(&s[j], &brute_sym(&z, j));
            }
            for r in newton_girard_residual(&z, k) {
                prop_assert!(r.is_zero());
            }
        }

        #[test]
        fn float_newton_small(v in proptest::collection::vec(-1.0f64..1.0, 1..10)) {
            for r in newton_girard_residual(&v, v.len()) {
                prop_assert!(r.abs() < 1e-9);
            }
        }

        #[test]
        fn s1s2_never_violated(v in proptest::collection::vec(-30i64..30, 1..10)) {
            let z: Vec<BigRational> = v.iter().map(|&x| ratio(x, 10)).collect();
            let s2: BigRational = z.iter().map(|x| x * x).sum();
            let s1: BigRational = z.iter().cloned().sum();
            let mu = sqrt_upper(&s2).max(s1.abs());
            let holds = matches!(check_s1s2_bound(&z, &mu, 0.0), S1S2Outcome::Holds { .. });
            prop_assert!(holds);
        }
    }
}
