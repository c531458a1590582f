//! Generator for read-once CNFs (and CNFs with parity terms) by iterated
//! pseudorandom restrictions.
//!
//! Round `t` draws a set `J_t` from a subset sampler with `alpha = 2^-b` and a
//! small-bias string `z^t`. Positions first claimed in round `t`
//! (`I_t = J_t` minus earlier rounds) take their values from `z^t`; every
//! position left unclaimed after `T` rounds takes its value from a final
//! small-bias string `y`. All blocks are independent parts of the seed.
//!
//! Seed layout: `z^1..z^T`, then `J_1..J_T`, then `y`, each block in the seed
//! format of its space.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{IndexSet, Seed, Sign, SignVector};
use crate::error::{usage, Error, Result};
use crate::smallbias::{field_degree_for, BiasedSpaceSpec, SubsetSamplerSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FloorPolicy {
    /// Raise any bias below the floor to the floor and record it.
    #[default]
    Clamp,
    /// Refuse parameters that would fall below the floor.
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RcnfConstants {
    /// Rounds `T = ceil(C log2 log2 n)`.
    pub rounds_factor: f64,
    /// `delta = (eps/n)^c`.
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    pub bits_per_index: u32,
    /// Largest number of indices whose joint membership the sampler must respect.
    pub max_joint_arity: usize,
    pub bias_floor: f64,
    pub floor_policy: FloorPolicy,
}

impl Default for RcnfConstants {
    fn default() -> Self {
        RcnfConstants {
            rounds_factor: 1.0,
            c: 2.0,
            c1: 13.0,
            c2: 3.0,
            gamma: 0.125,
            bits_per_index: 5,
            max_joint_arity: 3,
            bias_floor: (-24f64).exp2(),
            floor_policy: FloorPolicy::Clamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RcnfGenParams {
    pub n: usize,
    pub epsilon: f64,
    pub rounds: usize,
    pub alpha: f64,
    /// Per-round error target `eps / T`.
    pub round_epsilon: f64,
    pub log2_delta: f64,
    pub log2_delta1: f64,
    pub log2_delta2: f64,
    /// `log2 L`, with `delta1 = eps / L` before flooring.
    pub log2_l: f64,
    /// `log2 M`, with `delta2 = M^(-c2 log2(1/eps))` before flooring.
    pub log2_m: f64,
    /// Names of the parameters raised to the floor.
    pub floored: Vec<String>,
    pub constants: RcnfConstants,
    pub z_space: BiasedSpaceSpec,
    pub sampler: SubsetSamplerSpec,
    pub y_space: BiasedSpaceSpec,
}

fn loglog(x: f64) -> f64 {
    x.max(4.0).log2().log2()
}

impl RcnfGenParams {
    /// Parameters from the analytic recipe, biases floored per the constants.
    pub fn derive(n: usize, epsilon: f64, constants: RcnfConstants) -> Result<Self> {
        if n == 0 {
            return usage("generator needs n >= 1");
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return usage(format!("epsilon must lie in (0, 1), got {epsilon}"));
        }
        let k = &constants;
        let rounds = ((k.rounds_factor * loglog(n as f64)).ceil() as usize).max(1);
        let eps = epsilon / rounds as f64;
        let n_f = n as f64;
        let log2_delta = k.c * (eps / n_f).log2();
        let ll = loglog(n_f / eps).max(1.0);
        let log2_l = k.c * ll * ll * (n_f / eps).log2();
        let log2_delta1 = eps.log2() - log2_l;
        let log2_m = k.c2 * rounds as f64 * (n_f / eps).log2().log2().max(0.0)
            + (1.0 - k.gamma).powi(rounds as i32) * n_f.log2();
        let log2_delta2 = -log2_m * k.c2 * (1.0 / eps).log2();
        let b = k.bits_per_index;
        let log2_sampler = log2_delta - (b as usize * k.max_joint_arity) as f64;

        let floor = k.bias_floor.log2();
        let mut floored = Vec::new();
        let mut pick = |name: &str, log2v: f64| -> Result<f64> {
            if log2v < floor {
                if k.floor_policy == FloorPolicy::Reject {
                    return Err(Error::Config(format!(
                        "{name} = 2^{log2v:.1} is below the bias floor 2^{floor:.1}; use a desk-scale preset"
                    )));
                }
                floored.push(name.to_string());
                Ok(floor)
            } else {
                Ok(log2v)
            }
        };
        let d1 = pick("delta1", log2_delta1)?;
        let d2 = pick("delta2", log2_delta2)?;
        let ds = pick("samplerBias", log2_sampler)?;

        let z_space = BiasedSpaceSpec::new(n, d1.exp2())?;
        let y_space = BiasedSpaceSpec::new(n, d2.exp2())?;
        let sampler_space = BiasedSpaceSpec::new(n * b as usize, ds.exp2())?;
        let sampler = SubsetSamplerSpec {
            n,
            bits_per_index: b,
            delta: (ds + (b as usize * k.max_joint_arity) as f64).exp2(),
            max_arity: k.max_joint_arity,
            space: sampler_space,
        };
        Ok(RcnfGenParams {
            n,
            epsilon,
            rounds,
            alpha: (-(b as f64)).exp2(),
            round_epsilon: eps,
            log2_delta,
            log2_delta1,
            log2_delta2,
            log2_l,
            log2_m,
            floored,
            constants,
            z_space,
            sampler,
            y_space,
        })
    }

    /// Same recipe with the rounds and the three field degrees set explicitly.
    /// The spaces then carry whatever bias those degrees guarantee.
    pub fn with_degrees(
        n: usize,
        epsilon: f64,
        rounds: usize,
        degrees: [u32; 3],
        constants: RcnfConstants,
    ) -> Result<Self> {
        if rounds == 0 {
            return usage("at least one round");
        }
        let mut p = Self::derive(n, epsilon, RcnfConstants { floor_policy: FloorPolicy::Clamp, ..constants })?;
        let [kz, kj, ky] = degrees;
        p.rounds = rounds;
        p.round_epsilon = epsilon / rounds as f64;
        p.z_space = BiasedSpaceSpec::with_degree(n, kz)?;
        p.y_space = BiasedSpaceSpec::with_degree(n, ky)?;
        p.sampler = SubsetSamplerSpec::with_space_degree(
            n,
            p.constants.bits_per_index,
            kj,
            p.constants.max_joint_arity,
        )?;
        p.floored = vec!["fieldDegrees".into()];
        Ok(p)
    }

    /// Desk preset: one round and field degrees `(3, 3, 7)`, 26 seed bits in
    /// total, so every seed can be enumerated.
    pub fn desk(n: usize, epsilon: f64) -> Result<Self> {
        Self::with_degrees(n, epsilon, 1, [3, 3, 7], RcnfConstants::default())
    }

    pub fn seed_bits(&self) -> usize {
        self.rounds * (self.z_space.seed_bits() + self.sampler.seed_bits()) + self.y_space.seed_bits()
    }

    /// Claimed error `delta1 * L * T + 2 eps T` over `T` rounds, with the
    /// biases actually guaranteed by the chosen field degrees.
    pub fn claimed_error(&self) -> f64 {
        let t = self.rounds as f64;
        self.z_space.bias_bound() * self.log2_l.exp2() * t + 2.0 * self.round_epsilon * t
    }

    fn check_seed(&self, seed: &Seed) -> Result<()> {
        if seed.len() != self.seed_bits() {
            return usage(format!("seed has {} bits, generator needs {}", seed.len(), self.seed_bits()));
        }
        Ok(())
    }

    fn blocks(&self, seed: &Seed) -> (Vec<Seed>, Vec<Seed>, Seed) {
        let (zb, jb) = (self.z_space.seed_bits(), self.sampler.seed_bits());
        let t = self.rounds;
        let z = (0..t).map(|i| seed.slice(i * zb, zb)).collect();
        let j = (0..t).map(|i| seed.slice(t * zb + i * jb, jb)).collect();
        let y = seed.slice(t * (zb + jb), self.y_space.seed_bits());
        (z, j, y)
    }

    pub fn restriction_trace(&self, seed: &Seed) -> Result<RestrictionTrace> {
        self.check_seed(seed)?;
        let (zs, js, ys) = self.blocks(seed);
        let mut claimed = IndexSet::empty();
        let mut rounds = Vec::new();
        let y = self.y_space.generate(&ys)?;
        let mut out = y.clone();
        for (zseed, jseed) in zs.iter().zip(&js) {
            let j = self.sampler.sample(jseed)?;
            let i = j.difference(&claimed);
            let z = self.z_space.generate(zseed)?;
            let values: Vec<(usize, Sign)> = i.iter().map(|v| (v, z.get(v))).collect();
            for &(v, s) in &values {
                out.set(v, s);
            }
            claimed = claimed.union(&i);
            rounds.push(RoundTrace { sampled: j, fresh: i, values });
        }
        Ok(RestrictionTrace { rounds, y, output: out })
    }

    pub fn sample(&self, seed: &Seed) -> Result<SignVector> {
        Ok(self.restriction_trace(seed)?.output)
    }

    /// Same as [`sample`](Self::sample); the generator is shared by both classes.
    pub fn sample_for_xorcnf(&self, seed: &Seed) -> Result<SignVector> {
        self.sample(seed)
    }

    /// Number of seeds whose output satisfies `pred`, enumerating the product of
    /// the component spaces. Needs `n <= 64`.
    pub fn count_accepting(&self, pred: &(dyn Fn(u64) -> bool + Sync)) -> Result<u64> {
        if self.n > 64 {
            return Err(Error::Limit("product enumeration needs n <= 64".into()));
        }
        let z = self.z_space.packed_table()?;
        let j = self.sampler.membership_table()?;
        let y = self.y_space.packed_table()?;
        let t = self.rounds;
        let outer = (j.len() as u128 * z.len() as u128).pow(t as u32);
        if outer > u64::MAX as u128 {
            return Err(Error::Limit("seed space too large".into()));
        }
        let count = (0..outer as u64)
            .into_par_iter()
            .map(|mut o| {
                let mut claimed = 0u64;
                let mut x = 0u64;
                for _ in 0..t {
                    let ji = (o % j.len() as u64) as usize;
                    o /= j.len() as u64;
                    let zi = (o % z.len() as u64) as usize;
                    o /= z.len() as u64;
                    let fresh = j[ji] & !claimed;
                    x |= z[zi] & fresh;
                    claimed |= fresh;
                }
                y.iter().filter(|&&yv| pred(x | (yv & !claimed))).count() as u64
            })
            .sum();
        Ok(count)
    }

    /// `hist[x]` = number of seeds whose packed output is `x`. Needs `n <= 20`.
    pub fn output_histogram(&self) -> Result<Vec<u64>> {
        if self.n > 20 {
            return Err(Error::Limit("output histogram needs n <= 20".into()));
        }
        let z = self.z_space.packed_table()?;
        let j = self.sampler.membership_table()?;
        let y = self.y_space.packed_table()?;
        let t = self.rounds;
        let outer = (j.len() as u128 * z.len() as u128).pow(t as u32);
        if outer > u64::MAX as u128 {
            return Err(Error::Limit("seed space too large".into()));
        }
        let size = 1usize << self.n;
        let mask = (size - 1) as u64;
        Ok((0..outer as u64)
            .into_par_iter()
            .fold(
                || vec![0u64; size],
                |mut h, mut o| {
                    let mut claimed = 0u64;
                    let mut x = 0u64;
                    for _ in 0..t {
                        let ji = (o % j.len() as u64) as usize;
                        o /= j.len() as u64;
                        let zi = (o % z.len() as u64) as usize;
                        o /= z.len() as u64;
                        let fresh = j[ji] & !claimed;
                        x |= z[zi] & fresh;
                        claimed |= fresh;
                    }
                    for &yv in &y {
                        h[((x | (yv & !claimed)) & mask) as usize] += 1;
                    }
                    h
                },
            )
            .reduce(
                || vec![0u64; size],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundTrace {
    /// `J_t`.
    pub sampled: IndexSet,
    /// `I_t`, the indices first claimed this round.
    pub fresh: IndexSet,
    pub values: Vec<(usize, Sign)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionTrace {
    pub rounds: Vec<RoundTrace>,
    pub y: SignVector,
    pub output: SignVector,
}

/// Field degree the recipe would pick for `n` outputs at bias `2^log2_bias`.
pub fn degree_for_log2_bias(n: usize, log2_bias: f64) -> Result<u32> {
    field_degree_for(n, log2_bias.exp2())
}
