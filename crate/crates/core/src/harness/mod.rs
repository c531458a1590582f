//! Exact advantage measurement, hitting sweeps and the experiment plumbing
//! behind the CLI.
//!
//! Every sweep is a pure function of its inputs and the [`HarnessConfig`];
//! parallel reductions only add integers, so results do not depend on the
//! number of worker threads.

pub mod corpus;
pub mod report;
pub mod suites;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{Seed, SignVector, FALSE};
use crate::bp3::{bad_count_distribution, bad_state_analysis, full_reduce, HsgParams, DESK_HSG_DEGREES};
use crate::cr_prg::{CrConstants, CrGenParams};
use crate::error::{file_error, precondition, usage, Error, Result};
use crate::models::{BooleanFunction, Model};
use crate::rational::{inv_pow2, to_f64};
use crate::rcnf_prg::{RcnfConstants, RcnfGenParams};
use crate::ratio_serde;
use crate::smallbias::BiasedSpaceSpec;

pub use corpus::CorpusEntry;

/// Runtime configuration, read from JSON. Missing fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct HarnessConfig {
    /// Largest seed length enumerated exhaustively.
    pub exhaustive_limit_bits: usize,
    /// Sample count for the statistical fallback; sized by Hoeffding when absent.
    pub samples: Option<u64>,
    /// Target half-width of the statistical confidence interval.
    pub sample_error: f64,
    pub confidence: f64,
    /// Seed of the sampling RNG in statistical mode.
    pub rng_seed: u64,
    /// Float tolerance of the numeric sweeps.
    pub tolerance: f64,
    pub rcnf: RcnfConstants,
    pub cr: CrConstants,
    /// Field degrees of the CNF⊕ generator inside the hitting-set generator.
    pub hsg_degrees: [u32; 3],
    /// The `c` in the target `delta = (eps/n)^c` reported by hitting sweeps.
    pub hsg_exponent: f64,
    /// Fill the `time_ms` column. Off by default so reports are reproducible.
    pub timing: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            exhaustive_limit_bits: 26,
            samples: None,
            sample_error: 0.01,
            confidence: 0.99,
            rng_seed: 0x5eed,
            tolerance: 1e-9,
            rcnf: RcnfConstants::default(),
            cr: CrConstants::default(),
            hsg_degrees: DESK_HSG_DEGREES,
            hsg_exponent: 2.0 * 13.0 * 14.0,
            timing: false,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(file_error(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Hoeffding sample count for the configured error and confidence.
    pub fn statistical_samples(&self) -> u64 {
        self.samples.unwrap_or_else(|| {
            let delta = 1.0 - self.confidence;
            ((2.0 / delta).ln() / (2.0 * self.sample_error * self.sample_error)).ceil() as u64
        })
    }
}

/// A seeded map into `{±1}^n`.
#[derive(Clone, Debug)]
pub enum Generator {
    /// The identity on `n` seed bits.
    Uniform { n: usize },
    /// Ignores its (empty) seed.
    Constant(SignVector),
    Biased(BiasedSpaceSpec),
    Rcnf(RcnfGenParams),
    Rect(CrGenParams),
    Hsg(HsgParams),
}

impl Generator {
    pub fn id(&self) -> &'static str {
        match self {
            Generator::Uniform { .. } => "uniform",
            Generator::Constant(_) => "constant",
            Generator::Biased(_) => "biased",
            Generator::Rcnf(_) => "rcnf",
            Generator::Rect(_) => "rect",
            Generator::Hsg(_) => "hsg",
        }
    }

    pub fn num_outputs(&self) -> usize {
        match self {
            Generator::Uniform { n } => *n,
            Generator::Constant(x) => x.len(),
            Generator::Biased(s) => s.n,
            Generator::Rcnf(p) => p.n,
            Generator::Rect(p) => p.m * p.w as usize,
            Generator::Hsg(h) => h.n,
        }
    }

    pub fn seed_bits(&self) -> usize {
        match self {
            Generator::Uniform { n } => *n,
            Generator::Constant(_) => 0,
            Generator::Biased(s) => s.seed_bits(),
            Generator::Rcnf(p) => p.seed_bits(),
            Generator::Rect(p) => p.seed_bits(),
            Generator::Hsg(h) => h.seed_bits(),
        }
    }

    pub fn sample(&self, seed: &Seed) -> Result<SignVector> {
        if seed.len() != self.seed_bits() {
            return usage(format!("{} generator needs {} seed bits, got {}", self.id(), self.seed_bits(), seed.len()));
        }
        match self {
            Generator::Uniform { n } => {
                let mut x = SignVector::all_true(*n);
                for i in (0..*n).filter(|&i| seed.bit(i)) {
                    x.set(i, FALSE);
                }
                Ok(x)
            }
            Generator::Constant(x) => Ok(x.clone()),
            Generator::Biased(s) => s.generate(seed),
            Generator::Rcnf(p) => p.sample(seed),
            Generator::Rect(p) => p.sample(seed),
            Generator::Hsg(h) => h.sample(seed),
        }
    }

    /// Seeds whose output `f` accepts, out of `2^seed_bits`.
    pub fn accepted(&self, f: &dyn BooleanFunction) -> Result<u64> {
        let n = self.num_outputs();
        if f.num_vars() != n {
            return usage(format!("function has {} variables, generator outputs {n}", f.num_vars()));
        }
        let bits = self.seed_bits();
        if bits > 63 {
            return Err(Error::Limit(format!("{bits} seed bits cannot be enumerated")));
        }
        match self {
            Generator::Rcnf(p) if n <= 64 => p.count_accepting(&|x| f.eval_packed(x)),
            Generator::Hsg(h) if n <= 20 => h.count_hits(&|x| f.eval_packed(x)),
            _ => (0..1u64 << bits)
                .into_par_iter()
                .map(|i| self.sample(&Seed::from_index(i, bits)).map(|x| f.eval(&x) as u64))
                .try_reduce(|| 0, |a, b| Ok(a + b)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exhaustive,
    Statistical,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exhaustive => "exhaustive",
            Mode::Statistical => "statistical",
        }
    }
}

/// One measured instance; also one CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdvantageRow {
    pub class: String,
    pub instance: String,
    pub n: usize,
    pub m: Option<usize>,
    pub w: Option<usize>,
    pub eps: f64,
    pub seed_bits: usize,
    #[serde(with = "ratio_serde")]
    pub exact_e: BigRational,
    #[serde(with = "ratio_serde")]
    pub gen_e: BigRational,
    #[serde(with = "ratio_serde")]
    pub advantage: BigRational,
    pub mode: Mode,
    /// Seeds evaluated.
    pub samples: u64,
    /// Half-width of the confidence interval around `gen_e` (statistical mode).
    pub half_width: Option<f64>,
    pub time_ms: Option<u64>,
}

impl AdvantageRow {
    /// `exact_e` lies within `half_width` of `gen_e` (always true when exhaustive
    /// and `gen_e == exact_e`).
    pub fn interval_contains(&self, value: &BigRational) -> bool {
        let d = to_f64(&(value - &self.gen_e)).abs();
        d <= self.half_width.unwrap_or(0.0)
    }
}

/// `(m, w)` columns: clauses/terms and their largest width, rectangle shape,
/// or program width.
pub fn model_shape(model: &Model) -> (Option<usize>, Option<usize>) {
    match model {
        Model::Rcnf(f) => (Some(f.clauses().len()), f.clauses().iter().map(|c| c.len()).max()),
        Model::Xorcnf(f) => (Some(f.terms().len()), f.terms().iter().map(|t| t.lits.len()).max()),
        Model::Rect(f) => (Some(f.m()), Some(f.w() as usize)),
        Model::Robp(f) => (None, Some(f.d())),
    }
}

/// `|E[f] - E_G[f]|`, exhaustively when the seed fits the limit and from a
/// Hoeffding-sized sample otherwise.
pub fn measure_advantage(
    gen: &Generator,
    entry: &CorpusEntry,
    eps: f64,
    cfg: &HarnessConfig,
) -> Result<AdvantageRow> {
    let start = Instant::now();
    let f = entry.model.function();
    let exact_e = f.exact_expectation();
    let bits = gen.seed_bits();
    let (gen_e, mode, samples, half_width) = if bits <= cfg.exhaustive_limit_bits {
        let hits = gen.accepted(f)?;
        (BigRational::new(BigInt::from(hits), BigInt::from(1u8) << bits), Mode::Exhaustive, 1u64 << bits, None)
    } else {
        let s = cfg.statistical_samples();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let seeds: Vec<Seed> =
            (0..s).map(|_| Seed::from_bits(&(0..bits).map(|_| rng.gen::<bool>()).collect::<Vec<_>>())).collect();
        let hits: u64 = seeds
            .par_iter()
            .map(|sd| gen.sample(sd).map(|x| f.eval(&x) as u64))
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let hw = ((2.0 / (1.0 - cfg.confidence)).ln() / (2.0 * s as f64)).sqrt();
        (BigRational::new(hits.into(), s.into()), Mode::Statistical, s, Some(hw))
    };
    let (m, w) = model_shape(&entry.model);
    Ok(AdvantageRow {
        class: entry.model.kind().into(),
        instance: entry.name.clone(),
        n: f.num_vars(),
        m,
        w,
        eps,
        seed_bits: bits,
        advantage: (&gen_e - &exact_e).abs(),
        exact_e,
        gen_e,
        mode,
        samples,
        half_width,
        time_ms: cfg.timing.then(|| start.elapsed().as_millis() as u64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdvantageSummary {
    pub rows: Vec<AdvantageRow>,
    pub max_advantage: f64,
    pub mean_advantage: f64,
}

pub fn advantage_sweep(gen: &Generator, corpus: &[CorpusEntry], eps: f64, cfg: &HarnessConfig) -> Result<AdvantageSummary> {
    let rows = corpus.iter().map(|e| measure_advantage(gen, e, eps, cfg)).collect::<Result<Vec<_>>>()?;
    let advs: Vec<f64> = rows.iter().map(|r| to_f64(&r.advantage)).collect();
    Ok(AdvantageSummary {
        max_advantage: advs.iter().cloned().fold(0.0, f64::max),
        mean_advantage: if advs.is_empty() { 0.0 } else { advs.iter().sum::<f64>() / advs.len() as f64 },
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HitRow {
    pub instance: String,
    pub n: usize,
    #[serde(with = "ratio_serde")]
    pub exact_e: BigRational,
    pub seed_bits: usize,
    pub hits: u64,
    /// `hits / 2^seed_bits`: the `delta` achieved on this program.
    #[serde(with = "ratio_serde")]
    pub fraction: BigRational,
    /// `c` with `fraction = (eps/n)^c`.
    pub achieved_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HitReport {
    pub epsilon: f64,
    pub rows: Vec<HitRow>,
    /// Programs with `E[f] < eps`, left out by definition.
    pub excluded: Vec<String>,
    #[serde(with = "ratio_serde")]
    pub min_fraction: BigRational,
    /// Every program is hit by some seed.
    pub hits_all: bool,
    /// Every program is hit by more than a single seed, i.e. the achieved
    /// `delta` exceeds `2^-seed_bits`.
    pub above_seed_floor: bool,
    pub worst_exponent: f64,
    /// The `c` of the target `(eps/n)^c`.
    pub target_exponent: f64,
    /// Every program meets `(eps/n)^c`.
    pub meets_target: bool,
}

/// Hitting-set parameters for `n` variables from the configuration.
pub fn hsg_for(n: usize, eps: f64, cfg: &HarnessConfig) -> Result<HsgParams> {
    let prg = RcnfGenParams::with_degrees(n, eps, 1, cfg.hsg_degrees, cfg.rcnf.clone())?;
    HsgParams::new(n, eps, prg)
}

pub fn hitting_sweep(corpus: &[CorpusEntry], eps: f64, cfg: &HarnessConfig) -> Result<HitReport> {
    if corpus.is_empty() {
        return precondition("hitting sweep over an empty corpus");
    }
    let eps_r = crate::bp3::exact_ratio(eps)?;
    let mut gens: BTreeMap<usize, Generator> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for e in corpus {
        let f = e.model.function();
        let exact_e = f.exact_expectation();
        if exact_e < eps_r {
            excluded.push(e.name.clone());
            continue;
        }
        let n = f.num_vars();
        if !gens.contains_key(&n) {
            gens.insert(n, Generator::Hsg(hsg_for(n, eps, cfg)?));
        }
        let gen = &gens[&n];
        let bits = gen.seed_bits();
        if bits > cfg.exhaustive_limit_bits {
            return Err(Error::Limit(format!("hitting sweep needs {bits} <= {} seed bits", cfg.exhaustive_limit_bits)));
        }
        let hits = gen.accepted(f)?;
        let fraction = BigRational::new(hits.into(), BigInt::from(1u8) << bits);
        let base = (eps / n as f64).log2();
        let achieved_exponent = if hits == 0 { f64::INFINITY } else { to_f64(&fraction).log2() / base };
        rows.push(HitRow { instance: e.name.clone(), n, exact_e, seed_bits: bits, hits, fraction, achieved_exponent });
    }
    if rows.is_empty() {
        return precondition(format!("no program in the corpus has E[f] >= {eps}"));
    }
    let min_fraction = rows.iter().map(|r| r.fraction.clone()).min().expect("rows is nonempty");
    let worst_exponent = rows.iter().map(|r| r.achieved_exponent).fold(0.0, f64::max);
    Ok(HitReport {
        epsilon: eps,
        hits_all: min_fraction.is_positive(),
        above_seed_floor: rows.iter().all(|r| r.fraction > inv_pow2(r.seed_bits)),
        meets_target: worst_exponent <= cfg.hsg_exponent,
        target_exponent: cfg.hsg_exponent,
        worst_exponent,
        min_fraction,
        rows,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReductionRow {
    pub instance: String,
    pub n: usize,
    #[serde(with = "ratio_serde")]
    pub e_f: BigRational,
    #[serde(with = "ratio_serde")]
    pub e_g: BigRational,
    pub k: usize,
    pub verified: Option<bool>,
    pub achieved_exponent: f64,
    pub meets_stated_bound: bool,
    /// `Pr[Bad >= t]` for `t = 0, 1, ...` on the sudden-death program.
    pub bad_tail: Vec<f64>,
    /// Every `t` has `Pr[Bad >= t] <= 2^(1-t)`.
    pub tail_ok: bool,
    /// `E[Bad | accept]`.
    pub bad_mass: f64,
    /// `2 log2(2/p)`.
    pub bad_mass_bound: f64,
}

/// Runs the reduction chain on every program with `E[f] >= eps` and collects
/// the bad-state statistics of each sudden-death program.
pub fn reduction_sweep(corpus: &[CorpusEntry], eps: f64) -> Result<Vec<ReductionRow>> {
    let eps_r = crate::bp3::exact_ratio(eps)?;
    let progs: Vec<_> = corpus
        .iter()
        .filter_map(|e| match &e.model {
            Model::Robp(p) if p.exact_expectation() >= eps_r => Some((e.name.clone(), p)),
            _ => None,
        })
        .collect();
    progs
        .par_iter()
        .map(|(name, f)| {
            let cert = full_reduce(f, &eps_r)?;
            let g = &cert.sudden_death.g;
            let a = bad_state_analysis(g)?;
            let (all, _) = bad_count_distribution(g, &a.bad);
            // total = 2^m, so 2^(1-t) of it is an exact shift
            let total: u128 = all.iter().sum();
            let mut tails = vec![0u128; all.len() + 1];
            for t in (0..all.len()).rev() {
                tails[t] = tails[t + 1] + all[t];
            }
            let tail_ok = (1..tails.len()).all(|t| {
                let cap = if t - 1 < 128 { total >> (t - 1) } else { 0 };
                tails[t] <= cap
            });
            let bad_tail = tails[..all.len()].iter().map(|&c| c as f64 / total as f64).collect();
            let p = to_f64(&a.p);
            Ok(ReductionRow {
                instance: name.clone(),
                n: f.len(),
                e_f: cert.e_f.clone(),
                e_g: cert.e_g.clone(),
                k: cert.k,
                verified: cert.verified,
                achieved_exponent: cert.achieved_exponent,
                meets_stated_bound: cert.sudden_death.meets_stated_bound,
                bad_tail,
                tail_ok,
                bad_mass: to_f64(&a.bad_mass),
                bad_mass_bound: 2.0 * (2.0 / p).log2(),
            })
        })
        .collect()
}
