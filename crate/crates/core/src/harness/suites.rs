//! Property suites run by `check` and by the acceptance tests. Each returns the
//! raw measurements together with a `passed` verdict.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{check_compose, random_compose_instance, Arithmetic, ComposeCheck};
use crate::bits::{Seed, SignVector};
use crate::cr_prg::{bias_function_cr, composition_values, width_schedule, CrGenParams, LookupMatrix};
use crate::error::Result;
use crate::models::{brute_expectation, eval_clauses, random_robp, BooleanFunction, CombRect, Model};
use crate::ratio_serde;
use crate::rational::{inv_pow2, ratio, to_f64};
use crate::rcnf_prg::RcnfGenParams;
use crate::smallbias::{exact_bias, BiasedSpaceSpec};
use crate::sympoly::{check_s1s2_bound, elem_sym_all, newton_girard_residual, sqrt_upper, S1S2Outcome};

use super::corpus::{generate, random_rcnf, random_rect, random_xorcnf, CorpusDescriptor, CorpusEntry};
use super::{advantage_sweep, hitting_sweep, reduction_sweep, AdvantageSummary, Generator, HarnessConfig, HitReport, ReductionRow};

/// `(n, k)` pairs for the exhaustive bias check: `n <= 20`, `2k <= 24`.
pub const SMALL_BIAS_SPECS: [(usize, u32); 20] = [
    (2, 3),
    (3, 4),
    (4, 5),
    (5, 6),
    (6, 6),
    (7, 7),
    (8, 8),
    (9, 8),
    (10, 9),
    (11, 9),
    (12, 10),
    (13, 10),
    (14, 10),
    (15, 11),
    (16, 11),
    (17, 11),
    (18, 12),
    (19, 12),
    (20, 12),
    (20, 6),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BiasRow {
    pub n: usize,
    pub k: u32,
    #[serde(with = "ratio_serde")]
    pub max_bias: BigRational,
    /// `(n-1)/2^k`.
    #[serde(with = "ratio_serde")]
    pub bound: BigRational,
    pub ok: bool,
}

pub fn small_bias_suite() -> Result<Vec<BiasRow>> {
    SMALL_BIAS_SPECS
        .iter()
        .map(|&(n, k)| {
            let spec = BiasedSpaceSpec::with_degree(n, k)?;
            let rep = exact_bias(&spec)?;
            let bound = spec.bias_bound_exact();
            Ok(BiasRow { n, k, ok: rep.max_bias_exact <= bound, max_bias: rep.max_bias_exact, bound })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SymSuite {
    /// Inputs per size `m = 1..=12` for the Newton–Girard check.
    pub residual_inputs: usize,
    pub nonzero_residuals: usize,
    pub s1s2_inputs: usize,
    pub s1s2_failures: usize,
    pub s1s2_worst_ratio: f64,
    pub enumeration_inputs: usize,
    pub enumeration_mismatches: usize,
    pub passed: bool,
}

fn random_rationals(rng: &mut impl Rng, m: usize) -> Vec<BigRational> {
    (0..m).map(|_| ratio(rng.gen_range(-9..=9), rng.gen_range(1..=6))).collect()
}

/// `S_j` by summing the products over every `j`-subset.
pub fn elem_sym_by_subsets(z: &[BigRational]) -> Vec<BigRational> {
    let m = z.len();
    let mut s = vec![BigRational::zero(); m + 1];
    for mask in 0u32..1 << m {
        let prod = (0..m).filter(|&i| mask >> i & 1 == 1).fold(BigRational::one(), |a, i| a * &z[i]);
        s[mask.count_ones() as usize] += prod;
    }
    s
}

pub fn sym_suite(seed: u64, inputs: usize) -> SymSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<Vec<BigRational>> =
        (1..=12).flat_map(|m| (0..inputs).map(|_| random_rationals(&mut rng, m)).collect::<Vec<_>>()).collect();
    let nonzero_residuals =
        cases.par_iter().filter(|z| newton_girard_residual(z, z.len()).iter().any(|r| !r.is_zero())).count();

    let s1s2: Vec<(Vec<BigRational>, BigRational)> = (0..inputs)
        .map(|_| {
            let m = rng.gen_range(1..=12);
            let z = random_rationals(&mut rng, m);
            let s1: BigRational = z.iter().sum();
            let e2: BigRational = z.iter().map(|v| v * v).sum();
            let root = sqrt_upper(&e2);
            let mu = if s1.abs() > root { s1.abs() } else { root };
            (z, mu)
        })
        .collect();
    let outcomes: Vec<S1S2Outcome> = s1s2.par_iter().map(|(z, mu)| check_s1s2_bound(z, mu, 0.0)).collect();
    let s1s2_failures = outcomes.iter().filter(|o| !matches!(o, S1S2Outcome::Holds { .. })).count();
    let s1s2_worst_ratio = outcomes
        .iter()
        .filter_map(|o| match o {
            S1S2Outcome::Holds { worst_ratio } => Some(*worst_ratio),
            _ => None,
        })
        .fold(0.0, f64::max);

    let enum_cases: Vec<Vec<BigRational>> =
        (0..=12).flat_map(|m| (0..8).map(|_| random_rationals(&mut rng, m)).collect::<Vec<_>>()).collect();
    let enumeration_mismatches =
        enum_cases.par_iter().filter(|z| elem_sym_all(z, z.len()) != elem_sym_by_subsets(z)).count();
    SymSuite {
        residual_inputs: inputs,
        nonzero_residuals,
        s1s2_inputs: inputs,
        s1s2_failures,
        s1s2_worst_ratio,
        enumeration_inputs: enum_cases.len(),
        enumeration_mismatches,
        passed: nonzero_residuals == 0 && s1s2_failures == 0 && enumeration_mismatches == 0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct XorSuite {
    pub rational: Vec<ComposeCheck>,
    pub float: Vec<ComposeCheck>,
    pub passed: bool,
}

/// Random compositions with `k <= 3` blocks of at most 4 variables, checked in
/// both arithmetics.
pub fn xor_suite(seed: u64, instances: usize) -> Result<XorSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = ratio(1, 16);
    let insts: Vec<_> = (0..instances)
        .map(|i| {
            let k = 1 + i % 3;
            let block = 1 + (i / 3) % 4;
            random_compose_instance(&mut rng, k, block, &eps)
        })
        .collect();
    let rational = insts.par_iter().map(|c| check_compose(c, Arithmetic::Rational)).collect::<Result<Vec<_>>>()?;
    let float = insts.par_iter().map(|c| check_compose(c, Arithmetic::Float)).collect::<Result<Vec<_>>>()?;
    let passed = rational.iter().chain(&float).all(|c| c.ok);
    Ok(XorSuite { rational, float, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalyticsRow {
    pub class: String,
    pub instances: usize,
    pub max_n: usize,
    pub mismatches: usize,
}

/// Closed-form and DP expectations against brute force, `n <= 14`.
pub fn analytics_suite(seed: u64, per_class: usize) -> Vec<AnalyticsRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<(&str, Vec<Model>)> = vec![("rcnf", vec![]), ("xorcnf", vec![]), ("rect", vec![]), ("robp", vec![])];
    for _ in 0..per_class {
        let n = rng.gen_range(1..=14);
        classes[0].1.push(Model::Rcnf(random_rcnf(&mut rng, n, 4)));
        let n = rng.gen_range(1..=14);
        classes[1].1.push(Model::Xorcnf(random_xorcnf(&mut rng, n, 4)));
        let w = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=14 / w as usize);
        let density = rng.gen_range(0.3..0.95);
        classes[2].1.push(Model::Rect(random_rect(&mut rng, m, w, density)));
        let n = rng.gen_range(1..=14);
        let d = rng.gen_range(2..=4);
        classes[3].1.push(Model::Robp(random_robp(n, d, true, &mut rng)));
    }
    classes
        .into_iter()
        .map(|(class, models)| AnalyticsRow {
            class: class.into(),
            instances: models.len(),
            max_n: models.iter().map(|m| m.function().num_vars()).max().unwrap_or(0),
            mismatches: models
                .par_iter()
                .filter(|m| m.function().exact_expectation() != brute_expectation(m.function()))
                .count(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RcnfDeskSuite {
    pub seed_bits: usize,
    pub bias_floor: f64,
    /// `delta1 L T + 2 eps T`.
    pub budget: f64,
    pub summary: AdvantageSummary,
    pub passed: bool,
}

/// The desk generator's field degrees `(3, 3, 7)` with the configured constants.
pub fn desk_rcnf_params(cfg: &HarnessConfig) -> Result<RcnfGenParams> {
    RcnfGenParams::with_degrees(64, 1.0 / 16.0, 1, [3, 3, 7], cfg.rcnf.clone())
}

pub fn rcnf_desk_suite(cfg: &HarnessConfig) -> Result<RcnfDeskSuite> {
    let params = desk_rcnf_params(cfg)?;
    let budget = params.claimed_error();
    let seed_bits = params.seed_bits();
    let corpus = generate(&CorpusDescriptor::desk_rcnf());
    let summary = advantage_sweep(&Generator::Rcnf(params), &corpus, 1.0 / 16.0, cfg)?;
    let passed = seed_bits <= 26 && summary.max_advantage <= budget.min(0.1);
    Ok(RcnfDeskSuite { seed_bits, bias_floor: cfg.rcnf.bias_floor, budget, summary, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrRow {
    pub m: usize,
    pub w: u32,
    pub seed_bits: usize,
    /// Seeds on which some stage disagrees with the first.
    pub broken_seeds: u64,
    /// Inputs on which the reject-clause CNF disagrees with the rectangle.
    pub cnf_mismatches: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrSuite {
    pub rows: Vec<CrRow>,
    pub bias_cases: usize,
    pub bias_mismatches: usize,
    pub passed: bool,
}

/// Field degree 3 for every stage, so the whole seed space is small.
pub fn small_cr_params(m: usize, w: u32) -> Result<CrGenParams> {
    let stages = width_schedule(w, 4).len().saturating_sub(1).max(1);
    CrGenParams::with_degrees(m, w, 1.0 / 16.0, 4, &vec![3; stages])
}

fn bias_by_enumeration(rect: &CombRect, mat: &LookupMatrix) -> BigRational {
    let (m, v) = (rect.m(), mat.v() as usize);
    let mask = (1usize << v) - 1;
    let hits = (0..1usize << (m * v))
        .filter(|&y| {
            let blocks: Vec<usize> = (0..m).map(|i| mat.entry(y >> (v * i) & mask, i)).collect();
            rect.eval_blocks(&blocks)
        })
        .count();
    BigRational::new(BigInt::from(hits), BigInt::one() << (m * v))
}

pub fn cr_suite(seed: u64, rects: usize) -> Result<CrSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for _ in 0..rects {
        let m = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=8);
        let density = rng.gen_range(0.5..0.98);
        let rect = random_rect(&mut rng, m, w, density);
        let params = small_cr_params(m, w)?;
        let bits = params.seed_bits();
        let broken_seeds = (0..1u64 << bits)
            .into_par_iter()
            .map(|s| {
                let vals = composition_values(&params, &rect, &Seed::from_index(s, bits))?;
                Ok::<u64, crate::Error>(vals.iter().any(|&v| v != vals[0]) as u64)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let n = m * w as usize;
        let clauses = rect.reject_clauses();
        let cnf_mismatches = if n <= 20 {
            (0..1u64 << n)
                .into_par_iter()
                .filter(|&x| {
                    let xv = SignVector::from_packed(n, x);
                    eval_clauses(&clauses, &xv) != rect.eval(&xv)
                })
                .count() as u64
        } else {
            0
        };
        rows.push(CrRow { m, w, seed_bits: bits, broken_seeds, cnf_mismatches });
    }
    let mut bias_mismatches = 0;
    let bias_cases = 20;
    for _ in 0..bias_cases {
        let v = rng.gen_range(1..=4u32);
        let w = rng.gen_range(v..=6);
        let m = rng.gen_range(1..=(16 / v as usize).min(4));
        let rect = random_rect(&mut rng, m, w, 0.7);
        let mat = LookupMatrix::from_fn(v, w, m, |_, _| rng.gen_range(0..1usize << w));
        if bias_function_cr(&rect, &mat)? != bias_by_enumeration(&rect, &mat) {
            bias_mismatches += 1;
        }
    }
    let passed = bias_mismatches == 0 && rows.iter().all(|r| r.broken_seeds == 0 && r.cnf_mismatches == 0);
    Ok(CrSuite { rows, bias_cases, bias_mismatches, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReductionSuite {
    pub programs: usize,
    pub rows: Vec<ReductionRow>,
    pub worst_achieved_exponent: f64,
    pub stated_bound_misses: usize,
    pub passed: bool,
}

pub fn reduction_passes(r: &ReductionRow) -> bool {
    r.verified == Some(true) && r.e_g.is_positive() && r.tail_ok && r.bad_mass <= r.bad_mass_bound
}

pub fn reduction_suite(corpus: &[CorpusEntry], eps: f64) -> Result<ReductionSuite> {
    let rows = reduction_sweep(corpus, eps)?;
    Ok(ReductionSuite {
        programs: rows.len(),
        worst_achieved_exponent: rows.iter().map(|r| r.achieved_exponent).fold(0.0, f64::max),
        stated_bound_misses: rows.iter().filter(|r| !r.meets_stated_bound).count(),
        passed: rows.len() >= 100 && rows.iter().all(reduction_passes),
        rows,
    })
}

pub fn hitting_suite(corpus: &[CorpusEntry], eps: f64, cfg: &HarnessConfig) -> Result<(HitReport, bool)> {
    let rep = hitting_sweep(corpus, eps, cfg)?;
    let ok = rep.rows.len() >= 100 && rep.hits_all && rep.above_seed_floor;
    Ok((rep, ok))
}

/// Fixed seed of the desk CNF generator (26 bits).
pub const RCNF_GOLDEN_SEED: &str = "a5c3f002";
/// Fixed seed of the desk rectangle generator (88 bits).
pub const CR_GOLDEN_SEED: &str = "0123456789abcdeffedcba";

/// Files whose bytes must not change between runs or worker counts.
pub fn golden_artifacts(cfg: &HarnessConfig) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let rcnf = desk_rcnf_params(cfg)?;
    out.push(("rcnf_desk_params.json".into(), serde_json::to_vec_pretty(&rcnf)?));
    let x = rcnf.sample(&Seed::from_hex(RCNF_GOLDEN_SEED, rcnf.seed_bits())?)?;
    out.push(("rcnf_desk_output.txt".into(), format!("{}\n", x.to_pm_string()).into_bytes()));

    let cr = CrGenParams::desk()?;
    out.push(("cr_desk_params.json".into(), serde_json::to_vec_pretty(&cr)?));
    let blocks = cr.sample_blocks(&Seed::from_hex(CR_GOLDEN_SEED, cr.seed_bits())?)?;
    let text: Vec<String> = blocks.iter().map(|b| b.to_string()).collect();
    out.push(("cr_desk_output.txt".into(), format!("{}\n", text.join(" ")).into_bytes()));

    let tribes: Vec<CorpusEntry> =
        super::corpus::rcnf_landmarks(64).into_iter().filter(|e| e.name == "tribes-w2").collect();
    let rows = advantage_sweep(&Generator::Rcnf(rcnf), &tribes, 1.0 / 16.0, cfg)?.rows;
    out.push(("tribes_w2_advantage.csv".into(), super::report::csv_string(&rows)?.into_bytes()));

    let mut rng = ChaCha8Rng::seed_from_u64(0x60);
    let rects: Vec<CorpusEntry> = (0..6)
        .map(|i| {
            let (m, w) = (2 + i % 3, 2 + (i as u32) % 4);
            CorpusEntry::new(format!("rect{i}"), Model::Rect(random_rect(&mut rng, m, w, 0.8)))
        })
        .collect();
    let mut rows = Vec::new();
    for e in &rects {
        let Model::Rect(r) = &e.model else { unreachable!() };
        let gen = Generator::Rect(small_cr_params(r.m(), r.w())?);
        rows.extend(advantage_sweep(&gen, std::slice::from_ref(e), 1.0 / 16.0, cfg)?.rows);
    }
    out.push(("rect_advantage.csv".into(), super::report::csv_string(&rows)?.into_bytes()));
    out.push(("rect_advantage.svg".into(), super::report::svg_string(&rows).into_bytes()));

    let robps = generate(&CorpusDescriptor { count: 20, ..CorpusDescriptor::desk_robp() });
    let hit = hitting_sweep(&robps, 0.25, cfg)?;
    out.push(("robp_hitting.json".into(), serde_json::to_vec_pretty(&hit)?));
    Ok(out)
}

/// Runs [`golden_artifacts`] on thread pools of each size and reports whether
/// every run produced the same bytes.
pub fn determinism_suite(cfg: &HarnessConfig, workers: &[usize]) -> Result<(Vec<(String, Vec<u8>)>, bool)> {
    let mut runs = Vec::new();
    for &w in workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
        runs.push(pool.install(|| golden_artifacts(cfg))?);
    }
    let first = runs.remove(0);
    let same = runs.iter().all(|r| *r == first);
    Ok((first, same))
}

/// Fraction of `r` values drawn by the hitting-set generator's first block,
/// against the uniform `1/n`; the largest relative excess.
pub fn r_decoding_skew(n: usize, cfg: &HarnessConfig) -> Result<f64> {
    let h = super::hsg_for(n, 0.25, cfg)?;
    let mult = h.r_multiplicities();
    let total: u64 = mult.iter().sum();
    Ok(mult.iter().map(|&c| c as f64 * n as f64 / total as f64).fold(0.0, f64::max) - 1.0)
}

pub fn exact_delta(report: &HitReport) -> f64 {
    to_f64(&report.min_fraction)
}

pub fn seed_floor(report: &HitReport) -> f64 {
    report.rows.iter().map(|r| to_f64(&inv_pow2(r.seed_bits))).fold(0.0, f64::max)
}
