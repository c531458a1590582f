//! Recursive sampler for combinatorial rectangles.
//!
//! Widths shrink as `v_j = floor(3 v_{j-1} / 4)` until `v_t <= stopWidth`.
//! Lookup matrices `x_1..x_{t-1}` come from small-bias spaces; matrix `x_j`
//! has `2^{v_j}` rows and `m` columns with entries in `{+-1}^{v_{j-1}}`. The
//! final stage `x_t` is a small-bias assignment of `m` blocks of width
//! `v_{t-1}`, and the output is obtained by looking up, from the last matrix
//! back to the first, the row named by the current block in each column.
//!
//! Matrix bit layout: column-major, rows in order within a column, entries
//! most significant bit first, so bit `b` of the entry at row `a`, column `i`
//! sits at `(i 2^v + a) w' + (w' - 1 - b)`. Seed layout: `x_1..x_{t-1}`, then
//! `x_t`, each in the seed format of its space.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::bits::{Seed, SignVector};
use crate::error::{usage, Error, Result};
use crate::models::{block_index, CombRect, TruthTable};
use crate::rcnf_prg::FloorPolicy;
use crate::smallbias::BiasedSpaceSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CrConstants {
    /// `epsilon1 = delta^c1`.
    pub c1: f64,
    /// `epsilon2 = delta^(c2 lglg(1/delta) lglglg(1/delta))`.
    pub c2: f64,
    pub stop_width: u32,
    pub bias_floor: f64,
    pub floor_policy: FloorPolicy,
}

impl Default for CrConstants {
    fn default() -> Self {
        CrConstants {
            c1: 2.0,
            c2: 2.0,
            stop_width: 4,
            bias_floor: (-24f64).exp2(),
            floor_policy: FloorPolicy::Clamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrGenParams {
    pub m: usize,
    pub w: u32,
    pub delta: f64,
    /// `v_0 = w, ..., v_t`.
    pub schedule: Vec<u32>,
    pub log2_epsilon1: f64,
    pub log2_epsilon2: f64,
    pub floored: Vec<String>,
    pub constants: CrConstants,
    /// Spaces for `x_1..x_{t-1}`.
    pub matrix_spaces: Vec<BiasedSpaceSpec>,
    pub final_space: BiasedSpaceSpec,
}

/// `v_0 = w`, then `floor(3v/4)` while the last width exceeds `stop`.
pub fn width_schedule(w: u32, stop: u32) -> Vec<u32> {
    let mut v = vec![w];
    while *v.last().unwrap() > stop {
        let next = v.last().unwrap() * 3 / 4;
        v.push(next);
    }
    v
}

fn clamped_log2(x: f64) -> f64 {
    x.log2().max(1.0)
}

impl CrGenParams {
    pub fn derive(m: usize, w: u32, delta: f64, constants: CrConstants) -> Result<Self> {
        if m == 0 || w == 0 {
            return usage("rectangle generator needs m >= 1 and w >= 1");
        }
        if !(delta > 0.0 && delta < 1.0) {
            return usage(format!("delta must lie in (0, 1), got {delta}"));
        }
        if constants.stop_width == 0 {
            return usage("stopWidth must be at least 1");
        }
        let k = &constants;
        let schedule = width_schedule(w, k.stop_width);
        let l1 = clamped_log2(1.0 / delta);
        let l2 = clamped_log2(l1);
        let l3 = clamped_log2(l2);
        let log2_epsilon1 = k.c1 * delta.log2();
        let log2_epsilon2 = k.c2 * l2 * l3 * delta.log2();
        let floor = k.bias_floor.log2();
        let mut floored = Vec::new();
        let mut pick = |name: &str, v: f64| -> Result<f64> {
            if v >= floor {
                return Ok(v);
            }
            if k.floor_policy == FloorPolicy::Reject {
                return Err(Error::Config(format!(
                    "{name} = 2^{v:.1} is below the bias floor 2^{floor:.1}; use a desk-scale preset"
                )));
            }
            floored.push(name.to_string());
            Ok(floor)
        };
        let e1 = pick("epsilon1", log2_epsilon1)?;
        let e2 = pick("epsilon2", log2_epsilon2)?;
        let mut p = CrGenParams {
            m,
            w,
            delta,
            schedule,
            log2_epsilon1,
            log2_epsilon2,
            floored,
            constants,
            matrix_spaces: vec![],
            final_space: BiasedSpaceSpec::uniform(1),
        };
        p.matrix_spaces = (1..p.stages())
            .map(|j| BiasedSpaceSpec::new(p.matrix_bits(j), e1.exp2()))
            .collect::<Result<_>>()?;
        p.final_space = BiasedSpaceSpec::new(m * p.final_width() as usize, e2.exp2())?;
        Ok(p)
    }

    /// Same schedule with explicit field degrees: one per matrix, then the final stage.
    pub fn with_degrees(m: usize, w: u32, delta: f64, stop_width: u32, degrees: &[u32]) -> Result<Self> {
        let consts = CrConstants { stop_width, floor_policy: FloorPolicy::Clamp, ..Default::default() };
        let mut p = Self::derive(m, w, delta, consts)?;
        if degrees.len() != p.stages() {
            return usage(format!("{} stages need {} field degrees, got {}", p.stages(), p.stages(), degrees.len()));
        }
        p.matrix_spaces = (1..p.stages())
            .map(|j| BiasedSpaceSpec::with_degree(p.matrix_bits(j), degrees[j - 1]))
            .collect::<Result<_>>()?;
        p.final_space = BiasedSpaceSpec::with_degree(m * p.final_width() as usize, degrees[p.stages() - 1])?;
        p.floored = vec!["fieldDegrees".into()];
        Ok(p)
    }

    /// Desk preset: `m = 8, w = 8, delta = 1/16` from the recipe.
    pub fn desk() -> Result<Self> {
        Self::derive(8, 8, 1.0 / 16.0, CrConstants::default())
    }

    /// `t`, the index of the last schedule entry.
    pub fn t(&self) -> usize {
        self.schedule.len() - 1
    }

    /// Number of seed blocks: `t - 1` matrices plus the final stage (one block when `t <= 1`).
    pub fn stages(&self) -> usize {
        self.t().max(1)
    }

    pub fn num_matrices(&self) -> usize {
        self.stages() - 1
    }

    /// Width `v_{t-1}` of the final assignment (`w` when `t = 0`).
    pub fn final_width(&self) -> u32 {
        self.schedule[self.stages() - 1]
    }

    fn matrix_bits(&self, j: usize) -> usize {
        (1usize << self.schedule[j]) * self.m * self.schedule[j - 1] as usize
    }

    pub fn seed_bits(&self) -> usize {
        self.matrix_spaces.iter().map(|s| s.seed_bits()).sum::<usize>() + self.final_space.seed_bits()
    }

    fn check_seed(&self, seed: &Seed) -> Result<()> {
        if seed.len() != self.seed_bits() {
            return usage(format!("seed has {} bits, generator needs {}", seed.len(), self.seed_bits()));
        }
        Ok(())
    }

    /// Materialized matrices `x_1..x_{t-1}` and the final block indices.
    pub fn stages_for(&self, seed: &Seed) -> Result<(Vec<LookupMatrix>, Vec<usize>)> {
        self.check_seed(seed)?;
        let mut at = 0;
        let mut mats = Vec::with_capacity(self.num_matrices());
        for (j, space) in self.matrix_spaces.iter().enumerate() {
            let bits = space.seed_bits();
            let x = space.generate(&seed.slice(at, bits))?;
            at += bits;
            mats.push(LookupMatrix::from_bits(self.schedule[j + 1], self.schedule[j], self.m, &x));
        }
        let y = self.final_space.generate(&seed.slice(at, self.final_space.seed_bits()))?;
        let v = self.final_width();
        let blocks = (0..self.m).map(|i| block_index(&y, i * v as usize, v)).collect();
        Ok((mats, blocks))
    }

    /// Block indices of `s_0`.
    pub fn sample_blocks(&self, seed: &Seed) -> Result<Vec<usize>> {
        let (mats, z) = self.stages_for(seed)?;
        Ok(lookup_chain(&mats, z).swap_remove(0))
    }

    pub fn sample(&self, seed: &Seed) -> Result<SignVector> {
        let blocks = self.sample_blocks(seed)?;
        Ok(blocks_to_signs(&blocks, self.w))
    }
}

/// `s_{t-1} = z` and `s_k` from `s_{k+1}` through matrix `x_{k+1}`; returns `[s_0, .., s_{t-1}]`.
pub fn lookup_chain(mats: &[LookupMatrix], z: Vec<usize>) -> Vec<Vec<usize>> {
    let mut out = vec![z];
    for mat in mats.iter().rev() {
        let prev = out.last().unwrap();
        let next = prev.iter().enumerate().map(|(i, &a)| mat.entry(a, i)).collect();
        out.push(next);
    }
    out.reverse();
    out
}

pub fn blocks_to_signs(blocks: &[usize], w: u32) -> SignVector {
    let mut x = SignVector::all_true(blocks.len() * w as usize);
    for (i, &a) in blocks.iter().enumerate() {
        for b in 0..w as usize {
            if a >> b & 1 == 1 {
                x.set(i * w as usize + b, crate::bits::FALSE);
            }
        }
    }
    x
}

/// Rows indexed by `a` in `{+-1}^v`, columns `i` in `[m]`, entries in `{+-1}^width`
/// stored as block indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupMatrix {
    v: u32,
    width: u32,
    m: usize,
    entries: Vec<usize>,
}

impl LookupMatrix {
    /// Reads the column-major, MSB-first layout.
    pub fn from_bits(v: u32, width: u32, m: usize, x: &SignVector) -> Self {
        let rows = 1usize << v;
        let wd = width as usize;
        assert_eq!(x.len(), rows * m * wd);
        let entries = (0..rows * m)
            .map(|cell| (0..wd).filter(|&b| x.is_false(cell * wd + wd - 1 - b)).fold(0, |a, b| a | 1 << b))
            .collect();
        LookupMatrix { v, width, m, entries }
    }

    pub fn from_fn(v: u32, width: u32, m: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let rows = 1usize << v;
        let mut entries = Vec::with_capacity(rows * m);
        for i in 0..m {
            for a in 0..rows {
                let e = f(a, i);
                assert!(e < 1 << width);
                entries.push(e);
            }
        }
        LookupMatrix { v, width, m, entries }
    }

    pub fn v(&self) -> u32 {
        self.v
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entry(&self, a: usize, i: usize) -> usize {
        self.entries[(i << self.v) + a]
    }
}

/// `f^v_i(a) = f_i(x_{a,i})`: the rectangle of width `v` seen through the matrix.
pub fn restrict_rect(rect: &CombRect, mat: &LookupMatrix) -> Result<CombRect> {
    check_dims(rect, mat)?;
    let tables = rect
        .tables()
        .iter()
        .enumerate()
        .map(|(i, t)| TruthTable::from_fn(mat.v, |a| t.get(mat.entry(a, i))))
        .collect();
    CombRect::new(rect.m(), mat.v, tables)
}

/// `prod_i (1/2^v) sum_a f_i(x_{a,i})`.
pub fn bias_function_cr(rect: &CombRect, mat: &LookupMatrix) -> Result<BigRational> {
    check_dims(rect, mat)?;
    let rows = 1usize << mat.v;
    let mut acc = BigRational::from_integer(1.into());
    for (i, t) in rect.tables().iter().enumerate() {
        let hits = (0..rows).filter(|&a| t.get(mat.entry(a, i))).count();
        acc *= BigRational::new(BigInt::from(hits), BigInt::from(rows));
    }
    Ok(acc)
}

fn check_dims(rect: &CombRect, mat: &LookupMatrix) -> Result<()> {
    if rect.m() != mat.m || rect.w() != mat.width {
        return usage(format!(
            "matrix with {} columns of width {} does not fit a rectangle with m = {}, w = {}",
            mat.m,
            mat.width,
            rect.m(),
            rect.w()
        ));
    }
    Ok(())
}

/// Evaluates `f^j(s_j)` for `j = 0..t-1` along the restriction chain; the
/// composition identity says all entries agree.
pub fn composition_values(params: &CrGenParams, rect: &CombRect, seed: &Seed) -> Result<Vec<bool>> {
    let (mats, z) = params.stages_for(seed)?;
    let s = lookup_chain(&mats, z);
    let mut f = rect.clone();
    let mut out = vec![f.eval_blocks(&s[0])];
    for (j, mat) in mats.iter().enumerate() {
        f = restrict_rect(&f, mat)?;
        out.push(f.eval_blocks(&s[j + 1]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BooleanFunction;
    use crate::rational::ratio;
    use rand::{Rng, SeedableRng};

    fn random_rect(rng: &mut impl Rng, m: usize, w: u32) -> CombRect {
        let tables = (0..m).map(|_| TruthTable::from_fn(w, |_| rng.gen_bool(0.7))).collect();
        CombRect::new(m, w, tables).unwrap()
    }

    #[test]
    fn schedules() {
        assert_eq!(width_schedule(16, 4), vec![16, 12, 9, 6, 4]);
        assert_eq!(width_schedule(3, 4), vec![3]);
        let p = CrGenParams::derive(4, 3, 0.25, CrConstants::default()).unwrap();
        assert_eq!(p.t(), 0);
        assert_eq!(p.num_matrices(), 0);
        assert_eq!(p.final_width(), 3);
    }

    #[test]
    fn t_zero_outputs_final_assignment() {
        let p = CrGenParams::derive(4, 3, 0.25, CrConstants::default()).unwrap();
        let seed = Seed::from_index(12345, p.seed_bits());
        let direct = p.final_space.generate(&seed).unwrap();
        assert_eq!(p.sample(&seed).unwrap(), direct);
    }

    #[test]
    fn desk_seed_length() {
        let p = CrGenParams::desk().unwrap();
        assert_eq!(p.schedule, vec![8, 6, 4]);
        assert_eq!(p.num_matrices(), 1);
        assert_eq!(p.final_width(), 6);
        assert_eq!(p.log2_epsilon1, -8.0);
        assert_eq!(p.log2_epsilon2, -16.0);
        assert_eq!(p.seed_bits(), 88);
    }

    // Independent evaluation of one output bit of a powering space by
    // shift-and-add multiplication modulo the field polynomial.
    fn oracle_bit(k: u32, modulus: u128, r: u64, s: u64, pos: u64) -> bool {
        let mul = |a: u128, b: u128| {
            let mut acc = 0u128;
            for i in 0..k {
                if b >> i & 1 == 1 {
                    acc ^= a << i;
                }
            }
            for i in (k..2 * k).rev() {
                if acc >> i & 1 == 1 {
                    acc ^= modulus << (i - k);
                }
            }
            acc
        };
        let mut p = 1u128;
        for _ in 0..pos {
            p = mul(p, s as u128);
        }
        (p & r as u128).count_ones() % 2 == 1
    }

    fn oracle_desk(p: &CrGenParams, seed: &Seed) -> Vec<usize> {
        let mk = p.matrix_spaces[0].field_degree;
        let fk = p.final_space.field_degree;
        let mm = crate::gf2k::Gf2k::new(mk).unwrap().modulus();
        let fm = crate::gf2k::Gf2k::new(fk).unwrap().modulus();
        let (mr, ms) = (seed.read_u64(0, mk as usize), seed.read_u64(mk as usize, mk as usize));
        let off = 2 * mk as usize;
        let (fr, fs) = (seed.read_u64(off, fk as usize), seed.read_u64(off + fk as usize, fk as usize));
        (0..8)
            .map(|i| {
                let z = (0..6).filter(|&b| oracle_bit(fk, fm, fr, fs, (i * 6 + b) as u64)).fold(0, |a, b| a | 1 << b);
                (0..8)
                    .filter(|&b| oracle_bit(mk, mm, mr, ms, ((i * 64 + z) * 8 + 7 - b) as u64))
                    .fold(0, |a, b| a | 1 << b)
            })
            .collect()
    }

    #[test]
    fn desk_sample_matches_oracle() {
        let p = CrGenParams::desk().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let seed = Seed::concat(&[Seed::from_index(rng.gen(), 64), Seed::from_index(rng.gen::<u64>() >> 40, 24)]);
            assert_eq!(p.sample_blocks(&seed).unwrap(), oracle_desk(&p, &seed));
        }
    }

    #[test]
    fn desk_golden_sample() {
        let p = CrGenParams::desk().unwrap();
        let seed = Seed::from_hex("0123456789abcdeffedcba", p.seed_bits()).unwrap();
        assert_eq!(p.sample_blocks(&seed).unwrap(), GOLDEN_DESK.to_vec());
    }

    const GOLDEN_DESK: [usize; 8] = [7, 65, 71, 136, 225, 116, 46, 111];

    #[test]
    fn constant_matrix_ignores_final_stage() {
        let p = CrGenParams::with_degrees(3, 8, 0.25, 4, &[3, 3]).unwrap();
        let mat = LookupMatrix::from_fn(6, 8, 3, |_, _| 0xa5);
        for z in [vec![0, 1, 2], vec![63, 17, 5]] {
            assert_eq!(lookup_chain(std::slice::from_ref(&mat), z)[0], vec![0xa5; 3]);
        }
        assert_eq!(p.num_matrices(), 1);
    }

    #[test]
    fn bias_function_examples() {
        let rect = CombRect::new(1, 2, vec![TruthTable::from_fn(2, |a| a < 2)]).unwrap();
        let all = LookupMatrix::from_fn(2, 2, 1, |_, _| 1);
        assert_eq!(bias_function_cr(&rect, &all).unwrap(), ratio(1, 1));
        let half = LookupMatrix::from_fn(2, 2, 1, |a, _| if a % 2 == 0 { 0 } else { 3 });
        assert_eq!(bias_function_cr(&rect, &half).unwrap(), ratio(1, 2));
        assert_eq!(restrict_rect(&rect, &half).unwrap().exact_expectation(), ratio(1, 2));
    }

    #[test]
    fn bias_function_matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let rect = random_rect(&mut rng, 3, 4);
            let mat = LookupMatrix::from_fn(3, 4, 3, |_, _| rng.gen_range(0..16));
            let mut hits = 0u32;
            for y in 0..1usize << 9 {
                let blocks: Vec<usize> = (0..3).map(|i| mat.entry(y >> (3 * i) & 7, i)).collect();
                hits += rect.eval_blocks(&blocks) as u32;
            }
            assert_eq!(bias_function_cr(&rect, &mat).unwrap(), ratio(hits as i64, 512));
            assert_eq!(restrict_rect(&rect, &mat).unwrap().exact_expectation(), ratio(hits as i64, 512));
        }
    }

    #[test]
    fn layout_is_column_major_msb_first() {
        let mut x = SignVector::all_true(2 * 2 * 3);
        // column 1, row 0, entry bit 2 (the most significant)
        x.set((2 + 0) * 3, crate::bits::FALSE);
        let mat = LookupMatrix::from_bits(1, 3, 2, &x);
        assert_eq!(mat.entry(0, 1), 4);
        assert_eq!(mat.entry(0, 0), 0);
        assert_eq!(mat.entry(1, 1), 0);
    }

    #[test]
    fn composition_identity_every_seed() {
        let p = CrGenParams::with_degrees(4, 8, 0.25, 4, &[3, 3]).unwrap();
        assert_eq!(p.seed_bits(), 12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rect = random_rect(&mut rng, 4, 8);
        for s in 0..1u64 << p.seed_bits() {
            let vals = composition_values(&p, &rect, &Seed::from_index(s, p.seed_bits())).unwrap();
            assert!(vals.iter().all(|&v| v == vals[0]));
        }
    }

    #[test]
    fn seed_length_checked() {
        let p = CrGenParams::desk().unwrap();
        assert!(p.sample(&Seed::zero(3)).is_err());
    }
}
