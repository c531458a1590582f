//! Seeded corpora of formulas and programs, plus fixed landmark instances.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{file_error, Result};
use crate::models::{
    parse_model, random_robp, tribes, BooleanFunction, CombRect, Literal, Model, ReadOnceCnf, Robp, Term,
    TruthTable, XorCnf, ACC, REJ,
};
use crate::rational::to_f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub name: String,
    pub model: Model,
}

impl CorpusEntry {
    pub fn new(name: impl Into<String>, model: Model) -> Self {
        CorpusEntry { name: name.into(), model }
    }

    pub fn file_name(&self) -> String {
        format!("{}.{}", self.name, self.model.kind())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusClass {
    Rcnf,
    Robp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusDescriptor {
    pub class: CorpusClass,
    /// Random instances on top of the landmarks.
    pub count: usize,
    /// Variables of every formula (read-once CNFs).
    pub n: usize,
    /// Program lengths are drawn from `n_min..=n_max`.
    pub n_min: usize,
    pub n_max: usize,
    /// Largest clause width, or program width.
    pub width: usize,
    /// Random instances below this expectation are redrawn.
    pub min_expectation: f64,
    pub seed: u64,
}

impl CorpusDescriptor {
    /// Read-once CNFs on 64 variables for the desk generator.
    pub fn desk_rcnf() -> Self {
        CorpusDescriptor {
            class: CorpusClass::Rcnf,
            count: 30,
            n: 64,
            n_min: 64,
            n_max: 64,
            width: 6,
            min_expectation: 0.0,
            seed: 7,
        }
    }

    /// Width-3 programs on at most 14 variables with `E[f] >= 1/4`.
    pub fn desk_robp() -> Self {
        CorpusDescriptor {
            class: CorpusClass::Robp,
            count: 100,
            n: 14,
            n_min: 4,
            n_max: 14,
            width: 3,
            min_expectation: 0.25,
            seed: 0xb3,
        }
    }
}

fn embed(n: usize, f: &ReadOnceCnf) -> ReadOnceCnf {
    ReadOnceCnf::new(n, f.clauses().to_vec()).expect("embedding keeps the formula read-once")
}

fn parity(n: usize, vars: &[usize]) -> XorCnf {
    XorCnf::new(n, vec![Term::xor(vars.iter().map(|&v| Literal::pos(v)).collect(), true)]).expect("one term")
}

/// Tribes with `m = 2^(w+1)` clauses for `w = 2, 3`, parities, an AND of
/// pair parities, and OR/AND chains. Instances that do not fit `n` are skipped.
pub fn rcnf_landmarks(n: usize) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for w in [2, 3] {
        let m = 1 << (w + 1);
        if w * m <= n {
            out.push(CorpusEntry::new(format!("tribes-w{w}"), Model::Rcnf(embed(n, &tribes(w, m)))));
        }
    }
    let spread = [5, 17, 40];
    let mut parities: Vec<(String, Vec<usize>)> = vec![("parity3".into(), vec![0, 1, 2])];
    if n > 40 {
        parities.push(("parity3-spread".into(), spread.to_vec()));
    }
    if n >= 8 {
        parities.push(("parity8".into(), (0..8).collect()));
    }
    parities.push((format!("parity{n}"), (0..n).collect()));
    for (name, vars) in parities {
        out.push(CorpusEntry::new(name, Model::Xorcnf(parity(n, &vars))));
    }
    if n >= 4 {
        let pairs = (0..n / 4).map(|i| Term::xor(vec![Literal::pos(4 * i), Literal::pos(4 * i + 1)], true)).collect();
        out.push(CorpusEntry::new("and-parity2", Model::Xorcnf(XorCnf::new(n, pairs).expect("disjoint pairs"))));
    }
    let or6 = ReadOnceCnf::new(n, vec![(0..6.min(n)).map(Literal::pos).collect()]).expect("one clause");
    out.push(CorpusEntry::new("or6", Model::Rcnf(or6)));
    let and4 = ReadOnceCnf::new(n, (0..4.min(n)).map(|v| vec![Literal::pos(v)]).collect()).expect("unit clauses");
    out.push(CorpusEntry::new("and4", Model::Rcnf(and4)));
    out
}

/// Read-once CNF over a random subset of the variables, clause widths in
/// `1..=max_width`, random literal signs.
pub fn random_rcnf(rng: &mut impl Rng, n: usize, max_width: usize) -> ReadOnceCnf {
    let mut vars: Vec<usize> = (0..n).collect();
    vars.shuffle(rng);
    let used = rng.gen_range(n.min(8)..=n);
    let mut clauses = Vec::new();
    let mut i = 0;
    while i < used {
        let w = rng.gen_range(1..=max_width).min(used - i);
        clauses.push(vars[i..i + w].iter().map(|&v| Literal { var: v, positive: rng.gen() }).collect());
        i += w;
    }
    ReadOnceCnf::new(n, clauses).expect("disjoint clauses")
}

/// CNF⊕ with disjoint OR and XOR terms over a random subset of the variables.
pub fn random_xorcnf(rng: &mut impl Rng, n: usize, max_width: usize) -> XorCnf {
    let mut vars: Vec<usize> = (0..n).collect();
    vars.shuffle(rng);
    let used = rng.gen_range(0..=n);
    let mut terms = Vec::new();
    let mut i = 0;
    while i < used {
        let w = rng.gen_range(1..=max_width).min(used - i);
        let lits = vars[i..i + w].iter().map(|&v| Literal { var: v, positive: rng.gen() }).collect();
        terms.push(if rng.gen() { Term::or(lits) } else { Term::xor(lits, rng.gen()) });
        i += w;
    }
    XorCnf::new(n, terms).expect("disjoint terms")
}

/// Rectangle whose table entries are true with probability `density`.
pub fn random_rect(rng: &mut impl Rng, m: usize, w: u32, density: f64) -> CombRect {
    let tables = (0..m).map(|_| TruthTable::from_fn(w, |_| rng.gen_bool(density))).collect();
    CombRect::new(m, w, tables).expect("shape matches")
}

fn robp(n: usize, next: Vec<Vec<[usize; 2]>>) -> Robp {
    Robp::new(n, 3, None, next, false).expect("hand-built program")
}

/// Width-3 programs: AND and OR chains, a parity, a program whose first
/// variable must be true, and an AND of ORs over disjoint pairs.
pub fn robp_landmarks() -> Vec<CorpusEntry> {
    let n = 6;
    let and: Vec<_> = (0..n)
        .map(|t| {
            let (ok, dead) = if t + 1 == n { (ACC, REJ) } else { (0, 2) };
            match t {
                0 => vec![[2, 0]],
                _ => vec![[dead, ok], [dead, dead], [dead, dead]],
            }
        })
        .collect();
    let or: Vec<_> = (0..n)
        .map(|t| {
            let (yes, no) = if t + 1 == n { (ACC, REJ) } else { (1, 0) };
            match t {
                0 => vec![[0, 1]],
                _ => vec![[no, yes], [yes, yes], [no, no]],
            }
        })
        .collect();
    let par: Vec<_> = (0..n)
        .map(|t| {
            let (a, b) = if t + 1 == n { (ACC, REJ) } else { (0, 1) };
            match t {
                0 => vec![[0, 1]],
                _ => vec![[a, b], [b, a], [b, b]],
            }
        })
        .collect();
    let gate: Vec<_> = (0..n)
        .map(|t| {
            let (a, b) = if t + 1 == n { (ACC, REJ) } else { (0, 1) };
            match t {
                0 => vec![[2, 0]],
                _ => vec![[a, b], [b, a], [if t + 1 == n { REJ } else { 2 }; 2]],
            }
        })
        .collect();
    // (x0 ∨ x1) ∧ (x2 ∨ x3) ∧ (x4 ∨ x5), state 1 = "pair half-done"
    let ors: Vec<_> = (0..n)
        .map(|t| {
            let done = if t + 1 == n { ACC } else { 0 };
            let dead = if t + 1 == n { REJ } else { 2 };
            if t % 2 == 0 {
                if t == 0 {
                    vec![[1, 0]]
                } else {
                    vec![[1, 0], [dead, dead], [dead, dead]]
                }
            } else {
                vec![[done, done], [dead, done], [dead, dead]]
            }
        })
        .collect();
    vec![
        CorpusEntry::new("and6", Model::Robp(robp(n, and))),
        CorpusEntry::new("or6", Model::Robp(robp(n, or))),
        CorpusEntry::new("parity6", Model::Robp(robp(n, par))),
        CorpusEntry::new("gated-parity6", Model::Robp(robp(n, gate))),
        CorpusEntry::new("or-pairs6", Model::Robp(robp(n, ors))),
    ]
}

/// Landmarks followed by `count` seeded random instances.
pub fn generate(desc: &CorpusDescriptor) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
    match desc.class {
        CorpusClass::Rcnf => {
            let mut out = rcnf_landmarks(desc.n);
            for i in 0..desc.count {
                let max_width = 1 + i % desc.width.max(1);
                let f = loop {
                    let f = random_rcnf(&mut rng, desc.n, max_width);
                    if to_f64(&f.exact_expectation()) >= desc.min_expectation {
                        break f;
                    }
                };
                out.push(CorpusEntry::new(format!("rand{i:03}"), Model::Rcnf(f)));
            }
            out
        }
        CorpusClass::Robp => {
            let mut out = robp_landmarks();
            for i in 0..desc.count {
                let f = loop {
                    let n = rng.gen_range(desc.n_min..=desc.n_max);
                    let f = random_robp(n, desc.width, false, &mut rng);
                    if to_f64(&f.exact_expectation()) >= desc.min_expectation {
                        break f;
                    }
                };
                out.push(CorpusEntry::new(format!("robp{i:03}"), Model::Robp(f)));
            }
            out
        }
    }
}

/// Writes one text file per instance, named `<name>.<kind>`.
pub fn write_corpus(dir: &Path, entries: &[CorpusEntry]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(file_error(dir))?;
    for e in entries {
        let path = dir.join(e.file_name());
        std::fs::write(&path, e.model.to_text()).map_err(file_error(&path))?;
    }
    Ok(())
}

/// Reads every model file of a directory, in file-name order.
pub fn read_corpus(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(file_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("rcnf" | "xorcnf" | "rect" | "robp")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(file_error(&p))?;
            let model = parse_model(&text)?;
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            Ok(CorpusEntry { name, model })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::brute_expectation;
    use crate::rational::ratio;

    #[test]
    fn tribes_landmark_expectation() {
        let l = rcnf_landmarks(64);
        let t = l.iter().find(|e| e.name == "tribes-w2").unwrap();
        assert_eq!(t.model.function().exact_expectation(), ratio(6561, 65536));
    }

    #[test]
    fn robp_landmarks_compute_what_they_say() {
        let l = robp_landmarks();
        let e: Vec<_> = l.iter().map(|e| brute_expectation(e.model.function())).collect();
        assert_eq!(e, vec![ratio(1, 64), ratio(63, 64), ratio(1, 2), ratio(1, 4), ratio(27, 64)]);
        for entry in &l {
            assert_eq!(entry.model.function().exact_expectation(), brute_expectation(entry.model.function()));
        }
    }

    #[test]
    fn zero_count_is_landmarks_only() {
        let d = CorpusDescriptor { count: 0, ..CorpusDescriptor::desk_robp() };
        assert_eq!(generate(&d), robp_landmarks());
    }

    #[test]
    fn corpus_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = CorpusDescriptor { count: 5, ..CorpusDescriptor::desk_robp() };
        let a = generate(&d);
        write_corpus(dir.path(), &a).unwrap();
        let mut b = read_corpus(dir.path()).unwrap();
        let mut a2 = a.clone();
        a2.sort_by(|x, y| x.file_name().cmp(&y.file_name()));
        b.sort_by(|x, y| x.file_name().cmp(&y.file_name()));
        assert_eq!(a2, b);
        assert_eq!(generate(&d), a);
    }

    #[test]
    fn random_programs_meet_the_floor() {
        let c = generate(&CorpusDescriptor { count: 20, ..CorpusDescriptor::desk_robp() });
        for e in c.iter().filter(|e| e.name.starts_with("robp")) {
            let n = e.model.function().num_vars();
            assert!((4..=14).contains(&n));
            assert!(e.model.function().exact_expectation() >= ratio(1, 4));
        }
    }
}
