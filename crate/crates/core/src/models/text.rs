//! Line-oriented text formats.
//!
//! ```text
//! rcnf <n> <m>          then m clauses: signed 1-based literals ending in 0
//! xorcnf <n> <m>        then m terms: OR lines as above, XOR lines prefixed `x`
//!                       (an XOR line holds when an odd number of its literals are true)
//! rect <m> <w>          then m hex truth tables, most significant digit first
//! robp <n> <d>          then `t s b -> s'` transition lines, an optional
//!                       `order v1 .. vn` line (1-based) and an optional `sudden-death` line
//! ```
//!
//! A body line `false` (with `m = 0`) is the constant-0 formula. Lines starting
//! with `#` or `c ` are comments. Input starting with `{` is read as JSON.

use serde::{Deserialize, Serialize};

use super::{BooleanFunction, CombRect, Literal, ReadOnceCnf, Robp, Term, TruthTable, XorCnf};
use crate::bits::SignVector;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Model {
    Rcnf(ReadOnceCnf),
    Xorcnf(XorCnf),
    Rect(CombRect),
    Robp(Robp),
}

impl Model {
    pub fn function(&self) -> &dyn BooleanFunction {
        match self {
            Model::Rcnf(f) => f,
            Model::Xorcnf(f) => f,
            Model::Rect(f) => f,
            Model::Robp(f) => f,
        }
    }

    pub fn eval(&self, x: &SignVector) -> bool {
        self.function().eval(x)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Rcnf(_) => "rcnf",
            Model::Xorcnf(_) => "xorcnf",
            Model::Rect(_) => "rect",
            Model::Robp(_) => "robp",
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let lits = |ls: &[Literal]| ls.iter().map(|l| format!("{} ", l.to_dimacs())).collect::<String>();
        match self {
            Model::Rcnf(f) => {
                s += &format!("rcnf {} {}\n", f.num_vars(), f.clauses().len());
                if f.is_falsified() {
                    s += "false\n";
                }
                for c in f.clauses() {
                    s += &format!("{}0\n", lits(c));
                }
            }
            Model::Xorcnf(f) => {
                s += &format!("xorcnf {} {}\n", f.num_vars(), f.terms().len());
                if f.is_falsified() {
                    s += "false\n";
                }
                for t in f.terms() {
                    match t.kind {
                        super::TermKind::Or => s += &format!("{}0\n", lits(&t.lits)),
                        super::TermKind::Xor => {
                            let mut ls = t.lits.clone();
                            if !t.parity {
                                ls[0] = ls[0].negate();
                            }
                            s += &format!("x {}0\n", lits(&ls));
                        }
                    }
                }
            }
            Model::Rect(r) => {
                s += &format!("rect {} {}\n", r.m(), r.w());
                for t in r.tables() {
                    s += &format!("{}\n", t.to_hex());
                }
            }
            Model::Robp(p) => {
                s += &format!("robp {} {}\n", p.len(), p.d());
                if p.order().iter().enumerate().any(|(i, &v)| i != v) {
                    let o: Vec<String> = p.order().iter().map(|v| (v + 1).to_string()).collect();
                    s += &format!("order {}\n", o.join(" "));
                }
                if p.is_sudden_death() {
                    s += "sudden-death\n";
                }
                for (t, layer) in p.next().iter().enumerate() {
                    for (st, e) in layer.iter().enumerate() {
                        for (b, v) in e.iter().enumerate() {
                            s += &format!("{t} {st} {b} -> {v}\n");
                        }
                    }
                }
            }
        }
        s
    }
}

fn perr<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().or_else(|_| perr(line, format!("expected {what}, found {tok:?}")))
}

fn parse_lits(toks: &[&str], line: usize, n: usize) -> Result<Vec<Literal>> {
    let mut out = Vec::new();
    let mut ended = false;
    for &t in toks {
        if ended {
            return perr(line, "tokens after terminating 0");
        }
        let v: i64 = parse_num(t, line, "literal")?;
        if v == 0 {
            ended = true;
            continue;
        }
        let l = Literal::from_dimacs(v).or_else(|e| perr(line, e.to_string()))?;
        if l.var >= n {
            return perr(line, format!("variable {} out of range 1..={n}", l.var + 1));
        }
        out.push(l);
    }
    if !ended {
        return perr(line, "missing terminating 0");
    }
    if out.is_empty() {
        return perr(line, "empty clause; use `false` for the constant-0 formula");
    }
    Ok(out)
}

/// Rejects a repeated variable, pointing at the line that repeats it.
fn check_disjoint(seen: &mut [Option<usize>], lits: &[Literal], line: usize, what: &str) -> Result<()> {
    for l in lits {
        if let Some(first) = seen[l.var] {
            return perr(
                line,
                format!("variable {} already used on line {first} ({what})", l.var + 1),
            );
        }
        seen[l.var] = Some(line);
    }
    Ok(())
}

/// Parses either text or JSON.
pub fn parse_model(input: &str) -> Result<Model> {
    if input.trim_start().starts_with('{') {
        return Ok(serde_json::from_str(input)?);
    }
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#') && !l.starts_with("c "));
    let Some((hline, header)) = lines.next() else {
        return perr(1, "empty input");
    };
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 {
        return perr(hline, format!("bad header {header:?}"));
    }
    let a: usize = parse_num(h[1], hline, "count")?;
    let b: usize = parse_num(h[2], hline, "count")?;
    let body: Vec<(usize, &str)> = lines.collect();
    match h[0] {
        "rcnf" | "xorcnf" => {
            let (n, m) = (a, b);
            if body.len() == 1 && body[0].1 == "false" {
                if m != 0 {
                    return perr(body[0].0, "constant-0 formula must declare 0 clauses");
                }
                return Ok(if h[0] == "rcnf" {
                    Model::Rcnf(ReadOnceCnf::falsified(n))
                } else {
                    Model::Xorcnf(XorCnf::falsified(n))
                });
            }
            if body.len() != m {
                let at = body.last().map(|x| x.0).unwrap_or(hline);
                return perr(at, format!("header declares {m} clauses, found {}", body.len()));
            }
            let mut seen = vec![None; n];
            let what = if h[0] == "rcnf" { "formula must be read-once" } else { "terms must be disjoint" };
            let mut terms = Vec::new();
            for (ln, l) in body {
                let toks: Vec<&str> = l.split_whitespace().collect();
                let is_xor = toks[0] == "x";
                if is_xor && h[0] == "rcnf" {
                    return perr(ln, "XOR terms are not allowed in rcnf");
                }
                let lits = parse_lits(if is_xor { &toks[1..] } else { &toks }, ln, n)?;
                check_disjoint(&mut seen, &lits, ln, what)?;
                terms.push(if is_xor { Term::xor(lits, true) } else { Term::or(lits) });
            }
            if h[0] == "rcnf" {
                Ok(Model::Rcnf(ReadOnceCnf::new(n, terms.into_iter().map(|t| t.lits).collect())?))
            } else {
                Ok(Model::Xorcnf(XorCnf::new(n, terms)?))
            }
        }
        "rect" => {
            let (m, w) = (a, b as u32);
            if body.len() != m {
                let at = body.last().map(|x| x.0).unwrap_or(hline);
                return perr(at, format!("header declares {m} tables, found {}", body.len()));
            }
            let mut tables = Vec::new();
            for (ln, l) in body {
                tables.push(TruthTable::from_hex(w, l).or_else(|e| perr(ln, e.to_string()))?);
            }
            Ok(Model::Rect(CombRect::new(m, w, tables)?))
        }
        "robp" => {
            let (n, d) = (a, b);
            if n == 0 || d < 2 {
                return perr(hline, "robp needs n >= 1 and d >= 2");
            }
            let width = |t: usize| if t == 0 { 1 } else if t == n { 2 } else { d };
            let mut next: Vec<Vec<[Option<usize>; 2]>> = (0..n).map(|t| vec![[None, None]; width(t)]).collect();
            let mut order = None;
            let mut sudden = false;
            for (ln, l) in body {
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks[0] == "order" {
                    let vs = toks[1..]
                        .iter()
                        .map(|t| parse_num::<usize>(t, ln, "variable").map(|v| v.wrapping_sub(1)))
                        .collect::<Result<Vec<_>>>()?;
                    order = Some(vs);
                    continue;
                }
                if toks == ["sudden-death"] {
                    sudden = true;
                    continue;
                }
                if toks.len() != 5 || toks[3] != "->" {
                    return perr(ln, "expected `t state bit -> state`");
                }
                let t: usize = parse_num(toks[0], ln, "layer")?;
                let s: usize = parse_num(toks[1], ln, "state")?;
                let bit: usize = parse_num(toks[2], ln, "bit")?;
                let v: usize = parse_num(toks[4], ln, "state")?;
                if t >= n || s >= width(t) || bit > 1 || v >= width(t + 1) {
                    return perr(ln, "transition out of range");
                }
                if next[t][s][bit].replace(v).is_some() {
                    return perr(ln, format!("transition from layer {t} state {s} on {bit} given twice"));
                }
            }
            let mut full = Vec::with_capacity(n);
            for (t, layer) in next.into_iter().enumerate() {
                let mut row = Vec::with_capacity(layer.len());
                for (s, e) in layer.into_iter().enumerate() {
                    match e {
                        [Some(x), Some(y)] => row.push([x, y]),
                        _ => return perr(hline, format!("layer {t} state {s} is missing a transition")),
                    }
                }
                full.push(row);
            }
            Ok(Model::Robp(Robp::new(n, d, order, full, sudden)?))
        }
        other => perr(hline, format!("unknown model type {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rcnf_round_trip() {
        let text = "# tribes-ish\nrcnf 4 2\n1 -2 0\n3 4 0\n";
        let m = parse_model(text).unwrap();
        assert_eq!(parse_model(&m.to_text()).unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(parse_model(&json).unwrap(), m);
    }

    #[test]
    fn read_once_violation_has_line_number() {
        let err = parse_model("rcnf 3 2\n1 2 0\n-2 3 0\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("read-once"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn xor_disjointness_violation() {
        let err = parse_model("xorcnf 3 2\nx 1 2 0\n2 3 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn xor_parity_normalised_on_write() {
        let f = XorCnf::new(2, vec![Term::xor(vec![Literal::pos(0), Literal::pos(1)], false)]).unwrap();
        let m = Model::Xorcnf(f.clone());
        let back = parse_model(&m.to_text()).unwrap();
        for x in 0..4u64 {
            assert_eq!(back.function().eval_packed(x), f.eval_packed(x));
        }
    }

    #[test]
    fn constant_false_forms() {
        let m = parse_model("rcnf 3 0\nfalse\n").unwrap();
        assert_eq!(m, Model::Rcnf(ReadOnceCnf::falsified(3)));
        assert_eq!(parse_model(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn robp_text_round_trip() {
        let text = "robp 2 2\norder 2 1\nsudden-death\n0 0 0 -> 1\n0 0 1 -> 0\n1 0 0 -> 1\n1 0 1 -> 0\n1 1 0 -> 1\n1 1 1 -> 1\n";
        let m = parse_model(text).unwrap();
        assert_eq!(parse_model(&m.to_text()).unwrap(), m);
        let missing = "robp 2 2\n0 0 0 -> 1\n";
        assert!(parse_model(missing).is_err());
    }

    #[test]
    fn rect_round_trip() {
        let m = parse_model("rect 2 2\ne\n7\n").unwrap();
        assert_eq!(parse_model(&m.to_text()).unwrap(), m);
        assert_eq!(m.function().exact_expectation(), crate::rational::ratio(9, 16));
    }
}
