use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use derand::bp3::{exact_ratio, full_reduce};
use derand::cr_prg::CrGenParams;
use derand::harness::corpus::{generate, read_corpus, write_corpus, CorpusClass, CorpusDescriptor, CorpusEntry};
use derand::harness::report::write_report;
use derand::harness::suites;
use derand::harness::{advantage_sweep, hitting_sweep, hsg_for, AdvantageRow, AdvantageSummary, Generator, HarnessConfig};
use derand::models::parse_model;
use derand::rcnf_prg::{RcnfConstants, RcnfGenParams};
use derand::smallbias::BiasedSpaceSpec;
use derand::{Seed, SignVector};

#[derive(Parser)]
#[command(name = "derand", version, about = "Pseudorandom generators and hitting sets at desk scale")]
struct Cli {
    /// JSON configuration (constants, limits, sampling).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Record wall time in reports.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a generator on one seed, or print its parameters.
    Gen(GenArgs),
    /// Evaluate a model on an input and print its exact expectation.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        /// Signs as a string of `+` and `-`.
        #[arg(long)]
        x: Option<String>,
    },
    /// Exact (or sampled) advantage of a generator on a corpus.
    Advantage(AdvantageArgs),
    /// Hitting-set sweep over a corpus of width-3 programs.
    Hit {
        #[arg(value_enum)]
        target: Target,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        corpus: PathBuf,
        /// Only use programs on this many variables.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Reduce a width-3 program to a CNF⊕ and print the certificate.
    Reduce {
        #[arg(value_enum)]
        target: Target,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Write a seeded corpus (landmarks plus random instances).
    Corpus {
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a property suite; exit status 0 iff it passes.
    Check {
        #[arg(value_enum)]
        suite: Suite,
        /// Compare the determinism artifacts against this directory.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Write the determinism artifacts here.
        #[arg(long)]
        write_golden: Option<PathBuf>,
    },
    /// Turn advantage results (JSON) into CSV and SVG.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Bp3,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Rcnf,
    Robp,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Suite {
    Bias,
    Sym,
    Xor,
    Analytics,
    Rcnf,
    Cr,
    Reduce,
    Hit,
    Determinism,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Rcnf,
    Rect,
    Hsg,
    Biased,
    Uniform,
}

#[derive(Args)]
struct GenSpec {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    w: Option<u32>,
    #[arg(long)]
    delta: Option<f64>,
    /// Desk preset for the chosen generator.
    #[arg(long)]
    desk: bool,
    /// Comma-separated field degrees (three for rcnf, one per stage for rect).
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<u32>>,
    /// Rounds for `--degrees` with rcnf.
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    /// JSON constants record (overrides the config file).
    #[arg(long)]
    constants: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: GenSpec,
    /// Seed as hex bytes, bit 0 of byte 0 first.
    #[arg(long)]
    seed: Option<String>,
    /// Print the parameter record instead of an output.
    #[arg(long)]
    dump_params: bool,
}

#[derive(Args)]
struct AdvantageArgs {
    #[command(flatten)]
    spec: GenSpec,
    /// Corpus directory.
    #[arg(long, conflicts_with = "input")]
    corpus: Option<PathBuf>,
    /// Single model file.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Fail unless every advantage is at most this.
    #[arg(long)]
    max: Option<f64>,
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.with_context(|| format!("--{name} is required"))
}

fn build_generator(spec: &GenSpec, cfg: &HarnessConfig) -> Result<(Generator, serde_json::Value, f64)> {
    let rcnf_consts = match &spec.constants {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            serde_json::from_str::<RcnfConstants>(&text).with_context(|| p.display().to_string())?
        }
        None => cfg.rcnf.clone(),
    };
    Ok(match spec.kind {
        GenKind::Rcnf => {
            let (n, eps) = if spec.desk { (64, 1.0 / 16.0) } else { (need(spec.n, "n")?, need(spec.eps, "eps")?) };
            let p = match (&spec.degrees, spec.desk) {
                (Some(d), _) => {
                    let d: [u32; 3] = d.as_slice().try_into().context("rcnf takes three field degrees")?;
                    RcnfGenParams::with_degrees(n, eps, spec.rounds, d, rcnf_consts)?
                }
                (None, true) => suites::desk_rcnf_params(&HarnessConfig { rcnf: rcnf_consts, ..cfg.clone() })?,
                (None, false) => RcnfGenParams::derive(n, eps, rcnf_consts)?,
            };
            let v = serde_json::to_value(&p)?;
            (Generator::Rcnf(p), v, eps)
        }
        GenKind::Rect => {
            let p = if spec.desk {
                CrGenParams::desk()?
            } else {
                let (m, w, delta) = (need(spec.m, "m")?, need(spec.w, "w")?, need(spec.delta, "delta")?);
                match &spec.degrees {
                    Some(d) => CrGenParams::with_degrees(m, w, delta, cfg.cr.stop_width, d)?,
                    None => CrGenParams::derive(m, w, delta, cfg.cr.clone())?,
                }
            };
            let v = serde_json::to_value(&p)?;
            let delta = p.delta;
            (Generator::Rect(p), v, delta)
        }
        GenKind::Hsg => {
            let (n, eps) = (need(spec.n, "n")?, need(spec.eps, "eps")?);
            let mut c = cfg.clone();
            c.rcnf = rcnf_consts;
            if let Some(d) = &spec.degrees {
                c.hsg_degrees = d.as_slice().try_into().context("hsg takes three field degrees")?;
            }
            let h = hsg_for(n, eps, &c)?;
            let v = serde_json::to_value(&h)?;
            (Generator::Hsg(h), v, eps)
        }
        GenKind::Biased => {
            let (n, eps) = (need(spec.n, "n")?, need(spec.eps, "eps")?);
            let s = BiasedSpaceSpec::new(n, eps)?;
            let v = serde_json::to_value(&s)?;
            (Generator::Biased(s), v, eps)
        }
        GenKind::Uniform => {
            let n = need(spec.n, "n")?;
            (Generator::Uniform { n }, serde_json::json!({ "n": n }), 0.0)
        }
    })
}

fn read_model_entry(path: &Path) -> Result<CorpusEntry> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let model = parse_model(&text).with_context(|| path.display().to_string())?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    Ok(CorpusEntry::new(name, model))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run_suite(suite: Suite, cfg: &HarnessConfig) -> Result<(bool, serde_json::Value)> {
    let robps = || generate(&CorpusDescriptor::desk_robp());
    Ok(match suite {
        Suite::Bias => {
            let rows = suites::small_bias_suite()?;
            (rows.iter().all(|r| r.ok), serde_json::to_value(rows)?)
        }
        Suite::Sym => {
            let s = suites::sym_suite(1, 1000);
            (s.passed, serde_json::to_value(s)?)
        }
        Suite::Xor => {
            let s = suites::xor_suite(2, 60)?;
            (s.passed, serde_json::to_value(s)?)
        }
        Suite::Analytics => {
            let rows = suites::analytics_suite(3, 100);
            (rows.iter().all(|r| r.mismatches == 0), serde_json::to_value(rows)?)
        }
        Suite::Rcnf => {
            let s = suites::rcnf_desk_suite(cfg)?;
            (s.passed, serde_json::to_value(s)?)
        }
        Suite::Cr => {
            let s = suites::cr_suite(4, 20)?;
            (s.passed, serde_json::to_value(s)?)
        }
        Suite::Reduce => {
            let s = suites::reduction_suite(&robps(), 0.25)?;
            (s.passed, serde_json::to_value(s)?)
        }
        Suite::Hit => {
            let (rep, ok) = suites::hitting_suite(&robps(), 0.25, cfg)?;
            (ok, serde_json::to_value(rep)?)
        }
        Suite::Determinism => {
            let (files, same) = suites::determinism_suite(cfg, &[1, 4])?;
            let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
            (same, serde_json::json!({ "files": names, "identicalAcrossWorkers": same }))
        }
        Suite::All => {
            let mut all = serde_json::Map::new();
            let mut ok = true;
            for s in [
                Suite::Bias,
                Suite::Sym,
                Suite::Xor,
                Suite::Analytics,
                Suite::Rcnf,
                Suite::Cr,
                Suite::Reduce,
                Suite::Hit,
                Suite::Determinism,
            ] {
                let (pass, _) = run_suite(s, cfg)?;
                let name = s.to_possible_value().expect("named suite").get_name().to_string();
                eprintln!("{name}: {}", if pass { "pass" } else { "FAIL" });
                all.insert(name, serde_json::Value::Bool(pass));
                ok &= pass;
            }
            (ok, serde_json::Value::Object(all))
        }
    })
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    cfg.timing |= cli.timing;
    match cli.cmd {
        Cmd::Gen(args) => {
            let (gen, params, _) = build_generator(&args.spec, &cfg)?;
            if args.dump_params {
                print_json(&params)?;
                return Ok(true);
            }
            let seed = Seed::from_hex(&need(args.seed, "seed")?, gen.seed_bits())?;
            match &gen {
                Generator::Rect(p) => {
                    let blocks = p.sample_blocks(&seed)?;
                    println!("{}", blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" "));
                }
                _ => println!("{}", gen.sample(&seed)?.to_pm_string()),
            }
            Ok(true)
        }
        Cmd::Eval { input, x } => {
            let entry = read_model_entry(&input)?;
            let f = entry.model.function();
            let e = f.exact_expectation();
            let mut out = serde_json::json!({
                "kind": entry.model.kind(),
                "n": f.num_vars(),
                "exactE": e.to_string(),
                "exactEFloat": derand::rational::to_f64(&e),
            });
            if let Some(x) = x {
                let xv = SignVector::parse_pm(&x)?;
                if xv.len() != f.num_vars() {
                    bail!("input has {} signs, model has {} variables", xv.len(), f.num_vars());
                }
                out["value"] = serde_json::Value::Bool(f.eval(&xv));
            }
            print_json(&out)?;
            Ok(true)
        }
        Cmd::Advantage(args) => {
            let (gen, _, eps) = build_generator(&args.spec, &cfg)?;
            let corpus = match (&args.corpus, &args.input) {
                (Some(dir), _) => read_corpus(dir)?,
                (None, Some(p)) => vec![read_model_entry(p)?],
                (None, None) => bail!("--corpus or --in is required"),
            };
            let summary = advantage_sweep(&gen, &corpus, eps, &cfg)?;
            if let Some(csv) = &args.csv {
                write_report(&summary.rows, csv, args.svg.as_deref())?;
            }
            print_json(&summary)?;
            Ok(args.max.is_none_or(|m| summary.max_advantage <= m))
        }
        Cmd::Hit { target: Target::Bp3, eps, corpus, n } => {
            let mut entries = read_corpus(&corpus)?;
            if let Some(n) = n {
                entries.retain(|e| e.model.function().num_vars() == n);
            }
            let rep = hitting_sweep(&entries, eps, &cfg)?;
            print_json(&rep)?;
            Ok(rep.hits_all)
        }
        Cmd::Reduce { target: Target::Bp3, input, eps } => {
            let entry = read_model_entry(&input)?;
            let derand::models::Model::Robp(f) = &entry.model else {
                bail!("{} is a {}, not a branching program", input.display(), entry.model.kind());
            };
            let cert = full_reduce(f, &exact_ratio(eps)?)?;
            print_json(&cert)?;
            Ok(cert.verified != Some(false))
        }
        Cmd::Corpus { class, out, count, seed, n } => {
            let mut d = match class {
                ClassArg::Rcnf => CorpusDescriptor::desk_rcnf(),
                ClassArg::Robp => CorpusDescriptor::desk_robp(),
            };
            if let Some(c) = count {
                d.count = c;
            }
            if let Some(s) = seed {
                d.seed = s;
            }
            if let Some(n) = n {
                match d.class {
                    CorpusClass::Rcnf => d.n = n,
                    CorpusClass::Robp => d.n_max = n,
                }
            }
            let entries = generate(&d);
            write_corpus(&out, &entries)?;
            let path = out.join("descriptor.json");
            std::fs::write(&path, serde_json::to_string_pretty(&d)? + "\n").with_context(|| path.display().to_string())?;
            eprintln!("wrote {} instances to {}", entries.len(), out.display());
            Ok(true)
        }
        Cmd::Check { suite, golden, write_golden } => {
            if suite == Suite::Determinism && (golden.is_some() || write_golden.is_some()) {
                let (files, same) = suites::determinism_suite(&cfg, &[1, 4])?;
                let mut ok = same;
                if let Some(dir) = &write_golden {
                    std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
                    for (name, bytes) in &files {
                        let p = dir.join(name);
                        std::fs::write(&p, bytes).with_context(|| p.display().to_string())?;
                    }
                }
                if let Some(dir) = &golden {
                    for (name, bytes) in &files {
                        let p = dir.join(name);
                        let want = std::fs::read(&p).with_context(|| p.display().to_string())?;
                        let matches = want == *bytes;
                        eprintln!("{name}: {}", if matches { "match" } else { "DIFFERS" });
                        ok &= matches;
                    }
                }
                return Ok(ok);
            }
            let (ok, v) = run_suite(suite, &cfg)?;
            print_json(&v)?;
            Ok(ok)
        }
        Cmd::Report { input, csv, svg } => {
            let text = std::fs::read_to_string(&input).with_context(|| input.display().to_string())?;
            let rows: Vec<AdvantageRow> = match serde_json::from_str::<AdvantageSummary>(&text) {
                Ok(s) => s.rows,
                Err(_) => serde_json::from_str(&text).with_context(|| input.display().to_string())?,
            };
            write_report(&rows, &csv, svg.as_deref())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("an asserted invariant failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
