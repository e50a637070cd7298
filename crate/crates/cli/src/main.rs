//! Command-line front end.
//!
//! Subcommands: `forge` (build a certified family), `verify` (re-check a
//! certificate), `tracepoly` (symbolic trace polynomial of a word),
//! `primes` (constrained search / split test / density), `spectrum` (length
//! histogram of a complex representation). Results go to stdout as JSON,
//! diagnostics to stderr.
//!
//! Exit codes: 0 success; 1 I/O; 2 failed check (distinguishing-image or
//! trace-evidence violation, certificate divergence); 3 search exhausted;
//! 4 symbolic size guard; 64 usage; 65 unparseable input data.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_bigint::BigUint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use traceclass::forge::{self, Certificate, ForgeError, ForgeOptions};
use traceclass::mat2::{det, Mat2};
use traceclass::primes::{
    density_estimate, next_prime_constrained, splits_completely, NumberFieldSpec,
    PrimeSearchConstraints,
};
use traceclass::ring::{ComplexField, ScalarRing};
use traceclass::spectrum::{enumerate_spectrum, SpectrumError};
use traceclass::tracepoly::{self, TracePolyError, TracePolyTerm};
use traceclass::word::{FlatWord, SlpWord};
use traceclass::WitnessAssignment;

const EXIT_IO: u8 = 1;
const EXIT_CHECK: u8 = 2;
const EXIT_SEARCH: u8 = 3;
const EXIT_TOO_LARGE: u8 = 4;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser)]
#[command(name = "traceclass", version, about = "Equal-trace word families with machine-checkable non-conjugacy certificates")]
struct Cli {
    /// Cap on worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the level-n family and write its certificate.
    Forge {
        /// Level: the family has n+1 words in one trace class.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        n: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path for the certificate JSON.
        #[arg(long)]
        out: PathBuf,
        /// Randomized trace-equality trials (minimum 20 is enforced).
        #[arg(long, default_value_t = 20)]
        trials: u32,
        /// Override the starting point of the p_1 search.
        #[arg(long)]
        origin: Option<u64>,
        /// Candidate budget per level of the prime search.
        #[arg(long, default_value_t = 10_000)]
        budget: u32,
        /// Embed the exact level-1 trace-polynomial pair (slow, large).
        #[arg(long)]
        symbolic: bool,
    },
    /// Re-derive everything a certificate claims and compare bit-exactly.
    Verify {
        #[arg(long)]
        cert: PathBuf,
    },
    /// Trace polynomial of a word in s = tr a, t = tr b, u = tr ab.
    Tracepoly {
        /// Word text, e.g. "(a^31 B)^27 a (a^31 B) A".
        #[arg(long)]
        word: String,
        /// Check tr W(x,y) = tr W(y,x) under tr x = tr y instead.
        #[arg(long)]
        symmetry: bool,
    },
    /// Constrained prime search, split testing, and density estimation.
    Primes {
        /// Find the least admissible prime strictly above this bound.
        #[arg(long)]
        next_after: Option<BigUint>,
        /// Forbidden residues, e.g. "31:1,5;67:2".
        #[arg(long)]
        forbid: Option<String>,
        /// Require the result to exceed twice this value.
        #[arg(long)]
        double_floor: Option<BigUint>,
        /// Monic integer polynomial, e.g. "x^2+1": does --p split completely?
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        p: Option<u64>,
        /// Monic integer polynomial for a split-density report up to --limit.
        #[arg(long)]
        density: Option<String>,
        #[arg(long)]
        limit: Option<u64>,
    },
    /// Complex-length histogram of short conjugacy classes under a
    /// representation given by two complex matrices.
    Spectrum {
        /// JSON file: two row-major 4-tuples of {re, im} entries.
        #[arg(long)]
        gens: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        /// Bucketing tolerance for both length and angle.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Keep w and w⁻¹ as distinct classes (complex-spectrum view).
        #[arg(long)]
        keep_inverses: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(EXIT_USAGE)
                }
            };
        }
    };
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Forge { n, seed, out, trials, origin, budget, symbolic } => {
            cmd_forge(n, seed, &out, trials, origin, budget, symbolic)
        }
        Command::Verify { cert } => cmd_verify(&cert),
        Command::Tracepoly { word, symmetry } => cmd_tracepoly(&word, symmetry),
        Command::Primes { next_after, forbid, double_floor, split, p, density, limit } => {
            cmd_primes(next_after, forbid.as_deref(), double_floor, split.as_deref(), p, density.as_deref(), limit, jobs)
        }
        Command::Spectrum { gens, max_len, tol, keep_inverses } => {
            cmd_spectrum(&gens, max_len, tol, keep_inverses)
        }
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

#[derive(Serialize)]
struct ForgeSummary<'a> {
    version: u32,
    level: u32,
    seed: u64,
    out: String,
    params: &'a forge::CertParams,
    trace_trials: u32,
    trace_primes: usize,
}

fn cmd_forge(
    n: u32,
    seed: u64,
    out: &PathBuf,
    trials: u32,
    origin: Option<u64>,
    budget: u32,
    symbolic: bool,
) -> ExitCode {
    let opts = ForgeOptions {
        trials,
        candidate_budget: budget,
        search_origin: origin,
        symbolic_evidence: symbolic,
    };
    let cert = match forge::certify(n, seed, &opts) {
        Ok(cert) => cert,
        Err(e @ (ForgeError::P3Violation { .. }
        | ForgeError::TraceMismatch(_)
        | ForgeError::SymbolicMismatch)) => return fail(EXIT_CHECK, e),
        Err(e @ ForgeError::SearchExhausted { .. }) => return fail(EXIT_SEARCH, e),
        Err(ForgeError::Symbolic(e)) => return fail(EXIT_TOO_LARGE, e),
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if let Err(e) = std::fs::write(out, cert.to_json()) {
        return fail(EXIT_IO, format!("cannot write {}: {e}", out.display()));
    }
    let summary = ForgeSummary {
        version: cert.version,
        level: cert.level,
        seed: cert.seed,
        out: out.display().to_string(),
        params: &cert.params,
        trace_trials: cert.trace_evidence.trials,
        trace_primes: cert.trace_evidence.distinct_primes(),
    };
    println!("{}", serde_json::to_string(&summary).unwrap());
    ExitCode::SUCCESS
}

#[derive(Serialize)]
struct VerifySummary {
    version: u32,
    level: u32,
    seed: u64,
    verified: bool,
    words: usize,
    verdicts: usize,
}

fn cmd_verify(path: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_IO, format!("cannot read {}: {e}", path.display())),
    };
    let cert = match Certificate::from_json(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_DATA, format!("malformed certificate: {e}")),
    };
    match forge::verify_certificate(&cert) {
        Ok(()) => {
            let summary = VerifySummary {
                version: cert.version,
                level: cert.level,
                seed: cert.seed,
                verified: true,
                words: cert.words.len(),
                verdicts: cert.verdicts.len(),
            };
            println!("{}", serde_json::to_string(&summary).unwrap());
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_CHECK, format!("certificate diverges at {e}")),
    }
}

#[derive(Serialize)]
struct TracePolyOut {
    version: u32,
    word: String,
    terms: Vec<TracePolyTerm>,
    pretty: String,
}

#[derive(Serialize)]
struct SymmetryOut {
    version: u32,
    word: String,
    symmetric: bool,
}

fn cmd_tracepoly(word: &str, symmetry: bool) -> ExitCode {
    let too_large = |e: TracePolyError| fail(EXIT_TOO_LARGE, e);
    if symmetry {
        let slp = match SlpWord::parse(word) {
            Ok(w) => w,
            Err(e) => return fail(EXIT_DATA, e),
        };
        return match tracepoly::check_symmetry(&slp) {
            Ok(symmetric) => {
                let out = SymmetryOut { version: 1, word: word.to_string(), symmetric };
                println!("{}", serde_json::to_string(&out).unwrap());
                ExitCode::SUCCESS
            }
            Err(e) => too_large(e),
        };
    }
    let flat = match FlatWord::parse(word) {
        Ok(w) => w,
        Err(e) => return fail(EXIT_DATA, e),
    };
    match tracepoly::trace_polynomial(&flat) {
        Ok(poly) => {
            let out = TracePolyOut {
                version: 1,
                word: word.to_string(),
                terms: poly.to_json_terms(),
                pretty: poly.to_string(),
            };
            println!("{}", serde_json::to_string(&out).unwrap());
            ExitCode::SUCCESS
        }
        Err(e) => too_large(e),
    }
}

fn parse_forbidden(
    text: &str,
) -> Result<Vec<(BigUint, Vec<BigUint>)>, String> {
    let mut out = Vec::new();
    for group in text.split(';').filter(|g| !g.trim().is_empty()) {
        let (modulus, residues) = group
            .split_once(':')
            .ok_or_else(|| format!("expected modulus:residues in {group:?}"))?;
        let modulus: BigUint =
            modulus.trim().parse().map_err(|_| format!("bad modulus {modulus:?}"))?;
        let residues = residues
            .split(',')
            .map(|r| {
                let r: BigUint = r.trim().parse().map_err(|_| format!("bad residue {r:?}"))?;
                Ok(&r % &modulus)
            })
            .collect::<Result<Vec<_>, String>>()?;
        out.push((modulus, residues));
    }
    Ok(out)
}

#[derive(Serialize)]
struct NextPrimeOut {
    version: u32,
    prime: String,
}

#[derive(Serialize)]
struct SplitOut {
    version: u32,
    poly: String,
    p: u64,
    splits: bool,
}

#[derive(Serialize)]
struct DensityOut {
    version: u32,
    poly: String,
    limit: u64,
    split: u64,
    primes: u64,
    ratio: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_primes(
    next_after: Option<BigUint>,
    forbid: Option<&str>,
    double_floor: Option<BigUint>,
    split: Option<&str>,
    p: Option<u64>,
    density: Option<&str>,
    limit: Option<u64>,
    jobs: usize,
) -> ExitCode {
    let modes = [next_after.is_some(), split.is_some(), density.is_some()];
    if modes.iter().filter(|&&m| m).count() != 1 {
        return fail(EXIT_USAGE, "choose exactly one of --next-after, --split, --density");
    }
    if let Some(bound) = next_after {
        let forbidden_residues = match forbid.map(parse_forbidden).transpose() {
            Ok(f) => f.unwrap_or_default(),
            Err(e) => return fail(EXIT_DATA, e),
        };
        let constraints = PrimeSearchConstraints {
            strict_lower_bound: bound,
            forbidden_residues,
            doubling_floor: double_floor,
        };
        let prime = next_prime_constrained(&constraints);
        let out = NextPrimeOut { version: 1, prime: prime.to_string() };
        println!("{}", serde_json::to_string(&out).unwrap());
        return ExitCode::SUCCESS;
    }
    if let Some(poly_text) = split {
        let Some(p) = p else {
            return fail(EXIT_USAGE, "--split requires --p");
        };
        let field = match NumberFieldSpec::parse(poly_text, true) {
            Ok(f) => f,
            Err(e) => return fail(EXIT_DATA, e),
        };
        if !traceclass::primes::is_prime_u64(p) {
            return fail(EXIT_DATA, format!("{p} is not prime"));
        }
        let out = SplitOut {
            version: 1,
            poly: field.to_text(),
            p,
            splits: splits_completely(&field, p),
        };
        println!("{}", serde_json::to_string(&out).unwrap());
        return ExitCode::SUCCESS;
    }
    let poly_text = density.unwrap();
    let Some(limit) = limit else {
        return fail(EXIT_USAGE, "--density requires --limit");
    };
    let field = match NumberFieldSpec::parse(poly_text, true) {
        Ok(f) => f,
        Err(e) => return fail(EXIT_DATA, e),
    };
    let report = density_estimate(&field, limit, jobs);
    let out = DensityOut {
        version: 1,
        poly: field.to_text(),
        limit: report.limit,
        split: report.split,
        primes: report.primes,
        ratio: report.ratio,
    };
    println!("{}", serde_json::to_string(&out).unwrap());
    ExitCode::SUCCESS
}

#[derive(Deserialize)]
struct CxJson {
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct SpectrumOut {
    version: u32,
    max_len: usize,
    tol: f64,
    merged_inverses: bool,
    entries: Vec<traceclass::SpectrumEntry>,
}

fn cmd_spectrum(gens: &PathBuf, max_len: usize, tol: f64, keep_inverses: bool) -> ExitCode {
    let text = match std::fs::read_to_string(gens) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_IO, format!("cannot read {}: {e}", gens.display())),
    };
    let raw: Vec<Vec<CxJson>> = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_DATA, format!("malformed generators file: {e}")),
    };
    if raw.len() != 2 || raw.iter().any(|m| m.len() != 4) {
        return fail(EXIT_DATA, "expected two row-major 4-tuples of {re, im} entries");
    }
    let ring = ComplexField::new(tol.max(1e-12));
    let mat = |v: &[CxJson]| {
        Mat2::new(
            Complex64::new(v[0].re, v[0].im),
            Complex64::new(v[1].re, v[1].im),
            Complex64::new(v[2].re, v[2].im),
            Complex64::new(v[3].re, v[3].im),
        )
    };
    let (a, b) = (mat(&raw[0]), mat(&raw[1]));
    for (name, m) in [("a", &a), ("b", &b)] {
        if !ring.is_one(&det(&ring, m)) {
            return fail(EXIT_DATA, format!("generator {name} does not have determinant 1"));
        }
    }
    let asg = WitnessAssignment::new(ring, a, b);
    match enumerate_spectrum(&asg, max_len, tol, keep_inverses) {
        Ok(entries) => {
            let out = SpectrumOut {
                version: 1,
                max_len,
                tol,
                merged_inverses: !keep_inverses,
                entries,
            };
            println!("{}", serde_json::to_string(&out).unwrap());
            ExitCode::SUCCESS
        }
        Err(e @ SpectrumError::LengthGuard(_)) => fail(EXIT_USAGE, e),
        Err(e) => fail(EXIT_DATA, e),
    }
}
