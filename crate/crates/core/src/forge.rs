//! The recursive word construction and its certificates.
//!
//! Level n produces n+1 words in one trace class. The level templates are
//!
//! ```text
//! W(x, y)  = (x^{p−1+q} y^{−q})^k · x · (x^{p−1+q} y^{−q}) · x⁻¹
//! W̄(x, y)  = x · (x^{p−1+q} y^{−q})^k · x⁻¹ · (x^{p−1+q} y^{−q})
//! ```
//!
//! with the level-1 pair `W(a, b)`, `W̄(a, b)` and recursion
//! `w_{n,1} = W(w_{n−1,1}, w_{n−1,2})`, `w_{n,2} = W̄(...)`; members 3..n+1
//! rebuild the tower with one lower pair swapped. Trace equality is the
//! swap-symmetry of traces; non-conjugacy is witnessed in finite quotients:
//! under `a ↦ [[2,1],[0,1/2]]`, `b ↦ [[2,0],[0,1/2]]` over 𝔽_{p_i}, word
//! n+2−i maps to a nontrivial unitriangular matrix while words 1..n+1−i map
//! to the identity, so the cited prime separates every pair.
//!
//! Parameters: `q_n = Π_{j<n} p_j(p_j−1)` annihilates the earlier Borel
//! subgroups; `k_n ≡ −2^{2m} (mod p_n)` (m the exponent-sum total of
//! `w_{n−1,1}`) makes word 1 collapse at p_n while `2^{4m} ≢ 1` keeps word 2
//! alive. Primes are searched under `p_n > 2p_{n−1}` avoiding the residues
//! 1 and `2^{2m}−1` modulo earlier primes, then accepted only after the
//! consequences are checked by direct modular evaluation.
//!
//! A [`Certificate`] is self-contained: parameters, the serialized words,
//! every modular image, randomized trace evidence with its seed, and one
//! verdict per pair. [`verify_certificate`] recomputes all of it.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat2::{eval_word_fp, mat_to_strings, Mat2, WitnessAssignment};
use crate::primes::{is_prime_u64, next_prime_constrained, PrimeSearchConstraints};
use crate::ring::{Fp, ScalarRing};
use crate::tracepoly::{
    check_symmetry, random_trace_equal, trace_polynomial_pair, TraceEqualityEvidence,
    TraceMismatchWitness, TracePoly, TracePolyError, TracePolyTerm, DEFAULT_TRIALS,
    MAX_LETTERS, MIN_DISTINCT_PRIMES,
};
use crate::word::{Gen, SlpBuilder, SlpWord};

pub const CERTIFICATE_VERSION: u32 = 1;
pub const DEFAULT_CANDIDATE_BUDGET: u32 = 10_000;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("level must be at least 1")]
    InvalidLevel,
    #[error("prime search exhausted after {budget} candidates at level {level}")]
    SearchExhausted { level: u32, budget: u32 },
    #[error("image-table violation at prime p_{prime_index} on word {word_index}: got {image:?}")]
    P3Violation { prime_index: usize, word_index: usize, image: [String; 4] },
    #[error("randomized trace evidence found a mismatch between words {} and {}", .0.word_left + 1, .0.word_right + 1)]
    TraceMismatch(Box<TraceMismatchWitness>),
    #[error("the symbolic trace polynomials of the level-1 pair differ")]
    SymbolicMismatch,
    #[error("symbolic computation failed: {0}")]
    Symbolic(#[from] TracePolyError),
    #[error("inconsistent parameters: {0}")]
    BadParams(String),
}

/// The parameter tower: primes, Borel annihilators q, collapse exponents k
/// and the exponent-sum totals m of the first word of each level below the
/// top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgeParams {
    pub level: u32,
    pub primes: Vec<u64>,
    pub q: Vec<BigUint>,
    pub k: Vec<BigUint>,
    /// `m[j-1]` is the exponent-sum total of `w_{j,1}`, for j = 1..level−1.
    pub m: Vec<BigUint>,
}

impl ForgeParams {
    /// The arithmetic invariants: primality, growth, the q product, the
    /// congruences on k, and the residue avoidances. Word-dependent facts
    /// (the m values, z ≠ 0) are checked against rebuilt words separately.
    pub fn validate_arithmetic(&self) -> Result<(), ForgeError> {
        let bad = |msg: String| Err(ForgeError::BadParams(msg));
        let n = self.level as usize;
        if n == 0 {
            return Err(ForgeError::InvalidLevel);
        }
        if self.primes.len() != n || self.q.len() != n || self.k.len() != n {
            return bad(format!("expected {n} primes/q/k entries"));
        }
        if self.m.len() != n - 1 {
            return bad(format!("expected {} m entries", n - 1));
        }
        if self.primes[0] <= 30 {
            return bad(format!("p_1 = {} must exceed max(8N, 30) = 30", self.primes[0]));
        }
        for (idx, &p) in self.primes.iter().enumerate() {
            if !is_prime_u64(p) {
                return bad(format!("p_{} = {p} is not prime", idx + 1));
            }
            if idx > 0 && p <= 2 * self.primes[idx - 1] {
                return bad(format!("p_{} = {p} must exceed 2·p_{}", idx + 1, idx));
            }
        }
        if !self.q[0].is_one() {
            return bad("q_1 must be 1".into());
        }
        for j in 2..=n {
            let prev = BigUint::from(self.primes[j - 2]);
            let expected = &self.q[j - 2] * &prev * (&prev - 1u32);
            if self.q[j - 1] != expected {
                return bad(format!("q_{j} does not match the running product"));
            }
        }
        if self.k[0] != BigUint::from(self.primes[0] - 4) {
            return bad("k_1 must be p_1 - 4".into());
        }
        for j in 2..=n {
            let p = BigUint::from(self.primes[j - 1]);
            let m = &self.m[j - 2];
            let two_2m = BigUint::from(2u32).modpow(&(m * 2u32), &p);
            if two_2m.is_one() {
                return bad(format!("2^(2m) ≡ 1 mod p_{j}: word 1 cannot collapse"));
            }
            if (&two_2m * &two_2m % &p).is_one() {
                return bad(format!("2^(4m) ≡ 1 mod p_{j}: word 2 would also collapse"));
            }
            if self.k[j - 1].is_zero() {
                return bad(format!("k_{j} must be positive"));
            }
            if (&self.k[j - 1] + &two_2m) % &p != BigUint::zero() {
                return bad(format!("k_{j} is not ≡ -2^(2m) mod p_{j}"));
            }
            for i in 1..j {
                let pi = BigUint::from(self.primes[i - 1]);
                let two_2m_i = BigUint::from(2u32).modpow(&(m * 2u32), &pi);
                let residue = BigUint::from(self.primes[j - 1]) % &pi;
                if residue.is_one() {
                    return bad(format!("p_{j} ≡ 1 mod p_{i}"));
                }
                if (&residue + 1u32) % &pi == two_2m_i {
                    return bad(format!("p_{j} ≡ 2^(2m) - 1 mod p_{i}"));
                }
                if ((&self.k[j - 1] + 1u32) % &pi).is_zero() {
                    return bad(format!("k_{j} ≡ -1 mod p_{i}"));
                }
            }
        }
        Ok(())
    }
}

/// Level templates `(W, W̄)` in the formal letters x = a, y = b.
pub fn build_templates(p: u64, q: &BigUint, k: &BigUint) -> (SlpWord, SlpWord) {
    let high = BigInt::from(p - 1) + BigInt::from(q.clone());
    let neg_q = -BigInt::from(q.clone());
    let repeat = BigInt::from(k.clone());
    let build = |bar: bool| {
        let mut b = SlpBuilder::new();
        let x = b.leaf(Gen::A);
        let y = b.leaf(Gen::B);
        let xp = b.power(x, high.clone());
        let yq = b.power(y, neg_q.clone());
        let c = b.product(vec![xp, yq]);
        let ck = b.power(c, repeat.clone());
        let xi = b.power(x, BigInt::from(-1));
        let root = if bar {
            b.product(vec![x, ck, xi, c])
        } else {
            b.product(vec![ck, x, c, xi])
        };
        b.finish(root)
    };
    (build(false), build(true))
}

/// The pair (w_{j,1}, w_{j,2}) for every level j up to the top, with the
/// pairs at the listed levels swapped (an even number of occurrences
/// cancels).
pub fn build_tower_with_swaps(params: &ForgeParams, swaps: &[u32]) -> Vec<(SlpWord, SlpWord)> {
    let mut pairs = Vec::with_capacity(params.level as usize);
    let mut u = SlpWord::generator(Gen::A);
    let mut v = SlpWord::generator(Gen::B);
    for j in 1..=params.level {
        let (w_t, wbar_t) = build_templates(
            params.primes[j as usize - 1],
            &params.q[j as usize - 1],
            &params.k[j as usize - 1],
        );
        let mut w1 = SlpWord::substitute(&w_t, &u, &v);
        let mut w2 = SlpWord::substitute(&wbar_t, &u, &v);
        if swaps.iter().filter(|&&l| l == j).count() % 2 == 1 {
            std::mem::swap(&mut w1, &mut w2);
        }
        pairs.push((w1.clone(), w2.clone()));
        u = w1;
        v = w2;
    }
    pairs
}

/// Per-level template exponents, kept as the family's generation trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTemplate {
    pub level: u32,
    /// p − 1 + q
    pub high_exponent: String,
    /// q
    pub drop_exponent: String,
    /// k
    pub repeat_exponent: String,
}

/// The n+1 words of one level, plus the templates that generated them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordFamily {
    pub level: u32,
    pub words: Vec<SlpWord>,
    pub generation_trace: Vec<LevelTemplate>,
}

/// Builds the full family: `w_{n,1}`, `w_{n,2}`, and for 3 ≤ i ≤ n+1 the
/// switch images `w_{n,1}^{[i]}` obtained by swapping the level-(n+2−i)
/// pair throughout.
pub fn build_family(params: &ForgeParams) -> WordFamily {
    let n = params.level;
    let tower = build_tower_with_swaps(params, &[]);
    let top = &tower[n as usize - 1];
    let mut words = vec![top.0.clone(), top.1.clone()];
    for i in 3..=n + 1 {
        let swap_level = n + 2 - i;
        let swapped = build_tower_with_swaps(params, &[swap_level]);
        words.push(swapped[n as usize - 1].0.clone());
    }
    let generation_trace = (1..=n)
        .map(|j| LevelTemplate {
            level: j,
            high_exponent: (BigUint::from(params.primes[j as usize - 1] - 1)
                + &params.q[j as usize - 1])
                .to_string(),
            drop_exponent: params.q[j as usize - 1].to_string(),
            repeat_exponent: params.k[j as usize - 1].to_string(),
        })
        .collect();
    WordFamily { level: n, words, generation_trace }
}

/// `w1^q · w2^{-q}` as a program, the witness whose image must be a
/// nontrivial unitriangular matrix.
fn pair_power_word(w1: &SlpWord, w2: &SlpWord, q: &BigUint) -> SlpWord {
    let pos = SlpWord::power(w1, &BigInt::from(q.clone()));
    let neg = SlpWord::power(w2, &(-BigInt::from(q.clone())));
    SlpWord::product(&[&pos, &neg])
}

/// The z of the collapse identity: `w1^q w2^{-q}` over 𝔽_p is always
/// unitriangular; returns its off-diagonal entry.
fn collapse_entry(w1: &SlpWord, w2: &SlpWord, q: &BigUint, p: u64) -> Result<u64, ForgeError> {
    let fp = Fp::new(p);
    let asg = WitnessAssignment::standard(fp);
    let word = pair_power_word(w1, w2, q);
    let img = eval_word_fp(&word, &asg);
    if img.a != 1 || img.d != 1 || img.c != 0 {
        return Err(ForgeError::BadParams(format!(
            "pair power image over F_{p} is not unitriangular: {:?}",
            mat_to_strings(&fp, &img)
        )));
    }
    Ok(img.b)
}

/// Options for parameter search and certification.
#[derive(Debug, Clone)]
pub struct ForgeOptions {
    pub trials: u32,
    pub candidate_budget: u32,
    pub search_origin: Option<u64>,
    /// Embed the exact level-1 trace-polynomial pair in the certificate.
    pub symbolic_evidence: bool,
}

impl Default for ForgeOptions {
    fn default() -> Self {
        ForgeOptions {
            trials: DEFAULT_TRIALS,
            candidate_budget: DEFAULT_CANDIDATE_BUDGET,
            search_origin: None,
            symbolic_evidence: false,
        }
    }
}

/// Level-by-level parameter selection.
///
/// p_1 is the first prime above max(origin, 30); q_1 = 1, k_1 = p_1 − 4.
/// Each later p_n comes from the constrained search (above 2·p_{n−1},
/// avoiding 1 and 2^{2m}−1 modulo every earlier prime) and is accepted only
/// if 2^{2m} ≢ 1, 2^{4m} ≢ 1 (mod p_n) and the evaluated collapse entry z
/// is nonzero; rejected candidates are skipped and logged. k_n is the least
/// positive residue of −2^{2m} mod p_n, bumped by multiples of p_n until it
/// avoids −1 modulo every earlier prime.
pub fn choose_params(
    n: u32,
    search_origin: Option<u64>,
    candidate_budget: u32,
) -> Result<ForgeParams, ForgeError> {
    if n == 0 {
        return Err(ForgeError::InvalidLevel);
    }
    let floor = search_origin.unwrap_or(0).max(30);
    let p1 = next_prime_constrained(&PrimeSearchConstraints::above(floor))
        .to_u64()
        .ok_or_else(|| ForgeError::BadParams("p_1 exceeds the machine-field range".into()))?;
    let mut params = ForgeParams {
        level: 1,
        primes: vec![p1],
        q: vec![BigUint::one()],
        k: vec![BigUint::from(p1 - 4)],
        m: vec![],
    };
    for level in 2..=n {
        extend_params(&mut params, candidate_budget)?;
        debug_assert_eq!(params.level, level);
    }
    Ok(params)
}

fn extend_params(params: &mut ForgeParams, candidate_budget: u32) -> Result<(), ForgeError> {
    let level = params.level + 1;
    let tower = build_tower_with_swaps(params, &[]);
    let (w1, w2) = &tower[params.level as usize - 1];
    let m = w1
        .exponent_sum()
        .total
        .to_biguint()
        .ok_or_else(|| ForgeError::BadParams("exponent-sum total must be positive".into()))?;
    let two_m = &m * 2u32;
    let prev = params.primes[params.level as usize - 1];
    let q_next =
        &params.q[params.level as usize - 1] * BigUint::from(prev) * BigUint::from(prev - 1);

    let mut constraints = PrimeSearchConstraints {
        strict_lower_bound: BigUint::zero(),
        forbidden_residues: params
            .primes
            .iter()
            .map(|&pi| {
                let pi_big = BigUint::from(pi);
                let two_2m = BigUint::from(2u32).modpow(&two_m, &pi_big);
                let residue = (two_2m + (&pi_big - 1u32)) % &pi_big; // 2^{2m} - 1 mod p_i
                (pi_big, vec![BigUint::one(), residue])
            })
            .collect(),
        doubling_floor: Some(BigUint::from(prev)),
    };

    let mut accepted: Option<u64> = None;
    for _ in 0..candidate_budget {
        let candidate_big = next_prime_constrained(&constraints);
        let candidate = candidate_big.to_u64().ok_or_else(|| {
            ForgeError::BadParams("candidate prime exceeds the machine-field range".into())
        })?;
        constraints.strict_lower_bound = candidate_big.clone();
        constraints.doubling_floor = None;
        let p_big = BigUint::from(candidate);
        let two_2m = BigUint::from(2u32).modpow(&two_m, &p_big);
        if two_2m.is_one() {
            log::debug!("level {level}: candidate {candidate} rejected, 2^(2m) ≡ 1");
            continue;
        }
        if (&two_2m * &two_2m % &p_big).is_one() {
            log::debug!("level {level}: candidate {candidate} rejected, 2^(4m) ≡ 1");
            continue;
        }
        let z = collapse_entry(w1, w2, &q_next, candidate)?;
        if z == 0 {
            log::debug!("level {level}: candidate {candidate} rejected, collapse entry z = 0");
            continue;
        }
        accepted = Some(candidate);
        break;
    }
    let p_next = accepted.ok_or(ForgeError::SearchExhausted {
        level,
        budget: candidate_budget,
    })?;

    let p_big = BigUint::from(p_next);
    let two_2m = BigUint::from(2u32).modpow(&two_m, &p_big);
    let mut k_next = &p_big - &two_2m; // least positive ≡ -2^{2m} (mod p)
    let mut bumps = 0u32;
    while params.primes.iter().any(|&pi| {
        let pi = BigUint::from(pi);
        ((&k_next + 1u32) % &pi).is_zero()
    }) {
        k_next += &p_big;
        bumps += 1;
        if bumps > DEFAULT_CANDIDATE_BUDGET {
            return Err(ForgeError::BadParams("k adjustment did not terminate".into()));
        }
    }

    params.level = level;
    params.primes.push(p_next);
    params.q.push(q_next);
    params.k.push(k_next);
    params.m.push(m);
    Ok(())
}

/// One row of the distinguishing table: every family member's image over one
/// prime, as decimal residue 4-tuples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRow {
    pub prime: u64,
    pub images: Vec<[String; 4]>,
}

fn is_psl_identity(fp: &Fp, m: &Mat2<u64>) -> bool {
    crate::mat2::psl_eq(fp, m, &crate::mat2::identity(fp))
}

/// `[[1, x], [0, 1]]` with x ≠ 0, up to the PSL sign.
fn as_nontrivial_unitriangular(fp: &Fp, m: &Mat2<u64>) -> Option<u64> {
    let m = if m.a == fp.modulus() - 1 { crate::mat2::mat_neg(fp, m) } else { m.clone() };
    (m.a == 1 && m.d == 1 && m.c == 0 && m.b != 0).then_some(m.b)
}

/// Evaluates the whole family over every prime of the tower and checks the
/// distinguishing shape: over 𝔽_{p_i}, words 1..n+1−i map to the identity
/// and word n+2−i to a nontrivial unitriangular matrix. All n+1 images per
/// prime are recorded, including the unconstrained columns.
pub fn verify_p3(params: &ForgeParams, family: &WordFamily) -> Result<Vec<ImageRow>, ForgeError> {
    let n = params.level as usize;
    let mut rows = Vec::with_capacity(n);
    for (idx, &p) in params.primes.iter().enumerate() {
        let i = idx + 1;
        let fp = Fp::new(p);
        let asg = WitnessAssignment::standard(fp);
        let images: Vec<Mat2<u64>> =
            family.words.iter().map(|w| eval_word_fp(w, &asg)).collect();
        for (jdx, img) in images.iter().enumerate() {
            let j = jdx + 1;
            let ok = if j <= n + 1 - i {
                is_psl_identity(&fp, img)
            } else if j == n + 2 - i {
                as_nontrivial_unitriangular(&fp, img).is_some()
            } else {
                true // unconstrained, recorded for transparency
            };
            if !ok {
                return Err(ForgeError::P3Violation {
                    prime_index: i,
                    word_index: j,
                    image: mat_to_strings(&fp, img),
                });
            }
        }
        rows.push(ImageRow {
            prime: p,
            images: images.iter().map(|m| mat_to_strings(&fp, m)).collect(),
        });
    }
    Ok(rows)
}

/// A pairwise non-conjugacy verdict: over the cited prime, word `i` maps to
/// the identity and word `j` does not (so `w_i` is conjugate to neither
/// `w_j` nor `w_j⁻¹` — images are conjugation-invariant and the inverse
/// image is also nontrivial).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub i: u32,
    pub j: u32,
    pub prime: u64,
    pub image_i: [String; 4],
    pub image_j: [String; 4],
}

fn build_verdicts(params: &ForgeParams, rows: &[ImageRow]) -> Vec<Verdict> {
    let n = params.level;
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n + 1 {
            let prime_index = (n + 2 - j) as usize; // 1-based
            let row = &rows[prime_index - 1];
            out.push(Verdict {
                i,
                j,
                prime: row.prime,
                image_i: row.images[i as usize - 1].clone(),
                image_j: row.images[j as usize - 1].clone(),
            });
        }
    }
    out
}

/// Parameters in the certificate's decimal-string form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertParams {
    pub p: Vec<u64>,
    pub q: Vec<String>,
    pub k: Vec<String>,
    pub m: Vec<String>,
}

impl CertParams {
    fn from_params(params: &ForgeParams) -> CertParams {
        CertParams {
            p: params.primes.clone(),
            q: params.q.iter().map(|v| v.to_string()).collect(),
            k: params.k.iter().map(|v| v.to_string()).collect(),
            m: params.m.iter().map(|v| v.to_string()).collect(),
        }
    }

    fn to_params(&self, level: u32) -> Result<ForgeParams, VerifyError> {
        let parse = |field: &str, values: &[String]| -> Result<Vec<BigUint>, VerifyError> {
            values
                .iter()
                .enumerate()
                .map(|(idx, v)| {
                    v.parse::<BigUint>().map_err(|_| VerifyError {
                        path: format!("params.{field}[{idx}]"),
                        detail: format!("not a decimal integer: {v:?}"),
                    })
                })
                .collect()
        };
        Ok(ForgeParams {
            level,
            primes: self.p.clone(),
            q: parse("q", &self.q)?,
            k: parse("k", &self.k)?,
            m: parse("m", &self.m)?,
        })
    }
}

/// The exact level-1 trace-polynomial pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicEvidence {
    pub first: Vec<TracePolyTerm>,
    pub second: Vec<TracePolyTerm>,
}

/// Self-contained, independently re-checkable record of one certified
/// family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub version: u32,
    pub level: u32,
    pub seed: u64,
    pub params: CertParams,
    pub words: Vec<SlpWord>,
    pub image_table: Vec<ImageRow>,
    pub trace_evidence: TraceEqualityEvidence,
    pub symbolic_evidence: Option<SymbolicEvidence>,
    pub verdicts: Vec<Verdict>,
}

impl Certificate {
    /// Canonical JSON: fixed field order, two-space indentation, trailing
    /// newline. Verification compares recomputations bit-exactly against
    /// these bytes' contents.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Certificate, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Runs the whole pipeline at level n and assembles the certificate.
pub fn certify(n: u32, seed: u64, opts: &ForgeOptions) -> Result<Certificate, ForgeError> {
    let params = choose_params(n, opts.search_origin, opts.candidate_budget)?;
    let family = build_family(&params);
    let rows = verify_p3(&params, &family)?;

    // The trace-equality mechanism behind the construction: the template
    // U(x, y) = x^k y is trace-symmetric in its arguments. Checked
    // symbolically at every level whose k is within the symbolic guard.
    for (idx, k) in params.k.iter().enumerate() {
        if k + 1u32 > BigUint::from(MAX_LETTERS) {
            log::debug!("level {}: k too large for the symbolic template check", idx + 1);
            continue;
        }
        let template = {
            let mut b = SlpBuilder::new();
            let x = b.leaf(Gen::A);
            let y = b.leaf(Gen::B);
            let xk = b.power(x, BigInt::from(k.clone()));
            let root = b.product(vec![xk, y]);
            b.finish(root)
        };
        if !check_symmetry(&template)? {
            return Err(ForgeError::SymbolicMismatch);
        }
    }

    let trials = opts.trials.max(DEFAULT_TRIALS);
    let evidence = random_trace_equal(&family.words, trials, seed);
    if let Some(witness) = &evidence.mismatch {
        return Err(ForgeError::TraceMismatch(Box::new(witness.clone())));
    }

    let symbolic_evidence = if n == 1 && opts.symbolic_evidence {
        let (first, second) = trace_polynomial_pair(&family.words[0], &family.words[1])?;
        if first != second {
            return Err(ForgeError::SymbolicMismatch);
        }
        Some(SymbolicEvidence {
            first: first.to_json_terms(),
            second: second.to_json_terms(),
        })
    } else {
        None
    };

    let verdicts = build_verdicts(&params, &rows);
    Ok(Certificate {
        version: CERTIFICATE_VERSION,
        level: n,
        seed,
        params: CertParams::from_params(&params),
        words: family.words,
        image_table: rows,
        trace_evidence: evidence,
        symbolic_evidence,
        verdicts,
    })
}

/// A verification failure, pinpointing the first divergent field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {detail}")]
pub struct VerifyError {
    pub path: String,
    pub detail: String,
}

fn verr(path: impl Into<String>, detail: impl Into<String>) -> VerifyError {
    VerifyError { path: path.into(), detail: detail.into() }
}

/// Recomputes everything a certificate claims: parameter invariants, the
/// word construction, every modular image, the verdict logic, and the
/// randomized trace evidence under the recorded seed. Symbolic evidence is
/// checked for internal equality and against matrix evaluations at
/// seed-derived random points.
pub fn verify_certificate(cert: &Certificate) -> Result<(), VerifyError> {
    if cert.version != CERTIFICATE_VERSION {
        return Err(verr("version", format!("unsupported version {}", cert.version)));
    }
    let n = cert.level as usize;
    if n == 0 {
        return Err(verr("level", "level must be at least 1"));
    }
    let params = cert.params.to_params(cert.level)?;
    params
        .validate_arithmetic()
        .map_err(|e| verr("params", e.to_string()))?;

    if cert.words.len() != n + 1 {
        return Err(verr("words", format!("expected {} words, found {}", n + 1, cert.words.len())));
    }
    let rebuilt = build_family(&params);
    for (idx, (stored, fresh)) in cert.words.iter().zip(&rebuilt.words).enumerate() {
        if stored != fresh {
            return Err(verr(
                format!("words[{idx}]"),
                "stored word differs from the construction for these parameters",
            ));
        }
    }

    // m values are the exponent-sum totals of the tower's first words.
    let tower = build_tower_with_swaps(&params, &[]);
    for j in 1..n {
        let total = tower[j - 1].0.exponent_sum().total;
        let expected = total.to_biguint().ok_or_else(|| {
            verr(format!("params.m[{}]", j - 1), "exponent-sum total is negative")
        })?;
        if params.m[j - 1] != expected {
            return Err(verr(
                format!("params.m[{}]", j - 1),
                format!("expected {expected}, found {}", params.m[j - 1]),
            ));
        }
    }

    // The collapse entries that justify each level's prime choice.
    for j in 2..=n {
        let (w1, w2) = &tower[j - 2];
        let z = collapse_entry(w1, w2, &params.q[j - 1], params.primes[j - 1])
            .map_err(|e| verr(format!("params.p[{}]", j - 1), e.to_string()))?;
        if z == 0 {
            return Err(verr(
                format!("params.p[{}]", j - 1),
                "collapse entry z vanishes at this prime",
            ));
        }
    }

    // Image table, recomputed cell by cell from the *stored* words.
    if cert.image_table.len() != n {
        return Err(verr("image_table", format!("expected {n} rows")));
    }
    for (idx, row) in cert.image_table.iter().enumerate() {
        let i = idx + 1;
        if row.prime != params.primes[idx] {
            return Err(verr(
                format!("image_table[{idx}].prime"),
                format!("expected {}, found {}", params.primes[idx], row.prime),
            ));
        }
        if row.images.len() != n + 1 {
            return Err(verr(format!("image_table[{idx}].images"), "wrong image count"));
        }
        let fp = Fp::new(row.prime);
        let asg = WitnessAssignment::standard(fp);
        for (jdx, word) in cert.words.iter().enumerate() {
            let img = eval_word_fp(word, &asg);
            let strings = mat_to_strings(&fp, &img);
            if strings != row.images[jdx] {
                return Err(verr(
                    format!("image_table[{idx}].images[{jdx}]"),
                    format!("recomputed {:?}, stored {:?}", strings, row.images[jdx]),
                ));
            }
            let j = jdx + 1;
            if j <= n + 1 - i && !is_psl_identity(&fp, &img) {
                return Err(verr(
                    format!("image_table[{idx}].images[{jdx}]"),
                    "expected the identity in this column",
                ));
            }
            if j == n + 2 - i && as_nontrivial_unitriangular(&fp, &img).is_none() {
                return Err(verr(
                    format!("image_table[{idx}].images[{jdx}]"),
                    "expected a nontrivial unitriangular image in this column",
                ));
            }
        }
    }

    // Verdicts: complete pair coverage, correct cited prime, and images
    // consistent with the (already recomputed) table.
    let expected_count = n * (n + 1) / 2;
    if cert.verdicts.len() != expected_count {
        return Err(verr("verdicts", format!("expected {expected_count} verdicts")));
    }
    let mut cursor = 0usize;
    for i in 1..=cert.level {
        for j in i + 1..=cert.level + 1 {
            let v = &cert.verdicts[cursor];
            cursor += 1;
            let path = format!("verdicts[{}]", cursor - 1);
            if (v.i, v.j) != (i, j) {
                return Err(verr(path, format!("expected pair ({i}, {j}), found ({}, {})", v.i, v.j)));
            }
            let prime_index = (cert.level + 2 - j) as usize;
            let row = &cert.image_table[prime_index - 1];
            if v.prime != row.prime {
                return Err(verr(
                    format!("{path}.prime"),
                    format!("expected p_{prime_index} = {}", row.prime),
                ));
            }
            if v.image_i != row.images[i as usize - 1] {
                return Err(verr(format!("{path}.image_i"), "does not match the image table"));
            }
            if v.image_j != row.images[j as usize - 1] {
                return Err(verr(format!("{path}.image_j"), "does not match the image table"));
            }
            let fp = Fp::new(v.prime);
            let img_i = crate::mat2::mat_from_strings(&fp, &v.image_i)
                .map_err(|e| verr(format!("{path}.image_i"), e.to_string()))?;
            let img_j = crate::mat2::mat_from_strings(&fp, &v.image_j)
                .map_err(|e| verr(format!("{path}.image_j"), e.to_string()))?;
            if !is_psl_identity(&fp, &img_i) {
                return Err(verr(format!("{path}.image_i"), "must be the identity"));
            }
            if as_nontrivial_unitriangular(&fp, &img_j).is_none() {
                return Err(verr(
                    format!("{path}.image_j"),
                    "must be nontrivial unitriangular",
                ));
            }
        }
    }

    // Trace evidence reproduces bit-exactly under the recorded seed.
    let ev = &cert.trace_evidence;
    if ev.seed != cert.seed {
        return Err(verr("trace_evidence.seed", "differs from the certificate seed"));
    }
    if ev.trials < DEFAULT_TRIALS {
        return Err(verr(
            "trace_evidence.trials",
            format!("below the minimum policy of {DEFAULT_TRIALS}"),
        ));
    }
    if ev.mismatch.is_some() {
        return Err(verr("trace_evidence.mismatch", "certificate records a trace mismatch"));
    }
    if ev.distinct_primes() < MIN_DISTINCT_PRIMES.min(ev.trials as usize) {
        return Err(verr("trace_evidence.primes", "too few distinct primes"));
    }
    let rerun = random_trace_equal(&cert.words, ev.trials, ev.seed);
    if rerun != *ev {
        return Err(verr("trace_evidence", "does not reproduce under the recorded seed"));
    }

    if let Some(sym) = &cert.symbolic_evidence {
        if cert.level != 1 {
            return Err(verr("symbolic_evidence", "only defined for level 1"));
        }
        let first = TracePoly::from_json_terms(&sym.first)
            .map_err(|e| verr("symbolic_evidence.first", e))?;
        let second = TracePoly::from_json_terms(&sym.second)
            .map_err(|e| verr("symbolic_evidence.second", e))?;
        if first != second {
            return Err(verr("symbolic_evidence", "stored polynomials differ"));
        }
        spot_check_symbolic(cert, &first, &second)?;
    }
    Ok(())
}

/// Ties the stored polynomials to the stored words: at seed-derived random
/// points over large prime fields, the polynomial evaluated at
/// (tr A, tr B, tr AB) must equal the trace of the evaluated word.
fn spot_check_symbolic(
    cert: &Certificate,
    first: &TracePoly,
    second: &TracePoly,
) -> Result<(), VerifyError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cert.seed);
    rng.set_stream(u64::MAX); // disjoint from the trace-evidence streams
    for round in 0..10 {
        let p = loop {
            let c = rng.gen_range((1u64 << 61)..(1u64 << 62)) | 1;
            if is_prime_u64(c) {
                break c;
            }
        };
        let fp = Fp::new(p);
        let a = crate::mat2::random_sl2(&mut rng, &fp);
        let b = crate::mat2::random_sl2(&mut rng, &fp);
        let s = fp.add(&a.a, &a.d);
        let t = fp.add(&b.a, &b.d);
        let ab = crate::mat2::mat_mul(&fp, &a, &b);
        let u = fp.add(&ab.a, &ab.d);
        let asg = WitnessAssignment::new(fp, a, b);
        for (poly, word, name) in
            [(first, &cert.words[0], "first"), (second, &cert.words[1], "second")]
        {
            let lhs = poly.eval(&fp, &s, &t, &u);
            let rhs = crate::mat2::trace(&fp, &eval_word_fp(word, &asg));
            if lhs != rhs {
                return Err(verr(
                    format!("symbolic_evidence.{name}"),
                    format!("fails the matrix spot check at round {round} (p = {p})"),
                ));
            }
        }
    }
    Ok(())
}
