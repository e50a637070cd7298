//! Trace polynomials in ℤ[s, t, u] for words on two generators, where
//! `s = tr x`, `t = tr y`, `u = tr xy`.
//!
//! The algebra generated by two generic SL₂ matrices X, Y is a free rank-4
//! module over ℤ[s, t, u] with basis {1, X, Y, XY}; the multiplication table
//! follows from the Cayley–Hamilton relation `X² = sX − 1` and its
//! linearization `XY + YX = sY + tX + (u − st)·1`. A word evaluates to a
//! 4-tuple of polynomials by multiplying out its program graph; its trace is
//! `2·c₁ + s·c_X + t·c_Y + u·c_XY`. Powers never expand: any determinant-1
//! element E satisfies `Eᵏ = f_k(τ)·E − f_{k−1}(τ)·1` for `τ = tr E` with
//! the three-term recurrence `f_{j+1} = τ·f_j − f_{j−1}`, so a power costs
//! `k` small multiplications instead of an exponential blowup.
//!
//! Words whose symbolic polynomial is out of reach (anything past the size
//! guard) are handled by randomized evaluation over large random prime
//! fields instead: equal traces on every trial is Schwartz–Zippel evidence,
//! a single mismatch is a disproof.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat2::{eval_word_fp, random_sl2, trace, WitnessAssignment};
use crate::primes::is_prime_u64;
use crate::ring::{Fp, ScalarRing};
use crate::word::{FlatWord, SlpBuilder, SlpNode, SlpWord};

/// Hard cap on syllables for symbolic computation.
pub const MAX_SYLLABLES: usize = 64;
/// Hard cap on the unreduced letter count (which also bounds the degree and
/// the cost of every power recurrence).
pub const MAX_LETTERS: u64 = 4096;

/// Default randomized-testing policy: at least this many trials...
pub const DEFAULT_TRIALS: u32 = 20;
/// ...spread over at least this many distinct primes.
pub const MIN_DISTINCT_PRIMES: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TracePolyError {
    #[error("word too large for symbolic trace computation: {0}")]
    TooLarge(String),
}

// Monomials s^i t^j u^k packed into a u64; degrees stay below 2^21 because
// they are bounded by MAX_LETTERS.
const FIELD: u64 = 21;
const MASK: u64 = (1 << FIELD) - 1;

const fn pack(i: u64, j: u64, k: u64) -> u64 {
    (i << (2 * FIELD)) | (j << FIELD) | k
}

fn unpack(key: u64) -> (u32, u32, u32) {
    (
        (key >> (2 * FIELD)) as u32,
        ((key >> FIELD) & MASK) as u32,
        (key & MASK) as u32,
    )
}

const MONO_ONE: u64 = pack(0, 0, 0);
const MONO_S: u64 = pack(1, 0, 0);
const MONO_T: u64 = pack(0, 1, 0);
const MONO_U: u64 = pack(0, 0, 1);
const MONO_ST: u64 = pack(1, 1, 0);

/// Sparse working polynomial.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Poly {
    terms: HashMap<u64, BigInt>,
}

impl Poly {
    fn zero() -> Poly {
        Poly::default()
    }

    fn constant(c: i64) -> Poly {
        let mut p = Poly::zero();
        p.add_term(MONO_ONE, &BigInt::from(c));
        p
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, key: u64, coeff: &BigInt) {
        if coeff.is_zero() {
            return;
        }
        use std::collections::hash_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(v) => {
                v.insert(coeff.clone());
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    /// `self += sign · s^i t^j u^k · src` for the packed monomial shift.
    fn add_scaled(&mut self, src: &Poly, shift: u64, sign: i64) {
        if sign == 0 {
            return;
        }
        let sign = BigInt::from(sign);
        for (key, c) in &src.terms {
            self.add_term(key + shift, &(c * &sign));
        }
    }

    fn mul(&self, other: &Poly) -> Poly {
        let (small, large) =
            if self.terms.len() <= other.terms.len() { (self, other) } else { (other, self) };
        let mut out = Poly::zero();
        out.terms.reserve(large.terms.len());
        for (ks, cs) in &small.terms {
            for (kl, cl) in &large.terms {
                out.add_term(ks + kl, &(cs * cl));
            }
        }
        out
    }
}

/// An element of the rank-4 algebra: `c[0]·1 + c[1]·X + c[2]·Y + c[3]·XY`.
#[derive(Debug, Clone)]
struct Tuple {
    c: [Poly; 4],
}

impl Tuple {
    fn identity() -> Tuple {
        Tuple { c: [Poly::constant(1), Poly::zero(), Poly::zero(), Poly::zero()] }
    }

    fn gen_x() -> Tuple {
        Tuple { c: [Poly::zero(), Poly::constant(1), Poly::zero(), Poly::zero()] }
    }

    fn gen_y() -> Tuple {
        Tuple { c: [Poly::zero(), Poly::zero(), Poly::constant(1), Poly::zero()] }
    }

    /// `tr = 2c₀ + s·c_X + t·c_Y + u·c_XY`.
    fn trace(&self) -> Poly {
        let mut out = Poly::zero();
        out.add_scaled(&self.c[0], MONO_ONE, 2);
        out.add_scaled(&self.c[1], MONO_S, 1);
        out.add_scaled(&self.c[2], MONO_T, 1);
        out.add_scaled(&self.c[3], MONO_U, 1);
        out
    }

    /// `E⁻¹ = τ·1 − E`, the Cayley–Hamilton inverse of a det-1 element.
    fn inverse(&self, tau: &Poly) -> Tuple {
        let mut c0 = tau.clone();
        c0.add_scaled(&self.c[0], MONO_ONE, -1);
        let negate = |p: &Poly| {
            let mut q = Poly::zero();
            q.add_scaled(p, MONO_ONE, -1);
            q
        };
        Tuple { c: [c0, negate(&self.c[1]), negate(&self.c[2]), negate(&self.c[3])] }
    }
}

/// Basis products, as `(left, right) → contributions (slot, monomial, sign)`.
///
/// Rows/columns are indexed 1, X, Y, XY. The nontrivial entries follow from
/// `X² = sX − 1`, `Y² = tY − 1`, `(XY)² = u·XY − 1` and the linearized
/// relation `YX = (u − st)·1 + tX + sY − XY`.
fn basis_product(left: usize, right: usize) -> &'static [(usize, u64, i64)] {
    const XX: &[(usize, u64, i64)] = &[(0, MONO_ONE, -1), (1, MONO_S, 1)];
    const XY_: &[(usize, u64, i64)] = &[(3, MONO_ONE, 1)];
    const X_XY: &[(usize, u64, i64)] = &[(2, MONO_ONE, -1), (3, MONO_S, 1)];
    const YX: &[(usize, u64, i64)] =
        &[(0, MONO_U, 1), (0, MONO_ST, -1), (1, MONO_T, 1), (2, MONO_S, 1), (3, MONO_ONE, -1)];
    const YY: &[(usize, u64, i64)] = &[(0, MONO_ONE, -1), (2, MONO_T, 1)];
    const Y_XY: &[(usize, u64, i64)] = &[(0, MONO_S, -1), (1, MONO_ONE, 1), (2, MONO_U, 1)];
    const XY_X: &[(usize, u64, i64)] = &[(0, MONO_T, -1), (1, MONO_U, 1), (2, MONO_ONE, 1)];
    const XY_Y: &[(usize, u64, i64)] = &[(1, MONO_ONE, -1), (3, MONO_T, 1)];
    const XY_XY: &[(usize, u64, i64)] = &[(0, MONO_ONE, -1), (3, MONO_U, 1)];
    const ID0: &[(usize, u64, i64)] = &[(0, MONO_ONE, 1)];
    const ID1: &[(usize, u64, i64)] = &[(1, MONO_ONE, 1)];
    const ID2: &[(usize, u64, i64)] = &[(2, MONO_ONE, 1)];
    const ID3: &[(usize, u64, i64)] = &[(3, MONO_ONE, 1)];
    match (left, right) {
        (0, 0) => ID0,
        (0, 1) | (1, 0) => ID1,
        (0, 2) | (2, 0) => ID2,
        (0, 3) | (3, 0) => ID3,
        (1, 1) => XX,
        (1, 2) => XY_,
        (1, 3) => X_XY,
        (2, 1) => YX,
        (2, 2) => YY,
        (2, 3) => Y_XY,
        (3, 1) => XY_X,
        (3, 2) => XY_Y,
        (3, 3) => XY_XY,
        _ => unreachable!(),
    }
}

fn tuple_mul(a: &Tuple, b: &Tuple) -> Tuple {
    let mut out = Tuple { c: [Poly::zero(), Poly::zero(), Poly::zero(), Poly::zero()] };
    for i in 0..4 {
        if a.c[i].is_zero() {
            continue;
        }
        for j in 0..4 {
            if b.c[j].is_zero() {
                continue;
            }
            let prod = a.c[i].mul(&b.c[j]);
            for &(slot, mono, sign) in basis_product(i, j) {
                out.c[slot].add_scaled(&prod, mono, sign);
            }
        }
    }
    out
}

/// `Eᵏ = f_k(τ)·E − f_{k−1}(τ)·1`, with `f` by the three-term recurrence.
/// Negative powers go through the Cayley–Hamilton inverse, which has the
/// same trace.
fn tuple_pow(base: &Tuple, e: &BigInt) -> Tuple {
    if e.is_zero() {
        return Tuple::identity();
    }
    let k = e
        .magnitude()
        .to_u64()
        .expect("power exceeds the symbolic guard");
    debug_assert!(k <= MAX_LETTERS, "guarded callers keep powers small");
    let tau = base.trace();
    let base = if e.is_negative() { base.inverse(&tau) } else { base.clone() };
    if k == 1 {
        return base;
    }
    // f_1 = 1, f_2 = τ, f_{j+1} = τ f_j − f_{j−1}.
    let mut f_prev = Poly::constant(1); // f_1
    let mut f_cur = tau.clone(); // f_2
    for _ in 2..k {
        let mut next = tau.mul(&f_cur);
        next.add_scaled(&f_prev, MONO_ONE, -1);
        f_prev = f_cur;
        f_cur = next;
    }
    let (f_k, f_k1) = (f_cur, f_prev);
    let mut out = Tuple { c: Default::default() };
    for slot in 0..4 {
        out.c[slot] = f_k.mul(&base.c[slot]);
    }
    out.c[0].add_scaled(&f_k1, MONO_ONE, -1);
    out
}

/// Exact integer polynomial in (s, t, u), canonically ordered.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TracePoly {
    terms: BTreeMap<(u32, u32, u32), BigInt>,
}

impl TracePoly {
    fn from_poly(p: Poly) -> TracePoly {
        let terms = p.terms.into_iter().map(|(k, c)| (unpack(k), c)).collect();
        TracePoly { terms }
    }

    pub fn constant(c: i64) -> TracePoly {
        let mut terms = BTreeMap::new();
        if c != 0 {
            terms.insert((0, 0, 0), BigInt::from(c));
        }
        TracePoly { terms }
    }

    /// Nonzero terms as `((deg s, deg t, deg u), coefficient)`, in
    /// lexicographic monomial order.
    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32, u32), &BigInt)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|&(i, j, k)| i + j + k).max().unwrap_or(0)
    }

    /// The polynomial after identifying t with s (the equal-trace
    /// substitution `tr y := tr x`).
    pub fn substitute_t_by_s(&self) -> TracePoly {
        let mut out: BTreeMap<(u32, u32, u32), BigInt> = BTreeMap::new();
        for (&(i, j, k), c) in &self.terms {
            let e = out.entry((i + j, 0, k)).or_insert_with(BigInt::zero);
            *e += c;
        }
        out.retain(|_, c| !c.is_zero());
        TracePoly { terms: out }
    }

    /// Exact Horner-style evaluation at scalar values of (s, t, u).
    pub fn eval<R: ScalarRing>(
        &self,
        ring: &R,
        s: &R::Elem,
        t: &R::Elem,
        u: &R::Elem,
    ) -> R::Elem {
        let max = self.terms.keys().fold((0u32, 0u32, 0u32), |acc, &(i, j, k)| {
            (acc.0.max(i), acc.1.max(j), acc.2.max(k))
        });
        let powers = |base: &R::Elem, n: u32| -> Vec<R::Elem> {
            let mut v = Vec::with_capacity(n as usize + 1);
            v.push(ring.one());
            for i in 1..=n {
                let prev = v[i as usize - 1].clone();
                v.push(ring.mul(&prev, base));
            }
            v
        };
        let ps = powers(s, max.0);
        let pt = powers(t, max.1);
        let pu = powers(u, max.2);
        let mut acc = ring.zero();
        for (&(i, j, k), c) in &self.terms {
            let mut term = ring.from_bigint(c);
            term = ring.mul(&term, &ps[i as usize]);
            term = ring.mul(&term, &pt[j as usize]);
            term = ring.mul(&term, &pu[k as usize]);
            acc = ring.add(&acc, &term);
        }
        acc
    }

    pub fn to_json_terms(&self) -> Vec<TracePolyTerm> {
        self.terms
            .iter()
            .map(|(&(i, j, k), c)| TracePolyTerm { i, j, k, c: c.to_string() })
            .collect()
    }

    pub fn from_json_terms(terms: &[TracePolyTerm]) -> Result<TracePoly, String> {
        let mut out = BTreeMap::new();
        for t in terms {
            let c: BigInt = t.c.parse().map_err(|_| format!("bad coefficient {:?}", t.c))?;
            if c.is_zero() {
                return Err("stored zero coefficient".into());
            }
            if out.insert((t.i, t.j, t.k), c).is_some() {
                return Err(format!("duplicate monomial ({}, {}, {})", t.i, t.j, t.k));
            }
        }
        Ok(TracePoly { terms: out })
    }
}

impl fmt::Display for TracePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (&(i, j, k), c)) in self.terms.iter().rev().enumerate() {
            let mag = c.magnitude();
            if n == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut vars = String::new();
            for (sym, e) in [("s", i), ("t", j), ("u", k)] {
                match e {
                    0 => {}
                    1 => vars.push_str(&format!(" {sym}")),
                    _ => vars.push_str(&format!(" {sym}^{e}")),
                }
            }
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", vars.trim_start())?;
            } else {
                write!(f, "{mag}{vars}")?;
            }
        }
        Ok(())
    }
}

/// One monomial in the JSON form: `s^i t^j u^k` with a decimal coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracePolyTerm {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub c: String,
}

/// Unreduced letter count of every node (leaf = 1, product sums, power
/// scales); an upper bound for the reduced expansion and the exact measure
/// of symbolic cost.
fn unreduced_letters(nodes: &[SlpNode]) -> Vec<BigUint> {
    let mut out: Vec<BigUint> = Vec::with_capacity(nodes.len());
    for node in nodes {
        let n = match node {
            SlpNode::Leaf(_) => BigUint::one(),
            SlpNode::Product(ch) => ch.iter().map(|&c| &out[c]).sum(),
            SlpNode::Power(c, e) => &out[*c] * e.magnitude(),
        };
        out.push(n);
    }
    out
}

fn guard_word(w: &SlpWord) -> Result<(), TracePolyError> {
    let sizes = unreduced_letters(w.nodes());
    if sizes[w.root()] > BigUint::from(MAX_LETTERS) {
        return Err(TracePolyError::TooLarge(format!(
            "{} letters unreduced exceeds {MAX_LETTERS}",
            sizes[w.root()]
        )));
    }
    let flat = w
        .expand(MAX_LETTERS as usize)
        .map_err(|_| TracePolyError::TooLarge(format!("expansion exceeds {MAX_LETTERS} letters")))?;
    if flat.syllable_len() > MAX_SYLLABLES {
        return Err(TracePolyError::TooLarge(format!(
            "{} syllables exceeds {MAX_SYLLABLES}",
            flat.syllable_len()
        )));
    }
    Ok(())
}

fn eval_tuples(nodes: &[SlpNode]) -> Vec<Tuple> {
    let mut memo: Vec<Tuple> = Vec::with_capacity(nodes.len());
    for node in nodes {
        let t = match node {
            SlpNode::Leaf(crate::word::Gen::A) => Tuple::gen_x(),
            SlpNode::Leaf(crate::word::Gen::B) => Tuple::gen_y(),
            SlpNode::Product(ch) => {
                let mut acc = memo[ch[0]].clone();
                for &c in &ch[1..] {
                    acc = tuple_mul(&acc, &memo[c]);
                }
                acc
            }
            SlpNode::Power(c, e) => tuple_pow(&memo[*c], e),
        };
        memo.push(t);
    }
    memo
}

/// The unique polynomial P with `P(tr A, tr B, tr AB) = tr w(A, B)` for all
/// determinant-1 pairs over every commutative ring.
pub fn trace_polynomial_slp(w: &SlpWord) -> Result<TracePoly, TracePolyError> {
    guard_word(w)?;
    let memo = eval_tuples(w.nodes());
    Ok(TracePoly::from_poly(memo[w.root()].trace()))
}

/// Flat-word entry point; the identity word has trace 2.
pub fn trace_polynomial(w: &FlatWord) -> Result<TracePoly, TracePolyError> {
    if w.syllable_len() > MAX_SYLLABLES {
        return Err(TracePolyError::TooLarge(format!(
            "{} syllables exceeds {MAX_SYLLABLES}",
            w.syllable_len()
        )));
    }
    match w.to_slp() {
        None => Ok(TracePoly::constant(2)),
        Some(slp) => trace_polynomial_slp(&slp),
    }
}

/// Trace polynomials of two words over a shared evaluation, so common
/// subprograms (towers built from the same blocks) are computed once.
pub fn trace_polynomial_pair(
    w1: &SlpWord,
    w2: &SlpWord,
) -> Result<(TracePoly, TracePoly), TracePolyError> {
    guard_word(w1)?;
    guard_word(w2)?;
    let mut b = SlpBuilder::new();
    let r1 = b.embed(w1);
    let r2 = b.embed(w2);
    let memo = eval_tuples(b.node_list());
    Ok((
        TracePoly::from_poly(memo[r1].trace()),
        TracePoly::from_poly(memo[r2].trace()),
    ))
}

/// Whether `tr W(x, y) = tr W(y, x)` holds whenever `tr x = tr y`:
/// compares the trace polynomials of the template and its swap after the
/// substitution `t := s`.
pub fn check_symmetry(w: &SlpWord) -> Result<bool, TracePolyError> {
    let p = trace_polynomial_slp(w)?;
    let q = trace_polynomial_slp(&w.swap_generators())?;
    Ok(p.substitute_t_by_s() == q.substitute_t_by_s())
}

/// Outcome of randomized trace-equality testing of a word family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEqualityEvidence {
    /// The prime drawn by each trial, in trial order.
    pub primes: Vec<u64>,
    /// Number of trials actually executed.
    pub trials: u32,
    pub seed: u64,
    /// First observed mismatch, if any.
    pub mismatch: Option<TraceMismatchWitness>,
}

impl TraceEqualityEvidence {
    pub fn distinct_primes(&self) -> usize {
        self.primes.iter().collect::<HashSet<_>>().len()
    }
}

/// A disproof point: two family members with different traces at a concrete
/// evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMismatchWitness {
    pub word_left: usize,
    pub word_right: usize,
    pub prime: u64,
    pub image_of_a: [String; 4],
    pub image_of_b: [String; 4],
    pub trace_left: String,
    pub trace_right: String,
}

/// Evaluates every family member at random points of SL₂(𝔽_P)² for random
/// primes P in [2⁶¹, 2⁶²), recording equality of traces or the first
/// mismatch.
///
/// Trial `i` draws from an independent stream `i + 1` of a ChaCha generator
/// seeded with `seed`, so trials are reproducible individually and in
/// parallel. Trials continue past `trials` if needed until at least
/// `min(5, trials)` distinct primes have been used.
pub fn random_trace_equal(
    family: &[SlpWord],
    trials: u32,
    seed: u64,
) -> TraceEqualityEvidence {
    assert!(trials >= 1, "at least one trial");
    assert!(!family.is_empty(), "empty family");
    let want_distinct = MIN_DISTINCT_PRIMES.min(trials as usize);
    let mut primes: Vec<u64> = Vec::new();
    let mut distinct: HashSet<u64> = HashSet::new();
    let mut mismatch = None;
    let mut done = 0u32;
    while done < trials || distinct.len() < want_distinct {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(done as u64 + 1);
        let p = loop {
            let candidate = rng.gen_range((1u64 << 61)..(1u64 << 62)) | 1;
            if is_prime_u64(candidate) {
                break candidate;
            }
        };
        primes.push(p);
        distinct.insert(p);
        let fp = Fp::new(p);
        let mat_a = random_sl2(&mut rng, &fp);
        let mat_b = random_sl2(&mut rng, &fp);
        let asg = WitnessAssignment::new(fp, mat_a, mat_b);
        let traces: Vec<u64> =
            family.iter().map(|w| trace(&fp, &eval_word_fp(w, &asg))).collect();
        done += 1;
        if let Some(j) = traces.iter().position(|&tr| tr != traces[0]) {
            mismatch = Some(TraceMismatchWitness {
                word_left: 0,
                word_right: j,
                prime: p,
                image_of_a: crate::mat2::mat_to_strings(&fp, &asg.image_of_a),
                image_of_b: crate::mat2::mat_to_strings(&fp, &asg.image_of_b),
                trace_left: traces[0].to_string(),
                trace_right: traces[j].to_string(),
            });
            break;
        }
    }
    TraceEqualityEvidence { primes, trials: done, seed, mismatch }
}
