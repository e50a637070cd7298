//! Primality, constrained prime search, and complete splitting of rational
//! primes in a number field given by a monic minimal polynomial.
//!
//! The splitting criterion is classical: an unramified prime `p` splits
//! completely in ℚ[x]/(f) exactly when `f mod p` factors into `deg f`
//! distinct linear factors, which holds iff `x^p ≡ x (mod f, p)` and
//! `disc f ≢ 0 (mod p)`. The density estimator counts split primes up to a
//! bound; for Galois fields of degree N the ratio tends to 1/N.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ring::{Fp, ScalarRing};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrimeError {
    #[error("polynomial parse error: {0}")]
    PolyParse(String),
    #[error("minimal polynomial must be monic with positive degree")]
    NotMonic,
}

/// Deterministic Miller–Rabin for machine-word inputs.
///
/// The twelve smallest prime bases decide primality for every n < 2⁶⁴.
pub fn is_prime_u64(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n == b {
            return true;
        }
        if n % b == 0 {
            return false;
        }
    }
    let d = n - 1;
    let s = d.trailing_zeros();
    let d = d >> s;
    'bases: for &b in &BASES {
        let mut x = pow_mod_u64(b, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Primality for arbitrary-precision inputs: exact below 2⁶⁴, Miller–Rabin
/// with 40 pseudorandom rounds above (error < 4⁻⁴⁰). The round bases are
/// derived deterministically from the input, so the answer is reproducible.
pub fn is_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    if n.is_even() {
        return false;
    }
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap();
    let d = &n_minus_1 >> s;
    let mut seed = [0u8; 32];
    for (i, byte) in n.to_bytes_le().into_iter().take(32).enumerate() {
        seed[i] = byte;
    }
    let mut rng = ChaCha20Rng::from_seed(seed);
    'rounds: for _ in 0..40 {
        let bits = n.bits();
        let base = loop {
            let mut bytes = vec![0u8; ((bits + 7) / 8) as usize];
            rng.fill(&mut bytes[..]);
            let candidate = BigUint::from_bytes_le(&bytes) % n;
            if candidate > one && candidate < n_minus_1 {
                break candidate;
            }
        };
        let mut x = base.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'rounds;
            }
        }
        return false;
    }
    true
}

/// Prime factorization of a machine word, by trial division and Brent's
/// variant of Pollard's rho. Returns `(prime, multiplicity)` pairs sorted by
/// prime.
pub fn factor_u64(mut n: u64) -> Vec<(u64, u32)> {
    let mut factors: Vec<u64> = Vec::new();
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
        while n % p == 0 {
            factors.push(p);
            n /= p;
        }
    }
    let mut stack = vec![n];
    while let Some(m) = stack.pop() {
        if m == 1 {
            continue;
        }
        if is_prime_u64(m) {
            factors.push(m);
            continue;
        }
        let d = pollard_rho(m);
        stack.push(d);
        stack.push(m / d);
    }
    factors.sort_unstable();
    let mut out: Vec<(u64, u32)> = Vec::new();
    for f in factors {
        match out.last_mut() {
            Some((p, k)) if *p == f => *k += 1,
            _ => out.push((f, 1)),
        }
    }
    out
}

fn pollard_rho(n: u64) -> u64 {
    debug_assert!(n > 1 && !is_prime_u64(n) && n % 2 == 1);
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod_u64(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd_u64(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

pub fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// All divisors of `n`, ascending.
pub fn divisors_u64(n: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    for (p, k) in factor_u64(n) {
        let base = out.clone();
        let mut pe = 1u64;
        for _ in 0..k {
            pe *= p;
            out.extend(base.iter().map(|d| d * pe));
        }
    }
    out.sort_unstable();
    out
}

/// Search constraints for the next admissible prime: a strict lower bound,
/// residues to avoid modulo earlier primes, and an optional doubling floor
/// (the result must exceed twice it).
#[derive(Debug, Clone, Default)]
pub struct PrimeSearchConstraints {
    pub strict_lower_bound: BigUint,
    /// Pairwise distinct prime moduli, each with residues (already reduced)
    /// the candidate must avoid.
    pub forbidden_residues: Vec<(BigUint, Vec<BigUint>)>,
    pub doubling_floor: Option<BigUint>,
}

impl PrimeSearchConstraints {
    pub fn above(bound: u64) -> PrimeSearchConstraints {
        PrimeSearchConstraints { strict_lower_bound: BigUint::from(bound), ..Default::default() }
    }

    fn admits(&self, candidate: &BigUint) -> bool {
        self.forbidden_residues.iter().all(|(m, rs)| {
            let r = candidate % m;
            rs.iter().all(|f| *f != r)
        })
    }
}

/// The smallest prime above all bounds avoiding every forbidden residue.
///
/// Termination is a density fact (residue classes cannot cover the primes
/// when the moduli grow like a doubling sequence), not a code guarantee; the
/// search is a plain upward scan skipping multiples of 2, 3 and 5.
pub fn next_prime_constrained(c: &PrimeSearchConstraints) -> BigUint {
    let mut floor = c.strict_lower_bound.clone();
    if let Some(d) = &c.doubling_floor {
        floor = floor.max(d * 2u32);
    }
    // Wheel-30 skipping, after handling the leading small primes.
    for small in [2u64, 3, 5] {
        let small = BigUint::from(small);
        if small > floor && c.admits(&small) {
            return small;
        }
    }
    const WHEEL: [u64; 8] = [1, 7, 11, 13, 17, 19, 23, 29];
    let thirty = BigUint::from(30u32);
    let base = (&floor / &thirty) * &thirty;
    let mut block = base;
    loop {
        for r in WHEEL {
            let candidate = &block + r;
            if candidate <= floor {
                continue;
            }
            if c.admits(&candidate) && is_prime(&candidate) {
                return candidate;
            }
        }
        block += &thirty;
    }
}

/// A number field ℚ[x]/(f) described by its monic minimal polynomial.
#[derive(Debug, Clone)]
pub struct NumberFieldSpec {
    /// Coefficients, constant term first; the leading coefficient is 1.
    pub coefficients: Vec<BigInt>,
    pub degree: usize,
    /// Whether the field is claimed Galois over ℚ, which is what makes the
    /// split density 1/N meaningful.
    pub galois_claimed: bool,
}

impl NumberFieldSpec {
    pub fn new(coefficients: Vec<BigInt>, galois_claimed: bool) -> Result<Self, PrimeError> {
        let degree = coefficients.len().saturating_sub(1);
        if degree == 0 || coefficients.last() != Some(&BigInt::one()) {
            return Err(PrimeError::NotMonic);
        }
        Ok(NumberFieldSpec { coefficients, degree, galois_claimed })
    }

    /// Parses `x^2+1`, `x^4+x^3+x^2+x+1`, `2x^3-x+7` style text.
    pub fn parse(text: &str, galois_claimed: bool) -> Result<Self, PrimeError> {
        let coeffs = parse_poly(text)?;
        NumberFieldSpec::new(coeffs, galois_claimed)
    }

    pub fn to_text(&self) -> String {
        let mut parts = Vec::new();
        for (k, c) in self.coefficients.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            let body = match k {
                0 => mag.to_string(),
                1 if mag.is_one() => "x".to_string(),
                1 => format!("{mag}x"),
                _ if mag.is_one() => format!("x^{k}"),
                _ => format!("{mag}x^{k}"),
            };
            let sign = if c.is_negative() { "-" } else if parts.is_empty() { "" } else { "+" };
            parts.push(format!("{sign}{body}"));
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.concat()
        }
    }
}

fn parse_poly(text: &str) -> Result<Vec<BigInt>, PrimeError> {
    let err = |msg: &str| PrimeError::PolyParse(format!("{msg} in {text:?}"));
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(err("empty polynomial"));
    }
    let mut coeffs: Vec<BigInt> = Vec::new();
    let mut term = String::new();
    let mut terms: Vec<String> = Vec::new();
    for (i, ch) in compact.chars().enumerate() {
        if (ch == '+' || ch == '-') && i > 0 {
            terms.push(std::mem::take(&mut term));
        }
        term.push(ch);
    }
    terms.push(term);
    for t in terms {
        let (coeff_text, degree) = match t.find('x') {
            None => (t.as_str(), 0usize),
            Some(ix) => {
                let deg = match t[ix + 1..].strip_prefix('^') {
                    None if t.len() == ix + 1 => 1,
                    None => return Err(err("malformed term")),
                    Some(d) => d.parse().map_err(|_| err("bad exponent"))?,
                };
                (&t[..ix], deg)
            }
        };
        let coeff: BigInt = match coeff_text {
            "" | "+" => BigInt::one(),
            "-" => -BigInt::one(),
            c => c.parse().map_err(|_| err("bad coefficient"))?,
        };
        if coeffs.len() <= degree {
            coeffs.resize(degree + 1, BigInt::zero());
        }
        coeffs[degree] += coeff;
    }
    while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.is_zero()) {
        coeffs.pop();
    }
    Ok(coeffs)
}

// --- dense polynomial arithmetic over F_p --------------------------------

fn poly_trim(v: &mut Vec<u64>) {
    while v.last() == Some(&0) {
        v.pop();
    }
}

fn poly_rem(mut a: Vec<u64>, m: &[u64], fp: &Fp) -> Vec<u64> {
    // m is monic.
    debug_assert_eq!(*m.last().unwrap(), 1);
    while a.len() >= m.len() {
        let lead = *a.last().unwrap();
        if lead != 0 {
            let shift = a.len() - m.len();
            for (i, &c) in m.iter().enumerate() {
                let sub = fp.mul(&lead, &c);
                a[shift + i] = fp.sub(&a[shift + i], &sub);
            }
        }
        a.pop();
        poly_trim(&mut a);
        if a.is_empty() {
            break;
        }
    }
    a
}

fn poly_mulmod(a: &[u64], b: &[u64], m: &[u64], fp: &Fp) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = fp.add(&out[i + j], &fp.mul(&x, &y));
        }
    }
    poly_rem(out, m, fp)
}

fn poly_gcd(mut a: Vec<u64>, mut b: Vec<u64>, fp: &Fp) -> Vec<u64> {
    poly_trim(&mut a);
    poly_trim(&mut b);
    while !b.is_empty() {
        let lead_inv = fp.inv(b.last().unwrap()).unwrap();
        let monic: Vec<u64> = b.iter().map(|c| fp.mul(c, &lead_inv)).collect();
        let r = poly_rem(a, &monic, fp);
        a = b;
        b = r;
    }
    a
}

fn reduce_field_poly(f: &NumberFieldSpec, fp: &Fp) -> Vec<u64> {
    f.coefficients.iter().map(|c| fp.from_bigint(c)).collect()
}

/// Whether the rational prime `p` splits completely in the field: `f mod p`
/// must have `deg f` distinct roots in 𝔽_p. Tested as `x^p ≡ x (mod f, p)`
/// together with squarefreeness of `f mod p` (the discriminant condition).
pub fn splits_completely(f: &NumberFieldSpec, p: u64) -> bool {
    if f.degree == 1 {
        return true;
    }
    if p == 2 {
        // The machine field wants odd p; x^2 ≡ x (mod f, 2) by hand is not
        // worth the code. Quotients this small are checked by enumeration.
        return brute_force_split_count(f, 2) == f.degree;
    }
    let fp = Fp::new(p);
    let fbar = reduce_field_poly(f, &fp);
    // Ramified (not squarefree mod p) primes never split completely.
    let deriv: Vec<u64> = fbar
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| fp.mul(&(k as u64 % p), c))
        .collect();
    let g = poly_gcd(fbar.clone(), deriv, &fp);
    if g.len() != 1 {
        return false;
    }
    // x^p mod (f, p), by binary exponentiation.
    let x = vec![0u64, 1];
    let mut acc = vec![1u64];
    let mut sq = poly_rem(x.clone(), &fbar, &fp);
    let mut e = p;
    while e > 0 {
        if e & 1 == 1 {
            acc = poly_mulmod(&acc, &sq, &fbar, &fp);
        }
        sq = poly_mulmod(&sq, &sq, &fbar, &fp);
        e >>= 1;
    }
    let reduced_x = poly_rem(x, &fbar, &fp);
    acc == reduced_x
}

/// Root counting by enumeration; the independent oracle for
/// [`splits_completely`].
pub fn brute_force_split_count(f: &NumberFieldSpec, p: u64) -> usize {
    let eval = |x: u64| -> u64 {
        let mut acc: u64 = 0;
        for c in f.coefficients.iter().rev() {
            let c = {
                let mut m = c % BigInt::from(p);
                if m.is_negative() {
                    m += BigInt::from(p);
                }
                m.to_u64().unwrap()
            };
            acc = ((acc as u128 * x as u128 + c as u128) % p as u128) as u64;
        }
        acc
    };
    (0..p).filter(|&x| eval(x) == 0).count()
}

/// Simple sieve of Eratosthenes.
pub fn primes_below(limit: u64) -> Vec<u64> {
    if limit < 3 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n];
    let mut out = Vec::new();
    for i in 2..n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j < n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Split-prime counts up to a bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensityReport {
    pub limit: u64,
    pub split: u64,
    pub primes: u64,
    pub ratio: f64,
}

/// Counts the primes below `limit` that split completely, partitioning the
/// work over `jobs` threads.
pub fn density_estimate(f: &NumberFieldSpec, limit: u64, jobs: usize) -> DensityReport {
    let primes = primes_below(limit);
    let total = primes.len() as u64;
    let jobs = jobs.max(1).min(primes.len().max(1));
    let chunk = primes.len().div_ceil(jobs);
    let split: u64 = std::thread::scope(|scope| {
        let handles: Vec<_> = primes
            .chunks(chunk.max(1))
            .map(|part| scope.spawn(move || part.iter().filter(|&&p| splits_completely(f, p)).count() as u64))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    });
    let ratio = if total == 0 { 0.0 } else { split as f64 / total as f64 };
    DensityReport { limit, split, primes: total, ratio }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_primality() {
        assert!(is_prime_u64(31));
        assert!(!is_prime_u64(1));
        assert!(!is_prime_u64(0));
        assert!(is_prime_u64(2));
        assert!(!is_prime_u64(561)); // Carmichael
        assert!(is_prime_u64((1 << 61) - 1)); // Mersenne, cross-checked below
    }

    #[test]
    fn mersenne_exponent_oracle() {
        // 2^61 - 1 is prime iff it has no prime factor below its square root;
        // spot-check divisibility by all primes below 2^16 as a partial
        // oracle, plus the Lucas-Lehmer recurrence as the real one.
        let m = (1u128 << 61) - 1;
        for p in primes_below(1 << 16) {
            assert_ne!(m % p as u128, 0);
        }
        // Lucas-Lehmer for p = 61.
        let mut s: u128 = 4;
        for _ in 0..59 {
            s = (s * s + m - 2) % m;
        }
        assert_eq!(s, 0);
    }

    #[test]
    fn big_primality_agrees_below_word_size() {
        for n in 0u64..2000 {
            assert_eq!(is_prime(&BigUint::from(n)), is_prime_u64(n), "n = {n}");
        }
    }

    #[test]
    fn factorization() {
        assert_eq!(factor_u64(840), vec![(2, 3), (3, 1), (5, 1), (7, 1)]);
        assert_eq!(factor_u64(1), vec![]);
        let n = 1_000_003u64 * 999_983;
        assert_eq!(factor_u64(n), vec![(999_983, 1), (1_000_003, 1)]);
        assert_eq!(divisors_u64(12), vec![1, 2, 3, 4, 6, 12]);
    }

    #[test]
    fn constrained_search_examples() {
        assert_eq!(next_prime_constrained(&PrimeSearchConstraints::above(30)), 31u32.into());
        assert_eq!(next_prime_constrained(&PrimeSearchConstraints::above(10)), 11u32.into());
        // 63..66 composite and 67 ≡ 5 (mod 31).
        let c = PrimeSearchConstraints {
            strict_lower_bound: 62u32.into(),
            forbidden_residues: vec![(31u32.into(), vec![1u32.into()])],
            doubling_floor: None,
        };
        assert_eq!(next_prime_constrained(&c), 67u32.into());
        // Forbidding 67's residue class pushes further.
        let c = PrimeSearchConstraints {
            strict_lower_bound: 62u32.into(),
            forbidden_residues: vec![(31u32.into(), vec![1u32.into(), 5u32.into()])],
            doubling_floor: None,
        };
        let p = next_prime_constrained(&c);
        assert!(is_prime(&p) && p > 67u32.into());
        assert_ne!(&p % 31u32, 5u32.into());
        // Doubling floor dominates a smaller bound.
        let c = PrimeSearchConstraints {
            strict_lower_bound: 10u32.into(),
            forbidden_residues: vec![],
            doubling_floor: Some(31u32.into()),
        };
        assert_eq!(next_prime_constrained(&c), 67u32.into());
        assert_eq!(next_prime_constrained(&PrimeSearchConstraints::above(1)), 2u32.into());
    }

    #[test]
    fn splitting_fixtures() {
        let gauss = NumberFieldSpec::parse("x^2+1", true).unwrap();
        assert!(splits_completely(&gauss, 5)); // roots 2, 3
        assert!(!splits_completely(&gauss, 7));
        assert!(!splits_completely(&gauss, 2)); // ramified
        let linear = NumberFieldSpec::parse("x-1", true).unwrap();
        for p in [2u64, 3, 31, 97] {
            assert!(splits_completely(&linear, p));
        }
        let cyclo5 = NumberFieldSpec::parse("x^4+x^3+x^2+x+1", true).unwrap();
        // p splits iff p ≡ 1 (mod 5).
        for p in primes_below(500) {
            assert_eq!(splits_completely(&cyclo5, p), p % 5 == 1, "p = {p}");
        }
    }

    #[test]
    fn poly_text_round_trip() {
        for text in ["x^2+1", "x^4+x^3+x^2+x+1", "x-1", "x^3-2", "x^2-2"] {
            let f = NumberFieldSpec::parse(text, true).unwrap();
            assert_eq!(f.to_text(), text);
        }
        assert!(NumberFieldSpec::parse("2x^2+1", true).is_err()); // not monic
        assert!(NumberFieldSpec::parse("7", true).is_err());
        assert!(NumberFieldSpec::parse("x^2 + x017", true).is_err());
    }

    #[test]
    fn density_sanity_small() {
        let linear = NumberFieldSpec::parse("x-1", true).unwrap();
        let r = density_estimate(&linear, 1000, 2);
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.primes, 168);
        let quad = NumberFieldSpec::parse("x^2-2", true).unwrap();
        let r = density_estimate(&quad, 20_000, 3);
        assert!((r.ratio - 0.5).abs() < 0.03, "ratio {}", r.ratio);
    }
}
