//! Scalar rings behind the 2×2 matrix arithmetic.
//!
//! Everything downstream is generic over [`ScalarRing`]: a commutative ring
//! with exact equality (except the complex floats, which carry an explicit
//! tolerance) and multiplicative inverses defined on units. Concrete
//! instances:
//!
//! * [`Fp`] — prime field with a machine-word modulus (up to 62 bits);
//! * [`FpBig`] — prime field with an arbitrary-precision modulus;
//! * [`DyadicRing`] — ℤ[1/2], numerators odd (or zero) with a power-of-two
//!   denominator, kept normalized so equality is structural;
//! * [`Rationals`] — exact ℚ;
//! * [`ComplexField`] — complex doubles with a caller-supplied comparison
//!   tolerance.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RingError {
    #[error("cannot parse {text:?} as an element of {ring}")]
    Parse { ring: String, text: String },
}

/// A commutative ring with unit-inverses, exposed as an object holding any
/// runtime parameters (modulus, tolerance) with element values alongside.
pub trait ScalarRing: Clone + fmt::Debug {
    type Elem: Clone + fmt::Debug;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn sub(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn neg(&self, a: &Self::Elem) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    /// Multiplicative inverse, defined exactly on units.
    fn inv(&self, a: &Self::Elem) -> Option<Self::Elem>;
    fn eq(&self, a: &Self::Elem, b: &Self::Elem) -> bool;
    /// 0 for characteristic zero, otherwise the prime.
    fn characteristic(&self) -> BigUint;
    fn from_bigint(&self, n: &BigInt) -> Self::Elem;
    fn elem_to_string(&self, a: &Self::Elem) -> String;
    fn elem_from_str(&self, s: &str) -> Result<Self::Elem, RingError>;

    fn from_i64(&self, n: i64) -> Self::Elem {
        self.from_bigint(&BigInt::from(n))
    }
    fn is_zero(&self, a: &Self::Elem) -> bool {
        self.eq(a, &self.zero())
    }
    fn is_one(&self, a: &Self::Elem) -> bool {
        self.eq(a, &self.one())
    }
}

/// The prime field 𝔽_p with a machine-word modulus.
///
/// Products go through 128-bit intermediates, which is exact for p < 2⁶².
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fp {
    p: u64,
}

impl Fp {
    /// The caller vouches that `p` is an odd prime below 2⁶².
    pub fn new(p: u64) -> Fp {
        assert!(p > 2 && p < (1 << 62), "modulus out of range");
        Fp { p }
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn reduce_u64(&self, n: u64) -> u64 {
        n % self.p
    }

    pub fn pow(&self, base: u64, mut e: u64) -> u64 {
        let mut base = base % self.p;
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }
}

impl ScalarRing for Fp {
    type Elem = u64;

    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1
    }
    fn add(&self, a: &u64, b: &u64) -> u64 {
        let s = a + b; // < 2^63, no overflow for p < 2^62
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }
    fn sub(&self, a: &u64, b: &u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }
    fn neg(&self, a: &u64) -> u64 {
        if *a == 0 {
            0
        } else {
            self.p - a
        }
    }
    fn mul(&self, a: &u64, b: &u64) -> u64 {
        ((*a as u128 * *b as u128) % self.p as u128) as u64
    }
    fn inv(&self, a: &u64) -> Option<u64> {
        if *a == 0 {
            return None;
        }
        // p is prime, so a^(p-2) works.
        Some(self.pow(*a, self.p - 2))
    }
    fn eq(&self, a: &u64, b: &u64) -> bool {
        a == b
    }
    fn characteristic(&self) -> BigUint {
        BigUint::from(self.p)
    }
    fn from_bigint(&self, n: &BigInt) -> u64 {
        let mut m = n % BigInt::from(self.p);
        if m.sign() == Sign::Minus {
            m += BigInt::from(self.p);
        }
        m.to_u64().unwrap()
    }
    fn elem_to_string(&self, a: &u64) -> String {
        a.to_string()
    }
    fn elem_from_str(&self, s: &str) -> Result<u64, RingError> {
        let n: BigInt = s.parse().map_err(|_| RingError::Parse {
            ring: format!("F_{}", self.p),
            text: s.to_string(),
        })?;
        Ok(self.from_bigint(&n))
    }
}

/// A prime field with an arbitrary-precision modulus, for moduli beyond the
/// machine-word range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpBig {
    p: BigUint,
}

impl FpBig {
    pub fn new(p: BigUint) -> FpBig {
        assert!(p > BigUint::from(2u32), "modulus out of range");
        FpBig { p }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }
}

impl ScalarRing for FpBig {
    type Elem = BigUint;

    fn zero(&self) -> BigUint {
        BigUint::zero()
    }
    fn one(&self) -> BigUint {
        BigUint::one()
    }
    fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        let s = a + b;
        if s >= self.p {
            s - &self.p
        } else {
            s
        }
    }
    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        if a >= b {
            a - b
        } else {
            a + &self.p - b
        }
    }
    fn neg(&self, a: &BigUint) -> BigUint {
        if a.is_zero() {
            BigUint::zero()
        } else {
            &self.p - a
        }
    }
    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }
    fn inv(&self, a: &BigUint) -> Option<BigUint> {
        if a.is_zero() {
            return None;
        }
        Some(a.modpow(&(&self.p - 2u32), &self.p))
    }
    fn eq(&self, a: &BigUint, b: &BigUint) -> bool {
        a == b
    }
    fn characteristic(&self) -> BigUint {
        self.p.clone()
    }
    fn from_bigint(&self, n: &BigInt) -> BigUint {
        let p = BigInt::from(self.p.clone());
        let mut m = n % &p;
        if m.sign() == Sign::Minus {
            m += &p;
        }
        m.to_biguint().unwrap()
    }
    fn elem_to_string(&self, a: &BigUint) -> String {
        a.to_string()
    }
    fn elem_from_str(&self, s: &str) -> Result<BigUint, RingError> {
        let n: BigInt = s.parse().map_err(|_| RingError::Parse {
            ring: format!("F_{}", self.p),
            text: s.to_string(),
        })?;
        Ok(self.from_bigint(&n))
    }
}

/// An element of ℤ[1/2]: `num / 2^shift` with `num` odd or zero (and
/// `shift = 0` when zero). Text form `n/2^k`, or plain `n` when `k = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dyadic {
    num: BigInt,
    shift: i64,
}

impl Dyadic {
    fn normalized(mut num: BigInt, mut shift: i64) -> Dyadic {
        if num.is_zero() {
            return Dyadic { num, shift: 0 };
        }
        let tz = num.trailing_zeros().unwrap_or(0) as usize;
        if tz > 0 {
            num >>= tz;
            shift -= tz as i64;
        }
        Dyadic { num, shift }
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn shift(&self) -> i64 {
        self.shift
    }

    pub fn to_rational(&self) -> BigRational {
        if self.shift >= 0 {
            BigRational::new(self.num.clone(), BigInt::one() << self.shift as usize)
        } else {
            BigRational::from_integer(self.num.clone() << (-self.shift) as usize)
        }
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.shift <= 0 {
            write!(f, "{}", &self.num << (-self.shift) as usize)
        } else {
            write!(f, "{}/2^{}", self.num, self.shift)
        }
    }
}

/// The ring ℤ[1/2] from adjoining 1/2 to the integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DyadicRing;

impl ScalarRing for DyadicRing {
    type Elem = Dyadic;

    fn zero(&self) -> Dyadic {
        Dyadic { num: BigInt::zero(), shift: 0 }
    }
    fn one(&self) -> Dyadic {
        Dyadic { num: BigInt::one(), shift: 0 }
    }
    fn add(&self, a: &Dyadic, b: &Dyadic) -> Dyadic {
        let shift = a.shift.max(b.shift);
        let na = &a.num << (shift - a.shift) as usize;
        let nb = &b.num << (shift - b.shift) as usize;
        Dyadic::normalized(na + nb, shift)
    }
    fn sub(&self, a: &Dyadic, b: &Dyadic) -> Dyadic {
        self.add(a, &self.neg(b))
    }
    fn neg(&self, a: &Dyadic) -> Dyadic {
        Dyadic { num: -&a.num, shift: a.shift }
    }
    fn mul(&self, a: &Dyadic, b: &Dyadic) -> Dyadic {
        Dyadic::normalized(&a.num * &b.num, a.shift + b.shift)
    }
    fn inv(&self, a: &Dyadic) -> Option<Dyadic> {
        // Units are exactly ±2^k.
        if a.num.abs().is_one() {
            Some(Dyadic { num: a.num.clone(), shift: -a.shift })
        } else {
            None
        }
    }
    fn eq(&self, a: &Dyadic, b: &Dyadic) -> bool {
        a == b
    }
    fn characteristic(&self) -> BigUint {
        BigUint::zero()
    }
    fn from_bigint(&self, n: &BigInt) -> Dyadic {
        Dyadic::normalized(n.clone(), 0)
    }
    fn elem_to_string(&self, a: &Dyadic) -> String {
        a.to_string()
    }
    fn elem_from_str(&self, s: &str) -> Result<Dyadic, RingError> {
        let parse_err = || RingError::Parse { ring: "Z[1/2]".into(), text: s.to_string() };
        match s.split_once('/') {
            None => {
                let n: BigInt = s.trim().parse().map_err(|_| parse_err())?;
                Ok(self.from_bigint(&n))
            }
            Some((num, den)) => {
                let n: BigInt = num.trim().parse().map_err(|_| parse_err())?;
                let k: i64 = den
                    .trim()
                    .strip_prefix("2^")
                    .ok_or_else(parse_err)?
                    .parse()
                    .map_err(|_| parse_err())?;
                Ok(Dyadic::normalized(n, k))
            }
        }
    }
}

/// The exact rationals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Rationals;

impl ScalarRing for Rationals {
    type Elem = BigRational;

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn one(&self) -> BigRational {
        BigRational::one()
    }
    fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }
    fn sub(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a - b
    }
    fn neg(&self, a: &BigRational) -> BigRational {
        -a
    }
    fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn inv(&self, a: &BigRational) -> Option<BigRational> {
        if a.is_zero() {
            None
        } else {
            Some(a.recip())
        }
    }
    fn eq(&self, a: &BigRational, b: &BigRational) -> bool {
        a == b
    }
    fn characteristic(&self) -> BigUint {
        BigUint::zero()
    }
    fn from_bigint(&self, n: &BigInt) -> BigRational {
        BigRational::from_integer(n.clone())
    }
    fn elem_to_string(&self, a: &BigRational) -> String {
        a.to_string()
    }
    fn elem_from_str(&self, s: &str) -> Result<BigRational, RingError> {
        s.trim().parse().map_err(|_| RingError::Parse { ring: "Q".into(), text: s.to_string() })
    }
}

/// Complex doubles with an explicit comparison tolerance.
///
/// The analytic layer (complex lengths) is the one place where exactness is
/// impossible; every equality check here means `|a − b| ≤ tol`.
#[derive(Debug, Clone, Copy)]
pub struct ComplexField {
    pub tol: f64,
}

impl ComplexField {
    pub fn new(tol: f64) -> ComplexField {
        assert!(tol >= 0.0 && tol.is_finite());
        ComplexField { tol }
    }
}

impl ScalarRing for ComplexField {
    type Elem = Complex64;

    fn zero(&self) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
    fn one(&self) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
    fn add(&self, a: &Complex64, b: &Complex64) -> Complex64 {
        a + b
    }
    fn sub(&self, a: &Complex64, b: &Complex64) -> Complex64 {
        a - b
    }
    fn neg(&self, a: &Complex64) -> Complex64 {
        -a
    }
    fn mul(&self, a: &Complex64, b: &Complex64) -> Complex64 {
        a * b
    }
    fn inv(&self, a: &Complex64) -> Option<Complex64> {
        if a.norm() <= self.tol {
            None
        } else {
            Some(a.inv())
        }
    }
    fn eq(&self, a: &Complex64, b: &Complex64) -> bool {
        (a - b).norm() <= self.tol
    }
    fn characteristic(&self) -> BigUint {
        BigUint::zero()
    }
    fn from_bigint(&self, n: &BigInt) -> Complex64 {
        Complex64::new(n.to_f64().unwrap_or(f64::NAN), 0.0)
    }
    fn elem_to_string(&self, a: &Complex64) -> String {
        format!("{}{:+}i", a.re, a.im)
    }
    fn elem_from_str(&self, s: &str) -> Result<Complex64, RingError> {
        let parse_err = || RingError::Parse { ring: "C".into(), text: s.to_string() };
        let body = s.trim().strip_suffix('i').ok_or_else(parse_err)?;
        let split = body.rfind(['+', '-']).filter(|&i| i > 0).ok_or_else(parse_err)?;
        let re: f64 = body[..split].parse().map_err(|_| parse_err())?;
        let im: f64 = body[split..].parse().map_err(|_| parse_err())?;
        Ok(Complex64::new(re, im))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn check_ring_axioms<R: ScalarRing>(ring: &R, elems: &[R::Elem]) {
        for a in elems {
            for b in elems {
                assert!(ring.eq(&ring.add(a, b), &ring.add(b, a)));
                assert!(ring.eq(&ring.mul(a, b), &ring.mul(b, a)));
                for c in elems {
                    let l = ring.mul(a, &ring.add(b, c));
                    let r = ring.add(&ring.mul(a, b), &ring.mul(a, c));
                    assert!(ring.eq(&l, &r));
                    let l = ring.mul(&ring.mul(a, b), c);
                    let r = ring.mul(a, &ring.mul(b, c));
                    assert!(ring.eq(&l, &r));
                }
                if let Some(bi) = ring.inv(b) {
                    assert!(ring.is_one(&ring.mul(b, &bi)));
                }
            }
            assert!(ring.eq(&ring.add(a, &ring.neg(a)), &ring.zero()));
            assert!(ring.eq(&ring.mul(a, &ring.one()), a));
        }
    }

    #[test]
    fn axioms_on_random_triples() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let fp = Fp::new(1_000_003);
        let elems: Vec<u64> = (0..6).map(|_| rng.gen_range(0..fp.modulus())).collect();
        check_ring_axioms(&fp, &elems);

        let fpb = FpBig::new(BigUint::from(1_000_003u64));
        let elems: Vec<BigUint> =
            (0..5).map(|_| BigUint::from(rng.gen_range(0u64..1_000_003))).collect();
        check_ring_axioms(&fpb, &elems);

        let dy = DyadicRing;
        let elems: Vec<Dyadic> = (0..5)
            .map(|_| {
                Dyadic::normalized(BigInt::from(rng.gen_range(-50i64..50)), rng.gen_range(-3i64..4))
            })
            .collect();
        check_ring_axioms(&dy, &elems);

        let q = Rationals;
        let elems: Vec<BigRational> = (0..5)
            .map(|_| {
                BigRational::new(
                    BigInt::from(rng.gen_range(-20i64..20)),
                    BigInt::from(rng.gen_range(1i64..9)),
                )
            })
            .collect();
        check_ring_axioms(&q, &elems);
    }

    #[test]
    fn fp_matches_big_field() {
        let p = (1u64 << 61) - 1;
        let fp = Fp::new(p);
        let fpb = FpBig::new(BigUint::from(p));
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = rng.gen_range(0..p);
            let b = rng.gen_range(0..p);
            assert_eq!(BigUint::from(fp.mul(&a, &b)), fpb.mul(&a.into(), &b.into()));
            assert_eq!(BigUint::from(fp.add(&a, &b)), fpb.add(&a.into(), &b.into()));
            if a != 0 {
                assert_eq!(BigUint::from(fp.inv(&a).unwrap()), fpb.inv(&a.into()).unwrap());
            }
        }
    }

    #[test]
    fn dyadic_normalization_and_text() {
        let dy = DyadicRing;
        let half = dy.inv(&dy.from_i64(2)).unwrap();
        assert_eq!(half.to_string(), "1/2^1");
        assert_eq!(dy.mul(&half, &dy.from_i64(2)), dy.one());
        let v = dy.elem_from_str("-12").unwrap();
        assert_eq!((v.numerator().clone(), v.shift()), (BigInt::from(-3), -2));
        assert_eq!(v.to_string(), "-12");
        let w = dy.elem_from_str("5/2^3").unwrap();
        assert_eq!(dy.elem_from_str(&w.to_string()).unwrap(), w);
        assert_eq!(dy.inv(&dy.from_i64(3)), None);
        assert_eq!(dy.inv(&w), None);
    }

    #[test]
    fn complex_tolerance_equality() {
        let c = ComplexField::new(1e-9);
        let a = Complex64::new(1.0, 2.0);
        assert!(c.eq(&a, &(a + Complex64::new(1e-12, -1e-12))));
        assert!(!c.eq(&a, &(a + Complex64::new(1e-6, 0.0))));
        let s = c.elem_to_string(&a);
        let back = c.elem_from_str(&s).unwrap();
        assert!(c.eq(&a, &back));
    }

    #[test]
    fn fp_from_bigint_handles_negatives() {
        let fp = Fp::new(31);
        assert_eq!(fp.from_bigint(&BigInt::from(-30)), 1);
        assert_eq!(fp.from_bigint(&BigInt::from(62)), 0);
        assert_eq!(fp.elem_from_str("-1").unwrap(), 30);
    }
}
