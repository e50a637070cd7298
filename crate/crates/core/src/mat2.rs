//! Exact 2×2 determinant-1 matrices over a scalar ring, and evaluation of
//! words into them.
//!
//! Compressed words evaluate by a single bottom-up pass over the program
//! graph; power nodes use binary exponentiation on the full
//! arbitrary-precision exponent. Over a machine prime field an optional
//! fast path first reduces outsized exponents modulo the base element's
//! order — audited against the unreduced computation, since a silent order
//! bug would poison every certificate built on top.

use num_bigint::{BigInt, Sign};
use num_integer::Integer as _;

use crate::primes::divisors_u64;
use crate::ring::{Fp, RingError, ScalarRing};
use crate::word::{FlatWord, Gen, SlpNode, SlpWord};

/// Row-major 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mat2<E> {
    pub a: E,
    pub b: E,
    pub c: E,
    pub d: E,
}

impl<E> Mat2<E> {
    pub fn new(a: E, b: E, c: E, d: E) -> Mat2<E> {
        Mat2 { a, b, c, d }
    }

    pub fn entries(&self) -> [&E; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }
}

pub fn identity<R: ScalarRing>(r: &R) -> Mat2<R::Elem> {
    Mat2::new(r.one(), r.zero(), r.zero(), r.one())
}

pub fn mat_mul<R: ScalarRing>(r: &R, x: &Mat2<R::Elem>, y: &Mat2<R::Elem>) -> Mat2<R::Elem> {
    Mat2::new(
        r.add(&r.mul(&x.a, &y.a), &r.mul(&x.b, &y.c)),
        r.add(&r.mul(&x.a, &y.b), &r.mul(&x.b, &y.d)),
        r.add(&r.mul(&x.c, &y.a), &r.mul(&x.d, &y.c)),
        r.add(&r.mul(&x.c, &y.b), &r.mul(&x.d, &y.d)),
    )
}

pub fn det<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>) -> R::Elem {
    r.sub(&r.mul(&m.a, &m.d), &r.mul(&m.b, &m.c))
}

/// Inverse by the adjugate; valid because det = 1.
pub fn mat_inv<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>) -> Mat2<R::Elem> {
    Mat2::new(m.d.clone(), r.neg(&m.b), r.neg(&m.c), m.a.clone())
}

pub fn mat_neg<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>) -> Mat2<R::Elem> {
    Mat2::new(r.neg(&m.a), r.neg(&m.b), r.neg(&m.c), r.neg(&m.d))
}

pub fn trace<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>) -> R::Elem {
    r.add(&m.a, &m.d)
}

/// Binary exponentiation; negative exponents go through the inverse.
pub fn mat_pow<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>, e: &BigInt) -> Mat2<R::Elem> {
    let base = if e.sign() == Sign::Minus { mat_inv(r, m) } else { m.clone() };
    let mut acc = identity(r);
    let mag = e.magnitude();
    for i in (0..mag.bits()).rev() {
        acc = mat_mul(r, &acc, &acc);
        if mag.bit(i) {
            acc = mat_mul(r, &acc, &base);
        }
    }
    acc
}

pub fn mat_eq<R: ScalarRing>(r: &R, x: &Mat2<R::Elem>, y: &Mat2<R::Elem>) -> bool {
    r.eq(&x.a, &y.a) && r.eq(&x.b, &y.b) && r.eq(&x.c, &y.c) && r.eq(&x.d, &y.d)
}

/// Equality in PSL₂: entrywise equal up to a global sign.
pub fn psl_eq<R: ScalarRing>(r: &R, x: &Mat2<R::Elem>, y: &Mat2<R::Elem>) -> bool {
    mat_eq(r, x, y) || mat_eq(r, x, &mat_neg(r, y))
}

pub fn is_identity<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>) -> bool {
    mat_eq(r, m, &identity(r))
}

/// Generator images defining a homomorphism out of the free group; both
/// matrices must have determinant 1.
#[derive(Debug, Clone)]
pub struct WitnessAssignment<R: ScalarRing> {
    pub ring: R,
    pub image_of_a: Mat2<R::Elem>,
    pub image_of_b: Mat2<R::Elem>,
}

impl<R: ScalarRing> WitnessAssignment<R> {
    pub fn new(
        ring: R,
        image_of_a: Mat2<R::Elem>,
        image_of_b: Mat2<R::Elem>,
    ) -> WitnessAssignment<R> {
        let asg = WitnessAssignment { ring, image_of_a, image_of_b };
        assert!(
            asg.ring.is_one(&det(&asg.ring, &asg.image_of_a))
                && asg.ring.is_one(&det(&asg.ring, &asg.image_of_b)),
            "witness matrices must be unimodular"
        );
        asg
    }

    /// The distinguishing witness `a ↦ [[2, 1], [0, 1/2]]`,
    /// `b ↦ [[2, 0], [0, 1/2]]`; needs 2 invertible in the ring.
    pub fn standard(ring: R) -> WitnessAssignment<R> {
        let two = ring.from_i64(2);
        let half = ring.inv(&two).expect("2 must be a unit");
        let a = Mat2::new(two.clone(), ring.one(), ring.zero(), half.clone());
        let b = Mat2::new(two, ring.zero(), ring.zero(), half);
        WitnessAssignment::new(ring, a, b)
    }

    pub fn image(&self, g: Gen) -> &Mat2<R::Elem> {
        match g {
            Gen::A => &self.image_of_a,
            Gen::B => &self.image_of_b,
        }
    }
}

/// Evaluates a flat word left to right.
pub fn eval_flat<R: ScalarRing>(w: &FlatWord, asg: &WitnessAssignment<R>) -> Mat2<R::Elem> {
    let r = &asg.ring;
    let mut acc = identity(r);
    for &(g, e) in w.syllables() {
        let power = mat_pow(r, asg.image(g), &BigInt::from(e));
        acc = mat_mul(r, &acc, &power);
    }
    acc
}

/// Evaluates a compressed word with one memoized matrix per graph node.
pub fn eval_word<R: ScalarRing>(w: &SlpWord, asg: &WitnessAssignment<R>) -> Mat2<R::Elem> {
    eval_word_inner(w, asg, None)
}

/// Over a machine prime field, with exponents above `REDUCE_BITS` bits
/// first reduced modulo the order of the base element. Every 16th reduction
/// is recomputed with the full exponent and must agree.
pub fn eval_word_fp(w: &SlpWord, asg: &WitnessAssignment<Fp>) -> Mat2<u64> {
    let mut audit = 0u64;
    eval_word_inner(w, asg, Some(&mut audit))
}

const REDUCE_BITS: u64 = 128;

fn eval_word_inner<R: ScalarRing>(
    w: &SlpWord,
    asg: &WitnessAssignment<R>,
    mut fp_reduction: Option<&mut u64>,
) -> Mat2<R::Elem> {
    let r = &asg.ring;
    let mut memo: Vec<Option<Mat2<R::Elem>>> = vec![None; w.nodes().len()];
    for i in 0..=w.root() {
        let m = match &w.nodes()[i] {
            SlpNode::Leaf(g) => asg.image(*g).clone(),
            SlpNode::Product(ch) => {
                let mut acc = memo[ch[0]].as_ref().unwrap().clone();
                for &c in &ch[1..] {
                    acc = mat_mul(r, &acc, memo[c].as_ref().unwrap());
                }
                acc
            }
            SlpNode::Power(c, e) => {
                let base = memo[*c].as_ref().unwrap();
                match fp_reduction.as_deref_mut() {
                    Some(counter) if e.magnitude().bits() > REDUCE_BITS => {
                        pow_reduced_mod_order(r, base, e, counter)
                    }
                    _ => mat_pow(r, base, e),
                }
            }
        };
        memo[i] = Some(m);
    }
    memo[w.root()].take().unwrap()
}

fn pow_reduced_mod_order<R: ScalarRing>(
    r: &R,
    base: &Mat2<R::Elem>,
    e: &BigInt,
    audit_counter: &mut u64,
) -> Mat2<R::Elem> {
    let p = match num_traits::ToPrimitive::to_u64(&r.characteristic()) {
        Some(p) if p > 2 => p,
        _ => return mat_pow(r, base, e),
    };
    let order = match sl2_order(r, base, p) {
        Some(o) => o,
        None => return mat_pow(r, base, e),
    };
    let reduced = e.mod_floor(&BigInt::from(order));
    let fast = mat_pow(r, base, &reduced);
    *audit_counter += 1;
    if *audit_counter % 16 == 1 {
        let slow = mat_pow(r, base, e);
        assert!(mat_eq(r, &fast, &slow), "order-reduced power diverged from the direct power");
    }
    fast
}

/// Order of `m` in SL₂(𝔽_p): the least e ≥ 1 with mᵉ = I. Element orders
/// divide p−1 (split torus), p+1 (nonsplit torus) or 2p (±unipotent), so
/// only divisors of those three need testing.
fn sl2_order<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>, p: u64) -> Option<u64> {
    let mut candidates: Vec<u64> = Vec::new();
    candidates.extend(divisors_u64(p - 1));
    candidates.extend(divisors_u64(p + 1));
    candidates.extend(divisors_u64(2 * p));
    candidates.sort_unstable();
    candidates.dedup();
    let id = identity(r);
    candidates.into_iter().find(|e| mat_eq(r, &mat_pow(r, m, &BigInt::from(*e)), &id))
}

/// Order of `m` in PSL₂(𝔽_p): the least e ≥ 1 with mᵉ = ±I, found among
/// divisors of p, p−1 and p+1.
pub fn order_in_psl2(field: &Fp, m: &Mat2<u64>) -> u64 {
    let p = field.modulus();
    debug_assert!(field.is_one(&det(field, m)), "order is defined on SL2 elements");
    let mut candidates: Vec<u64> = Vec::new();
    candidates.push(p);
    candidates.extend(divisors_u64(p - 1));
    candidates.extend(divisors_u64(p + 1));
    candidates.sort_unstable();
    candidates.dedup();
    let id = identity(field);
    for e in candidates {
        if psl_eq(field, &mat_pow(field, m, &BigInt::from(e)), &id) {
            return e;
        }
    }
    unreachable!("every PSL2(F_p) element order divides p, p-1 or p+1")
}

/// Uniform sample from SL₂(𝔽_p): a uniform nonzero first row, then a
/// uniform solution of the determinant equation.
pub fn random_sl2<G: rand::Rng>(rng: &mut G, fp: &Fp) -> Mat2<u64> {
    let p = fp.modulus();
    loop {
        let a = rng.gen_range(0..p);
        let b = rng.gen_range(0..p);
        if a == 0 && b == 0 {
            continue;
        }
        return if a != 0 {
            let c = rng.gen_range(0..p);
            let d = fp.mul(&fp.inv(&a).unwrap(), &fp.add(&1, &fp.mul(&b, &c)));
            Mat2::new(a, b, c, d)
        } else {
            let d = rng.gen_range(0..p);
            let c = fp.neg(&fp.inv(&b).unwrap());
            Mat2::new(a, b, c, d)
        };
    }
}

/// Text form: row-major 4-tuple of ring-element strings.
pub fn mat_to_strings<R: ScalarRing>(r: &R, m: &Mat2<R::Elem>) -> [String; 4] {
    [
        r.elem_to_string(&m.a),
        r.elem_to_string(&m.b),
        r.elem_to_string(&m.c),
        r.elem_to_string(&m.d),
    ]
}

pub fn mat_from_strings<R: ScalarRing>(r: &R, s: &[String; 4]) -> Result<Mat2<R::Elem>, RingError> {
    Ok(Mat2::new(
        r.elem_from_str(&s[0])?,
        r.elem_from_str(&s[1])?,
        r.elem_from_str(&s[2])?,
        r.elem_from_str(&s[3])?,
    ))
}
