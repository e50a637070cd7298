//! Cross-module property tests: the per-module invariants at their stated
//! sample sizes, with independent oracles where one is called for.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use traceclass::forge::{build_family, build_tower_with_swaps, choose_params};
use traceclass::mat2::{
    det, eval_flat, eval_word, eval_word_fp, identity, mat_eq, mat_inv, mat_mul, mat_pow, psl_eq,
    random_sl2, trace, WitnessAssignment,
};
use traceclass::primes::{next_prime_constrained, primes_below, PrimeSearchConstraints};
use traceclass::ring::{Fp, ScalarRing};
use traceclass::tracepoly::{random_trace_equal, trace_polynomial};
use traceclass::word::{FlatWord, Gen, SlpWord};

fn random_syllables(rng: &mut ChaCha20Rng, max_len: usize, max_exp: i64) -> Vec<(Gen, i64)> {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| {
            let g = if rng.gen_bool(0.5) { Gen::A } else { Gen::B };
            let e = loop {
                let e = rng.gen_range(-max_exp..=max_exp);
                if e != 0 {
                    break e;
                }
            };
            (g, e)
        })
        .collect()
}

fn random_reduced_word(rng: &mut ChaCha20Rng, max_len: usize) -> FlatWord {
    FlatWord::reduce(random_syllables(rng, max_len, 3))
}

proptest! {
    #[test]
    fn reduce_is_idempotent(seq in proptest::collection::vec((0u8..2, -5i64..=5), 0..60)) {
        let sylls: Vec<(Gen, i64)> = seq
            .into_iter()
            .filter(|&(_, e)| e != 0)
            .map(|(g, e)| (if g == 0 { Gen::A } else { Gen::B }, e))
            .collect();
        let once = FlatWord::reduce(sylls.clone());
        let twice = FlatWord::reduce(once.syllables().iter().copied());
        prop_assert_eq!(&once, &twice);
        // Normal form: adjacent generators distinct, no zero exponents.
        for w in once.syllables().windows(2) {
            prop_assert_ne!(w[0].0, w[1].0);
        }
        prop_assert!(once.syllables().iter().all(|&(_, e)| e != 0));
    }

    #[test]
    fn concat_with_inverse_is_identity(seq in proptest::collection::vec((0u8..2, -5i64..=5), 0..40)) {
        let sylls: Vec<(Gen, i64)> = seq
            .into_iter()
            .filter(|&(_, e)| e != 0)
            .map(|(g, e)| (if g == 0 { Gen::A } else { Gen::B }, e))
            .collect();
        let w = FlatWord::reduce(sylls);
        prop_assert!(w.concat(&w.invert()).is_identity());
        prop_assert_eq!(&w.invert().invert(), &w);
    }

    #[test]
    fn parser_round_trip_flat(seq in proptest::collection::vec((0u8..2, -4i64..=4), 0..30)) {
        let sylls: Vec<(Gen, i64)> = seq
            .into_iter()
            .filter(|&(_, e)| e != 0)
            .map(|(g, e)| (if g == 0 { Gen::A } else { Gen::B }, e))
            .collect();
        let w = FlatWord::reduce(sylls);
        let text = w.to_string();
        prop_assert_eq!(&FlatWord::parse(&text).unwrap(), &w, "text {}", text);
    }
}

#[test]
fn reduce_idempotent_bulk() {
    // The stated scale: 10⁴ random sequences of length ≤ 100.
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    for _ in 0..10_000 {
        let sylls = random_syllables(&mut rng, 100, 4);
        let once = FlatWord::reduce(sylls);
        let twice = FlatWord::reduce(once.syllables().iter().copied());
        assert_eq!(once, twice);
    }
}

#[test]
fn exponent_sum_is_a_homomorphism() {
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    for _ in 0..2_000 {
        let u = random_reduced_word(&mut rng, 30);
        let v = random_reduced_word(&mut rng, 30);
        let sum = u.exponent_sum().add(&v.exponent_sum());
        assert_eq!(u.concat(&v).exponent_sum(), sum);
    }
}

#[test]
fn conjugacy_matches_brute_force_rotations() {
    // 10⁴ random pairs of words of length ≤ 12, exact agreement with the
    // rotation oracle; half the pairs are genuine conjugates.
    fn brute_force(u: &FlatWord, v: &FlatWord) -> bool {
        let (_, cu) = u.cyclic_reduce();
        let (_, cv) = v.cyclic_reduce();
        let lu = cu.letters();
        let lv = cv.letters();
        if lu.len() != lv.len() {
            return false;
        }
        if lu.is_empty() {
            return true;
        }
        (0..lu.len()).any(|r| {
            lu.iter().cycle().skip(r).take(lu.len()).copied().collect::<Vec<_>>() == lv
        })
    }
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let mut conjugate_pairs = 0;
    for round in 0..10_000 {
        let u = random_reduced_word(&mut rng, 6); // ≤ 12 letters
        let v = if round % 2 == 0 {
            let g = random_reduced_word(&mut rng, 3);
            g.concat(&u).concat(&g.invert())
        } else {
            random_reduced_word(&mut rng, 6)
        };
        let fast = u.is_conjugate(&v);
        assert_eq!(fast, brute_force(&u, &v), "u = {u}, v = {v}");
        if fast {
            conjugate_pairs += 1;
        }
    }
    assert!(conjugate_pairs >= 5_000, "the constructed conjugates must register");
}

#[test]
fn expand_substitute_coherence() {
    // expand(substitute(T, u, v)) equals textual substitution + reduction.
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let templates = [
        "a b",
        "a b A",
        "(a^3 B)^2 a (a^3 B) A",
        "a^2 (b a)^3 B^2",
        "(a b A B)^4",
    ];
    for _ in 0..200 {
        let u = random_reduced_word(&mut rng, 4);
        let v = random_reduced_word(&mut rng, 4);
        let (Some(u_slp), Some(v_slp)) = (u.to_slp(), v.to_slp()) else {
            continue;
        };
        for t in templates {
            let template = SlpWord::parse(t).unwrap();
            let substituted = SlpWord::substitute(&template, &u_slp, &v_slp);
            let direct = substituted.expand(100_000).unwrap();
            // Textual route: splice the words into the template body.
            let textual = {
                let u_text = format!("({})", u);
                let v_text = format!("({})", v);
                let spliced: String = t
                    .chars()
                    .map(|c| match c {
                        'a' => u_text.clone(),
                        'A' => format!("{u_text}^-1"),
                        'b' => v_text.clone(),
                        'B' => format!("{v_text}^-1"),
                        other => other.to_string(),
                    })
                    .collect();
                FlatWord::parse_with_limit(&spliced, 100_000).unwrap()
            };
            assert_eq!(direct, textual, "template {t}, u = {u}, v = {v}");
        }
    }
}

#[test]
fn determinant_preserved_at_scale() {
    // 10⁴ random SL2 elements through mul, inv, pow.
    let fp = Fp::new(999_983);
    let mut rng = ChaCha20Rng::seed_from_u64(105);
    for _ in 0..10_000 {
        let m = random_sl2(&mut rng, &fp);
        assert_eq!(det(&fp, &m), 1);
        let n = random_sl2(&mut rng, &fp);
        assert_eq!(det(&fp, &mat_mul(&fp, &m, &n)), 1);
        assert_eq!(det(&fp, &mat_inv(&fp, &m)), 1);
        assert_eq!(det(&fp, &mat_pow(&fp, &m, &BigInt::from(12345))), 1);
        assert_eq!(trace(&fp, &m), trace(&fp, &mat_inv(&fp, &m)));
    }
}

#[test]
fn eval_agrees_between_compressed_and_expanded() {
    let fp = Fp::new(1_000_003);
    let asg = WitnessAssignment::standard(fp);
    let params = choose_params(2, None, 1000).unwrap();
    let family = build_family(&params);
    for w in &family.words {
        let flat = w.expand(10_000_000).unwrap();
        assert!(mat_eq(&fp, &eval_word(w, &asg), &eval_flat(&flat, &asg)));
        assert!(mat_eq(&fp, &eval_word_fp(w, &asg), &eval_flat(&flat, &asg)));
    }
}

#[test]
fn borel_annihilation_below_the_top_level() {
    // Over 𝔽_{p_i} with i < n, every word image in the upper-triangular
    // witness group dies at the power q_n.
    let params = choose_params(3, None, 1000).unwrap();
    let q_n = &params.q[2];
    let mut rng = ChaCha20Rng::seed_from_u64(106);
    for &p in &params.primes[..2] {
        let fp = Fp::new(p);
        let asg = WitnessAssignment::standard(fp);
        for _ in 0..50 {
            let w = random_reduced_word(&mut rng, 10);
            let img = eval_flat(&w, &asg);
            let killed = mat_pow(&fp, &img, &BigInt::from(q_n.clone()));
            assert!(psl_eq(&fp, &killed, &identity(&fp)), "word {w} at p = {p}");
        }
    }
}

#[test]
fn trace_polynomial_fundamental_property_at_scale() {
    // 10³ random words (length ≤ 12): polynomial at (tr A, tr B, tr AB)
    // equals the trace of the evaluated word, over random exact prime
    // fields.
    let mut rng = ChaCha20Rng::seed_from_u64(107);
    let fp = Fp::new((1 << 61) - 1);
    for _ in 0..1_000 {
        let w = random_reduced_word(&mut rng, 6);
        let poly = trace_polynomial(&w).unwrap();
        let a = random_sl2(&mut rng, &fp);
        let b = random_sl2(&mut rng, &fp);
        let s = trace(&fp, &a);
        let t = trace(&fp, &b);
        let u = trace(&fp, &mat_mul(&fp, &a, &b));
        let asg = WitnessAssignment::new(fp, a, b);
        assert_eq!(poly.eval(&fp, &s, &t, &u), trace(&fp, &eval_flat(&w, &asg)), "word {w}");
    }
}

#[test]
fn trace_polynomial_cyclic_and_inverse_invariance() {
    let mut rng = ChaCha20Rng::seed_from_u64(108);
    for _ in 0..300 {
        let u = random_reduced_word(&mut rng, 4);
        let v = random_reduced_word(&mut rng, 4);
        let uv = u.concat(&v);
        let vu = v.concat(&u);
        if uv.syllable_len() > 20 {
            continue;
        }
        assert_eq!(trace_polynomial(&uv).unwrap(), trace_polynomial(&vu).unwrap());
        assert_eq!(trace_polynomial(&uv).unwrap(), trace_polynomial(&uv.invert()).unwrap());
    }
}

#[test]
fn forged_family_never_mismatches() {
    for n in [1u32, 2, 3] {
        let params = choose_params(n, None, 10_000).unwrap();
        let family = build_family(&params);
        let ev = random_trace_equal(&family.words, 20, 7 + n as u64);
        assert!(ev.mismatch.is_none(), "level {n}");
        assert!(ev.distinct_primes() >= 5);
    }
}

#[test]
fn prime_search_postconditions_and_doubling_chain() {
    // Output is prime, beyond the bounds, avoiding all residues; chaining
    // the doubling floor produces p_i > 2·p_{i−1}.
    let mut rng = ChaCha20Rng::seed_from_u64(109);
    for _ in 0..50 {
        let bound = rng.gen_range(2u64..5_000);
        let moduli = [31u64, 67, 101];
        let forbidden: Vec<(BigUint, Vec<BigUint>)> = moduli
            .iter()
            .map(|&m| {
                let r = rng.gen_range(1..m);
                (BigUint::from(m), vec![BigUint::from(r)])
            })
            .collect();
        let c = PrimeSearchConstraints {
            strict_lower_bound: BigUint::from(bound),
            forbidden_residues: forbidden.clone(),
            doubling_floor: None,
        };
        let p = next_prime_constrained(&c);
        assert!(traceclass::primes::is_prime(&p));
        assert!(p > BigUint::from(bound));
        for (m, rs) in &forbidden {
            assert!(!rs.contains(&(&p % m)));
        }
    }
    let mut chain: Vec<BigUint> = vec![BigUint::from(31u32)];
    for _ in 0..8 {
        let c = PrimeSearchConstraints {
            strict_lower_bound: BigUint::zero(),
            forbidden_residues: vec![],
            doubling_floor: Some(chain.last().unwrap().clone()),
        };
        chain.push(next_prime_constrained(&c));
    }
    for w in chain.windows(2) {
        assert!(w[1] > &w[0] * 2u32);
    }
}

#[test]
fn splits_agrees_with_root_counting_small() {
    use traceclass::primes::{brute_force_split_count, splits_completely, NumberFieldSpec};
    let fixtures = ["x^2+1", "x^2-2", "x^3-2", "x^4+x^3+x^2+x+1", "x-1"];
    for text in fixtures {
        let f = NumberFieldSpec::parse(text, true).unwrap();
        for p in primes_below(1_000) {
            let brute = brute_force_split_count(&f, p) == f.degree;
            assert_eq!(splits_completely(&f, p), brute, "f = {text}, p = {p}");
        }
    }
}

#[test]
fn spectrum_multiplicity_lower_bound_from_certificate() {
    use num_complex::Complex64;
    use traceclass::mat2::Mat2;
    use traceclass::ring::ComplexField;
    use traceclass::spectrum::{bucket_lengths, classify, complex_length, ElementClass};

    // Feeding a certified family into the bucketing realizes a bucket of
    // multiplicity ≥ n+1.
    let n = 2;
    let params = choose_params(n, None, 1000).unwrap();
    let family = build_family(&params);
    let tol = 1e-9;
    let ring = ComplexField::new(tol);
    let mut rng = ChaCha20Rng::seed_from_u64(110);
    // Near-unitary conjugates of mild diagonals keep 10⁶-letter products
    // inside f64 range.
    let asg = random_mild_assignment(&mut rng, ring);
    let mut lengths = Vec::new();
    for (idx, w) in family.words.iter().enumerate() {
        let img = eval_word(w, &asg);
        let tr = trace(&ring, &img);
        assert!(tr.is_finite(), "trace overflowed f64");
        assert_eq!(classify(tr, tol), ElementClass::Loxodromic);
        lengths.push((complex_length(tr, tol).unwrap(), format!("w{}", idx + 1)));
    }
    let buckets = bucket_lengths(&lengths, tol);
    assert_eq!(buckets.len(), 1);
    assert!(buckets[0].multiplicity >= n as usize + 1);

    fn random_mild_assignment(
        rng: &mut ChaCha20Rng,
        ring: ComplexField,
    ) -> WitnessAssignment<ComplexField> {
        let mild = |rng: &mut ChaCha20Rng| {
            // unit-determinant conjugator close to a rotation
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (s,c) = theta.sin_cos();
            let eps = Complex64::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            let m = Mat2::new(
                Complex64::new(c, 0.0) + eps,
                Complex64::new(s, 0.0),
                Complex64::new(-s, 0.0),
                Complex64::new(c, 0.0),
            );
            // renormalize det to 1
            let d = det(&ring, &m);
            let scale = 1.0 / d.sqrt();
            Mat2::new(m.a * scale, m.b * scale, m.c * scale, m.d * scale)
        };
        let diag = |rng: &mut ChaCha20Rng| {
            let w = Complex64::new(rng.gen_range(0.001..0.002), rng.gen_range(-0.8..0.8));
            let l = w.exp();
            Mat2::new(l, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), l.inv())
        };
        let conj = |rng: &mut ChaCha20Rng| {
            let m = mild(rng);
            let d = diag(rng);
            let mi = mat_inv(&ring, &m);
            mat_mul(&ring, &mat_mul(&ring, &m, &d), &mi)
        };
        let a = conj(rng);
        let b = conj(rng);
        WitnessAssignment::new(ring, a, b)
    }
}
