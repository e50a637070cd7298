//! Complex translation lengths and multiplicity histograms.
//!
//! A determinant-1 matrix with trace `tr` is loxodromic when `tr² ∉ [0, 4]`;
//! its complex length is `ℓ₀ = 2 cosh⁻¹(tr / 2) = ℓ + iθ` with translation
//! part `ℓ ≥ 0` and rotation angle `θ`. The trace is only defined up to sign
//! in PSL₂, but the two signs give the same (ℓ, θ) after θ is normalized
//! into (−π, π], so the sign convention is quotiented away here rather than
//! chosen.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat2::{eval_flat, trace, WitnessAssignment};
use crate::ring::ComplexField;
use crate::word::{FlatWord, Gen};

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("trace {0} is not loxodromic")]
    NotLoxodromic(Complex64),
    #[error("enumeration guard: max_len {0} exceeds 16")]
    LengthGuard(usize),
}

/// Rough conjugacy type of a determinant-1 matrix, from its trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementClass {
    Loxodromic,
    ParabolicOrIdentity,
    Elliptic,
}

/// Loxodromic iff tr² lies outside [0, 4], with `tol` absorbing float noise
/// on the boundary; tr = ±2 is parabolic-or-identity, the rest of [0, 4] is
/// elliptic.
pub fn classify(tr: Complex64, tol: f64) -> ElementClass {
    let sq = tr * tr;
    let in_segment = sq.im.abs() <= tol && sq.re >= -tol && sq.re <= 4.0 + tol;
    if !in_segment {
        return ElementClass::Loxodromic;
    }
    if (sq - Complex64::new(4.0, 0.0)).norm() <= tol {
        ElementClass::ParabolicOrIdentity
    } else {
        ElementClass::Elliptic
    }
}

/// Complex length `(ℓ, θ)`: ℓ ≥ 0 and θ ∈ (−π, π], with θ = π kept at π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexLength {
    pub ell: f64,
    pub theta: f64,
}

impl ComplexLength {
    /// Distance with the rotation angle measured circularly.
    pub fn close_to(&self, other: &ComplexLength, tol: f64) -> bool {
        let dt = (self.theta - other.theta).abs();
        let circ = dt.min(2.0 * std::f64::consts::PI - dt);
        (self.ell - other.ell).abs() <= tol && circ <= tol
    }
}

/// `ℓ₀ = 2 cosh⁻¹(tr/2)`, principal branch, θ normalized into (−π, π].
pub fn complex_length(tr: Complex64, tol: f64) -> Result<ComplexLength, SpectrumError> {
    if classify(tr, tol) != ElementClass::Loxodromic {
        return Err(SpectrumError::NotLoxodromic(tr));
    }
    let half = (tr / 2.0).acosh();
    let ell = 2.0 * half.re;
    let mut theta = 2.0 * half.im;
    let pi = std::f64::consts::PI;
    // acosh has Re ≥ 0; doubling leaves θ in (−2π, 2π], one wrap suffices.
    if theta > pi {
        theta -= 2.0 * pi;
    } else if theta <= -pi {
        theta += 2.0 * pi;
    }
    debug_assert!(ell >= 0.0);
    Ok(ComplexLength { ell, theta })
}

/// One histogram bucket: a representative length, how many classes share
/// it, and their word texts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub ell: f64,
    pub theta: f64,
    pub multiplicity: usize,
    pub representatives: Vec<String>,
}

/// Groups `(length, label)` pairs into buckets of matching ℓ and θ (both
/// within `tol`), sorted by ℓ. Deterministic: pairs are sorted before the
/// greedy sweep and the first member of a bucket is its representative.
pub fn bucket_lengths(lengths: &[(ComplexLength, String)], tol: f64) -> Vec<SpectrumEntry> {
    let mut sorted: Vec<&(ComplexLength, String)> = lengths.iter().collect();
    sorted.sort_by(|x, y| {
        (x.0.ell, x.0.theta, &x.1)
            .partial_cmp(&(y.0.ell, y.0.theta, &y.1))
            .expect("lengths are finite")
    });
    let mut out: Vec<SpectrumEntry> = Vec::new();
    for (len, label) in sorted {
        let slot = out.iter_mut().rev().take_while(|e| (e.ell - len.ell).abs() <= tol).find(|e| {
            ComplexLength { ell: e.ell, theta: e.theta }.close_to(len, tol)
        });
        match slot {
            Some(e) => {
                e.multiplicity += 1;
                e.representatives.push(label.clone());
            }
            None => out.push(SpectrumEntry {
                ell: len.ell,
                theta: len.theta,
                multiplicity: 1,
                representatives: vec![label.clone()],
            }),
        }
    }
    out
}

/// Enumerates cyclically reduced words up to `max_len` letters, one per
/// free-conjugacy class (merging the classes of w and w⁻¹ unless
/// `keep_inverses`), and buckets the complex lengths of the loxodromic
/// images under the assignment.
pub fn enumerate_spectrum(
    asg: &WitnessAssignment<ComplexField>,
    max_len: usize,
    tol: f64,
    keep_inverses: bool,
) -> Result<Vec<SpectrumEntry>, SpectrumError> {
    if max_len > 16 {
        return Err(SpectrumError::LengthGuard(max_len));
    }
    let mut lengths: Vec<(ComplexLength, String)> = Vec::new();
    let mut word: Vec<(Gen, bool)> = Vec::new();
    let letters = [(Gen::A, true), (Gen::A, false), (Gen::B, true), (Gen::B, false)];
    fn inverse_of(x: (Gen, bool), y: (Gen, bool)) -> bool {
        x.0 == y.0 && x.1 != y.1
    }
    fn visit(
        word: &mut Vec<(Gen, bool)>,
        target: usize,
        letters: &[(Gen, bool); 4],
        asg: &WitnessAssignment<ComplexField>,
        tol: f64,
        keep_inverses: bool,
        lengths: &mut Vec<(ComplexLength, String)>,
    ) {
        if word.len() == target {
            if inverse_of(word[0], word[word.len() - 1]) && word.len() > 1 {
                return; // not cyclically reduced
            }
            let flat = FlatWord::reduce(word.iter().map(|&(g, s)| (g, if s { 1 } else { -1 })));
            // One representative per class: the canonical rotation is the
            // word itself.
            if flat.canonical_cyclic_form(!keep_inverses)
                != word.iter().copied().collect::<Vec<_>>()
            {
                return;
            }
            let tr = trace(&asg.ring, &eval_flat(&flat, asg));
            if let Ok(len) = complex_length(tr, tol) {
                lengths.push((len, flat.to_string()));
            }
            return;
        }
        for &l in letters {
            if let Some(&last) = word.last() {
                if inverse_of(last, l) {
                    continue;
                }
            }
            word.push(l);
            visit(word, target, letters, asg, tol, keep_inverses, lengths);
            word.pop();
        }
    }
    for target in 1..=max_len {
        visit(&mut word, target, &letters, asg, tol, keep_inverses, &mut lengths);
    }
    Ok(bucket_lengths(&lengths, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat2::Mat2;

    #[test]
    fn classification_examples() {
        let tol = 1e-9;
        assert_eq!(classify(Complex64::new(3.0, 0.0), tol), ElementClass::Loxodromic);
        assert_eq!(classify(Complex64::new(2.0, 0.0), tol), ElementClass::ParabolicOrIdentity);
        assert_eq!(classify(Complex64::new(-2.0, 0.0), tol), ElementClass::ParabolicOrIdentity);
        assert_eq!(classify(Complex64::new(1.0, 0.0), tol), ElementClass::Elliptic);
        assert_eq!(classify(Complex64::new(0.0, 0.0), tol), ElementClass::Elliptic);
        assert_eq!(classify(Complex64::new(0.0, 2.0), tol), ElementClass::Loxodromic);
    }

    #[test]
    fn length_closed_forms() {
        let tol = 1e-9;
        // tr = 3: ℓ = 2 ln((3 + √5)/2), θ = 0.
        let l = complex_length(Complex64::new(3.0, 0.0), tol).unwrap();
        let expected = 2.0 * ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert!((l.ell - expected).abs() < 1e-12);
        assert!((l.ell - 1.9248473002).abs() < 1e-9);
        assert!(l.theta.abs() < 1e-12);
        // tr = 2i: ℓ = 2 ln(1 + √2), θ = π.
        let l = complex_length(Complex64::new(0.0, 2.0), tol).unwrap();
        let expected = 2.0 * (1.0 + 2.0f64.sqrt()).ln();
        assert!((l.ell - expected).abs() < 1e-12);
        assert!((l.ell - 1.7627471740).abs() < 1e-9);
        assert!((l.theta.abs() - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(
            complex_length(Complex64::new(1.0, 0.0), tol),
            Err(SpectrumError::NotLoxodromic(Complex64::new(1.0, 0.0)))
        );
    }

    #[test]
    fn sign_quotient_is_exact() {
        let tol = 1e-9;
        for (re, im) in [(3.0, 0.5), (-2.7, 1.3), (0.1, 2.2), (5.0, -0.4)] {
            let tr = Complex64::new(re, im);
            let a = complex_length(tr, tol).unwrap();
            let b = complex_length(-tr, tol).unwrap();
            assert!((a.ell - b.ell).abs() < 1e-12, "tr = {tr}");
            assert!(a.close_to(&b, 1e-12), "tr = {tr}");
            // Conjugate trace flips θ only.
            let c = complex_length(tr.conj(), tol).unwrap();
            assert!((a.ell - c.ell).abs() < 1e-12);
            assert!((a.theta + c.theta).abs() < 1e-12 || (a.theta - c.theta).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_reproduces_trace() {
        let tol = 1e-9;
        let mut checked = 0;
        for i in 0..40 {
            for j in 0..40 {
                let tr = Complex64::new(-6.0 + 0.31 * i as f64, -6.0 + 0.31 * j as f64);
                if classify(tr, tol) != ElementClass::Loxodromic {
                    continue;
                }
                let l = complex_length(tr, tol).unwrap();
                let back = 2.0 * (Complex64::new(l.ell / 2.0, l.theta / 2.0)).cosh();
                let err = (back - tr).norm().min((back + tr).norm());
                assert!(err < 1e-9, "tr = {tr}, err = {err}");
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    fn loxodromic_assignment() -> WitnessAssignment<ComplexField> {
        let ring = ComplexField::new(1e-9);
        // diag-ish loxodromics conjugated apart so that words stay generic
        let a = Mat2::new(
            Complex64::new(1.9, 0.3),
            Complex64::new(0.2, 0.1),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.9, 0.3).inv(),
        );
        let b = Mat2::new(
            Complex64::new(1.4, -0.2),
            Complex64::new(0.0, 0.0),
            Complex64::new(-0.3, 0.25),
            Complex64::new(1.4, -0.2).inv(),
        );
        WitnessAssignment::new(ring, a, b)
    }

    #[test]
    fn enumeration_at_length_one() {
        let asg = loxodromic_assignment();
        let entries = enumerate_spectrum(&asg, 1, 1e-9, false).unwrap();
        // Only the classes of a and b (inverses merged).
        assert_eq!(entries.iter().map(|e| e.multiplicity).sum::<usize>(), 2);
        let mut reps: Vec<_> =
            entries.iter().flat_map(|e| e.representatives.iter().cloned()).collect();
        reps.sort();
        assert_eq!(reps, vec!["a", "b"]);
        // Keeping inverses distinct doubles the classes but not the lengths.
        let entries = enumerate_spectrum(&asg, 1, 1e-9, true).unwrap();
        assert_eq!(entries.iter().map(|e| e.multiplicity).sum::<usize>(), 4);
    }

    #[test]
    fn enumeration_matches_all_pairs_oracle() {
        let asg = loxodromic_assignment();
        let tol = 1e-9;
        let entries = enumerate_spectrum(&asg, 4, tol, false).unwrap();
        // Re-derive lengths per representative and compare bucketing against
        // a brute-force all-pairs grouping.
        let mut lengths: Vec<(ComplexLength, String)> = Vec::new();
        for e in &entries {
            for rep in &e.representatives {
                let w = FlatWord::parse(rep).unwrap();
                let tr = trace(&asg.ring, &eval_flat(&w, &asg));
                lengths.push((complex_length(tr, tol).unwrap(), rep.clone()));
            }
        }
        for e in &entries {
            let rep = ComplexLength { ell: e.ell, theta: e.theta };
            let brute = lengths.iter().filter(|(l, _)| l.close_to(&rep, tol)).count();
            assert_eq!(brute, e.multiplicity, "bucket at ell = {}", e.ell);
        }
        // Entries are sorted by ell.
        for pair in entries.windows(2) {
            assert!(pair[0].ell <= pair[1].ell);
        }
        assert!(enumerate_spectrum(&asg, 17, tol, false).is_err());
    }
}
