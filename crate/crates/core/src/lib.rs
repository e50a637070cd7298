//! Word families of equal trace but pairwise distinct conjugacy classes in
//! the rank-2 free group, together with the machinery to certify both facts.
//!
//! The library is organized around a single pipeline:
//!
//! * [`word`] — freely reduced words and compressed (straight-line program)
//!   words on the two generators `a`, `b`;
//! * [`ring`] / [`mat2`] — exact 2×2 determinant-1 matrices over pluggable
//!   scalar rings (prime fields, dyadic rationals, rationals, complex floats)
//!   and evaluation of compressed words into them;
//! * [`tracepoly`] — Fricke trace polynomials in `s = tr x`, `t = tr y`,
//!   `u = tr xy`, plus randomized trace-equality testing for families whose
//!   symbolic polynomials are out of reach;
//! * [`primes`] — primality, constrained prime search and completely-split
//!   testing with an empirical density estimator;
//! * [`forge`] — the recursive word construction, parameter selection, the
//!   distinguishing image table, and self-contained certificates with an
//!   independent re-checker;
//! * [`spectrum`] — complex translation lengths and multiplicity histograms
//!   for matrix representations.
//!
//! Everything is deterministic given explicit seeds; all randomized evidence
//! records the seed that produced it.

pub mod forge;
pub mod mat2;
pub mod primes;
pub mod ring;
pub mod spectrum;
pub mod tracepoly;
pub mod word;

pub use forge::{
    certify, verify_certificate, Certificate, ForgeError, ForgeOptions, ForgeParams, VerifyError,
    WordFamily,
};
pub use mat2::{Mat2, WitnessAssignment};
pub use ring::{ComplexField, DyadicRing, Fp, FpBig, Rationals, ScalarRing};
pub use spectrum::{classify, complex_length, ComplexLength, ElementClass, SpectrumEntry};
pub use tracepoly::{TraceEqualityEvidence, TracePoly};
pub use word::{ExponentVector, FlatWord, Gen, SlpNode, SlpWord, WordError};
