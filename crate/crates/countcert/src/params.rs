//! PAC parameter computations in exact rational arithmetic.
//!
//! Floating point is deliberately avoided here: the enumeration threshold
//! and the round count feed directly into the soundness argument of both the
//! counter and the certificate checker, and the two sides must agree bit for
//! bit.  Tolerances are derived with `num_rational::BigRational` throughout.

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("bad decimal literal {0:?}")]
    BadDecimal(String),
}

/// Parses a non-negative decimal literal (`"0.8"`, `"1"`, `".25"`) into an
/// exact rational.  Signs and exponents are rejected: tolerance parameters
/// are plain decimals on the command line.
pub fn parse_decimal(s: &str) -> Result<BigRational, ParamError> {
    let bad = || ParamError::BadDecimal(s.to_string());
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().map_err(|_| bad())?;
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok(BigRational::new(numer, denom))
}

/// The enumeration threshold for tolerance `epsilon`:
/// `1 + ceil(9.84 * (1 + eps/(1 + eps)) * (1 + 1/eps)^2)`, evaluated in
/// exact rationals.  For `epsilon = 0.8` this is 73.
pub fn compute_thresh(epsilon: &BigRational) -> u64 {
    assert!(epsilon.is_positive(), "epsilon must be positive");
    let one = BigRational::one();
    let coeff = BigRational::new(BigInt::from(984), BigInt::from(100));
    let a = &one + epsilon / (&one + epsilon);
    let b = &one + epsilon.recip();
    let expr = coeff * a * (&b * &b);
    let ceiled = expr.ceil().to_integer();
    let thresh = ceiled + BigInt::one();
    u64::try_from(&thresh).expect("threshold fits in u64")
}

/// The exact upper binomial tail `sum_{i=k..=t} C(t,i) p^i (1-p)^(t-i)`.
pub fn binomial_tail(t: u64, k: u64, p: &BigRational) -> BigRational {
    let q = BigRational::one() - p;
    let mut sum = BigRational::zero();
    for i in k..=t {
        let c = binomial(BigInt::from(t), BigInt::from(i));
        let term = BigRational::from(c)
            * pow_rational(p, i)
            * pow_rational(&q, t - i);
        sum += term;
    }
    sum
}

fn pow_rational(r: &BigRational, e: u64) -> BigRational {
    let mut acc = BigRational::one();
    let mut base = r.clone();
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            acc *= &base;
        }
        let sq = &base * &base;
        base = sq;
        e >>= 1;
    }
    acc
}

/// The number of counting rounds for confidence `delta`: the smallest odd
/// `t >= min_rounds` such that a majority vote of rounds that each fail with
/// probability 9/25 reaches confidence `delta`, i.e.
/// `binomial_tail(t, ceil(t/2), 9/25) <= delta`.
pub fn compute_t(delta: &BigRational, min_rounds: u64) -> u64 {
    assert!(
        delta.is_positive() && delta < &BigRational::one(),
        "delta must lie in (0, 1)"
    );
    let p = BigRational::new(BigInt::from(9), BigInt::from(25));
    let mut t = min_rounds.max(1);
    if t % 2 == 0 {
        t += 1;
    }
    loop {
        let majority = t / 2 + 1; // ceil(t/2) for odd t
        if binomial_tail(t, majority, &p) <= *delta {
            return t;
        }
        t += 2;
    }
}

/// The upper median: element at index `floor(n/2)` of the sorted values.
/// Panics on an empty slice.
pub fn find_median<T: Ord + Clone>(values: &[T]) -> T {
    assert!(!values.is_empty(), "median of an empty list");
    let mut sorted = values.to_vec();
    sorted.sort();
    sorted[sorted.len() / 2].clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> BigRational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn thresh_reference_values() {
        assert_eq!(compute_thresh(&rat("0.8")), 73);
        assert_eq!(compute_thresh(&rat("1")), 61);
        assert_eq!(compute_thresh(&rat("3")), 32);
    }

    #[test]
    fn rounds_reference_values() {
        assert_eq!(compute_t(&rat("0.2"), 1), 9);
        assert_eq!(compute_t(&rat("0.5"), 1), 1);
        assert_eq!(compute_t(&rat("0.25"), 1), 7);
    }

    #[test]
    fn rounds_respect_minimum_and_parity() {
        // Forcing more rounds than the confidence needs still yields an odd t.
        assert_eq!(compute_t(&rat("0.5"), 4), 5);
        assert_eq!(compute_t(&rat("0.2"), 10), 11);
    }

    #[test]
    fn tail_is_exact() {
        let p = BigRational::new(BigInt::from(9), BigInt::from(25));
        let tail = binomial_tail(5, 3, &p);
        let expect = BigRational::new(BigInt::from(2450169), BigInt::from(9765625));
        assert_eq!(tail, expect);
    }

    #[test]
    fn median_is_upper() {
        assert_eq!(find_median(&[204u64, 128, 256]), 204);
        assert_eq!(find_median(&[7u64]), 7);
        assert_eq!(find_median(&[1u64, 2, 3, 4]), 3);
    }

    #[test]
    fn decimals_parse_exactly() {
        assert_eq!(rat("0.8"), BigRational::new(BigInt::from(4), BigInt::from(5)));
        assert_eq!(rat(".25"), BigRational::new(BigInt::from(1), BigInt::from(4)));
        assert_eq!(rat("2"), BigRational::from(BigInt::from(2)));
        assert!(parse_decimal("1.2.3").is_err());
        assert!(parse_decimal("-1").is_err());
        assert!(parse_decimal("").is_err());
        assert!(parse_decimal("1e-3").is_err());
    }
}
