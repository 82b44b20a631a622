//! Brute-force ground truth for testing and evaluation.
//!
//! Everything here enumerates exponentially large spaces and is therefore
//! guarded by hard size limits.  The oracle is a test instrument and the
//! engine behind `exact-count` and `pac-eval`; it is never part of the
//! certified counting path.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::formula::{Assignment, CnfXorFormula, Var};

/// Largest formula (in variables) the exact counter will enumerate.
pub const MAX_ENUM_VARS: u32 = 24;

/// Largest XOR domain the probability oracle will enumerate.
pub const MAX_HASH_VARS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("formula has {num_vars} variables, exact enumeration is limited to {MAX_ENUM_VARS}")]
    TooManyVars { num_vars: u32 },
    #[error("XOR domain has {0} variables, probability enumeration is limited to {MAX_HASH_VARS}")]
    DomainTooLarge(usize),
    #[error("joint probability takes 1 to 3 constraints, got {0}")]
    BadConstraintCount(usize),
    #[error("joint probability requires pairwise distinct assignments on the domain")]
    DuplicateAssignment,
}

/// Counts the models of `f` projected onto `proj`: enumerates every total
/// assignment, keeps the satisfying ones, and counts distinct projections.
pub fn exact_projected_count(f: &CnfXorFormula, proj: &[Var]) -> Result<u64, OracleError> {
    let n = f.num_vars();
    if n > MAX_ENUM_VARS {
        return Err(OracleError::TooManyVars { num_vars: n });
    }
    let mut seen: HashSet<u64> = HashSet::new();
    for mask in 0..1u64 << n {
        let a = Assignment::from_mask(n, mask);
        if f.check_sol(&a) {
            let projected = proj
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &v)| acc | (a.value(v) as u64) << i);
            seen.insert(projected);
        }
    }
    Ok(seen.len() as u64)
}

/// The probability, over a uniformly random XOR constraint on the domain
/// `v` (any of the `2^(|v|+1)` subset/parity combinations), that every
/// listed assignment hashes to its target bit.  Exact rational; used to
/// confirm the 2- and 3-universality of the hash family.
pub fn exact_xor_joint_probability(
    v: &[Var],
    pairs: &[(Assignment, bool)],
) -> Result<BigRational, OracleError> {
    if v.len() > MAX_HASH_VARS {
        return Err(OracleError::DomainTooLarge(v.len()));
    }
    if pairs.is_empty() || pairs.len() > 3 {
        return Err(OracleError::BadConstraintCount(pairs.len()));
    }
    // Distinctness matters only on the domain: restrict before comparing.
    let restricted: Vec<Vec<bool>> = pairs
        .iter()
        .map(|(a, _)| v.iter().map(|&var| a.value(var)).collect())
        .collect();
    for i in 0..restricted.len() {
        for j in i + 1..restricted.len() {
            if restricted[i] == restricted[j] {
                return Err(OracleError::DuplicateAssignment);
            }
        }
    }

    let k = v.len();
    let total = 1u64 << (k + 1);
    let mut hits = 0u64;
    for subset in 0..1u64 << k {
        for rhs in [false, true] {
            let ok = pairs.iter().zip(&restricted).all(|((_, target), values)| {
                let parity = (0..k).filter(|&i| subset >> i & 1 == 1 && values[i]).count() % 2 == 1;
                (parity == rhs) == *target
            });
            if ok {
                hits += 1;
            }
        }
    }
    Ok(BigRational::new(BigInt::from(hits), BigInt::from(total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_dimacs_cnfxor;

    #[test]
    fn empty_formula_counts_full_space() {
        let f = parse_dimacs_cnfxor("p cnf 4 0\n").unwrap();
        assert_eq!(exact_projected_count(&f, f.proj()).unwrap(), 16);
    }

    #[test]
    fn empty_clause_means_zero() {
        let f = parse_dimacs_cnfxor("p cnf 3 1\n0\n").unwrap();
        assert_eq!(exact_projected_count(&f, f.proj()).unwrap(), 0);
    }

    #[test]
    fn projection_collapses_solutions() {
        // x3 free: 8 solutions, 4 distinct projections on {1,2}.
        let f = parse_dimacs_cnfxor("p cnf 3 0\nc ind 1 2 0\n").unwrap();
        assert_eq!(exact_projected_count(&f, f.proj()).unwrap(), 4);
    }

    #[test]
    fn size_guard_trips() {
        let f = parse_dimacs_cnfxor("p cnf 25 0\n").unwrap();
        assert_eq!(
            exact_projected_count(&f, f.proj()),
            Err(OracleError::TooManyVars { num_vars: 25 })
        );
    }

    #[test]
    fn single_constraint_marginal_is_half() {
        let v = [1, 2, 3];
        let w = Assignment::from_values(vec![true, false, true]);
        for target in [false, true] {
            let p = exact_xor_joint_probability(&v, &[(w.clone(), target)]).unwrap();
            assert_eq!(p, BigRational::new(BigInt::from(1), BigInt::from(2)));
        }
    }

    #[test]
    fn joint_probability_guards() {
        let w = Assignment::from_values(vec![true, false]);
        let w2 = Assignment::from_values(vec![false, true]);
        assert!(matches!(
            exact_xor_joint_probability(&[1, 2], &[]),
            Err(OracleError::BadConstraintCount(0))
        ));
        assert!(matches!(
            exact_xor_joint_probability(&[1, 2], &[(w.clone(), true), (w.clone(), false)]),
            Err(OracleError::DuplicateAssignment)
        ));
        assert!(exact_xor_joint_probability(&[1, 2], &[(w, true), (w2, false)]).is_ok());
    }
}
