//! The hashing-based approximate counter.
//!
//! The counter estimates the number of models of a CNF-XOR formula projected
//! onto a sampling set `S`.  If fewer than the threshold models exist it just
//! enumerates them.  Otherwise it runs `t` independent rounds: each round
//! draws `|S|-1` random XOR constraints, finds the smallest prefix length `m`
//! at which fewer than the threshold models remain, and estimates the count
//! as `2^m` times the number of models at that prefix.  The final answer is
//! the median of the round estimates.
//!
//! Every enumeration that stopped by exhausting the instance (rather than by
//! hitting the threshold) yields an XLRUP refutation of the instance with the
//! found models banned, and everything the checker cannot recompute — the
//! model lists — is recorded in a [`Certificate`].

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::One;
use thiserror::Error;

use crate::certcheck::{CertRound, Certificate};
use crate::formula::{CnfXorFormula, Xor};
use crate::params::{compute_t, compute_thresh, find_median};
use crate::randomness::{RandomBitStream, RandomnessError};
use crate::solver::{bounded_count, SolverConfig, SolverError};
use crate::xlrup::ProofStep;

/// How [`find_m`] locates the smallest prefix of XOR constraints that cuts
/// the model count below the threshold.  Both strategies return the same
/// value because adding an XOR can only shrink the model count; galloping
/// merely probes fewer prefixes on formulas where `m` lands high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FindMStrategy {
    #[default]
    Linear,
    Galloping,
}

/// Knobs for a counting run.
#[derive(Debug, Clone, Default)]
pub struct CounterOptions {
    pub solver: SolverConfig,
    pub find_m: FindMStrategy,
}

#[derive(Debug, Error)]
pub enum CountError {
    #[error("the projection set is empty")]
    EmptyProjection,
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One counting round, before it is folded into the certificate.
#[derive(Debug, Clone)]
pub struct RoundResult {
    /// The chosen number of XOR constraints, or `|S|` if the round failed.
    pub m: u64,
    /// Models found under `m-1` constraints (all of them for a failed round).
    pub list_lo: Vec<crate::formula::Assignment>,
    /// Models found under `m` constraints; `None` for a failed round.
    pub list_hi: Option<Vec<crate::formula::Assignment>>,
    /// The round's count estimate: `2^m * |list_hi|`, or `2^|S|` on failure.
    pub estimate: BigUint,
    /// Refutation of the instance at `m` constraints with `list_hi` banned.
    pub proof: Option<Vec<ProofStep>>,
}

/// The result of a counting run: the estimate, the certificate that backs
/// it, and the unsatisfiability proofs the checker will need.
#[derive(Debug, Clone)]
pub struct CountRun {
    pub count: BigUint,
    pub certificate: Certificate,
    /// Number of random bits consumed, always `t * (|S|-1) * (|S|+1)`.
    pub bits_consumed: u64,
    pub thresh: u64,
    pub t: u64,
    /// Refutation backing the initial enumeration; present only when the run
    /// was exact (fewer than `thresh` models overall).
    pub init_proof: Option<Vec<ProofStep>>,
    /// Per-round refutations; `None` for failed rounds.
    pub round_proofs: Vec<Option<Vec<ProofStep>>>,
}

/// Find the smallest `m` in `1..=|xors|` at which the instance has fewer
/// than `thresh` models, or `None` if even all of `xors` leave `thresh` or
/// more.  The count is monotone in `m`, which is what makes the galloping
/// variant (double, then binary search) agree with the linear scan.
pub fn find_m(
    f: &CnfXorFormula,
    xors: &[Xor],
    thresh: u64,
    strategy: FindMStrategy,
    config: &SolverConfig,
) -> Result<Option<u64>, SolverError> {
    let below = |m: usize| -> Result<bool, SolverError> {
        Ok(bounded_count(f, thresh, &xors[..m], config)?.exhausted)
    };
    match strategy {
        FindMStrategy::Linear => {
            for m in 1..=xors.len() {
                if below(m)? {
                    return Ok(Some(m as u64));
                }
            }
            Ok(None)
        }
        FindMStrategy::Galloping => {
            if xors.is_empty() {
                return Ok(None);
            }
            let n = xors.len();
            let mut lo = 0usize; // largest prefix known to keep >= thresh models
            let mut hi = 1usize;
            loop {
                if below(hi)? {
                    break;
                }
                if hi == n {
                    return Ok(None);
                }
                lo = hi;
                hi = (hi * 2).min(n);
            }
            while lo + 1 < hi {
                let mid = lo + (hi - lo) / 2;
                if below(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(Some(hi as u64))
        }
    }
}

/// Run one counting round over a fixed sequence of `|S|-1` XOR constraints.
///
/// After locating `m`, the enumerations at `m-1` and `m` constraints are
/// rerun from scratch; enumeration is deterministic, so the recorded lists
/// do not depend on which prefixes the search strategy happened to probe.
pub fn approxmc_core(
    f: &CnfXorFormula,
    thresh: u64,
    xors: &[Xor],
    options: &CounterOptions,
) -> Result<RoundResult, SolverError> {
    let s_len = f.proj().len() as u64;
    debug_assert_eq!(xors.len() as u64, s_len.saturating_sub(1));

    match find_m(f, xors, thresh, options.find_m, &options.solver)? {
        Some(m) => {
            let lo = bounded_count(f, thresh, &xors[..(m - 1) as usize], &options.solver)?;
            let hi = bounded_count(f, thresh, &xors[..m as usize], &options.solver)?;
            debug_assert!(!lo.exhausted && hi.exhausted);
            let estimate = (BigUint::one() << m) * BigUint::from(hi.models.len());
            Ok(RoundResult {
                m,
                list_lo: lo.models,
                list_hi: Some(hi.models),
                estimate,
                proof: hi.proof,
            })
        }
        None => {
            // Failed round: every prefix keeps at least thresh models, so
            // the only honest estimate is the trivial upper bound.
            let lo = bounded_count(f, thresh, xors, &options.solver)?;
            debug_assert!(!lo.exhausted);
            Ok(RoundResult {
                m: s_len,
                list_lo: lo.models,
                list_hi: None,
                estimate: BigUint::one() << s_len,
                proof: None,
            })
        }
    }
}

/// Approximately count the models of `f` projected onto its sampling set,
/// with tolerance `epsilon` and failure probability at most `delta`, running
/// at least `min_rounds` rounds.
///
/// All randomness is taken from `bits` in one eager draw of
/// `t * (|S|-1) * (|S|+1)` bits before any solving starts, so the consumed
/// prefix is a function of the parameters alone and the checker can replay
/// it without knowing whether the run turned out to be exact.
pub fn approxmc(
    f: &CnfXorFormula,
    epsilon: &BigRational,
    delta: &BigRational,
    min_rounds: u64,
    bits: &mut RandomBitStream,
    options: &CounterOptions,
) -> Result<CountRun, CountError> {
    let proj = f.proj();
    if proj.is_empty() {
        return Err(CountError::EmptyProjection);
    }
    let thresh = compute_thresh(epsilon);
    let t = compute_t(delta, min_rounds);

    let start = bits.cursor();
    let xors = bits.random_seed_xors(proj, t)?;
    let bits_consumed = bits.cursor() - start;

    let init = bounded_count(f, thresh, &[], &options.solver)?;
    if init.exhausted {
        // Exact run: the formula has fewer than thresh models; the list and
        // its refutation are the whole story.
        let count = BigUint::from(init.models.len());
        return Ok(CountRun {
            count,
            certificate: Certificate { m0: 0, init_models: init.models, rounds: vec![] },
            bits_consumed,
            thresh,
            t,
            init_proof: init.proof,
            round_proofs: vec![],
        });
    }

    let mut rounds = Vec::with_capacity(xors.len());
    let mut round_proofs = Vec::with_capacity(xors.len());
    let mut estimates = Vec::with_capacity(xors.len());
    for round_xors in &xors {
        let r = approxmc_core(f, thresh, round_xors, options)?;
        estimates.push(r.estimate);
        round_proofs.push(r.proof);
        rounds.push(CertRound { m: r.m, list_lo: r.list_lo, list_hi: r.list_hi });
    }
    let count = find_median(&estimates);

    Ok(CountRun {
        count,
        certificate: Certificate { m0: 0, init_models: init.models, rounds },
        bits_consumed,
        thresh,
        t,
        init_proof: None,
        round_proofs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_dimacs_cnfxor;
    use crate::params::parse_decimal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(seed: u64, len: usize) -> RandomBitStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bytes = vec![0u8; len];
        rng.fill(&mut bytes[..]);
        RandomBitStream::new(bytes)
    }

    /// 6 free variables, all 64 assignments are models.
    fn free6() -> CnfXorFormula {
        parse_dimacs_cnfxor("p cnf 6 0\n").unwrap()
    }

    #[test]
    fn exact_run_on_small_formula() {
        let f = parse_dimacs_cnfxor("p cnf 3 1\n1 2 3 0\n").unwrap();
        let eps = parse_decimal("0.8").unwrap();
        let delta = parse_decimal("0.2").unwrap();
        let mut bits = random_bits(1, 64);
        let run = approxmc(&f, &eps, &delta, 0, &mut bits, &CounterOptions::default()).unwrap();
        assert_eq!(run.count, BigUint::from(7u32));
        assert_eq!(run.certificate.init_models.len(), 7);
        assert!(run.certificate.rounds.is_empty());
        assert!(run.init_proof.is_some());
        // t = 9 rounds, |S| = 3: bits are drawn even though none were needed.
        assert_eq!(run.bits_consumed, 9 * 2 * 4);
        assert_eq!(bits.cursor(), 72);
    }

    #[test]
    fn find_m_strategies_agree() {
        let f = free6();
        let eps = parse_decimal("3").unwrap();
        let thresh = compute_thresh(&eps); // 32
        for seed in 0..8 {
            let mut bits = random_bits(seed, 64);
            let xors = bits.random_seed_xors(f.proj(), 1).unwrap();
            let config = SolverConfig::default();
            let lin = find_m(&f, &xors[0], thresh, FindMStrategy::Linear, &config).unwrap();
            let gal = find_m(&f, &xors[0], thresh, FindMStrategy::Galloping, &config).unwrap();
            assert_eq!(lin, gal, "seed {seed}");
        }
    }

    #[test]
    fn strategies_give_identical_runs() {
        let f = free6();
        let eps = parse_decimal("3").unwrap();
        let delta = parse_decimal("0.5").unwrap();
        let mut bits_a = random_bits(7, 64);
        let mut bits_b = random_bits(7, 64);
        let linear = approxmc(&f, &eps, &delta, 3, &mut bits_a, &CounterOptions::default()).unwrap();
        let galloping = approxmc(
            &f,
            &eps,
            &delta,
            3,
            &mut bits_b,
            &CounterOptions { find_m: FindMStrategy::Galloping, ..Default::default() },
        )
        .unwrap();
        assert_eq!(linear.count, galloping.count);
        assert_eq!(linear.certificate, galloping.certificate);
        assert_eq!(bits_a.cursor(), bits_b.cursor());
    }

    #[test]
    fn estimates_are_powers_of_two_times_list_len() {
        let f = free6();
        let eps = parse_decimal("3").unwrap();
        let delta = parse_decimal("0.5").unwrap();
        let mut bits = random_bits(3, 64);
        let run = approxmc(&f, &eps, &delta, 0, &mut bits, &CounterOptions::default()).unwrap();
        assert_eq!(run.certificate.rounds.len(), 1);
        let round = &run.certificate.rounds[0];
        if let Some(hi) = &round.list_hi {
            assert_eq!(
                run.count,
                (BigUint::one() << round.m) * BigUint::from(hi.len())
            );
        } else {
            assert_eq!(run.count, BigUint::one() << 6);
        }
    }

    #[test]
    fn empty_projection_is_an_error() {
        // All variables projected away is impossible through the public
        // parser (a `c ind 0` line yields the default full projection), so
        // build the formula directly.
        let f = CnfXorFormula::new(0, vec![], vec![], None);
        let eps = parse_decimal("0.8").unwrap();
        let delta = parse_decimal("0.2").unwrap();
        let mut bits = random_bits(0, 8);
        let err = approxmc(&f, &eps, &delta, 0, &mut bits, &CounterOptions::default());
        assert!(matches!(err, Err(CountError::EmptyProjection)));
    }

    #[test]
    fn bit_exhaustion_reports_context() {
        let f = free6();
        let eps = parse_decimal("0.8").unwrap();
        let delta = parse_decimal("0.2").unwrap();
        // Budget is 9 * 5 * 7 = 315 bits = 40 bytes; provide fewer.
        let mut bits = random_bits(0, 16);
        let err = approxmc(&f, &eps, &delta, 0, &mut bits, &CounterOptions::default());
        assert!(matches!(err, Err(CountError::Randomness(_))));
        // Failure happens before any solving and leaves the cursor alone.
        assert_eq!(bits.cursor(), 0);
    }
}
