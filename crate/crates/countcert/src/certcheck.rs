//! Independent checking of counter certificates.
//!
//! A certificate records everything a run of the approximate counter did that
//! cannot be recomputed from the formula and the random bits alone: the model
//! lists the counter enumerated.  The checker replays the run — it re-derives
//! the threshold and round count from `(epsilon, delta)`, re-samples the same
//! XOR constraints from the same bit stream, and then validates each model
//! list against the reconstructed instances.  Upper bounds ("the enumeration
//! stopped because the instance ran out of models") cannot be checked by
//! inspection; for those the checker consults an [`UnsatOracle`] which must
//! back every unsatisfiability claim with an XLRUP proof that our own proof
//! checker accepts.

use std::collections::HashMap;
use std::fmt;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::Command;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;
use thiserror::Error;

use crate::formula::{print_dimacs_cnfxor, Assignment, CnfXorFormula, Xor};
use crate::params::{compute_t, compute_thresh, find_median};
use crate::randomness::{RandomBitStream, RandomnessError};
use crate::solver::{solve, SolverConfig, SolverError, SolverResult};
use crate::xlrup::{check_proof, parse_xlrup, ProofStep};

/// One round of the certificate: the value of `m` the counter settled on and
/// the model lists backing it.  `list_hi` is absent exactly when the round
/// failed (`m` equals the projection size), in which case `list_lo` holds the
/// models found under all sampled XORs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertRound {
    pub m: u64,
    pub list_lo: Vec<Assignment>,
    pub list_hi: Option<Vec<Assignment>>,
}

/// A parsed certificate: the initial hash count (always 0), the models found
/// before any XOR was added, and one [`CertRound`] per counting round.  An
/// exact run (the initial enumeration exhausted the formula) has no rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub m0: u64,
    pub init_models: Vec<Assignment>,
    pub rounds: Vec<CertRound>,
}

/// Certificate text that does not match the grammar.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("certificate line {line}: {msg}")]
pub struct CertParseError {
    pub line: usize,
    pub msg: String,
}

struct CertLines<'a> {
    /// `(1-based line number, trimmed text)` for every non-blank line.
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> CertLines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        CertLines { lines, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn peek_second(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos + 1).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let l = self.peek();
        if l.is_some() {
            self.pos += 1;
        }
        l
    }

    fn last_line_no(&self) -> usize {
        self.lines.last().map_or(0, |(n, _)| *n)
    }
}

fn parse_single_u64(line: &str) -> Option<u64> {
    let mut toks = line.split_whitespace();
    let first = toks.next()?;
    if toks.next().is_some() {
        return None;
    }
    first.parse().ok()
}

fn is_single_int(line: &str) -> bool {
    parse_single_u64(line).is_some()
}

/// Parse a certificate over a formula with `num_vars` variables.  Every
/// solution line must assign all `num_vars` variables; counts must match the
/// number of lines that follow them; nothing may trail the last round.
pub fn parse_certificate(text: &str, num_vars: u32) -> Result<Certificate, CertParseError> {
    let mut lines = CertLines::new(text);

    let m0 = read_count(&mut lines, "the initial hash count")?;
    let init_models = read_list(&mut lines, num_vars, "the initial model list")?;

    let mut rounds = Vec::new();
    while lines.peek().is_some() {
        let m = read_count(&mut lines, "a round's hash count")?;
        let list_lo = read_list(&mut lines, num_vars, "a round's first model list")?;

        // After the first list the next line is either the second list's
        // model count or the next round's hash count (the round failed and
        // has no second list).  Both are bare integers; a nonzero count is
        // followed by solution lines (more than one token), a hash count by
        // another bare integer, which tells them apart.
        let list_hi = match lines.peek() {
            None => None,
            Some((n, l)) => {
                let val = parse_single_u64(l).ok_or_else(|| CertParseError {
                    line: n,
                    msg: format!("expected a model count or a hash count, got `{l}`"),
                })?;
                let is_hi_count = val == 0
                    || matches!(lines.peek_second(), Some((_, l2)) if !is_single_int(l2));
                if is_hi_count {
                    Some(read_list(&mut lines, num_vars, "a round's second model list")?)
                } else {
                    None
                }
            }
        };
        rounds.push(CertRound { m, list_lo, list_hi });
    }

    Ok(Certificate { m0, init_models, rounds })
}

fn read_count(lines: &mut CertLines, what: &str) -> Result<u64, CertParseError> {
    match lines.next() {
        None => Err(CertParseError {
            line: lines.last_line_no() + 1,
            msg: format!("certificate ends where {what} was expected"),
        }),
        Some((n, l)) => parse_single_u64(l).ok_or_else(|| CertParseError {
            line: n,
            msg: format!("expected {what} (a single non-negative integer), got `{l}`"),
        }),
    }
}

fn read_list(
    lines: &mut CertLines,
    num_vars: u32,
    what: &str,
) -> Result<Vec<Assignment>, CertParseError> {
    let count = read_count(lines, &format!("the model count of {what}"))?;
    let mut models = Vec::new();
    for i in 0..count {
        let (n, l) = lines.next().ok_or_else(|| CertParseError {
            line: lines.last_line_no() + 1,
            msg: format!(
                "{what} declares {count} models but ends after {i}",
            ),
        })?;
        let a = Assignment::parse_dimacs_line(l, num_vars).map_err(|msg| CertParseError {
            line: n,
            msg: format!("bad solution line in {what}: {msg}"),
        })?;
        models.push(a);
    }
    Ok(models)
}

/// Render a certificate in the exact form the counter emits: the initial
/// hash count, then each model list as its length followed by one
/// `literal... 0` line per model.
pub fn print_certificate(cert: &Certificate) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}\n", cert.m0));
    print_list(&mut out, &cert.init_models);
    for round in &cert.rounds {
        out.push_str(&format!("{}\n", round.m));
        print_list(&mut out, &round.list_lo);
        if let Some(hi) = &round.list_hi {
            print_list(&mut out, hi);
        }
    }
    out
}

fn print_list(out: &mut String, models: &[Assignment]) {
    out.push_str(&format!("{}\n", models.len()));
    for m in models {
        out.push_str(&m.dimacs_line());
        out.push('\n');
    }
}

/// Which unsatisfiability claim of a run a proof backs: the initial
/// enumeration or a specific (zero-based) round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProofKey {
    Init,
    Round(usize),
}

impl ProofKey {
    /// The sidecar file name component for this claim: `init` or `round<r>`
    /// with `r` counted from 1.
    pub fn file_suffix(&self) -> String {
        match self {
            ProofKey::Init => "init".to_string(),
            ProofKey::Round(i) => format!("round{}", i + 1),
        }
    }
}

/// Sidecar proof file name for a certificate stem: `<base>.init.xlrup` or
/// `<base>.round<r>.xlrup`.
pub fn sidecar_name(base: &str, key: ProofKey) -> String {
    format!("{base}.{}.xlrup", key.file_suffix())
}

/// How the checker discharges "this instance is unsatisfiable" obligations.
/// Every strategy ends the same way: an XLRUP proof is checked against the
/// exact instance the checker reconstructed, and only a verified proof
/// establishes the claim.
pub enum UnsatOracle {
    /// Solve the instance with the built-in solver and check the proof it
    /// produces.
    Embedded { config: SolverConfig },
    /// Read the proof from `<dir>/<base>.<claim>.xlrup`, as written by the
    /// counter's `--proof-dir` option.
    ProofDir { dir: PathBuf, base: String },
    /// Run `command <instance.cnf> <proof.xlrup>`; the command must write an
    /// XLRUP refutation of the instance to the second path and exit 0.
    External { command: Vec<String> },
    /// Proofs handed over in memory, keyed by claim.  Used by tests and by
    /// evaluation harnesses that recheck a counter run without touching disk.
    Provided { proofs: HashMap<ProofKey, Vec<ProofStep>> },
}

/// Why an unsatisfiability claim could not be established.  `Rejected` means
/// the evidence was examined and found wanting (the certificate is refused);
/// `Resource` means the checker could not finish examining it (solver budget,
/// missing external tool).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleFailure {
    #[error("{0}")]
    Rejected(String),
    #[error("{0}")]
    Resource(String),
}

impl UnsatOracle {
    /// Establish that `instance` is unsatisfiable, or say why that failed.
    /// `key` identifies which claim of the run this is, so that file- and
    /// map-backed strategies can find the matching proof.
    pub fn establish_unsat(
        &self,
        instance: &CnfXorFormula,
        key: ProofKey,
    ) -> Result<(), OracleFailure> {
        let steps = match self {
            UnsatOracle::Embedded { config } => match solve(instance, config) {
                Ok(SolverResult::Sat(_)) => {
                    return Err(OracleFailure::Rejected(
                        "the instance is satisfiable".to_string(),
                    ))
                }
                Ok(SolverResult::Unsat(steps)) => steps,
                Err(SolverError::BudgetExceeded(n)) => {
                    return Err(OracleFailure::Resource(format!(
                        "solver conflict budget ({n}) exhausted"
                    )))
                }
                Err(e) => return Err(OracleFailure::Resource(e.to_string())),
            },
            UnsatOracle::ProofDir { dir, base } => {
                let path = dir.join(sidecar_name(base, key));
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    OracleFailure::Rejected(format!(
                        "cannot read proof file {}: {e}",
                        path.display()
                    ))
                })?;
                parse_xlrup(&text)
                    .map_err(|e| OracleFailure::Rejected(format!("{}: {e}", path.display())))?
            }
            UnsatOracle::External { command } => run_external(command, instance)?,
            UnsatOracle::Provided { proofs } => proofs
                .get(&key)
                .cloned()
                .ok_or_else(|| {
                    OracleFailure::Rejected(format!(
                        "no proof provided for the {} claim",
                        key.file_suffix()
                    ))
                })?,
        };
        let outcome = check_proof(instance, &steps);
        if outcome.is_verified() {
            Ok(())
        } else {
            Err(OracleFailure::Rejected(format!("proof not verified: {outcome}")))
        }
    }
}

fn run_external(
    command: &[String],
    instance: &CnfXorFormula,
) -> Result<Vec<ProofStep>, OracleFailure> {
    let (program, args) = command.split_first().ok_or_else(|| {
        OracleFailure::Resource("external unsat command is empty".to_string())
    })?;
    let dir = tempfile::tempdir()
        .map_err(|e| OracleFailure::Resource(format!("cannot create temp dir: {e}")))?;
    let cnf_path = dir.path().join("instance.cnf");
    let proof_path = dir.path().join("instance.xlrup");
    let mut cnf = std::fs::File::create(&cnf_path)
        .map_err(|e| OracleFailure::Resource(format!("cannot write instance: {e}")))?;
    cnf.write_all(print_dimacs_cnfxor(instance).as_bytes())
        .map_err(|e| OracleFailure::Resource(format!("cannot write instance: {e}")))?;
    drop(cnf);

    let status = Command::new(program)
        .args(args)
        .arg(&cnf_path)
        .arg(&proof_path)
        .status()
        .map_err(|e| OracleFailure::Resource(format!("cannot run `{program}`: {e}")))?;
    if !status.success() {
        return Err(OracleFailure::Rejected(format!(
            "external unsat command exited with {status}"
        )));
    }
    let text = std::fs::read_to_string(&proof_path).map_err(|e| {
        OracleFailure::Rejected(format!("external command produced no readable proof: {e}"))
    })?;
    parse_xlrup(&text).map_err(|e| OracleFailure::Rejected(e.to_string()))
}

/// Which model list a check failure is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListName {
    Init,
    Lo,
    Hi,
}

impl fmt::Display for ListName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ListName::Init => write!(f, "the initial model list"),
            ListName::Lo => write!(f, "the first model list (m-1 XORs)"),
            ListName::Hi => write!(f, "the second model list (m XORs)"),
        }
    }
}

/// A single violated certificate condition.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoundFailure {
    #[error("hash count m = {m} is outside 1..={max}")]
    MOutOfRange { m: u64, max: u64 },
    #[error("a failed round (m = {0}) must not carry a second model list")]
    UnexpectedListHi(u64),
    #[error("a round with m below the projection size needs a second model list")]
    MissingListHi,
    #[error("{list} has {found} models, fewer than the threshold {thresh}")]
    TooFew { list: ListName, found: usize, thresh: u64 },
    #[error("{list} has {found} models, not below the threshold {thresh}")]
    TooMany { list: ListName, found: usize, thresh: u64 },
    #[error("{list}, model {index}: does not satisfy the instance")]
    BadModel { list: ListName, index: usize },
    #[error("{list}, models {first} and {second}: identical after projection")]
    ProjectedDuplicate { list: ListName, first: usize, second: usize },
    #[error("the banned instance was not certified unsatisfiable: {0}")]
    UnsatNotEstablished(String),
}

/// Why a certificate was not accepted.
#[derive(Debug, Error)]
pub enum CertError {
    #[error("initial hash count is {0}, expected 0")]
    BadM0(u64),
    #[error("the projection set is empty")]
    EmptyProjection,
    #[error("certificate has {found} rounds, expected {expected}")]
    RoundCount { expected: usize, found: usize },
    #[error("initial enumeration: {0}")]
    Init(RoundFailure),
    #[error("round {round}: {failure}")]
    Round { round: usize, failure: RoundFailure },
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
    #[error("{0}")]
    Resource(String),
}

/// Check that every model in `models[..limit]` satisfies `instance` and that
/// no two agree on the projection set.
fn validate_list(
    instance: &CnfXorFormula,
    models: &[Assignment],
    limit: usize,
    list: ListName,
) -> Result<(), RoundFailure> {
    let models = &models[..limit.min(models.len())];
    for (i, m) in models.iter().enumerate() {
        if !instance.check_sol(m) {
            return Err(RoundFailure::BadModel { list, index: i });
        }
    }
    let mut seen = HashMap::new();
    for (i, m) in models.iter().enumerate() {
        if let Some(&first) = seen.get(&instance.project(m)) {
            return Err(RoundFailure::ProjectedDuplicate { list, first, second: i });
        }
        seen.insert(instance.project(m), i);
    }
    Ok(())
}

/// Ban every model in `models` from `instance`, in order.
fn ban_all(instance: &CnfXorFormula, models: &[Assignment]) -> CnfXorFormula {
    models
        .iter()
        .fold(instance.clone(), |acc, m| acc.ban_sol(m))
}

/// Check one certificate round against the XOR constraints sampled for it
/// and return the round's count estimate.
///
/// Three conditions are enforced: the hash count is in range; the first list
/// proves the count under `m-1` XORs was still at least the threshold; the
/// second list plus an unsatisfiability certificate proves the count under
/// `m` XORs is exactly the list's length.  A failed round (`m` equal to the
/// projection size) instead shows that even all sampled XORs leave at least
/// the threshold, and contributes the trivial estimate `2^|proj|`.
pub fn check_round(
    f: &CnfXorFormula,
    thresh: u64,
    round_xors: &[Xor],
    round: &CertRound,
    oracle: &UnsatOracle,
    index: usize,
) -> Result<BigUint, CertError> {
    let fail = |failure: RoundFailure| CertError::Round { round: index + 1, failure };
    let s_len = f.proj().len() as u64;
    debug_assert_eq!(round_xors.len() as u64, s_len.saturating_sub(1));

    if round.m == 0 || round.m > s_len {
        return Err(fail(RoundFailure::MOutOfRange { m: round.m, max: s_len }));
    }

    if round.m == s_len {
        // Failed round: all sampled XORs still leave at least thresh models.
        if round.list_hi.is_some() {
            return Err(fail(RoundFailure::UnexpectedListHi(round.m)));
        }
        if (round.list_lo.len() as u64) < thresh {
            return Err(fail(RoundFailure::TooFew {
                list: ListName::Lo,
                found: round.list_lo.len(),
                thresh,
            }));
        }
        let instance = f.add_xors(round_xors);
        validate_list(&instance, &round.list_lo, thresh as usize, ListName::Lo)
            .map_err(fail)?;
        return Ok(BigUint::one() << s_len);
    }

    let m = round.m as usize;
    let hi = round.list_hi.as_ref().ok_or_else(|| fail(RoundFailure::MissingListHi))?;

    if (round.list_lo.len() as u64) < thresh {
        return Err(fail(RoundFailure::TooFew {
            list: ListName::Lo,
            found: round.list_lo.len(),
            thresh,
        }));
    }
    let lo_instance = f.add_xors(&round_xors[..m - 1]);
    validate_list(&lo_instance, &round.list_lo, thresh as usize, ListName::Lo).map_err(fail)?;

    if hi.len() as u64 >= thresh {
        return Err(fail(RoundFailure::TooMany {
            list: ListName::Hi,
            found: hi.len(),
            thresh,
        }));
    }
    let hi_instance = f.add_xors(&round_xors[..m]);
    validate_list(&hi_instance, hi, hi.len(), ListName::Hi).map_err(fail)?;

    let banned = ban_all(&hi_instance, hi);
    match oracle.establish_unsat(&banned, ProofKey::Round(index)) {
        Ok(()) => {}
        Err(OracleFailure::Rejected(reason)) => {
            return Err(fail(RoundFailure::UnsatNotEstablished(reason)))
        }
        Err(OracleFailure::Resource(reason)) => return Err(CertError::Resource(reason)),
    }

    Ok((BigUint::one() << round.m) * BigUint::from(hi.len()))
}

/// Re-run the decisions of a counting run from its certificate and return
/// the certified count.
///
/// The threshold and round count are recomputed from `(epsilon, delta,
/// min_rounds)`, and the XOR constraints are re-sampled from `bits`, which
/// must hold the same bytes the counter consumed; the stream cursor advances
/// exactly as it did during counting.  Rounds are checked in parallel.
pub fn check_certificate(
    f: &CnfXorFormula,
    epsilon: &BigRational,
    delta: &BigRational,
    min_rounds: u64,
    bits: &mut RandomBitStream,
    cert: &Certificate,
    oracle: &UnsatOracle,
) -> Result<BigUint, CertError> {
    let proj = f.proj();
    if proj.is_empty() {
        return Err(CertError::EmptyProjection);
    }
    let thresh = compute_thresh(epsilon);
    let t = compute_t(delta, min_rounds);
    let xors = bits.random_seed_xors(proj, t)?;

    if cert.m0 != 0 {
        return Err(CertError::BadM0(cert.m0));
    }

    if (cert.init_models.len() as u64) < thresh {
        // Exact run: the initial enumeration exhausted the formula, so the
        // certificate must show the models are genuine, pairwise distinct on
        // the projection, and complete (banning them all leaves nothing).
        if !cert.rounds.is_empty() {
            return Err(CertError::RoundCount { expected: 0, found: cert.rounds.len() });
        }
        validate_list(f, &cert.init_models, cert.init_models.len(), ListName::Init)
            .map_err(CertError::Init)?;
        let banned = ban_all(f, &cert.init_models);
        match oracle.establish_unsat(&banned, ProofKey::Init) {
            Ok(()) => {}
            Err(OracleFailure::Rejected(reason)) => {
                return Err(CertError::Init(RoundFailure::UnsatNotEstablished(reason)))
            }
            Err(OracleFailure::Resource(reason)) => return Err(CertError::Resource(reason)),
        }
        return Ok(BigUint::from(cert.init_models.len()));
    }

    // Hashing run: the initial list only needs to witness that the count
    // reached the threshold, so just its first `thresh` models are checked.
    validate_list(f, &cert.init_models, thresh as usize, ListName::Init)
        .map_err(CertError::Init)?;

    if cert.rounds.len() as u64 != t {
        return Err(CertError::RoundCount { expected: t as usize, found: cert.rounds.len() });
    }

    let results: Vec<Result<BigUint, CertError>> = cert
        .rounds
        .par_iter()
        .enumerate()
        .map(|(i, round)| check_round(f, thresh, &xors[i], round, oracle, i))
        .collect();
    let mut estimates = Vec::with_capacity(results.len());
    for r in results {
        estimates.push(r?);
    }
    Ok(find_median(&estimates))
}
