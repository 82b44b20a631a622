//! The `countcert` command-line tool.
//!
//! One binary, six subcommands covering the whole pipeline: `genbits` sizes
//! and writes a random bit file, `count` produces an approximate count plus
//! certificate and proof sidecars, `certcheck` re-verifies a certificate,
//! `xlrup-check` checks a standalone refutation, `exact-count` brute-forces
//! small formulas, and `pac-eval` measures the end-to-end guarantee over
//! repeated runs.
//!
//! Results are printed as machine-readable `s`-lines (`s mc <count>`,
//! `s VERIFIED`, `s ERROR <reason>`), everything else as `c`-comment lines.
//! Exit codes: 0 success/certified, 1 rejected, 2 usage or input parse
//! error, 3 resource limit (randomness, solver budget, I/O).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::rngs::{OsRng, StdRng};
use rand::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::certcheck::{
    check_certificate, parse_certificate, print_certificate, sidecar_name, CertError, ProofKey,
    UnsatOracle,
};
use crate::counter::{approxmc, CountError, CounterOptions, FindMStrategy};
use crate::formula::{parse_dimacs_cnfxor, CnfXorFormula};
use crate::oracle::exact_projected_count;
use crate::params::{compute_t, compute_thresh, parse_decimal};
use crate::randomness::RandomBitStream;
use crate::solver::SolverConfig;
use crate::xlrup::{check_proof, parse_xlrup, print_xlrup};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

/// Name of the environment variable supplying a default `--proof-dir`.
pub const PROOF_DIR_ENV: &str = "COUNTCERT_PROOF_DIR";

#[derive(Parser)]
#[command(
    name = "countcert",
    version,
    about = "Certified approximate model counting for CNF-XOR formulas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random bit file sized for a counting run
    Genbits(GenbitsArgs),
    /// Approximately count models, emitting a certificate and proof sidecars
    Count(CountArgs),
    /// Re-verify a counting run from its certificate
    Certcheck(CertcheckArgs),
    /// Check an XLRUP refutation of a CNF-XOR formula
    XlrupCheck(XlrupCheckArgs),
    /// Count models exactly by enumeration (small formulas only)
    ExactCount(ExactCountArgs),
    /// Measure the PAC guarantee empirically over repeated fresh runs
    PacEval(PacEvalArgs),
}

#[derive(Args)]
struct GenbitsArgs {
    /// Formula whose counting run the bit file must cover
    #[arg(long)]
    formula: PathBuf,
    /// Tolerance, a positive decimal
    #[arg(short, long, default_value = "0.8")]
    epsilon: String,
    /// Failure probability, a decimal in (0, 1]
    #[arg(short, long, default_value = "0.2")]
    delta: String,
    /// Lower bound on the number of rounds
    #[arg(long, default_value_t = 0)]
    min_rounds: u64,
    /// Output path for the raw random bytes
    #[arg(long)]
    out: PathBuf,
    /// Emit exactly this many bytes (must cover the run's bit budget)
    #[arg(long)]
    bytes: Option<u64>,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    formula: PathBuf,
    /// Raw random bytes; the run consumes t*(|S|-1)*(|S|+1) bits of it
    #[arg(long)]
    bits: PathBuf,
    /// Tolerance, a positive decimal
    #[arg(short, long, default_value = "0.8")]
    epsilon: String,
    /// Failure probability, a decimal in (0, 1]
    #[arg(short, long, default_value = "0.2")]
    delta: String,
    /// Lower bound on the number of rounds
    #[arg(long, default_value_t = 0)]
    min_rounds: u64,
    /// Certificate output path; XLRUP sidecars are written next to it
    #[arg(long)]
    cert: PathBuf,
    /// Conflict budget per solver call (default: unlimited)
    #[arg(long)]
    max_conflicts: Option<u64>,
    /// Locate each round's XOR prefix by doubling instead of a linear scan
    #[arg(long)]
    galloping: bool,
}

#[derive(Args)]
struct CertcheckArgs {
    #[arg(long)]
    formula: PathBuf,
    #[arg(long)]
    cert: PathBuf,
    /// The same random bytes the counter consumed
    #[arg(long)]
    bits: PathBuf,
    /// Tolerance, a positive decimal
    #[arg(short, long, default_value = "0.8")]
    epsilon: String,
    /// Failure probability, a decimal in (0, 1]
    #[arg(short, long, default_value = "0.2")]
    delta: String,
    /// Lower bound on the number of rounds
    #[arg(long, default_value_t = 0)]
    min_rounds: u64,
    /// Directory holding <cert-name>.{init,roundN}.xlrup proof sidecars
    /// (default: $COUNTCERT_PROOF_DIR, else the certificate's directory)
    #[arg(long, conflicts_with_all = ["solve_unsat", "unsat_cmd"])]
    proof_dir: Option<PathBuf>,
    /// Discharge unsat claims with the built-in solver instead of proof files
    #[arg(long, conflicts_with = "unsat_cmd")]
    solve_unsat: bool,
    /// External prover: `CMD <instance.cnf> <proof.xlrup>` must write a proof
    #[arg(long)]
    unsat_cmd: Option<String>,
    /// Conflict budget per solver call under --solve-unsat
    #[arg(long)]
    max_conflicts: Option<u64>,
    /// Worker threads for per-round checking
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct XlrupCheckArgs {
    /// CNF-XOR formula the proof refutes
    formula: PathBuf,
    /// XLRUP proof file
    proof: PathBuf,
}

#[derive(Args)]
struct ExactCountArgs {
    #[arg(long)]
    formula: PathBuf,
}

#[derive(Args)]
struct PacEvalArgs {
    #[arg(long)]
    formula: PathBuf,
    /// Tolerance, a positive decimal
    #[arg(short, long, default_value = "0.8")]
    epsilon: String,
    /// Failure probability, a decimal in (0, 1]
    #[arg(short, long, default_value = "0.2")]
    delta: String,
    /// Lower bound on the number of rounds
    #[arg(long, default_value_t = 0)]
    min_rounds: u64,
    /// Independent count + check cycles to run
    #[arg(long, default_value_t = 200)]
    trials: u64,
    /// Seed for reproducible trial randomness (default: OS entropy)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads across trials
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Conflict budget per solver call (default: unlimited)
    #[arg(long)]
    max_conflicts: Option<u64>,
}

/// A subcommand failure: what to print after `s ERROR ` and the exit code.
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Failure {
        Failure { code: EXIT_USAGE, msg: msg.into() }
    }
    fn rejected(msg: impl Into<String>) -> Failure {
        Failure { code: EXIT_REJECTED, msg: msg.into() }
    }
    fn resource(msg: impl Into<String>) -> Failure {
        Failure { code: EXIT_RESOURCE, msg: msg.into() }
    }
}

/// Entry point for the installed binary: parses `std::env::args`.
pub fn run() -> i32 {
    run_from(std::env::args())
}

/// Parse `args` (including the program name) and execute; returns the exit
/// code instead of exiting so tests can drive the CLI in-process.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Genbits(a) => genbits(a),
        Command::Count(a) => count(a),
        Command::Certcheck(a) => certcheck(a),
        Command::XlrupCheck(a) => xlrup_check(a),
        Command::ExactCount(a) => exact_count(a),
        Command::PacEval(a) => pac_eval(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            println!("s ERROR {}", f.msg);
            f.code
        }
    }
}

fn load_formula(path: &Path) -> Result<CnfXorFormula, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::resource(format!("cannot read {}: {e}", path.display())))?;
    parse_dimacs_cnfxor(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn parse_epsilon(s: &str) -> Result<BigRational, Failure> {
    let eps = parse_decimal(s).map_err(|e| Failure::usage(e.to_string()))?;
    if eps <= BigRational::zero() {
        return Err(Failure::usage(format!("epsilon must be positive, got {s}")));
    }
    Ok(eps)
}

fn parse_delta(s: &str) -> Result<BigRational, Failure> {
    let delta = parse_decimal(s).map_err(|e| Failure::usage(e.to_string()))?;
    if delta <= BigRational::zero() || delta > BigRational::one() {
        return Err(Failure::usage(format!("delta must be in (0, 1], got {s}")));
    }
    Ok(delta)
}

fn solver_config(max_conflicts: Option<u64>) -> SolverConfig {
    SolverConfig {
        max_conflicts: max_conflicts.unwrap_or(u64::MAX),
        ..SolverConfig::default()
    }
}

/// Random bits a whole run consumes: `t * (|S|-1) * (|S|+1)`.
fn bit_budget(s_len: u64, t: u64) -> u64 {
    t * s_len.saturating_sub(1) * (s_len + 1)
}

fn genbits(args: GenbitsArgs) -> Result<i32, Failure> {
    let f = load_formula(&args.formula)?;
    let _eps = parse_epsilon(&args.epsilon)?;
    let delta = parse_delta(&args.delta)?;
    if f.proj().is_empty() {
        return Err(Failure::usage("the formula's projection set is empty"));
    }
    let t = compute_t(&delta, args.min_rounds);
    let bits = bit_budget(f.proj().len() as u64, t);
    let needed = bits.div_ceil(8);
    let n = args.bytes.unwrap_or(needed);
    if n < needed {
        return Err(Failure::usage(format!(
            "{n} bytes cannot cover the bit budget of {bits} bits ({needed} bytes)"
        )));
    }
    let mut bytes = vec![0u8; n as usize];
    OsRng.fill_bytes(&mut bytes);
    std::fs::write(&args.out, &bytes)
        .map_err(|e| Failure::resource(format!("cannot write {}: {e}", args.out.display())))?;
    println!("c bit budget {bits} bits ({needed} bytes)");
    println!("c wrote {n} bytes to {}", args.out.display());
    Ok(EXIT_OK)
}

fn count(args: CountArgs) -> Result<i32, Failure> {
    let f = load_formula(&args.formula)?;
    let eps = parse_epsilon(&args.epsilon)?;
    let delta = parse_delta(&args.delta)?;
    let bytes = std::fs::read(&args.bits)
        .map_err(|e| Failure::resource(format!("cannot read {}: {e}", args.bits.display())))?;
    let mut bits = RandomBitStream::new(bytes);

    let options = CounterOptions {
        solver: solver_config(args.max_conflicts),
        find_m: if args.galloping { FindMStrategy::Galloping } else { FindMStrategy::Linear },
    };
    let run = approxmc(&f, &eps, &delta, args.min_rounds, &mut bits, &options)
        .map_err(|e| match e {
            CountError::EmptyProjection => Failure::usage(e.to_string()),
            CountError::Randomness(_) | CountError::Solver(_) => Failure::resource(e.to_string()),
        })?;

    std::fs::write(&args.cert, print_certificate(&run.certificate))
        .map_err(|e| Failure::resource(format!("cannot write {}: {e}", args.cert.display())))?;

    let dir = args.cert.parent().unwrap_or(Path::new("."));
    let base = args
        .cert
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "certificate".to_string());
    let mut sidecars = 0u64;
    let write_proof = |key: ProofKey, steps: &[crate::xlrup::ProofStep]| {
        let path = dir.join(sidecar_name(&base, key));
        std::fs::write(&path, print_xlrup(steps))
            .map_err(|e| Failure::resource(format!("cannot write {}: {e}", path.display())))
    };
    if let Some(steps) = &run.init_proof {
        write_proof(ProofKey::Init, steps)?;
        sidecars += 1;
    }
    for (i, proof) in run.round_proofs.iter().enumerate() {
        if let Some(steps) = proof {
            write_proof(ProofKey::Round(i), steps)?;
            sidecars += 1;
        }
    }

    println!("c thresh {}", run.thresh);
    println!("c rounds {}", run.t);
    println!("c bits consumed {}", run.bits_consumed);
    println!("c certificate {}", args.cert.display());
    println!("c proof sidecars {sidecars}");
    println!("s mc {}", run.count);
    Ok(EXIT_OK)
}

fn certcheck(args: CertcheckArgs) -> Result<i32, Failure> {
    let f = load_formula(&args.formula)?;
    let eps = parse_epsilon(&args.epsilon)?;
    let delta = parse_delta(&args.delta)?;

    let cert_text = std::fs::read_to_string(&args.cert)
        .map_err(|e| Failure::resource(format!("cannot read {}: {e}", args.cert.display())))?;
    let cert = parse_certificate(&cert_text, f.num_vars())
        .map_err(|e| Failure::rejected(e.to_string()))?;

    let bytes = std::fs::read(&args.bits)
        .map_err(|e| Failure::resource(format!("cannot read {}: {e}", args.bits.display())))?;
    let mut bits = RandomBitStream::new(bytes);

    let base = args
        .cert
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "certificate".to_string());
    let oracle = if args.solve_unsat {
        UnsatOracle::Embedded { config: solver_config(args.max_conflicts) }
    } else if let Some(cmd) = &args.unsat_cmd {
        let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
        if command.is_empty() {
            return Err(Failure::usage("--unsat-cmd is empty"));
        }
        UnsatOracle::External { command }
    } else {
        let dir = args
            .proof_dir
            .clone()
            .or_else(|| std::env::var_os(PROOF_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| args.cert.parent().unwrap_or(Path::new(".")).to_path_buf());
        UnsatOracle::ProofDir { dir, base }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| Failure::resource(format!("cannot start worker threads: {e}")))?;
    let outcome = pool.install(|| {
        check_certificate(&f, &eps, &delta, args.min_rounds, &mut bits, &cert, &oracle)
    });
    match outcome {
        Ok(count) => {
            println!("c bits consumed {}", bits.cursor());
            println!("s mc {count}");
            Ok(EXIT_OK)
        }
        Err(e @ (CertError::Randomness(_) | CertError::Resource(_))) => {
            Err(Failure::resource(e.to_string()))
        }
        Err(e) => Err(Failure::rejected(e.to_string())),
    }
}

fn xlrup_check(args: XlrupCheckArgs) -> Result<i32, Failure> {
    let f = load_formula(&args.formula)?;
    let text = std::fs::read_to_string(&args.proof)
        .map_err(|e| Failure::resource(format!("cannot read {}: {e}", args.proof.display())))?;
    let steps = parse_xlrup(&text).map_err(|e| Failure::rejected(e.to_string()))?;
    let outcome = check_proof(&f, &steps);
    if outcome.is_verified() {
        println!("s VERIFIED");
        Ok(EXIT_OK)
    } else {
        Err(Failure::rejected(outcome.to_string()))
    }
}

fn exact_count(args: ExactCountArgs) -> Result<i32, Failure> {
    let f = load_formula(&args.formula)?;
    let n = exact_projected_count(&f, f.proj())
        .map_err(|e| Failure::resource(e.to_string()))?;
    println!("s mc {n}");
    Ok(EXIT_OK)
}

/// One pac-eval trial: the counter's answer, whether the checker certified
/// the same number, and whether it landed inside the PAC envelope.
struct Trial {
    count: BigUint,
    certified: Result<BigUint, String>,
    in_envelope: bool,
}

fn pac_eval(args: PacEvalArgs) -> Result<i32, Failure> {
    let f = load_formula(&args.formula)?;
    let eps = parse_epsilon(&args.epsilon)?;
    let delta = parse_delta(&args.delta)?;
    if f.proj().is_empty() {
        return Err(Failure::usage("the formula's projection set is empty"));
    }
    if args.trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }

    let exact = exact_projected_count(&f, f.proj())
        .map_err(|e| Failure::resource(e.to_string()))?;
    let exact_rat = BigRational::from_integer(exact.into());
    let one_plus_eps = BigRational::one() + &eps;
    let lo = &exact_rat / &one_plus_eps;
    let hi = &exact_rat * &one_plus_eps;

    let thresh = compute_thresh(&eps);
    let t = compute_t(&delta, args.min_rounds);
    let budget_bytes = bit_budget(f.proj().len() as u64, t).div_ceil(8);
    let options = CounterOptions {
        solver: solver_config(args.max_conflicts),
        ..CounterOptions::default()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| Failure::resource(format!("cannot start worker threads: {e}")))?;

    let run_trial = |trial: u64| -> Result<Trial, Failure> {
        let mut bytes = vec![0u8; budget_bytes as usize];
        match args.seed {
            Some(seed) => {
                let mut rng = StdRng::seed_from_u64(seed ^ trial.wrapping_mul(0x9E3779B97F4A7C15));
                rng.fill_bytes(&mut bytes);
            }
            None => OsRng.fill_bytes(&mut bytes),
        }

        let mut count_bits = RandomBitStream::new(bytes.clone());
        let run = approxmc(&f, &eps, &delta, args.min_rounds, &mut count_bits, &options)
            .map_err(|e| Failure::resource(format!("trial {trial}: {e}")))?;

        let mut proofs = HashMap::new();
        if let Some(steps) = run.init_proof {
            proofs.insert(ProofKey::Init, steps);
        }
        for (i, proof) in run.round_proofs.into_iter().enumerate() {
            if let Some(steps) = proof {
                proofs.insert(ProofKey::Round(i), steps);
            }
        }
        let oracle = UnsatOracle::Provided { proofs };
        let mut check_bits = RandomBitStream::new(bytes);
        let certified = check_certificate(
            &f,
            &eps,
            &delta,
            args.min_rounds,
            &mut check_bits,
            &run.certificate,
            &oracle,
        )
        .map_err(|e| e.to_string());
        if certified.is_ok() && check_bits.cursor() != count_bits.cursor() {
            return Err(Failure::rejected(format!(
                "trial {trial}: counter consumed {} bits but checker consumed {}",
                count_bits.cursor(),
                check_bits.cursor()
            )));
        }

        let count_rat = BigRational::from_integer(run.count.clone().into());
        let in_envelope = count_rat >= lo && count_rat <= hi;
        Ok(Trial { count: run.count, certified, in_envelope })
    };

    let trials: Vec<Result<Trial, Failure>> =
        pool.install(|| (0..args.trials).into_par_iter().map(run_trial).collect());

    println!("c exact {exact}");
    println!("c thresh {thresh}");
    println!("c rounds {t}");
    println!("c envelope [{lo}, {hi}]");

    let mut outside = 0u64;
    let mut broken: Vec<String> = Vec::new();
    for (i, trial) in trials.into_iter().enumerate() {
        let trial = trial?;
        let verdict = match &trial.certified {
            Ok(c) if *c == trial.count => {
                if trial.in_envelope {
                    "in"
                } else {
                    outside += 1;
                    "out"
                }
            }
            Ok(c) => {
                broken.push(format!(
                    "trial {i}: checker certified {c} but the counter reported {}",
                    trial.count
                ));
                "mismatch"
            }
            Err(e) => {
                broken.push(format!("trial {i}: certificate rejected: {e}"));
                "rejected"
            }
        };
        println!("c trial {i} count {} {verdict}", trial.count);
    }

    let frac = BigRational::new(outside.into(), args.trials.into());
    println!("c outside {outside}/{} (allowed {delta})", args.trials);
    for b in &broken {
        println!("c {b}");
    }
    if !broken.is_empty() {
        println!("s FAIL {} trials had unusable certificates", broken.len());
        return Ok(EXIT_REJECTED);
    }
    if frac > delta {
        println!("s FAIL failure fraction exceeds delta");
        return Ok(EXIT_REJECTED);
    }
    println!("s PASS");
    Ok(EXIT_OK)
}
