//! Certified approximate model counting for CNF-XOR formulas.
//!
//! The crate is organised around a pipeline:
//!
//! * [`formula`] — CNF-XOR formulas in extended DIMACS form, assignments,
//!   projections and blocking clauses.
//! * [`randomness`] — an externally supplied stream of random bits and the
//!   XOR constraints sampled from it.
//! * [`params`] — exact rational arithmetic for the PAC parameters
//!   (enumeration threshold, round count, median).
//! * [`solver`] — a small CDCL solver that blasts XOR constraints to CNF and
//!   emits XLRUP proofs for every unsatisfiable run.
//! * [`xlrup`] — parser and checker for the XLRUP proof format.
//! * [`counter`] — the hashing-based approximate counter; produces a count
//!   together with a partial certificate and per-phase UNSAT proofs.
//! * [`certcheck`] — the independent certificate checker; replays the
//!   counter's randomness and accepts a count only if every claim in the
//!   certificate is re-established.
//! * [`oracle`] — brute-force reference implementations used for testing and
//!   for the `exact-count` / `pac-eval` commands.
//! * [`cli`] — the `countcert` command-line interface.

pub mod certcheck;
pub mod cli;
pub mod counter;
pub mod formula;
pub mod oracle;
pub mod params;
pub mod randomness;
pub mod solver;
pub mod xlrup;
