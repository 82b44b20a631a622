//! Parser and checker for the XLRUP unsatisfiability proof format.
//!
//! XLRUP extends clausal RUP proofs with native XOR reasoning.  Clauses and
//! XOR constraints live in two separate ID spaces; the input formula's
//! clauses are implicitly numbered `1..=n` in file order, while input XORs
//! enter the proof only through explicit `o x` steps.  The step grammar
//! (whitespace-insensitive, `//` comments ignored, every list 0-terminated):
//!
//! ```text
//! o x <id> <lits> 0                 introduce input XOR at XOR ID <id>
//! i x <id> <lits> 0 <clause-ids> 0  XOR implied by clauses
//! x <id> <lits> 0 <xor-ids> 0       XOR equal to the GF(2) sum of XORs
//! i <id> <lits> 0 <xor-ids> 0       clause implied by the sum of XORs
//! <id> <lits> 0 <clause-ids> 0      clause with a RUP derivation
//! d <clause-ids> 0                  delete clauses
//! x d <xor-ids> 0                   delete XORs
//! ```
//!
//! IDs are strictly increasing within each space.  A proof is verified once
//! a RUP or clause-from-XORs step derives the empty clause.
//!
//! RUP hint chains are checked strictly: under the assumption that every
//! literal of the new clause is false, each hinted clause must propagate a
//! unit, except the final hint, which must be falsified.  Early conflicts
//! with hints left over are rejected; this keeps checking deterministic and
//! makes accepted proofs brittle under tampering, which the test suite
//! relies on.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::formula::{Clause, CnfXorFormula, Lit, Var, Xor};

/// Widest XOR a clause-implication (`i x`) step may introduce; the check
/// enumerates all `2^k` points over the XOR's variables.
pub const MAX_XOR_WIDTH: usize = 16;

/// One step of an XLRUP proof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofStep {
    /// `o x <id> <lits> 0` — introduces an input XOR into the XOR database.
    OrigXor { id: u64, xor: Xor },
    /// `i x <id> <lits> 0 <ids> 0` — an XOR implied by hinted clauses.
    XorFromClauses { id: u64, xor: Xor, hints: Vec<u64> },
    /// `x <id> <lits> 0 <ids> 0` — the GF(2) sum of hinted XORs.
    XorAdd { id: u64, xor: Xor, hints: Vec<u64> },
    /// `i <id> <lits> 0 <ids> 0` — a clause implied by the sum of hinted XORs.
    ClauseFromXors { id: u64, clause: Clause, hints: Vec<u64> },
    /// `<id> <lits> 0 <ids> 0` — a clause with a RUP derivation.
    RupClause { id: u64, clause: Clause, hints: Vec<u64> },
    /// `d <ids> 0`
    DeleteClauses { ids: Vec<u64> },
    /// `x d <ids> 0`
    DeleteXors { ids: Vec<u64> },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct XlrupParseError {
    pub line: usize,
    pub msg: String,
}

/// Why a proof step was not accepted.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum StepError {
    #[error("clause {0} is not live")]
    DeadClause(u64),
    #[error("XOR {0} is not live")]
    DeadXor(u64),
    #[error("hint clause {0} is satisfied under the current assignment")]
    SatisfiedHint(u64),
    #[error("hint clause {0} is neither unit nor falsified")]
    UselessHint(u64),
    #[error("hint clause {0} closes the derivation but hints remain")]
    TrailingHints(u64),
    #[error("hints exhausted without reaching a falsified clause")]
    NoConflict,
    #[error("step has no hints")]
    EmptyHints,
    #[error("stated XOR ({stated}) differs from the computed sum ({computed})")]
    SumMismatch { stated: String, computed: String },
    #[error("the XOR mentions variables outside the clause")]
    NotSubset,
    #[error("the clause's falsifying point satisfies the XOR")]
    PointSatisfiesXor,
    #[error("XOR width {0} exceeds the implication cap {MAX_XOR_WIDTH}")]
    WidthCap(usize),
    #[error("falsifying point {0} of the XOR is not covered by any hinted clause")]
    UncoveredPoint(String),
    #[error("{space} ID {id} does not exceed the previous ID {last}")]
    NonMonotoneId { space: &'static str, id: u64, last: u64 },
    #[error("variable {0} exceeds the formula's variable count")]
    VarOutOfRange(Var),
    #[error("`o x` step does not match any input XOR: {0}")]
    NotInputXor(String),
}

/// Result of checking a whole proof.  `step` is the zero-based index of the
/// offending step, or `None` when the proof ran out without deriving the
/// empty clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofOutcome {
    Verified,
    Rejected { step: Option<usize>, reason: String },
}

impl ProofOutcome {
    pub fn is_verified(&self) -> bool {
        matches!(self, ProofOutcome::Verified)
    }
}

impl fmt::Display for ProofOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProofOutcome::Verified => write!(f, "VERIFIED"),
            ProofOutcome::Rejected { step: Some(i), reason } => {
                write!(f, "REJECTED at step {}: {reason}", i + 1)
            }
            ProofOutcome::Rejected { step: None, reason } => write!(f, "REJECTED: {reason}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing and printing

struct Tokens<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Tokens<'a> {
        let mut toks = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find("//") {
                Some(j) => &raw[..j],
                None => raw,
            };
            toks.extend(line.split_whitespace().map(|t| (i + 1, t)));
        }
        Tokens { toks, pos: 0 }
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|&(_, t)| t)
    }

    fn next(&mut self) -> Option<&'a str> {
        let t = self.toks.get(self.pos).map(|&(_, t)| t);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|&(l, _)| l)
            .unwrap_or(0)
    }

    fn err(&self, msg: impl Into<String>) -> XlrupParseError {
        XlrupParseError { line: self.line(), msg: msg.into() }
    }
}

fn parse_id(t: &mut Tokens) -> Result<u64, XlrupParseError> {
    let tok = t.peek().ok_or_else(|| t.err("expected an ID, found end of proof"))?;
    let id: u64 = tok
        .parse()
        .map_err(|_| t.err(format!("expected a positive ID, found {tok:?}")))?;
    if id == 0 {
        return Err(t.err("IDs must be positive"));
    }
    t.next();
    Ok(id)
}

fn parse_lits(t: &mut Tokens) -> Result<Vec<Lit>, XlrupParseError> {
    let mut lits = Vec::new();
    loop {
        let tok = t
            .peek()
            .ok_or_else(|| t.err("literal list is not terminated by 0"))?;
        let l: i32 = tok
            .parse()
            .map_err(|_| t.err(format!("expected a literal, found {tok:?}")))?;
        t.next();
        if l == 0 {
            return Ok(lits);
        }
        lits.push(l);
    }
}

fn parse_ids(t: &mut Tokens) -> Result<Vec<u64>, XlrupParseError> {
    let mut ids = Vec::new();
    loop {
        let tok = t.peek().ok_or_else(|| t.err("ID list is not terminated by 0"))?;
        let id: i64 = tok
            .parse()
            .map_err(|_| t.err(format!("expected an ID, found {tok:?}")))?;
        t.next();
        if id == 0 {
            return Ok(ids);
        }
        if id < 0 {
            return Err(t.err(format!("negative ID {id}")));
        }
        ids.push(id as u64);
    }
}

/// Parses XLRUP text into a step list.  Enforces the grammar and strict ID
/// monotonicity per space; all semantic checking happens in [`check_proof`].
pub fn parse_xlrup(text: &str) -> Result<Vec<ProofStep>, XlrupParseError> {
    let mut t = Tokens::new(text);
    let mut steps = Vec::new();
    let mut last_clause_id = 0u64;
    let mut last_xor_id = 0u64;

    let bump = |last: &mut u64, id: u64, t: &Tokens| -> Result<(), XlrupParseError> {
        if id <= *last {
            return Err(t.err(format!("ID {id} does not exceed the previous ID {last}")));
        }
        *last = id;
        Ok(())
    };

    while let Some(tok) = t.peek() {
        let step = match tok {
            "d" => {
                t.next();
                ProofStep::DeleteClauses { ids: parse_ids(&mut t)? }
            }
            "o" => {
                t.next();
                if t.next() != Some("x") {
                    return Err(t.err("`o` must be followed by `x`"));
                }
                let id = parse_id(&mut t)?;
                bump(&mut last_xor_id, id, &t)?;
                let lits = parse_lits(&mut t)?;
                ProofStep::OrigXor { id, xor: Xor::from_literals(&lits) }
            }
            "x" => {
                t.next();
                if t.peek() == Some("d") {
                    t.next();
                    ProofStep::DeleteXors { ids: parse_ids(&mut t)? }
                } else {
                    let id = parse_id(&mut t)?;
                    bump(&mut last_xor_id, id, &t)?;
                    let lits = parse_lits(&mut t)?;
                    let hints = parse_ids(&mut t)?;
                    ProofStep::XorAdd { id, xor: Xor::from_literals(&lits), hints }
                }
            }
            "i" => {
                t.next();
                if t.peek() == Some("x") {
                    t.next();
                    let id = parse_id(&mut t)?;
                    bump(&mut last_xor_id, id, &t)?;
                    let lits = parse_lits(&mut t)?;
                    let hints = parse_ids(&mut t)?;
                    ProofStep::XorFromClauses { id, xor: Xor::from_literals(&lits), hints }
                } else {
                    let id = parse_id(&mut t)?;
                    bump(&mut last_clause_id, id, &t)?;
                    let clause = parse_lits(&mut t)?;
                    let hints = parse_ids(&mut t)?;
                    ProofStep::ClauseFromXors { id, clause, hints }
                }
            }
            _ => {
                let id = parse_id(&mut t)?;
                bump(&mut last_clause_id, id, &t)?;
                let clause = parse_lits(&mut t)?;
                let hints = parse_ids(&mut t)?;
                ProofStep::RupClause { id, clause, hints }
            }
        };
        steps.push(step);
    }
    Ok(steps)
}

fn push_lits(s: &mut String, lits: &[Lit]) {
    for l in lits {
        s.push_str(&format!("{l} "));
    }
    s.push('0');
}

fn push_ids(s: &mut String, ids: &[u64]) {
    for id in ids {
        s.push_str(&format!("{id} "));
    }
    s.push('0');
}

/// Renders steps back to XLRUP text, one step per line.
pub fn print_xlrup(steps: &[ProofStep]) -> String {
    let mut out = String::new();
    for step in steps {
        match step {
            ProofStep::OrigXor { id, xor } => {
                out.push_str(&format!("o x {id} "));
                push_lits(&mut out, &xor.to_literals());
            }
            ProofStep::XorFromClauses { id, xor, hints } => {
                out.push_str(&format!("i x {id} "));
                push_lits(&mut out, &xor.to_literals());
                out.push(' ');
                push_ids(&mut out, hints);
            }
            ProofStep::XorAdd { id, xor, hints } => {
                out.push_str(&format!("x {id} "));
                push_lits(&mut out, &xor.to_literals());
                out.push(' ');
                push_ids(&mut out, hints);
            }
            ProofStep::ClauseFromXors { id, clause, hints } => {
                out.push_str(&format!("i {id} "));
                push_lits(&mut out, clause);
                out.push(' ');
                push_ids(&mut out, hints);
            }
            ProofStep::RupClause { id, clause, hints } => {
                out.push_str(&format!("{id} "));
                push_lits(&mut out, clause);
                out.push(' ');
                push_ids(&mut out, hints);
            }
            ProofStep::DeleteClauses { ids } => {
                out.push_str("d ");
                push_ids(&mut out, ids);
            }
            ProofStep::DeleteXors { ids } => {
                out.push_str("x d ");
                push_ids(&mut out, ids);
            }
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// GF(2) arithmetic

/// The GF(2) sum of XOR constraints: symmetric difference of the variable
/// sets, exclusive-or of the parity bits.
pub fn xor_sum(xors: &[Xor]) -> Xor {
    let mut vars: Vec<Var> = Vec::new();
    let mut rhs = false;
    for x in xors {
        vars.extend_from_slice(x.vars());
        rhs ^= x.rhs();
    }
    Xor::new(vars, rhs) // duplicate cancellation performs the symmetric difference
}

/// An XOR packed as a bit vector over variable indices (bit `v - 1` set iff
/// variable `v` occurs) plus the parity bit, so that sums and parity checks
/// run word-wide.
#[derive(Debug, Clone, PartialEq, Eq)]
struct PackedXor {
    words: Vec<u64>,
    rhs: bool,
}

impl PackedXor {
    fn zero(num_words: usize) -> PackedXor {
        PackedXor { words: vec![0; num_words], rhs: false }
    }

    fn from_xor(x: &Xor, num_words: usize) -> PackedXor {
        let mut p = PackedXor::zero(num_words);
        for &v in x.vars() {
            p.words[(v as usize - 1) / 64] |= 1 << ((v as usize - 1) % 64);
        }
        p.rhs = x.rhs();
        p
    }

    fn xor_assign(&mut self, other: &PackedXor) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
        self.rhs ^= other.rhs;
    }

    fn to_xor(&self) -> Xor {
        let mut vars = Vec::new();
        for (i, &w) in self.words.iter().enumerate() {
            let mut bits = w;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                vars.push((i * 64 + b + 1) as Var);
                bits &= bits - 1;
            }
        }
        Xor::new(vars, self.rhs)
    }

    /// True iff every variable of `self` has its bit set in `mask`.
    fn subset_of(&self, mask: &[u64]) -> bool {
        self.words.iter().zip(mask).all(|(w, m)| w & !m == 0)
    }

    /// Parity of the variables of `self` that are set in `mask`.
    fn parity_under(&self, mask: &[u64]) -> bool {
        let ones: u32 = self.words.iter().zip(mask).map(|(w, m)| (w & m).count_ones()).sum();
        ones % 2 == 1
    }
}

// ---------------------------------------------------------------------------
// Checking

/// The live clause and XOR databases during proof checking.
pub struct ProofState {
    num_vars: u32,
    num_words: usize,
    clause_db: HashMap<u64, Clause>,
    xor_db: HashMap<u64, PackedXor>,
    input_xors: HashSet<Xor>,
    last_clause_id: u64,
    last_xor_id: u64,
    empty_derived: bool,
}

impl ProofState {
    /// Preloads the input formula: clause IDs `1..=n` in file order, an
    /// empty XOR database, and the set of input XORs that `o x` steps may
    /// introduce.
    pub fn new(f: &CnfXorFormula) -> ProofState {
        let clause_db = f
            .clauses()
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u64 + 1, c.clone()))
            .collect();
        ProofState {
            num_vars: f.num_vars(),
            num_words: (f.num_vars() as usize).div_ceil(64),
            clause_db,
            xor_db: HashMap::new(),
            input_xors: f.xors().iter().cloned().collect(),
            last_clause_id: f.clauses().len() as u64,
            last_xor_id: 0,
            empty_derived: false,
        }
    }

    /// True once some step has derived the empty clause.
    pub fn empty_derived(&self) -> bool {
        self.empty_derived
    }

    fn check_vars(&self, vars: impl IntoIterator<Item = Var>) -> Result<(), StepError> {
        for v in vars {
            if v == 0 || v > self.num_vars {
                return Err(StepError::VarOutOfRange(v));
            }
        }
        Ok(())
    }

    /// Checks a RUP derivation: with all literals of `clause` assumed false,
    /// every hinted clause must propagate a unit except the last, which must
    /// be falsified.  A tautological clause is accepted outright.
    pub fn check_rup(&self, clause: &[Lit], hints: &[u64]) -> Result<(), StepError> {
        let mut assign: HashMap<Var, bool> = HashMap::new();
        for &l in clause {
            let v = l.unsigned_abs();
            let val = l < 0; // falsify the literal
            if let Some(&prev) = assign.get(&v) {
                if prev != val {
                    return Ok(()); // tautology, trivially implied
                }
            }
            assign.insert(v, val);
        }
        for (k, &h) in hints.iter().enumerate() {
            let c = self.clause_db.get(&h).ok_or(StepError::DeadClause(h))?;
            let mut unassigned: Vec<Lit> = Vec::new();
            let mut satisfied = false;
            for &l in c {
                match assign.get(&l.unsigned_abs()) {
                    Some(&val) => {
                        if val == (l > 0) {
                            satisfied = true;
                            break;
                        }
                    }
                    None => {
                        if !unassigned.contains(&l) {
                            unassigned.push(l);
                        }
                    }
                }
            }
            if satisfied {
                return Err(StepError::SatisfiedHint(h));
            }
            match unassigned.as_slice() {
                [] => {
                    return if k + 1 == hints.len() {
                        Ok(())
                    } else {
                        Err(StepError::TrailingHints(h))
                    };
                }
                [l] => {
                    assign.insert(l.unsigned_abs(), *l > 0);
                }
                _ => return Err(StepError::UselessHint(h)),
            }
        }
        Err(StepError::NoConflict)
    }

    fn sum_of_hints(&self, hints: &[u64]) -> Result<PackedXor, StepError> {
        if hints.is_empty() {
            return Err(StepError::EmptyHints);
        }
        let mut sum = PackedXor::zero(self.num_words);
        for &h in hints {
            let x = self.xor_db.get(&h).ok_or(StepError::DeadXor(h))?;
            sum.xor_assign(x);
        }
        Ok(sum)
    }

    /// Checks that the sum of the hinted XORs implies `clause`: the sum's
    /// variables all occur in the clause, and the unique assignment
    /// falsifying every clause literal falsifies the sum.  A tautological
    /// clause is accepted outright.
    pub fn check_clause_from_xors(&self, clause: &[Lit], hints: &[u64]) -> Result<(), StepError> {
        self.check_vars(clause.iter().map(|l| l.unsigned_abs()))?;
        if clause.iter().any(|l| clause.contains(&-l)) {
            // A tautological clause has no falsifying point and is implied
            // by anything, but the hints must still be live.
            self.sum_of_hints(hints)?;
            return Ok(());
        }
        let sum = self.sum_of_hints(hints)?;
        let mut clause_vars = vec![0u64; self.num_words];
        let mut falsifying = vec![0u64; self.num_words]; // vars assigned true
        for &l in clause {
            let bit = l.unsigned_abs() as usize - 1;
            let (w, b) = (bit / 64, bit % 64);
            if l < 0 {
                falsifying[w] |= 1 << b;
            }
            clause_vars[w] |= 1 << b;
        }
        if !sum.subset_of(&clause_vars) {
            return Err(StepError::NotSubset);
        }
        if sum.parity_under(&falsifying) == sum.rhs {
            return Err(StepError::PointSatisfiesXor);
        }
        Ok(())
    }

    /// Checks that the hinted clauses imply `xor` by exhausting its
    /// falsifying points: each of the `2^(k-1)` assignments over the XOR's
    /// variables with the wrong parity must falsify some hinted clause whose
    /// variables all lie within the XOR's.
    pub fn check_xor_from_clauses(&self, xor: &Xor, hints: &[u64]) -> Result<(), StepError> {
        let k = xor.vars().len();
        if k > MAX_XOR_WIDTH {
            return Err(StepError::WidthCap(k));
        }
        if hints.is_empty() {
            return Err(StepError::EmptyHints);
        }
        let index: HashMap<Var, usize> =
            xor.vars().iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut in_scope: Vec<&Clause> = Vec::new();
        for &h in hints {
            let c = self.clause_db.get(&h).ok_or(StepError::DeadClause(h))?;
            if c.iter().all(|l| index.contains_key(&l.unsigned_abs())) {
                in_scope.push(c);
            }
            // Hints on wider clauses are legal but can never be falsified
            // by a point over the XOR's variables, so they are ignored.
        }
        for point in 0u64..1 << k {
            let parity = point.count_ones() % 2 == 1;
            if parity == xor.rhs() {
                continue; // point satisfies the XOR
            }
            let covered = in_scope.iter().any(|c| {
                c.iter().all(|&l| {
                    let val = point >> index[&l.unsigned_abs()] & 1 == 1;
                    val != (l > 0) // literal evaluates to false
                })
            });
            if !covered {
                let bits: String = xor
                    .vars()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| format!("{}{v}", if point >> i & 1 == 1 { "" } else { "-" }))
                    .collect::<Vec<_>>()
                    .join(" ");
                return Err(StepError::UncoveredPoint(bits));
            }
        }
        Ok(())
    }

    fn bump_clause_id(&mut self, id: u64) -> Result<(), StepError> {
        if id <= self.last_clause_id {
            return Err(StepError::NonMonotoneId {
                space: "clause",
                id,
                last: self.last_clause_id,
            });
        }
        self.last_clause_id = id;
        Ok(())
    }

    fn bump_xor_id(&mut self, id: u64) -> Result<(), StepError> {
        if id <= self.last_xor_id {
            return Err(StepError::NonMonotoneId { space: "XOR", id, last: self.last_xor_id });
        }
        self.last_xor_id = id;
        Ok(())
    }

    /// Checks one step and, on success, applies its effect to the databases.
    pub fn apply_step(&mut self, step: &ProofStep) -> Result<(), StepError> {
        match step {
            ProofStep::OrigXor { id, xor } => {
                self.bump_xor_id(*id)?;
                self.check_vars(xor.vars().iter().copied())?;
                if !self.input_xors.contains(xor) {
                    return Err(StepError::NotInputXor(xor.dimacs_line()));
                }
                self.xor_db.insert(*id, PackedXor::from_xor(xor, self.num_words));
            }
            ProofStep::XorFromClauses { id, xor, hints } => {
                self.bump_xor_id(*id)?;
                self.check_vars(xor.vars().iter().copied())?;
                self.check_xor_from_clauses(xor, hints)?;
                self.xor_db.insert(*id, PackedXor::from_xor(xor, self.num_words));
            }
            ProofStep::XorAdd { id, xor, hints } => {
                self.bump_xor_id(*id)?;
                self.check_vars(xor.vars().iter().copied())?;
                let sum = self.sum_of_hints(hints)?;
                let stated = PackedXor::from_xor(xor, self.num_words);
                if stated != sum {
                    return Err(StepError::SumMismatch {
                        stated: xor.dimacs_line(),
                        computed: sum.to_xor().dimacs_line(),
                    });
                }
                self.xor_db.insert(*id, stated);
            }
            ProofStep::ClauseFromXors { id, clause, hints } => {
                self.bump_clause_id(*id)?;
                self.check_clause_from_xors(clause, hints)?;
                self.clause_db.insert(*id, clause.clone());
                if clause.is_empty() {
                    self.empty_derived = true;
                }
            }
            ProofStep::RupClause { id, clause, hints } => {
                self.bump_clause_id(*id)?;
                self.check_vars(clause.iter().map(|l| l.unsigned_abs()))?;
                self.check_rup(clause, hints)?;
                self.clause_db.insert(*id, clause.clone());
                if clause.is_empty() {
                    self.empty_derived = true;
                }
            }
            ProofStep::DeleteClauses { ids } => {
                for id in ids {
                    self.clause_db.remove(id).ok_or(StepError::DeadClause(*id))?;
                }
            }
            ProofStep::DeleteXors { ids } => {
                for id in ids {
                    self.xor_db.remove(id).ok_or(StepError::DeadXor(*id))?;
                }
            }
        }
        Ok(())
    }
}

/// Checks a full proof against the input formula.  Verified as soon as some
/// RUP or clause-from-XORs step derives the empty clause; later steps are
/// not examined.
pub fn check_proof(f: &CnfXorFormula, steps: &[ProofStep]) -> ProofOutcome {
    let mut state = ProofState::new(f);
    for (i, step) in steps.iter().enumerate() {
        if let Err(e) = state.apply_step(step) {
            return ProofOutcome::Rejected { step: Some(i), reason: e.to_string() };
        }
        if state.empty_derived() {
            return ProofOutcome::Verified;
        }
    }
    ProofOutcome::Rejected { step: None, reason: "no empty clause derived".into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_dimacs_cnfxor;

    const FIG3_FORMULA: &str = "p cnf 3 4\n1 2 0\n-1 -2 0\nx 1 2 -3 0\n-3 0\n";
    const FIG3_PROOF: &str =
        "o x 1 1 2 -3 0\ni x 2 1 2 0 1 2 0\nx 3 3 0 1 2 0\ni 4 3 0 3 0\n5 0 3 4 0\n";

    #[test]
    fn reference_proof_parses_to_five_steps() {
        let steps = parse_xlrup(FIG3_PROOF).unwrap();
        assert_eq!(steps.len(), 5);
        assert!(matches!(steps[0], ProofStep::OrigXor { id: 1, .. }));
        assert!(matches!(steps[1], ProofStep::XorFromClauses { id: 2, .. }));
        assert!(matches!(steps[2], ProofStep::XorAdd { id: 3, .. }));
        assert!(matches!(steps[3], ProofStep::ClauseFromXors { id: 4, .. }));
        match &steps[4] {
            ProofStep::RupClause { id: 5, clause, hints } => {
                assert!(clause.is_empty());
                assert_eq!(hints, &[3, 4]);
            }
            other => panic!("unexpected step {other:?}"),
        }
    }

    #[test]
    fn reference_proof_verifies() {
        let f = parse_dimacs_cnfxor(FIG3_FORMULA).unwrap();
        let steps = parse_xlrup(FIG3_PROOF).unwrap();
        assert_eq!(check_proof(&f, &steps), ProofOutcome::Verified);
    }

    #[test]
    fn flipped_sum_literal_is_rejected() {
        let f = parse_dimacs_cnfxor(FIG3_FORMULA).unwrap();
        let mutated = FIG3_PROOF.replace("x 3 3 0 1 2 0", "x 3 -3 0 1 2 0");
        let steps = parse_xlrup(&mutated).unwrap();
        match check_proof(&f, &steps) {
            ProofOutcome::Rejected { step: Some(2), reason } => {
                assert!(reason.contains("differs from the computed sum"), "reason: {reason}");
            }
            other => panic!("expected rejection at step 3, got {other:?}"),
        }
    }

    #[test]
    fn missing_empty_clause_is_rejected() {
        let f = parse_dimacs_cnfxor(FIG3_FORMULA).unwrap();
        let steps = parse_xlrup("o x 1 1 2 -3 0\n").unwrap();
        assert_eq!(
            check_proof(&f, &steps),
            ProofOutcome::Rejected { step: None, reason: "no empty clause derived".into() }
        );
        assert_eq!(
            check_proof(&f, &[]),
            ProofOutcome::Rejected { step: None, reason: "no empty clause derived".into() }
        );
    }

    #[test]
    fn deletion_steps_parse_and_kill_ids() {
        let steps = parse_xlrup("d 1 0\n").unwrap();
        assert_eq!(steps, vec![ProofStep::DeleteClauses { ids: vec![1] }]);

        let f = parse_dimacs_cnfxor("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        // Deleting clause 2 makes the RUP derivation lose its conflict.
        let steps = parse_xlrup("d 2 0\n3 0 1 2 0\n").unwrap();
        match check_proof(&f, &steps) {
            ProofOutcome::Rejected { step: Some(1), reason } => {
                assert!(reason.contains("not live"), "reason: {reason}");
            }
            other => panic!("unexpected outcome {other:?}"),
        }
        // Deleting a dead ID is itself an error.
        let steps = parse_xlrup("d 5 0\n").unwrap();
        assert!(matches!(check_proof(&f, &steps), ProofOutcome::Rejected { step: Some(0), .. }));
    }

    #[test]
    fn empty_text_parses_to_no_steps() {
        assert_eq!(parse_xlrup("").unwrap(), vec![]);
        assert_eq!(parse_xlrup("// only a comment\n").unwrap(), vec![]);
    }

    #[test]
    fn comments_and_whitespace_are_insignificant() {
        let text = "o x 1   1 2 -3 0 // introduce\n  i x 2 1 2 0\n 1 2 0\n";
        let steps = parse_xlrup(text).unwrap();
        assert_eq!(steps.len(), 2);
    }

    #[test]
    fn non_monotone_ids_fail_to_parse() {
        assert!(parse_xlrup("4 1 0 1 0\n3 2 0 1 0\n").is_err());
        assert!(parse_xlrup("o x 2 1 0\no x 2 1 0\n").is_err());
        // Clause and XOR spaces are independent.
        assert!(parse_xlrup("o x 7 1 0\n2 1 0 1 0\n").is_ok());
    }

    #[test]
    fn rup_check_on_reference_derivations() {
        let f = parse_dimacs_cnfxor("p cnf 3 2\n-3 0\n3 0\n").unwrap();
        let st = ProofState::new(&f);
        // Empty clause, hints resolve the two units (IDs 1 and 2 here).
        assert_eq!(st.check_rup(&[], &[1, 2]), Ok(()));
        // A clause hinted by its own copy: falsified immediately.
        let f = parse_dimacs_cnfxor("p cnf 1 1\n1 0\n").unwrap();
        let st = ProofState::new(&f);
        assert_eq!(st.check_rup(&[1], &[1]), Ok(()));
        // No conflict reachable.
        let f = parse_dimacs_cnfxor("p cnf 2 1\n1 2 0\n").unwrap();
        let st = ProofState::new(&f);
        assert_eq!(st.check_rup(&[], &[1]), Err(StepError::UselessHint(1)));
        assert_eq!(st.check_rup(&[], &[]), Err(StepError::NoConflict));
    }

    #[test]
    fn rup_rejects_trailing_hints() {
        let f = parse_dimacs_cnfxor("p cnf 2 3\n1 0\n-1 0\n2 0\n").unwrap();
        let st = ProofState::new(&f);
        assert_eq!(st.check_rup(&[], &[1, 2]), Ok(()));
        assert_eq!(st.check_rup(&[], &[1, 2, 3]), Err(StepError::TrailingHints(2)));
    }

    #[test]
    fn xor_sum_reference_cases() {
        let a = Xor::new([1, 2, 3], false);
        let b = Xor::new([1, 2], true);
        let s = xor_sum(&[a.clone(), b]);
        assert_eq!(s, Xor::new([3], true));
        assert_eq!(xor_sum(&[a.clone(), a.clone()]), Xor::new([], false));
        // Order independence.
        let c = Xor::new([2, 4], true);
        let x1 = xor_sum(&[a.clone(), c.clone()]);
        let x2 = xor_sum(&[c, a]);
        assert_eq!(x1, x2);
    }

    #[test]
    fn packed_and_canonical_sums_agree() {
        let f = parse_dimacs_cnfxor("p cnf 70 0\n").unwrap();
        let st = ProofState::new(&f);
        let a = Xor::new([1, 64, 65, 70], true);
        let b = Xor::new([2, 64, 70], true);
        let pa = PackedXor::from_xor(&a, st.num_words);
        let mut sum = pa.clone();
        sum.xor_assign(&PackedXor::from_xor(&b, st.num_words));
        assert_eq!(sum.to_xor(), xor_sum(&[a, b]));
        assert_eq!(sum.to_xor(), Xor::new([1, 2, 65], false));
    }

    #[test]
    fn clause_from_xors_on_reference_derivations() {
        let f = parse_dimacs_cnfxor("p cnf 3 2\nx 3 0\nx 1 2 0\n").unwrap();
        // Hand-build the XOR database via apply_step on OrigXor steps.
        let mut st = ProofState::new(&f);
        st.apply_step(&ProofStep::OrigXor { id: 1, xor: Xor::new([3], true) }).unwrap();
        st.apply_step(&ProofStep::OrigXor { id: 2, xor: Xor::new([1, 2], true) }).unwrap();

        assert_eq!(st.check_clause_from_xors(&[3], &[1]), Ok(()));
        assert_eq!(st.check_clause_from_xors(&[1], &[2]), Err(StepError::NotSubset));
        assert_eq!(st.check_clause_from_xors(&[1, 2], &[2]), Ok(()));
        // Wrong polarity: the falsifying point satisfies the XOR.
        assert_eq!(st.check_clause_from_xors(&[-3], &[1]), Err(StepError::PointSatisfiesXor));
    }

    #[test]
    fn xor_from_clauses_on_reference_derivations() {
        let f = parse_dimacs_cnfxor("p cnf 2 3\n1 2 0\n-1 -2 0\n1 0\n").unwrap();
        let st = ProofState::new(&f);
        let x = Xor::new([1, 2], true);
        assert_eq!(st.check_xor_from_clauses(&x, &[1, 2]), Ok(()));
        match st.check_xor_from_clauses(&x, &[1]) {
            Err(StepError::UncoveredPoint(p)) => assert_eq!(p, "1 2"),
            other => panic!("unexpected {other:?}"),
        }
        let unit = Xor::new([1], true);
        assert_eq!(st.check_xor_from_clauses(&unit, &[3]), Ok(()));
    }

    #[test]
    fn print_parse_round_trip() {
        let steps = parse_xlrup(FIG3_PROOF).unwrap();
        let printed = print_xlrup(&steps);
        let reparsed = parse_xlrup(&printed).unwrap();
        assert_eq!(steps, reparsed);
    }
}
