//! A small proof-emitting CNF-XOR satisfiability solver.
//!
//! The search is classic conflict-driven clause learning with two-watched
//! literals and first-UIP conflict analysis.  Design choices here serve
//! reproducibility and proof emission rather than speed:
//!
//! * decisions always pick the lowest-index unassigned variable and assign
//!   it false, and there are no restarts, so runs are deterministic;
//! * learned clauses are not minimized — every literal resolved out would
//!   invalidate the recorded antecedent chain that becomes the RUP hints;
//! * XOR constraints are blasted into clauses at load time, one
//!   clause-from-XOR proof step per blasted clause, which keeps the whole
//!   refutation inside the XLRUP format.
//!
//! Every UNSAT answer carries an XLRUP proof that [`crate::xlrup::check_proof`]
//! accepts on the same instance; SAT answers carry a model that passes
//! `check_sol`.

use thiserror::Error;

use crate::formula::{Assignment, Clause, CnfXorFormula, Lit, Xor};
use crate::xlrup::ProofStep;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("conflict budget of {0} exceeded")]
    BudgetExceeded(u64),
    #[error("XOR over {width} variables exceeds the blast cap of {cap}")]
    BlastWidth { width: usize, cap: usize },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Conflicts allowed before the solver gives up with
    /// [`SolverError::BudgetExceeded`]; it never answers wrongly.
    pub max_conflicts: u64,
    /// Widest XOR that may be blasted into clauses (2^(k-1) of them).
    pub blast_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig { max_conflicts: u64::MAX, blast_cap: 16 }
    }
}

/// Outcome of a single satisfiability call.
#[derive(Debug, Clone)]
pub enum SolverResult {
    Sat(Assignment),
    Unsat(Vec<ProofStep>),
}

/// Outcome of bounded model enumeration: up to `thresh` models, pairwise
/// distinct after projection.  `exhausted` means the space was emptied
/// before the threshold, in which case `proof` refutes the input instance
/// extended with one blocking clause per listed model.
#[derive(Debug, Clone)]
pub struct BoundedResult {
    pub models: Vec<Assignment>,
    pub exhausted: bool,
    pub proof: Option<Vec<ProofStep>>,
}

/// Clauses over the variables of `x` whose falsifying assignments are
/// exactly the XOR's: one blocking clause per wrong-parity point, each
/// justified by a clause-from-XOR step hinting `xor_id`.  Clause IDs are
/// assigned from `next_clause_id` upward; returns the clauses, their proof
/// steps, and the next free clause ID.
pub fn blast_xor(
    x: &Xor,
    xor_id: u64,
    next_clause_id: u64,
    cap: usize,
) -> Result<(Vec<Clause>, Vec<ProofStep>, u64), SolverError> {
    let k = x.vars().len();
    if k > cap {
        return Err(SolverError::BlastWidth { width: k, cap });
    }
    let mut clauses = Vec::new();
    let mut steps = Vec::new();
    let mut id = next_clause_id;
    for point in 0u64..1 << k {
        let parity = point.count_ones() % 2 == 1;
        if parity == x.rhs() {
            continue; // point satisfies the XOR
        }
        let clause: Clause = x
            .vars()
            .iter()
            .enumerate()
            .map(|(i, &v)| if point >> i & 1 == 1 { -(v as Lit) } else { v as Lit })
            .collect();
        steps.push(ProofStep::ClauseFromXors { id, clause: clause.clone(), hints: vec![xor_id] });
        clauses.push(clause);
        id += 1;
    }
    Ok((clauses, steps, id))
}

/// Decides the instance.  Deterministic: same formula, same answer, same
/// proof bytes.
pub fn solve(f: &CnfXorFormula, config: &SolverConfig) -> Result<SolverResult, SolverError> {
    Search::new(f, config)?.run()
}

/// Bounded model enumeration (the `BoundedSAT` contract): solve, record the
/// model, block its projection, repeat until `thresh` models are found or
/// the instance becomes unsatisfiable.  Each iteration solves the grown
/// instance from scratch, so the final proof refutes exactly the formula
/// with all blocking clauses appended — the same instance an independent
/// checker reconstructs.
pub fn bounded_count(
    f: &CnfXorFormula,
    thresh: u64,
    xors: &[Xor],
    config: &SolverConfig,
) -> Result<BoundedResult, SolverError> {
    let mut instance = f.add_xors(xors);
    let mut models: Vec<Assignment> = Vec::new();
    loop {
        if models.len() as u64 >= thresh {
            return Ok(BoundedResult { models, exhausted: false, proof: None });
        }
        match solve(&instance, config)? {
            SolverResult::Sat(model) => {
                debug_assert!(instance.check_sol(&model));
                instance = instance.ban_sol(&model);
                models.push(model);
            }
            SolverResult::Unsat(proof) => {
                return Ok(BoundedResult { models, exhausted: true, proof: Some(proof) });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Internals

/// Literal encoding: variable `v` (1-based) maps to `2(v-1)` (positive) and
/// `2(v-1)+1` (negative).
type LitIdx = usize;

fn lit_to_idx(l: Lit) -> LitIdx {
    let v = l.unsigned_abs() as usize;
    (v - 1) * 2 + usize::from(l < 0)
}

fn idx_to_lit(i: LitIdx) -> Lit {
    let v = (i / 2 + 1) as Lit;
    if i % 2 == 0 {
        v
    } else {
        -v
    }
}

fn neg(i: LitIdx) -> LitIdx {
    i ^ 1
}

fn var_of(i: LitIdx) -> usize {
    i / 2
}

struct Cls {
    lits: Vec<LitIdx>,
    id: u64,
}

struct Search {
    num_vars: usize,
    clauses: Vec<Cls>,
    watches: Vec<Vec<usize>>,      // literal index -> clause arena indices
    assigns: Vec<Option<bool>>,    // per 0-based variable
    reason: Vec<Option<usize>>,    // per variable, clause arena index
    level: Vec<usize>,             // per variable
    trail: Vec<LitIdx>,
    trail_lim: Vec<usize>,
    qhead: usize,
    proof: Vec<ProofStep>,
    next_clause_id: u64,
    conflicts: u64,
    max_conflicts: u64,
}

enum LoadOutcome {
    Ok,
    Conflict(usize),
}

impl Search {
    fn new(f: &CnfXorFormula, config: &SolverConfig) -> Result<Search, SolverError> {
        let n = f.num_vars() as usize;
        let mut s = Search {
            num_vars: n,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * n],
            assigns: vec![None; n],
            reason: vec![None; n],
            level: vec![0; n],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            proof: Vec::new(),
            next_clause_id: f.clauses().len() as u64 + 1,
            conflicts: 0,
            max_conflicts: config.max_conflicts,
        };

        // Input XORs enter the proof via `o x` steps, then blast to clauses.
        let mut blasted: Vec<Clause> = Vec::new();
        for (i, x) in f.xors().iter().enumerate() {
            s.proof.push(ProofStep::OrigXor { id: i as u64 + 1, xor: x.clone() });
        }
        for (i, x) in f.xors().iter().enumerate() {
            let (clauses, steps, next) =
                blast_xor(x, i as u64 + 1, s.next_clause_id, config.blast_cap)?;
            s.proof.extend(steps);
            s.next_clause_id = next;
            blasted.extend(clauses);
        }

        // Input clauses carry IDs 1..=n in file order; blasted clauses follow.
        let input_ids = (1u64..).take(f.clauses().len());
        let blast_ids = (f.clauses().len() as u64 + 1..).take(blasted.len());
        for (c, id) in f
            .clauses()
            .iter()
            .chain(blasted.iter())
            .zip(input_ids.chain(blast_ids))
        {
            if let LoadOutcome::Conflict(arena_idx) = s.load_clause(c, id) {
                let empty_id = s.fresh_clause_id();
                let hints = s.final_hints(arena_idx);
                s.proof.push(ProofStep::RupClause { id: empty_id, clause: vec![], hints });
                return Ok(s); // run() will notice the empty clause
            }
        }
        Ok(s)
    }

    fn fresh_clause_id(&mut self) -> u64 {
        let id = self.next_clause_id;
        self.next_clause_id += 1;
        id
    }

    /// Adds one input or blasted clause.  Duplicate literals are collapsed
    /// internally (RUP semantics are unaffected), tautologies are never
    /// attached, units go straight onto the trail.
    fn load_clause(&mut self, c: &Clause, id: u64) -> LoadOutcome {
        let mut lits: Vec<LitIdx> = Vec::with_capacity(c.len());
        for &l in c {
            let i = lit_to_idx(l);
            if lits.contains(&neg(i)) {
                return LoadOutcome::Ok; // tautology can never conflict
            }
            if !lits.contains(&i) {
                lits.push(i);
            }
        }
        let arena_idx = self.clauses.len();
        match lits.as_slice() {
            [] => {
                self.clauses.push(Cls { lits, id });
                LoadOutcome::Conflict(arena_idx)
            }
            [unit] => {
                let unit = *unit;
                self.clauses.push(Cls { lits, id });
                match self.lit_value(unit) {
                    Some(false) => LoadOutcome::Conflict(arena_idx),
                    Some(true) => LoadOutcome::Ok,
                    None => {
                        self.enqueue(unit, Some(arena_idx));
                        LoadOutcome::Ok
                    }
                }
            }
            _ => {
                self.watches[lits[0]].push(arena_idx);
                self.watches[lits[1]].push(arena_idx);
                self.clauses.push(Cls { lits, id });
                LoadOutcome::Ok
            }
        }
    }

    fn lit_value(&self, i: LitIdx) -> Option<bool> {
        self.assigns[var_of(i)].map(|v| v == (i % 2 == 0))
    }

    fn current_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn enqueue(&mut self, i: LitIdx, reason: Option<usize>) {
        let v = var_of(i);
        debug_assert!(self.assigns[v].is_none());
        self.assigns[v] = Some(i % 2 == 0);
        self.reason[v] = reason;
        self.level[v] = self.current_level();
        self.trail.push(i);
    }

    /// Unit propagation; returns the arena index of a conflicting clause.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = neg(p);
            let mut watch_list = std::mem::take(&mut self.watches[false_lit]);
            let mut w = 0;
            while w < watch_list.len() {
                let ci = watch_list[w];
                // Ensure the falsified literal sits in slot 1.
                if self.clauses[ci].lits[0] == false_lit {
                    self.clauses[ci].lits.swap(0, 1);
                }
                let first = self.clauses[ci].lits[0];
                if self.lit_value(first) == Some(true) {
                    w += 1; // clause satisfied, keep the watch
                    continue;
                }
                // Look for a non-false replacement watch.
                let replacement = (2..self.clauses[ci].lits.len())
                    .find(|&k| self.lit_value(self.clauses[ci].lits[k]) != Some(false));
                match replacement {
                    Some(k) => {
                        self.clauses[ci].lits.swap(1, k);
                        let new_watch = self.clauses[ci].lits[1];
                        self.watches[new_watch].push(ci);
                        watch_list.swap_remove(w);
                    }
                    None => {
                        w += 1;
                        if self.lit_value(first) == Some(false) {
                            // Conflict: put the list back and report.
                            self.watches[false_lit] = watch_list;
                            return Some(ci);
                        }
                        self.enqueue(first, Some(ci));
                    }
                }
            }
            self.watches[false_lit] = watch_list;
        }
        None
    }

    /// First-UIP conflict analysis.  Returns the learned clause (asserting
    /// literal first), the backjump level, and the RUP hint chain: the
    /// antecedents in resolution order are conflict first, then reasons
    /// newest first, so reversing yields reasons in trail order with the
    /// conflict last — exactly the order in which hinted unit propagation
    /// re-derives the clause.
    fn analyze(&self, conflict: usize) -> (Vec<LitIdx>, usize, Vec<u64>) {
        let mut seen = vec![false; self.num_vars];
        let mut learnt: Vec<LitIdx> = vec![0]; // slot 0 for the UIP
        let mut antecedents_rev: Vec<u64> = Vec::new();
        let mut pending = 0usize;
        let mut p: Option<LitIdx> = None;
        let mut confl = conflict;
        let mut idx = self.trail.len();

        loop {
            antecedents_rev.push(self.clauses[confl].id);
            for &q in &self.clauses[confl].lits {
                if Some(q) == p {
                    continue; // the literal being resolved on
                }
                let v = var_of(q);
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                if self.level[v] == self.current_level() {
                    pending += 1;
                } else {
                    // Below the conflict level (including level 0: kept so
                    // the hint chain never relies on out-of-proof facts).
                    learnt.push(q);
                }
            }
            // Walk back to the newest trail literal that awaits resolution.
            loop {
                idx -= 1;
                if seen[var_of(self.trail[idx])] {
                    break;
                }
            }
            let t = self.trail[idx];
            pending -= 1;
            if pending == 0 {
                learnt[0] = neg(t); // t is the first UIP
                break;
            }
            confl = self.reason[var_of(t)].expect("non-UIP conflict literal has a reason");
            p = Some(t);
        }

        let backjump = learnt[1..]
            .iter()
            .map(|&q| self.level[var_of(q)])
            .max()
            .unwrap_or(0);
        antecedents_rev.reverse();
        (learnt, backjump, antecedents_rev)
    }

    /// Resolves a level-0 conflict down to the empty clause: every literal
    /// of the conflict has a level-0 reason chain.  Hints come out in trail
    /// order with the conflict last, as in [`Search::analyze`].
    fn final_hints(&self, conflict: usize) -> Vec<u64> {
        let mut seen = vec![false; self.num_vars];
        let mut hints_rev = vec![self.clauses[conflict].id];
        for &q in &self.clauses[conflict].lits {
            seen[var_of(q)] = true;
        }
        for idx in (0..self.trail.len()).rev() {
            let v = var_of(self.trail[idx]);
            if !seen[v] {
                continue;
            }
            let r = self.reason[v].expect("level-0 assignment has a reason");
            hints_rev.push(self.clauses[r].id);
            for &q in &self.clauses[r].lits {
                seen[var_of(q)] = true;
            }
        }
        hints_rev.reverse();
        hints_rev
    }

    fn pop_to(&mut self, target_level: usize) {
        while self.trail_lim.len() > target_level {
            let boundary = self.trail_lim.pop().unwrap();
            while self.trail.len() > boundary {
                let i = self.trail.pop().unwrap();
                self.assigns[var_of(i)] = None;
                self.reason[var_of(i)] = None;
            }
        }
        self.qhead = self.trail.len();
    }

    /// Records a learned clause in the arena and the proof; returns its
    /// arena index.  The clause must have its asserting literal in slot 0;
    /// slot 1 gets the highest-level remaining literal so the watches stay
    /// valid across backjumps.
    fn add_learned(&mut self, mut lits: Vec<LitIdx>, hints: Vec<u64>) -> usize {
        let id = self.fresh_clause_id();
        let clause: Clause = lits.iter().map(|&i| idx_to_lit(i)).collect();
        self.proof.push(ProofStep::RupClause { id, clause, hints });
        if lits.len() > 1 {
            let max_at = (1..lits.len())
                .max_by_key(|&k| self.level[var_of(lits[k])])
                .unwrap();
            lits.swap(1, max_at);
            let arena_idx = self.clauses.len();
            self.watches[lits[0]].push(arena_idx);
            self.watches[lits[1]].push(arena_idx);
            self.clauses.push(Cls { lits, id });
            arena_idx
        } else {
            let arena_idx = self.clauses.len();
            self.clauses.push(Cls { lits, id });
            arena_idx
        }
    }

    fn run(mut self) -> Result<SolverResult, SolverError> {
        if matches!(self.proof.last(), Some(ProofStep::RupClause { clause, .. }) if clause.is_empty())
        {
            return Ok(SolverResult::Unsat(self.proof));
        }
        loop {
            if let Some(conflict) = self.propagate() {
                self.conflicts += 1;
                if self.conflicts > self.max_conflicts {
                    return Err(SolverError::BudgetExceeded(self.max_conflicts));
                }
                if self.current_level() == 0 {
                    let id = self.fresh_clause_id();
                    let hints = self.final_hints(conflict);
                    self.proof.push(ProofStep::RupClause { id, clause: vec![], hints });
                    return Ok(SolverResult::Unsat(self.proof));
                }
                let (learnt, backjump, hints) = self.analyze(conflict);
                self.pop_to(backjump);
                let asserting = learnt[0];
                let arena_idx = self.add_learned(learnt, hints);
                self.enqueue(asserting, Some(arena_idx));
            } else {
                match self.assigns.iter().position(|a| a.is_none()) {
                    None => {
                        let values = self.assigns.iter().map(|a| a.unwrap()).collect();
                        return Ok(SolverResult::Sat(Assignment::from_values(values)));
                    }
                    Some(v) => {
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(v * 2 + 1, None); // decide: variable v+1 := false
                    }
                }
            }
        }
    }
}
