//! CNF-XOR formulas in extended DIMACS form.
//!
//! The text format is line based.  A file consists of
//!
//! * comment lines starting with `c`, among which `c ind v1 ... vk 0` lines
//!   declare the projection (sampling) set,
//! * exactly one header `p cnf <num_vars> <num_constraints>` preceding all
//!   constraint lines, where `<num_constraints>` counts clause and XOR lines
//!   together,
//! * clause lines `l1 ... lk 0`,
//! * XOR lines `x l1 ... lk 0`, read as the constraint `l1 XOR ... XOR lk = 1`.
//!
//! Every literal is a non-zero integer whose variable lies in
//! `1..=num_vars`.  When no `c ind` line is present the projection set
//! defaults to all variables.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Variables are 1-based DIMACS indices.
pub type Var = u32;

/// Literals are non-zero DIMACS integers: `v` for the positive literal of
/// variable `v`, `-v` for its negation.
pub type Lit = i32;

/// A disjunction of literals.
pub type Clause = Vec<Lit>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("header declares {declared} constraints but the file contains {found}")]
    ConstraintCountMismatch { declared: usize, found: usize },
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormulaError {
    FormulaError::Parse { line, msg: msg.into() }
}

/// An XOR constraint in canonical form: a sorted, duplicate-free set of
/// variables and a right-hand-side parity bit.  The constraint is satisfied
/// when the number of true variables has parity `rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Xor {
    vars: Vec<Var>,
    rhs: bool,
}

impl Xor {
    /// Builds a canonical XOR from a set of variables and a parity bit.
    /// Repeated variables cancel in pairs (`v XOR v = 0`).
    pub fn new(vars: impl IntoIterator<Item = Var>, rhs: bool) -> Xor {
        let mut vs: Vec<Var> = vars.into_iter().collect();
        vs.sort_unstable();
        let mut canon = Vec::with_capacity(vs.len());
        let mut i = 0;
        while i < vs.len() {
            let mut run = 1;
            while i + run < vs.len() && vs[i + run] == vs[i] {
                run += 1;
            }
            if run % 2 == 1 {
                canon.push(vs[i]);
            }
            i += run;
        }
        Xor { vars: canon, rhs }
    }

    /// Builds a canonical XOR from the literals of a DIMACS `x` line.  The
    /// line `x l1 ... lk 0` asserts `l1 XOR ... XOR lk = 1`; each negated
    /// literal flips the right-hand side, so the parity bit of the canonical
    /// form is `1 XOR (#negative literals mod 2)`.
    pub fn from_literals(lits: &[Lit]) -> Xor {
        let mut rhs = true;
        let mut vars = Vec::with_capacity(lits.len());
        for &l in lits {
            debug_assert!(l != 0);
            if l < 0 {
                rhs = !rhs;
            }
            vars.push(l.unsigned_abs());
        }
        Xor::new(vars, rhs)
    }

    /// The canonical (sorted, duplicate-free) variable set.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn rhs(&self) -> bool {
        self.rhs
    }

    /// True iff the number of variables assigned true has parity `rhs`.
    pub fn satisfied_by(&self, a: &Assignment) -> bool {
        let ones = self.vars.iter().filter(|&&v| a.value(v)).count();
        (ones % 2 == 1) == self.rhs
    }

    /// The canonical literal encoding of the constraint, the inverse of
    /// [`Xor::from_literals`].
    ///
    /// A non-empty constraint with `rhs = 1` lists all variables positive;
    /// with `rhs = 0` the first literal is negated.  The empty false
    /// constraint is the empty literal list.  The empty true constraint has
    /// no direct encoding and becomes the cancelling pair `1 -1`, which
    /// re-parses to the same canonical form (this requires the enclosing
    /// formula to have at least one variable).
    pub fn to_literals(&self) -> Vec<Lit> {
        if self.vars.is_empty() {
            return if self.rhs { vec![] } else { vec![1, -1] };
        }
        self.vars
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == 0 && !self.rhs { -(v as Lit) } else { v as Lit })
            .collect()
    }

    /// Renders the constraint as a DIMACS `x` line (without newline).
    pub fn dimacs_line(&self) -> String {
        let mut s = String::from("x");
        for l in self.to_literals() {
            s.push_str(&format!(" {l}"));
        }
        s.push_str(" 0");
        s
    }
}

impl fmt::Display for Xor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dimacs_line())
    }
}

/// A total assignment to the variables `1..=num_vars`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Assignment {
    /// Wraps a vector of values; `values[v - 1]` is the value of variable `v`.
    pub fn from_values(values: Vec<bool>) -> Assignment {
        Assignment { values }
    }

    /// Builds the assignment encoded by the low `num_vars` bits of `mask`,
    /// with bit `v - 1` giving the value of variable `v`.
    pub fn from_mask(num_vars: u32, mask: u64) -> Assignment {
        assert!(num_vars <= 64);
        Assignment {
            values: (0..num_vars).map(|i| mask >> i & 1 == 1).collect(),
        }
    }

    /// Parses a solution line: the literals of all `num_vars` variables in
    /// ascending variable order, followed by a terminating `0`.
    pub fn parse_dimacs_line(line: &str, num_vars: u32) -> Result<Assignment, String> {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != num_vars as usize + 1 {
            return Err(format!(
                "solution line has {} tokens, expected {} literals plus a terminating 0",
                toks.len(),
                num_vars
            ));
        }
        let mut values = Vec::with_capacity(num_vars as usize);
        for (i, tok) in toks.iter().enumerate() {
            let lit: i64 = tok
                .parse()
                .map_err(|_| format!("bad literal token {tok:?}"))?;
            if i == num_vars as usize {
                if lit != 0 {
                    return Err("solution line does not end in 0".into());
                }
                break;
            }
            let expect = i as i64 + 1;
            if lit != expect && lit != -expect {
                return Err(format!(
                    "solution literal {lit} out of order: position {} must mention variable {expect}",
                    i + 1
                ));
            }
            values.push(lit > 0);
        }
        Ok(Assignment { values })
    }

    pub fn num_vars(&self) -> u32 {
        self.values.len() as u32
    }

    /// The value of variable `v` (1-based).
    pub fn value(&self, v: Var) -> bool {
        self.values[v as usize - 1]
    }

    /// Renders the assignment as a solution line: every variable as a signed
    /// literal in ascending order, then a terminating `0`.
    pub fn dimacs_line(&self) -> String {
        let mut s = String::new();
        for (i, &b) in self.values.iter().enumerate() {
            let v = i + 1;
            if b {
                s.push_str(&format!("{v} "));
            } else {
                s.push_str(&format!("-{v} "));
            }
        }
        s.push('0');
        s
    }
}

/// The restriction of an assignment to the projection set, in projection
/// order.  Two solutions are counted as one model exactly when their
/// projections are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProjectedAssignment {
    values: Vec<bool>,
}

impl ProjectedAssignment {
    pub fn values(&self) -> &[bool] {
        &self.values
    }
}

/// A CNF-XOR formula with a projection set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfXorFormula {
    num_vars: u32,
    clauses: Vec<Clause>,
    xors: Vec<Xor>,
    proj: Vec<Var>,
}

impl CnfXorFormula {
    /// Builds a formula from parts.  `proj = None` selects the default
    /// projection set, all of `1..=num_vars`.  Panics if a clause literal,
    /// XOR variable or projection variable is out of range.
    pub fn new(
        num_vars: u32,
        clauses: Vec<Clause>,
        xors: Vec<Xor>,
        proj: Option<Vec<Var>>,
    ) -> CnfXorFormula {
        for c in &clauses {
            for &l in c {
                assert!(l != 0 && l.unsigned_abs() <= num_vars, "literal {l} out of range");
            }
        }
        for x in &xors {
            for &v in x.vars() {
                assert!(v >= 1 && v <= num_vars, "XOR variable {v} out of range");
            }
        }
        let proj = match proj {
            Some(mut p) => {
                p.sort_unstable();
                p.dedup();
                for &v in &p {
                    assert!(v >= 1 && v <= num_vars, "projection variable {v} out of range");
                }
                p
            }
            None => (1..=num_vars).collect(),
        };
        CnfXorFormula { num_vars, clauses, xors, proj }
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn xors(&self) -> &[Xor] {
        &self.xors
    }

    /// The projection set, sorted ascending and duplicate-free.
    pub fn proj(&self) -> &[Var] {
        &self.proj
    }

    /// True iff the projection set was not narrowed below all variables.
    fn proj_is_default(&self) -> bool {
        self.proj.len() == self.num_vars as usize
    }

    /// True iff `a` satisfies every clause and every XOR constraint.  The
    /// projection set plays no role here.
    pub fn check_sol(&self, a: &Assignment) -> bool {
        assert_eq!(a.num_vars(), self.num_vars, "assignment width mismatch");
        self.clauses
            .iter()
            .all(|c| c.iter().any(|&l| a.value(l.unsigned_abs()) == (l > 0)))
            && self.xors.iter().all(|x| x.satisfied_by(a))
    }

    /// Restricts `a` to the projection set.
    pub fn project(&self, a: &Assignment) -> ProjectedAssignment {
        assert_eq!(a.num_vars(), self.num_vars, "assignment width mismatch");
        ProjectedAssignment {
            values: self.proj.iter().map(|&v| a.value(v)).collect(),
        }
    }

    /// Returns the formula extended with a blocking clause that excludes
    /// every solution whose projection equals that of `a`: for each
    /// projection variable the clause contains the literal falsified by `a`.
    pub fn ban_sol(&self, a: &Assignment) -> CnfXorFormula {
        assert_eq!(a.num_vars(), self.num_vars, "assignment width mismatch");
        assert!(!self.proj.is_empty(), "cannot ban a solution on an empty projection set");
        let ban: Clause = self
            .proj
            .iter()
            .map(|&v| if a.value(v) { -(v as Lit) } else { v as Lit })
            .collect();
        let mut out = self.clone();
        out.clauses.push(ban);
        out
    }

    /// Returns the formula extended with the given XOR constraints.
    pub fn add_xors(&self, xs: &[Xor]) -> CnfXorFormula {
        for x in xs {
            for &v in x.vars() {
                assert!(v >= 1 && v <= self.num_vars, "XOR variable {v} out of range");
            }
        }
        let mut out = self.clone();
        out.xors.extend_from_slice(xs);
        out
    }
}

fn parse_lit(tok: &str, num_vars: u32, line: usize) -> Result<Lit, FormulaError> {
    let l: i64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("bad literal token {tok:?}")))?;
    if l == 0 {
        return Err(parse_err(line, "unexpected 0 inside a constraint"));
    }
    if l.unsigned_abs() > num_vars as u64 {
        return Err(parse_err(line, format!("literal {l} exceeds num_vars = {num_vars}")));
    }
    Ok(l as Lit)
}

/// Splits a constraint line into the literal tokens before the terminating
/// `0` and rejects trailing garbage.
fn body_tokens<'a>(toks: &[&'a str], line: usize) -> Result<Vec<&'a str>, FormulaError> {
    match toks.iter().position(|&t| t == "0") {
        None => Err(parse_err(line, "constraint line is not terminated by 0")),
        Some(i) if i + 1 != toks.len() => {
            Err(parse_err(line, "tokens after the terminating 0"))
        }
        Some(i) => Ok(toks[..i].to_vec()),
    }
}

/// Parses an extended DIMACS CNF-XOR file.
pub fn parse_dimacs_cnfxor(text: &str) -> Result<CnfXorFormula, FormulaError> {
    let mut header: Option<(u32, usize)> = None;
    let mut clauses: Vec<Clause> = Vec::new();
    let mut xors: Vec<Xor> = Vec::new();
    let mut ind_vars: Vec<Var> = Vec::new();
    let mut saw_ind = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "c" => {
                if toks.get(1) == Some(&"ind") {
                    let (num_vars, _) = header
                        .ok_or_else(|| parse_err(line_no, "`c ind` line before `p cnf` header"))?;
                    saw_ind = true;
                    for tok in body_tokens(&toks[2..], line_no)? {
                        let l = parse_lit(tok, num_vars, line_no)?;
                        if l < 0 {
                            return Err(parse_err(line_no, "negative variable in `c ind` line"));
                        }
                        ind_vars.push(l as Var);
                    }
                }
                // Any other `c` line is a plain comment.
            }
            "p" => {
                if header.is_some() {
                    return Err(parse_err(line_no, "duplicate `p cnf` header"));
                }
                if toks.len() != 4 || toks[1] != "cnf" {
                    return Err(parse_err(line_no, "malformed header, expected `p cnf <vars> <constraints>`"));
                }
                let nv: u32 = toks[2]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad variable count {:?}", toks[2])))?;
                let nc: usize = toks[3]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad constraint count {:?}", toks[3])))?;
                header = Some((nv, nc));
            }
            "x" => {
                let (num_vars, _) =
                    header.ok_or_else(|| parse_err(line_no, "constraint before `p cnf` header"))?;
                let lits = body_tokens(&toks[1..], line_no)?
                    .iter()
                    .map(|t| parse_lit(t, num_vars, line_no))
                    .collect::<Result<Vec<Lit>, _>>()?;
                xors.push(Xor::from_literals(&lits));
            }
            _ => {
                let (num_vars, _) =
                    header.ok_or_else(|| parse_err(line_no, "constraint before `p cnf` header"))?;
                let lits = body_tokens(&toks, line_no)?
                    .iter()
                    .map(|t| parse_lit(t, num_vars, line_no))
                    .collect::<Result<Vec<Lit>, _>>()?;
                clauses.push(lits);
            }
        }
    }

    let (num_vars, num_constraints) = header.ok_or(FormulaError::MissingHeader)?;
    let found = clauses.len() + xors.len();
    if found != num_constraints {
        return Err(FormulaError::ConstraintCountMismatch { declared: num_constraints, found });
    }

    let proj = if saw_ind {
        let mut p = ind_vars;
        p.sort_unstable();
        p.dedup();
        Some(p)
    } else {
        None
    };
    Ok(CnfXorFormula::new(num_vars, clauses, xors, proj))
}

/// Renders a formula back to extended DIMACS text.  Clause and XOR sets, the
/// projection set and `num_vars` round-trip exactly through
/// [`parse_dimacs_cnfxor`]; comment lines and the relative interleaving of
/// clause and XOR lines are not preserved.
pub fn print_dimacs_cnfxor(f: &CnfXorFormula) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "p cnf {} {}\n",
        f.num_vars(),
        f.clauses().len() + f.xors().len()
    ));
    if !f.proj_is_default() {
        out.push_str("c ind");
        for v in f.proj() {
            out.push_str(&format!(" {v}"));
        }
        out.push_str(" 0\n");
    }
    for c in f.clauses() {
        for l in c {
            out.push_str(&format!("{l} "));
        }
        out.push_str("0\n");
    }
    for x in f.xors() {
        out.push_str(&x.dimacs_line());
        out.push('\n');
    }
    out
}

/// The set of projections of all listed assignments; used to check that
/// solution lists are duplicate-free after projection.
pub fn distinct_projections(f: &CnfXorFormula, sols: &[Assignment]) -> Option<HashSet<ProjectedAssignment>> {
    let mut seen = HashSet::with_capacity(sols.len());
    for a in sols {
        if !seen.insert(f.project(a)) {
            return None;
        }
    }
    Some(seen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_literal_form_normalises() {
        let x = Xor::from_literals(&[1, 2, -3]);
        assert_eq!(x.vars(), &[1, 2, 3]);
        assert!(!x.rhs());
    }

    #[test]
    fn xor_duplicates_cancel() {
        let x = Xor::from_literals(&[1, -1]);
        assert_eq!(x.vars(), &[] as &[Var]);
        assert!(!x.rhs()); // trivially true: empty parity 0
        let y = Xor::from_literals(&[2, 2, 2]);
        assert_eq!(y.vars(), &[2]);
        assert!(y.rhs());
    }

    #[test]
    fn empty_xor_lines_round_trip() {
        let f = Xor::new([], true);
        assert_eq!(f.dimacs_line(), "x 0");
        let t = Xor::new([], false);
        assert_eq!(t.dimacs_line(), "x 1 -1 0");
    }
}
