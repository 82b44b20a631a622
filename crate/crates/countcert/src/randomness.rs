//! The trusted randomness source and deterministic XOR sampling.
//!
//! Counter and checker must draw *identical* XOR constraints, so both read
//! from the same file of raw random bytes through this module.  The
//! conventions are fixed once and for all:
//!
//! * bits are consumed most-significant-bit first within each byte;
//! * an XOR over a sampling set `S` consumes `|S|` membership bits in the
//!   stored order of `S`, then one right-hand-side bit;
//! * a full run consumes `t * (|S| - 1) * (|S| + 1)` bits, sampled eagerly
//!   up front in round-major order.
//!
//! Running out of bits is always a hard error; bits are never reused.

use thiserror::Error;

use crate::formula::{Assignment, Var, Xor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RandomnessError {
    #[error("insufficient randomness: requested {requested} bits, {available} available{context}")]
    Exhausted {
        requested: u64,
        available: u64,
        context: String,
    },
}

/// A byte buffer with a bit cursor.  Single-owner and strictly sequential:
/// every read advances the cursor and the cursor never wraps.
#[derive(Debug, Clone)]
pub struct RandomBitStream {
    bytes: Vec<u8>,
    cursor: u64,
}

impl RandomBitStream {
    pub fn new(bytes: Vec<u8>) -> RandomBitStream {
        RandomBitStream { bytes, cursor: 0 }
    }

    /// Current bit offset from the start of the buffer.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Bits left before exhaustion.
    pub fn remaining(&self) -> u64 {
        self.bytes.len() as u64 * 8 - self.cursor
    }

    /// Reads the next `n` bits, MSB-first within each byte.
    pub fn take_bits(&mut self, n: u64) -> Result<Vec<bool>, RandomnessError> {
        if n > self.remaining() {
            return Err(RandomnessError::Exhausted {
                requested: n,
                available: self.remaining(),
                context: String::new(),
            });
        }
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let byte = self.bytes[(self.cursor / 8) as usize];
            let shift = 7 - (self.cursor % 8);
            out.push(byte >> shift & 1 == 1);
            self.cursor += 1;
        }
        Ok(out)
    }

    /// Samples one XOR constraint over the sampling set `s`: `|s|`
    /// membership bits in the stored order of `s`, then one parity bit.
    pub fn sample_xor(&mut self, s: &[Var]) -> Result<Xor, RandomnessError> {
        let bits = self.take_bits(s.len() as u64 + 1)?;
        let vars = s
            .iter()
            .zip(&bits)
            .filter(|(_, &b)| b)
            .map(|(&v, _)| v);
        Ok(Xor::new(vars, bits[s.len()]))
    }

    /// Eagerly samples the XOR constraints for a whole run: `t` rounds of
    /// `|s| - 1` constraints each, in round-major order, consuming exactly
    /// `t * (|s| - 1) * (|s| + 1)` bits.
    pub fn random_seed_xors(
        &mut self,
        s: &[Var],
        t: u64,
    ) -> Result<Vec<Vec<Xor>>, RandomnessError> {
        let start = self.cursor;
        self.seed_xors_inner(s, t).map_err(|e| {
            // An all-or-nothing draw: a failed run leaves the cursor where
            // it was, like a failed `take_bits`.
            self.cursor = start;
            e
        })
    }

    fn seed_xors_inner(&mut self, s: &[Var], t: u64) -> Result<Vec<Vec<Xor>>, RandomnessError> {
        let per_round = s.len() as u64 - 1;
        let mut rounds = Vec::with_capacity(t as usize);
        for round in 1..=t {
            let mut xs = Vec::with_capacity(per_round as usize);
            for index in 1..=per_round {
                let x = self.sample_xor(s).map_err(|e| match e {
                    RandomnessError::Exhausted { requested, available, .. } => {
                        RandomnessError::Exhausted {
                            requested,
                            available,
                            context: format!(" (round {round}, XOR {index})"),
                        }
                    }
                })?;
                xs.push(x);
            }
            rounds.push(xs);
        }
        Ok(rounds)
    }
}

/// Evaluates a list of XOR constraints as a hash of the assignment: bit `i`
/// is 1 iff `w` satisfies `xors[i]`.
pub fn xor_hash(xors: &[Xor], w: &Assignment) -> Vec<bool> {
    xors.iter().map(|x| x.satisfied_by(w)).collect()
}
