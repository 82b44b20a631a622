//! Python bindings for the countcert toolkit.
//!
//! Exposes the formula type and the main pipeline operations — exact
//! counting, approximate counting with certificate emission, certificate
//! checking, and XLRUP proof checking — as the `countcert_py` extension
//! module.  Tolerances are passed as decimal strings so Python floats never
//! leak imprecision into the exact rational parameter computations; counts
//! come back as Python ints of arbitrary size.

use std::collections::HashMap;

use num_bigint::BigUint;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use countcert::certcheck::{
    self, parse_certificate, print_certificate, sidecar_name, CertError, ProofKey, UnsatOracle,
};
use countcert::counter::{self, CounterOptions};
use countcert::formula::{parse_dimacs_cnfxor, print_dimacs_cnfxor, CnfXorFormula};
use countcert::oracle;
use countcert::params;
use countcert::randomness::RandomBitStream;
use countcert::xlrup;

/// A CNF-XOR formula with a projection set.
#[pyclass(frozen)]
pub struct Formula {
    inner: CnfXorFormula,
}

#[pymethods]
impl Formula {
    /// Parse DIMACS CNF text extended with `x` XOR lines and `c ind`
    /// projection lines.
    #[staticmethod]
    pub fn from_dimacs(text: &str) -> PyResult<Formula> {
        let inner =
            parse_dimacs_cnfxor(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Formula { inner })
    }

    #[getter]
    pub fn num_vars(&self) -> u32 {
        self.inner.num_vars()
    }

    #[getter]
    pub fn num_clauses(&self) -> usize {
        self.inner.clauses().len()
    }

    #[getter]
    pub fn num_xors(&self) -> usize {
        self.inner.xors().len()
    }

    /// The projection (sampling) set, ascending.
    #[getter]
    pub fn proj(&self) -> Vec<u32> {
        self.inner.proj().to_vec()
    }

    pub fn to_dimacs(&self) -> String {
        print_dimacs_cnfxor(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Formula(vars={}, clauses={}, xors={}, proj={})",
            self.inner.num_vars(),
            self.inner.clauses().len(),
            self.inner.xors().len(),
            self.inner.proj().len()
        )
    }
}

/// Enumeration threshold per counting round for tolerance `epsilon`.
#[pyfunction]
pub fn compute_thresh(epsilon: &str) -> PyResult<u64> {
    let eps = parse_positive(epsilon, "epsilon")?;
    Ok(params::compute_thresh(&eps))
}

/// Number of counting rounds for failure probability `delta`, at least
/// `min_rounds`.
#[pyfunction]
#[pyo3(signature = (delta, min_rounds = 0))]
pub fn compute_t(delta: &str, min_rounds: u64) -> PyResult<u64> {
    let d = parse_positive(delta, "delta")?;
    Ok(params::compute_t(&d, min_rounds))
}

/// Exact projected model count by enumeration (small formulas only).
#[pyfunction]
pub fn exact_count(formula: &Formula) -> PyResult<u64> {
    oracle::exact_projected_count(&formula.inner, formula.inner.proj())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Approximately count the models of `formula`, drawing randomness from
/// `bits`.  Returns `(count, certificate_text, proofs, bits_consumed)`
/// where `proofs` maps sidecar names (`init`, `round1`, ...) to XLRUP text.
#[pyfunction]
#[pyo3(signature = (formula, epsilon, delta, bits, min_rounds = 0))]
pub fn count(
    formula: &Formula,
    epsilon: &str,
    delta: &str,
    bits: Vec<u8>,
    min_rounds: u64,
) -> PyResult<(BigUint, String, HashMap<String, String>, u64)> {
    let eps = parse_positive(epsilon, "epsilon")?;
    let d = parse_positive(delta, "delta")?;
    let mut stream = RandomBitStream::new(bits);
    let run = counter::approxmc(
        &formula.inner,
        &eps,
        &d,
        min_rounds,
        &mut stream,
        &CounterOptions::default(),
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;

    let mut proofs = HashMap::new();
    if let Some(steps) = &run.init_proof {
        proofs.insert(ProofKey::Init.file_suffix(), xlrup::print_xlrup(steps));
    }
    for (i, proof) in run.round_proofs.iter().enumerate() {
        if let Some(steps) = proof {
            proofs.insert(ProofKey::Round(i).file_suffix(), xlrup::print_xlrup(steps));
        }
    }
    Ok((
        run.count,
        print_certificate(&run.certificate),
        proofs,
        run.bits_consumed,
    ))
}

/// Re-verify a counting run from its certificate text and the same random
/// bytes.  `proofs` maps sidecar names to XLRUP text as produced by
/// [`count`]; pass `None` to discharge unsat claims with the built-in
/// solver.  Returns the certified count or raises `ValueError` with the
/// rejection reason.
#[pyfunction]
#[pyo3(signature = (formula, epsilon, delta, cert_text, bits, proofs = None, min_rounds = 0))]
pub fn check_certificate(
    formula: &Formula,
    epsilon: &str,
    delta: &str,
    cert_text: &str,
    bits: Vec<u8>,
    proofs: Option<HashMap<String, String>>,
    min_rounds: u64,
) -> PyResult<BigUint> {
    let eps = parse_positive(epsilon, "epsilon")?;
    let d = parse_positive(delta, "delta")?;
    let cert = parse_certificate(cert_text, formula.inner.num_vars())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let oracle = match proofs {
        None => UnsatOracle::Embedded { config: Default::default() },
        Some(map) => {
            let mut parsed = HashMap::new();
            for (name, text) in map {
                let key = parse_proof_key(&name)?;
                let steps =
                    xlrup::parse_xlrup(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
                parsed.insert(key, steps);
            }
            UnsatOracle::Provided { proofs: parsed }
        }
    };
    let mut stream = RandomBitStream::new(bits);
    certcheck::check_certificate(
        &formula.inner,
        &eps,
        &d,
        min_rounds,
        &mut stream,
        &cert,
        &oracle,
    )
    .map_err(|e| match e {
        CertError::Resource(_) | CertError::Randomness(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    })
}

/// Check an XLRUP refutation of `formula`.  Returns the outcome line:
/// `VERIFIED`, or `REJECTED at step N: reason`.
#[pyfunction]
pub fn xlrup_check(formula: &Formula, proof_text: &str) -> PyResult<String> {
    let steps =
        xlrup::parse_xlrup(proof_text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(xlrup::check_proof(&formula.inner, &steps).to_string())
}

/// Sidecar proof file name for a certificate file name, e.g.
/// `("out.cert", "round3")` -> `out.cert.round3.xlrup`.
#[pyfunction]
pub fn proof_sidecar_name(cert_name: &str, claim: &str) -> PyResult<String> {
    Ok(sidecar_name(cert_name, parse_proof_key(claim)?))
}

fn parse_positive(s: &str, what: &str) -> PyResult<num_rational::BigRational> {
    let v = params::parse_decimal(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if v <= num_rational::BigRational::from_integer(0.into()) {
        return Err(PyValueError::new_err(format!("{what} must be positive, got {s}")));
    }
    Ok(v)
}

fn parse_proof_key(name: &str) -> PyResult<ProofKey> {
    if name == "init" {
        return Ok(ProofKey::Init);
    }
    if let Some(r) = name.strip_prefix("round") {
        if let Ok(n) = r.parse::<usize>() {
            if n >= 1 {
                return Ok(ProofKey::Round(n - 1));
            }
        }
    }
    Err(PyValueError::new_err(format!(
        "proof name must be `init` or `round<N>`, got `{name}`"
    )))
}

#[pymodule]
fn countcert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Formula>()?;
    m.add_function(wrap_pyfunction!(compute_thresh, m)?)?;
    m.add_function(wrap_pyfunction!(compute_t, m)?)?;
    m.add_function(wrap_pyfunction!(exact_count, m)?)?;
    m.add_function(wrap_pyfunction!(count, m)?)?;
    m.add_function(wrap_pyfunction!(check_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(xlrup_check, m)?)?;
    m.add_function(wrap_pyfunction!(proof_sidecar_name, m)?)?;
    Ok(())
}
