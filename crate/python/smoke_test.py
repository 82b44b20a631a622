#!/usr/bin/env python3
"""Smoke test for the countcert_py extension module.

Builds the extension with cargo, imports it from the build directory, and
runs the main pipeline end to end on a small formula: exact count, threshold
and round parameters, approximate counting with certificate emission,
certificate re-checking against the emitted proofs, and rejection of a
corrupted certificate.
"""

import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

PIGEONHOLE = """p cnf 10 7
1 2 3 4 5 0
6 7 8 9 10 0
-1 -6 0
-2 -7 0
-3 -8 0
-4 -9 0
-5 -10 0
"""

UNSAT_XOR = "p cnf 2 2\nx 1 2 0\nx 1 2 -1 -2 0\n"


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "countcert-py", "--features", "extension-module"],
        cwd=REPO,
        check=True,
    )
    built = os.path.join(REPO, "target", "debug", "libcountcert_py.so")
    stage = tempfile.mkdtemp(prefix="countcert_py.")
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(built, os.path.join(stage, "countcert_py" + suffix))
    sys.path.insert(0, stage)
    import countcert_py

    return countcert_py


def main():
    cc = build_and_import()

    f = cc.Formula.from_dimacs(PIGEONHOLE)
    assert f.num_vars == 10 and f.num_clauses == 7 and f.num_xors == 0, repr(f)
    assert f.proj == list(range(1, 11))
    assert cc.Formula.from_dimacs(f.to_dimacs()).to_dimacs() == f.to_dimacs()

    assert cc.compute_thresh("0.8") == 73
    assert cc.compute_t("0.2") == 9
    assert cc.compute_t("0.5", min_rounds=4) == 5

    exact = cc.exact_count(f)
    assert exact == 180, exact

    bits = os.urandom(112)  # 9 * 9 * 11 = 891 bits
    count, cert_text, proofs, consumed = cc.count(f, "0.8", "0.2", bits)
    assert consumed == 891, consumed
    assert 100 <= count <= 324, count
    assert set(proofs) <= {"init"} | {f"round{i}" for i in range(1, 10)}

    certified = cc.check_certificate(f, "0.8", "0.2", cert_text, bits, proofs)
    assert certified == count, (certified, count)
    # The built-in solver can stand in for the recorded proofs.
    assert cc.check_certificate(f, "0.8", "0.2", cert_text, bits) == count

    # Corrupt the certificate: swap the two model counts of round 1.
    lines = cert_text.splitlines()
    first_round = 2 + int(lines[1])
    lo_count = int(lines[first_round + 1])
    lines[first_round + 1] = str(lo_count - 1)
    del lines[first_round + 2]
    try:
        cc.check_certificate(f, "0.8", "0.2", "\n".join(lines) + "\n", bits, proofs)
    except ValueError as e:
        print("corrupted certificate rejected:", e)
    else:
        raise AssertionError("corrupted certificate was accepted")

    # The second XOR of this formula cancels to the inherently false `x 0`,
    # so the empty clause follows from it in one step.
    g = cc.Formula.from_dimacs(UNSAT_XOR)
    assert cc.exact_count(g) == 0
    proof = "o x 1 1 2 0\no x 2 0\ni 1 0 2 0\n"
    outcome = cc.xlrup_check(g, proof)
    assert outcome == "VERIFIED", outcome
    bad = proof.replace("o x 2 0", "o x 2 1 0")
    assert cc.xlrup_check(g, bad).startswith("REJECTED"), cc.xlrup_check(g, bad)

    assert cc.proof_sidecar_name("out.cert", "round3") == "out.cert.round3.xlrup"

    print("smoke test passed")


if __name__ == "__main__":
    main()
