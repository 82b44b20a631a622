//! End-to-end tests of the command-line pipeline and the unsat oracle
//! strategies, driving the real binary on real files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use countcert::certcheck::{ProofKey, UnsatOracle};
use countcert::formula::{parse_dimacs_cnfxor, Assignment};
use countcert::solver::{solve, SolverConfig, SolverResult};
use countcert::xlrup::print_xlrup;

const PIGEONHOLE: &str = "p cnf 10 7\n\
1 2 3 4 5 0\n\
6 7 8 9 10 0\n\
-1 -6 0\n\
-2 -7 0\n\
-3 -8 0\n\
-4 -9 0\n\
-5 -10 0\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_countcert"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn result_line(out: &Output) -> String {
    stdout(out)
        .lines()
        .find(|l| l.starts_with("s "))
        .unwrap_or_default()
        .to_string()
}

#[test]
fn full_pipeline_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), PIGEONHOLE).unwrap();

    let g = run(&["genbits", "--formula", "f.cnf", "--out", "r.bin"], d);
    assert!(g.status.success(), "{}", stdout(&g));
    assert_eq!(fs::metadata(d.join("r.bin")).unwrap().len(), 112);

    let c = run(
        &["count", "--formula", "f.cnf", "--bits", "r.bin", "--cert", "out.cert"],
        d,
    );
    assert!(c.status.success(), "{}", stdout(&c));
    let counted = result_line(&c);
    assert!(counted.starts_with("s mc "), "{counted}");

    // The checker must find the sidecars next to the certificate by default
    // and certify the same count.
    let k = run(
        &["certcheck", "--formula", "f.cnf", "--cert", "out.cert", "--bits", "r.bin"],
        d,
    );
    assert!(k.status.success(), "{}", stdout(&k));
    assert_eq!(result_line(&k), counted);

    // Same result if it re-solves instead of reading proofs.
    let s = run(
        &[
            "certcheck",
            "--formula",
            "f.cnf",
            "--cert",
            "out.cert",
            "--bits",
            "r.bin",
            "--solve-unsat",
            "--jobs",
            "3",
        ],
        d,
    );
    assert_eq!(result_line(&s), counted);

    // And via an explicit proof directory.
    fs::create_dir(d.join("proofs")).unwrap();
    for entry in fs::read_dir(d).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "xlrup") {
            fs::copy(&p, d.join("proofs").join(p.file_name().unwrap())).unwrap();
            fs::remove_file(&p).unwrap();
        }
    }
    let pd = run(
        &[
            "certcheck",
            "--formula",
            "f.cnf",
            "--cert",
            "out.cert",
            "--bits",
            "r.bin",
            "--proof-dir",
            "proofs",
        ],
        d,
    );
    assert_eq!(result_line(&pd), counted);

    // The environment variable stands in for --proof-dir.
    let env = bin()
        .args(["certcheck", "--formula", "f.cnf", "--cert", "out.cert", "--bits", "r.bin"])
        .current_dir(d)
        .env("COUNTCERT_PROOF_DIR", d.join("proofs"))
        .output()
        .unwrap();
    assert_eq!(result_line(&env), counted);

    // Without the sidecars in place the default strategy must refuse.
    let missing = run(
        &["certcheck", "--formula", "f.cnf", "--cert", "out.cert", "--bits", "r.bin"],
        d,
    );
    assert_eq!(missing.status.code(), Some(1), "{}", stdout(&missing));
    assert!(result_line(&missing).starts_with("s ERROR "));
}

#[test]
fn galloping_search_emits_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), PIGEONHOLE).unwrap();
    run(&["genbits", "--formula", "f.cnf", "--out", "r.bin"], d);

    let a = run(
        &["count", "--formula", "f.cnf", "--bits", "r.bin", "--cert", "lin.cert"],
        d,
    );
    let b = run(
        &[
            "count",
            "--formula",
            "f.cnf",
            "--bits",
            "r.bin",
            "--cert",
            "gal.cert",
            "--galloping",
        ],
        d,
    );
    assert_eq!(result_line(&a), result_line(&b));
    assert_eq!(
        fs::read(d.join("lin.cert")).unwrap(),
        fs::read(d.join("gal.cert")).unwrap()
    );
}

#[test]
fn exact_count_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), PIGEONHOLE).unwrap();
    let out = run(&["exact-count", "--formula", "f.cnf"], d);
    assert!(out.status.success());
    assert_eq!(result_line(&out), "s mc 180");
}

#[test]
fn xlrup_check_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), "p cnf 3 4\n1 2 0\n-1 -2 0\nx 1 2 -3 0\n-3 0\n").unwrap();
    fs::write(
        d.join("p.xlrup"),
        "o x 1 1 2 -3 0\ni x 2 1 2 0 1 2 0\nx 3 3 0 1 2 0\ni 4 3 0 3 0\n5 0 3 4 0\n",
    )
    .unwrap();
    let ok = run(&["xlrup-check", "f.cnf", "p.xlrup"], d);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert_eq!(result_line(&ok), "s VERIFIED");

    // A dead-hint mutation must be rejected with exit code 1.
    fs::write(
        d.join("bad.xlrup"),
        "o x 1 1 2 -3 0\ni x 2 1 2 0 1 2 0\nx 3 3 0 1 2 0\ni 4 3 0 3 0\n5 0 3 9 0\n",
    )
    .unwrap();
    let bad = run(&["xlrup-check", "f.cnf", "bad.xlrup"], d);
    assert_eq!(bad.status.code(), Some(1));
    assert!(result_line(&bad).starts_with("s ERROR REJECTED"), "{}", result_line(&bad));
}

#[test]
fn truncated_certificate_is_rejected_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), PIGEONHOLE).unwrap();
    run(&["genbits", "--formula", "f.cnf", "--out", "r.bin"], d);
    run(&["count", "--formula", "f.cnf", "--bits", "r.bin", "--cert", "out.cert"], d);

    let text = fs::read_to_string(d.join("out.cert")).unwrap();
    let cut: String = text.lines().take(40).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("cut.cert"), cut).unwrap();
    let out = run(
        &["certcheck", "--formula", "f.cnf", "--cert", "cut.cert", "--bits", "r.bin"],
        d,
    );
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(result_line(&out).starts_with("s ERROR certificate line"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), PIGEONHOLE).unwrap();
    fs::write(d.join("r.bin"), [0u8; 112]).unwrap();

    // Unknown subcommand.
    let out = run(&["frobnicate"], d);
    assert_eq!(out.status.code(), Some(2));

    // Malformed epsilon.
    let out = run(
        &[
            "count", "--formula", "f.cnf", "--bits", "r.bin", "--cert", "c", "-e", "0.8e1",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));

    // Delta outside (0, 1].
    let out = run(
        &["count", "--formula", "f.cnf", "--bits", "r.bin", "--cert", "c", "-d", "1.5"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));

    // Unparsable formula.
    fs::write(d.join("bad.cnf"), "p cnf x y\n").unwrap();
    let out = run(&["exact-count", "--formula", "bad.cnf"], d);
    assert_eq!(out.status.code(), Some(2));

    // genbits asked for fewer bytes than the budget.
    let out = run(
        &["genbits", "--formula", "f.cnf", "--out", "r2.bin", "--bytes", "10"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resource_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), PIGEONHOLE).unwrap();

    // Bit file too short for the budget.
    fs::write(d.join("short.bin"), [0u8; 10]).unwrap();
    let out = run(
        &["count", "--formula", "f.cnf", "--bits", "short.bin", "--cert", "c.cert"],
        d,
    );
    assert_eq!(out.status.code(), Some(3), "{}", stdout(&out));
    assert!(result_line(&out).contains("insufficient randomness"));

    // Missing input file.
    let out = run(
        &["count", "--formula", "f.cnf", "--bits", "nope.bin", "--cert", "c.cert"],
        d,
    );
    assert_eq!(out.status.code(), Some(3));

    // Solver conflict budget of zero cannot finish the first enumeration.
    fs::write(d.join("r.bin"), [0x5Au8; 112]).unwrap();
    let out = run(
        &[
            "count",
            "--formula",
            "f.cnf",
            "--bits",
            "r.bin",
            "--cert",
            "c.cert",
            "--max-conflicts",
            "0",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(3), "{}", stdout(&out));
}

#[test]
fn external_unsat_command_round_trip() {
    // Build a small unsatisfiable banned instance, have the embedded solver
    // refute it, and serve that proof through an external command.
    let f = parse_dimacs_cnfxor("p cnf 2 1\n1 2 0\n").unwrap();
    let banned = ["1 -2 0", "-1 2 0", "1 2 0"]
        .iter()
        .fold(f, |acc, line| {
            acc.ban_sol(&Assignment::parse_dimacs_line(line, 2).unwrap())
        });
    let steps = match solve(&banned, &SolverConfig::default()).unwrap() {
        SolverResult::Unsat(steps) => steps,
        SolverResult::Sat(_) => panic!("instance should be unsat"),
    };

    let dir = tempfile::tempdir().unwrap();
    let proof_path = dir.path().join("stored.xlrup");
    fs::write(&proof_path, print_xlrup(&steps)).unwrap();
    let script = dir.path().join("prover.sh");
    fs::write(&script, format!("#!/bin/sh\ncp {} \"$2\"\n", proof_path.display())).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    }

    let oracle = UnsatOracle::External { command: vec![script.display().to_string()] };
    oracle.establish_unsat(&banned, ProofKey::Init).unwrap();

    // The same stored proof must not certify a different instance.
    let other = parse_dimacs_cnfxor("p cnf 2 1\n1 2 0\n").unwrap();
    let err = oracle.establish_unsat(&other, ProofKey::Init).unwrap_err();
    assert!(err.to_string().contains("proof not verified"), "{err}");

    // A failing command is reported, not trusted.
    let broken = UnsatOracle::External { command: vec!["false".into()] };
    let err = broken.establish_unsat(&banned, ProofKey::Init).unwrap_err();
    assert!(err.to_string().contains("exited"), "{err}");
}

#[test]
fn pac_eval_subcommand_passes_on_seeded_trials() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("f.cnf"), PIGEONHOLE).unwrap();
    let out = run(
        &[
            "pac-eval",
            "--formula",
            "f.cnf",
            "--trials",
            "8",
            "--seed",
            "7",
            "--jobs",
            "2",
        ],
        d,
    );
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(result_line(&out), "s PASS");
    assert!(stdout(&out).contains("c exact 180"));
    assert!(stdout(&out).contains("c envelope [100, 324]"));
}
