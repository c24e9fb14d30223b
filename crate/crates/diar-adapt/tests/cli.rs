//! Black-box tests of the command-line binary: the synth → diarise → score
//! → ablate flow, determinism of emitted RTTM, and the exit-code contract
//! (0 success, 1 usage error, 2 data error).

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diar-adapt"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "`{}` failed\nstdout: {}\nstderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth_dataset(dir: &Path, sessions: usize) {
    run_ok(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--sessions",
        &sessions.to_string(),
    ]);
}

#[test]
fn help_and_version_exit_zero() {
    let out = run_ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for subcommand in ["diarise", "score", "synth", "ablate"] {
        assert!(text.contains(subcommand), "--help does not mention {subcommand}");
    }
    run_ok(&["--version"]);
}

#[test]
fn usage_errors_exit_one() {
    // Unknown flag.
    let out = bin().args(["--definitely-not-a-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // Missing required argument.
    let out = bin().args(["diarise"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // Malformed flag value.
    let out = bin()
        .args(["diarise", "x.seg", "--clusterer", "quantum"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    // Nonexistent embeddings file.
    let out = bin().args(["diarise", "/nonexistent/path.seg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    // Malformed RTTM content.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.rttm");
    std::fs::write(&bad, "SPEAKER one 1 not-a-number 2.0 <NA> <NA> spk <NA> <NA>\n").unwrap();
    let out = bin()
        .args(["score", "--ref"])
        .arg(&bad)
        .arg("--hyp")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown key in a config file.
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "not_a_real_key = 3\n").unwrap();
    let seg = dir.path().join("missing.seg");
    let out = bin()
        .args(["diarise"])
        .arg(&seg)
        .arg("--config")
        .arg(&conf)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_diarise_score_flow() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(dir.path(), 2);
    for id in ["synth00", "synth01"] {
        for ext in ["seg", "sadp", "rttm"] {
            assert!(
                dir.path().join(format!("{id}.{ext}")).exists(),
                "synth did not write {id}.{ext}"
            );
        }
    }

    let seg = dir.path().join("synth00.seg");
    let sad = dir.path().join("synth00.sadp");
    let reference = dir.path().join("synth00.rttm");
    let hypothesis = dir.path().join("hyp.rttm");
    run_ok(&[
        "diarise",
        seg.to_str().unwrap(),
        "--sad",
        sad.to_str().unwrap(),
        "--dr",
        "--aa",
        "--nonspeech",
        "sad",
        "--eigen-threshold",
        "10",
        "--output",
        hypothesis.to_str().unwrap(),
    ]);
    let rttm = std::fs::read_to_string(&hypothesis).unwrap();
    assert!(!rttm.is_empty());
    for line in rttm.lines() {
        assert!(line.starts_with("SPEAKER synth00 1 "), "unexpected RTTM line: {line}");
    }

    let out = run_ok(&[
        "score",
        "--ref",
        reference.to_str().unwrap(),
        "--hyp",
        hypothesis.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    let total = text
        .lines()
        .find(|l| l.starts_with("TOTAL"))
        .expect("score prints a TOTAL line");
    assert!(total.contains("DER"), "missing DER field: {total}");
}

#[test]
fn scoring_a_reference_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(dir.path(), 1);
    let reference = dir.path().join("synth00.rttm");
    let out = run_ok(&[
        "score",
        "--ref",
        reference.to_str().unwrap(),
        "--hyp",
        reference.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    let total = text.lines().find(|l| l.starts_with("TOTAL")).unwrap();
    assert!(total.contains("DER   0.00%"), "self-score not zero: {total}");
}

#[test]
fn identical_invocations_emit_identical_rttm() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(dir.path(), 1);
    let seg = dir.path().join("synth00.seg");
    let sad = dir.path().join("synth00.sadp");
    let args = [
        "diarise",
        seg.to_str().unwrap(),
        "--sad",
        sad.to_str().unwrap(),
        "--dr",
        "--aa",
        "--nonspeech",
        "sad",
        "--eigen-threshold",
        "10",
        "--seed",
        "5",
    ];
    let first = run_ok(&args);
    let second = run_ok(&args);
    assert_eq!(first.stdout, second.stdout, "stdout RTTM differs between runs");
    assert!(!first.stdout.is_empty());
}

#[test]
fn ablate_prints_all_rows_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(dir.path(), 2);
    let csv_path = dir.path().join("table.csv");
    let out = run_ok(&[
        "ablate",
        dir.path().to_str().unwrap(),
        "--eigen-threshold",
        "10",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("ahc") || l.starts_with("spc"))
        .collect();
    assert_eq!(rows.len(), 16, "expected 16 rows, got:\n{text}");
    for label in ["baseline", "+dr", "+aa", "+ns", "+dr+aa+ns"] {
        assert!(
            rows.iter().any(|r| r.contains(label)),
            "missing technique row {label}"
        );
    }
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 17, "CSV should be a header plus 16 rows");
    assert!(csv.starts_with("clusterer,"));
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(dir.path(), 1);
    let seg = dir.path().join("synth00.seg");
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "clusterer = spc\neigen_threshold = 10\nseed = 9\n").unwrap();

    let from_file = run_ok(&[
        "diarise",
        seg.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
    ]);
    let from_flags = run_ok(&[
        "diarise",
        seg.to_str().unwrap(),
        "--clusterer",
        "spc",
        "--eigen-threshold",
        "10",
        "--seed",
        "9",
    ]);
    assert_eq!(
        from_file.stdout, from_flags.stdout,
        "config file and equivalent flags disagree"
    );

    // A flag wins over the same key in the file: forcing one speaker merges
    // the whole session into a single turn stream.
    let overridden = run_ok(&[
        "diarise",
        seg.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--num-speakers",
        "1",
    ]);
    let text = String::from_utf8_lossy(&overridden.stdout);
    let speakers: std::collections::BTreeSet<&str> = text
        .lines()
        .filter_map(|l| l.split_whitespace().nth(7))
        .collect();
    assert_eq!(speakers.len(), 1, "--num-speakers 1 was not applied: {text}");
}
