use std::path::PathBuf;
use std::process::{Command, Output};

fn dpop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name]
        .iter()
        .collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("out.txt");
    let o = dpop(&[
        "solve",
        "--in",
        &fixture("triangle.dcop"),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let text = std::fs::read_to_string(&report).unwrap();
    for line in [
        "utility 45",
        "assignment x1=1 x2=0 x3=0",
        "tree_messages 4",
        "util_messages 2",
        "value_messages 2",
    ] {
        assert!(text.lines().any(|l| l == line), "missing `{line}` in\n{text}");
    }
}

#[test]
fn hard_line_report_shows_three_rows() {
    let o = dpop(&["solve", "--in", &fixture("two_node_hard.dcop")]);
    let text = stdout(&o);
    assert!(text.contains("largest_util_rows 3\n"));
    assert!(text.contains("largest_util_size_units 4\n"));
    assert!(text.contains("largest_dense_util_size_units 4\n"));
}

#[test]
fn infeasible_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.dcop");
    std::fs::write(
        &path,
        "mode max\nagent a\nvar x a 0 1\nconstraint c ext x\n  0 -inf\n  1 -inf\n",
    )
    .unwrap();
    let o = dpop(&["solve", "--in", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("status infeasible\n"));
    let o = dpop(&["oracle", "--in", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_errors_fail_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.dcop");
    std::fs::write(&path, "mode max\nagent a\nvar x a 0 1\nvar x a 0 1\n").unwrap();
    let o = dpop(&["solve", "--in", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 4") && err.contains("duplicate id"), "{err}");
}

#[test]
fn generate_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.dcop");
    let o = dpop(&[
        "gen-random",
        "--seed",
        "1",
        "--n",
        "6",
        "--d",
        "3",
        "--agents",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# gen-random agents=3 variables=6 domain=3"));
    let o = dpop(&["verify", "--in", path.to_str().unwrap()]);
    assert_eq!(stdout(&o), "MATCH\n");
}

#[test]
fn default_random_instance_solves() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.dcop");
    assert!(dpop(&[
        "gen-random",
        "--n",
        "15",
        "--p1",
        "0.6",
        "--out",
        path.to_str().unwrap()
    ])
    .status
    .success());
    let o = dpop(&["solve", "--in", path.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0 | 2)));
    let text = stdout(&o);
    assert!(text.contains("tree_messages 8\n") && text.contains("total_util_size_units "));
}

#[test]
fn power_instances_verify() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, extra) in [("3", None), ("4", Some("--soft"))] {
        let path = dir.path().join(format!("p{seed}.dcop"));
        let mut args = vec!["gen-power", "--nodes", "3", "--cap", "2", "--seed", seed];
        args.extend(extra);
        args.extend(["--out", path.to_str().unwrap()]);
        assert!(dpop(&args).status.success());
        let o = dpop(&["verify", "--in", path.to_str().unwrap()]);
        assert_eq!(stdout(&o), "MATCH\n");
    }
}

#[test]
fn root_and_mode_flags() {
    let o = dpop(&["solve", "--in", &fixture("triangle.dcop"), "--root", "a3"]);
    assert!(stdout(&o).contains("root a3\n"));
    assert!(stdout(&o).contains("utility 45\n"));
    let o = dpop(&["solve", "--in", &fixture("triangle.dcop"), "--mode-override", "min"]);
    assert!(
        stdout(&o).contains("utility 9\nassignment x1=1 x2=1 x3=1\n"),
        "{}",
        stdout(&o)
    );
    let o = dpop(&["solve", "--in", &fixture("triangle.dcop"), "--root", "nobody"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let log = dir.path().join(format!("{tag}.log"));
        let report = dir.path().join(format!("{tag}.txt"));
        let o = dpop(&[
            "solve",
            "--in",
            &fixture("triangle.dcop"),
            "--log",
            log.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        (std::fs::read(log).unwrap(), std::fs::read(report).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn tree_and_bench() {
    let o = dpop(&["tree", "--in", &fixture("triangle.dcop")]);
    assert!(stdout(&o).contains("a3 depth=2 parent=a2 pseudo_parents=[a1]"));
    let o = dpop(&["bench", "power", "--instances", "2", "--sweep-cap", "1,2"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("params") && lines[0].contains("solved%"));
    assert!(lines[1].starts_with("cap=1"));
    let o = dpop(&[
        "bench",
        "random",
        "--instances",
        "2",
        "--n",
        "6",
        "--d",
        "3",
        "--agents",
        "3",
        "--sweep-p2",
        "0,0.5",
    ]);
    assert_eq!(stdout(&o).lines().count(), 3);
}
