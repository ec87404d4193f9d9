//! End-to-end checks of the binary: exit codes, output artifacts, SVG
//! determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

fn apg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_apg"))
}

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("apg-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_preset_exits_with_code_two() {
    let dir = tmp_dir("unknown");
    let status = apg()
        .args(["bounds", "--preset", "no-such-preset", "--out"])
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_config_exits_with_code_three() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "[game]\nplayers = banana\n").unwrap();
    let status = apg()
        .args(["bounds", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_with_code_four() {
    let dir = tmp_dir("ro");
    // a file where the directory should be makes the path unwritable
    let blocked = dir.join("blocked");
    fs::write(&blocked, b"x").unwrap();
    let status = apg()
        .args(["bounds", "--preset", "aversion", "--out"])
        .arg(blocked.join("sub"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn simulate_emits_all_artifacts_and_deterministic_svg() {
    let dir = tmp_dir("sim");
    let run = |out: &Path| {
        let status = apg()
            .args([
                "simulate",
                "--preset",
                "flocking-uniform",
                "--eval-batch",
                "16",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    run(&out1);
    run(&out2);
    for name in ["paths.csv", "paths.bin", "mean_trajectory.csv", "trajectories.svg"] {
        assert!(out1.join(name).exists(), "missing {name}");
    }
    let svg1 = fs::read(out1.join("trajectories.svg")).unwrap();
    let svg2 = fs::read(out2.join("trajectories.svg")).unwrap();
    assert_eq!(svg1, svg2, "svg emission must be deterministic");
    let text = String::from_utf8(svg1).unwrap();
    assert!(text.starts_with("<svg"));
    // markers 1, 2, 3 for each of the four players
    for label in [">1<", ">2<", ">3<"] {
        assert_eq!(text.matches(label).count(), 4);
    }
}

#[test]
fn train_writes_log_checkpoint_and_config_echo() {
    let dir = tmp_dir("train");
    let out = dir.join("out");
    let status = apg()
        .args([
            "train",
            "--preset",
            "lqr-oracle",
            "--iterations",
            "12",
            "--checkpoint-every",
            "5",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("checkpoint.bin").exists());
    assert!(out.join("checkpoint_000005.bin").exists());
    assert!(out.join("checkpoint_000010.bin").exists());
    assert!(out.join("scenario.cfg").exists());
    let log = fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 12);
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["iteration"], i);
        assert!(v["potential"].is_number());
        assert!(v["running"].is_number());
        assert!(v["terminal"].is_number());
        assert!(v["std_error"].is_number());
        assert!(v["grad_norm"].is_number());
        assert!(v["learning_rate"].is_number());
    }
    // config echo round-trips through the parser
    let echo = fs::read_to_string(out.join("scenario.cfg")).unwrap();
    let parsed = apg_cli::parse_scenario(&echo).unwrap();
    assert_eq!(apg_cli::emit_scenario(&parsed).unwrap(), echo);

    // the checkpoint is loadable for evaluation-only runs
    let status = apg()
        .args(["simulate", "--preset", "lqr-oracle", "--eval-batch", "4", "--checkpoint"])
        .arg(out.join("checkpoint.bin"))
        .arg("--out")
        .arg(dir.join("sim"))
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn shipped_preset_audit_observes_no_violation() {
    let dir = tmp_dir("preset-audit");
    let status = apg()
        .args([
            "audit",
            "--preset",
            "flocking-uniform",
            "--deviations",
            "10",
            "--eval-batch",
            "64",
            "--out",
        ])
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/audit.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn audit_and_zeta_emit_reports() {
    let dir = tmp_dir("reports");
    let status = apg()
        .args([
            "audit",
            "--preset",
            "lqr-oracle",
            "--deviations",
            "5",
            "--eval-batch",
            "4",
            "--out",
        ])
        .arg(dir.join("audit"))
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("audit/audit.json")).unwrap()).unwrap();
    for key in ["bound", "max_gap", "std_error", "samples", "pass"] {
        assert!(report.get(key).is_some(), "audit.json missing {key}");
    }

    let graph = dir.join("graph.txt");
    fs::write(&graph, "0 1\n1 2\n1 3\n2 4\n2 5\n").unwrap();
    let status = apg()
        .args(["zeta", "--graph"])
        .arg(&graph)
        .args(["--decay", "power", "--beta", "1.5", "--out"])
        .arg(dir.join("zeta"))
        .status()
        .unwrap();
    assert!(status.success());
    let z: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("zeta/zeta.json")).unwrap()).unwrap();
    assert_eq!(z["regime"], "ln(ln(N))/ln(N)^beta");
    assert!(z["bound"].as_f64().unwrap() > 0.0);
}
