use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::CommandFactory;

use mico_cli::cli::Cli;
use mico_cli::io::{load_mdp, load_raw_table, load_table};

const TWO_STATE: &str = r#"{"n_states": 2, "n_actions": 1, "gamma": 0.9,
  "transitions": [[[0.5, 0.5]], [[0.0, 1.0]]], "rewards": [[1.0], [0.0]]}"#;

fn mico(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mico"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env("BM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn generate_garnet_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "garnet", "--states", "10", "--actions", "2", "--seed", "0"];
    assert_eq!(code(&mico(dir.path(), &args)), 0);
    let path = dir.path().join("garnet-10x2-s0.json");
    let first = fs::read(&path).unwrap();
    let mdp = load_mdp(&path).unwrap();
    assert_eq!((mdp.n_states(), mdp.n_actions()), (10, 2));
    assert_eq!(code(&mico(dir.path(), &args)), 0);
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn generate_four_rooms_has_104_states() {
    let dir = tempfile::tempdir().unwrap();
    let out = mico(dir.path(), &["generate", "four-rooms"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"n_states\": 104"));
    assert_eq!(load_mdp(&dir.path().join("four-rooms.json")).unwrap().n_states(), 104);
}

#[test]
fn generate_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&mico(
            dir.path(),
            &["generate", "garnet", "--states", "10", "--seed", "0"]
        )),
        2
    );
    assert_eq!(
        code(&mico(
            dir.path(),
            &["generate", "garnet", "--states", "0", "--actions", "2", "--seed", "0"]
        )),
        2
    );
    assert_eq!(
        code(&mico(dir.path(), &["generate", "four-rooms", "--gamma", "1.5"])),
        2
    );
    assert_eq!(code(&mico(dir.path(), &["generate", "nowhere"])), 2);
}

#[test]
fn metric_on_the_two_state_mdp() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("two-state.json");
    fs::write(&mdp, TWO_STATE).unwrap();
    let out = mico(
        dir.path(),
        &["metric", "--mdp", mdp.to_str().unwrap(), "--metric", "mico"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let u = load_table(&dir.path().join("mico.csv")).unwrap();
    assert!((u.get(0, 1) - 1.8182).abs() < 1e-4);
    assert!((u.get(0, 0) - 1.0557).abs() < 1e-4);
    assert_eq!(u.get(1, 1), 0.0);
}

#[test]
fn zero_rewards_give_zero_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("zero.json");
    fs::write(
        &mdp,
        r#"{"n_states": 2, "n_actions": 2, "gamma": 0.9,
            "transitions": [[[0.3, 0.7], [1.0, 0.0]], [[0.5, 0.5], [0.0, 1.0]]],
            "rewards": [[0.0, 0.0], [0.0, 0.0]]}"#,
    )
    .unwrap();
    for metric in ["mico", "bisim", "pi-bisim", "reduced-mico"] {
        let out = mico(
            dir.path(),
            &[
                "metric",
                "--mdp",
                mdp.to_str().unwrap(),
                "--metric",
                metric,
                "--format",
                "json",
            ],
        );
        assert_eq!(code(&out), 0);
        let t = load_raw_table(&dir.path().join(format!("{metric}.json"))).unwrap();
        assert!(t.d.as_slice().iter().all(|&v| v == 0.0), "{metric}");
    }
}

#[test]
fn tighter_epsilon_agrees_within_the_stopping_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    for (eps, name) in [("1e-6", "coarse"), ("1e-8", "fine")] {
        let out = mico(
            dir.path(),
            &[
                "metric",
                "--mdp",
                "garnet:12x3:4",
                "--policy",
                "random:1",
                "--metric",
                "mico",
                "--epsilon",
                eps,
                "--name",
                name,
            ],
        );
        assert_eq!(code(&out), 0);
    }
    let coarse = load_table(&dir.path().join("coarse.csv")).unwrap();
    let fine = load_table(&dir.path().join("fine.csv")).unwrap();
    assert!(coarse.max_abs_diff(&fine) <= 2e-6);
}

#[test]
fn non_convergence_exits_3_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mico(
        dir.path(),
        &[
            "metric",
            "--mdp",
            "garnet:5x2:0",
            "--metric",
            "bisim",
            "--max-iterations",
            "2",
        ],
    );
    assert_eq!(code(&out), 3);
    assert!(dir.path().join("bisim.csv").exists());
}

#[test]
fn bad_input_exits_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("bad.json");
    fs::write(&mdp, TWO_STATE.replace("[[0.0, 1.0]]", "[[0.2, 1.0]]")).unwrap();
    let out = mico(
        dir.path(),
        &["metric", "--mdp", mdp.to_str().unwrap(), "--metric", "mico"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("transitions[1][0]"));
    let out = mico(dir.path(), &["metric", "--mdp", "missing.json", "--metric", "mico"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn validate_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for metric in ["mico", "bisim"] {
        assert_eq!(
            code(&mico(d, &["metric", "--mdp", "garnet:6x2:1", "--metric", metric])),
            0
        );
        let out = mico(d, &["validate", d.join(format!("{metric}.csv")).to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    }
    // Corrupt one off-diagonal entry of the MICo table by hand.
    let text = fs::read_to_string(d.join("mico.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.starts_with("n=")).unwrap() + 1;
    let mut cells: Vec<String> = lines[row].split(',').map(String::from).collect();
    cells[1] = "9.5".into();
    lines[row] = cells.join(",");
    let bad = d.join("corrupt.csv");
    fs::write(&bad, lines.join("\n")).unwrap();
    let out = mico(d, &["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("symmetry"));
}

#[test]
fn validate_other_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&mico(d, &["generate", "dayan-grid"])), 0);
    assert_eq!(
        code(&mico(d, &["validate", d.join("dayan-grid.json").to_str().unwrap()])),
        0
    );
    let mdp = d.join("bad.json");
    fs::write(&mdp, TWO_STATE.replace("[[0.0, 1.0]]", "[[0.2, 1.0]]")).unwrap();
    assert_eq!(code(&mico(d, &["validate", mdp.to_str().unwrap()])), 4);
    let policy = d.join("policy.json");
    fs::write(&policy, r#"{"n_states": 1, "n_actions": 2, "probs": [[0.5, 0.6]]}"#).unwrap();
    assert_eq!(code(&mico(d, &["validate", policy.to_str().unwrap()])), 4);
    let junk = d.join("junk.json");
    fs::write(&junk, "{\"hello\": 1}").unwrap();
    assert_eq!(code(&mico(d, &["validate", junk.to_str().unwrap()])), 2);
}

#[test]
fn online_and_fit_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let online = [
        "online",
        "--mdp",
        "garnet-sr:4x2:0",
        "--steps",
        "5000",
        "--probe-every",
        "1000",
        "--seed",
        "3",
    ];
    assert_eq!(code(&mico(d, &online)), 0);
    let first = fs::read(d.join("online-trace.csv")).unwrap();
    assert_eq!(code(&mico(d, &online)), 0);
    assert_eq!(fs::read(d.join("online-trace.csv")).unwrap(), first);
    assert_eq!(
        String::from_utf8_lossy(&first)
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        7
    );

    let fit = [
        "fit",
        "--mdp",
        "garnet:4x2:0",
        "--steps",
        "300",
        "-m",
        "3",
        "--seed",
        "3",
    ];
    assert_eq!(code(&mico(d, &fit)), 0);
    let first = fs::read(d.join("embedding.json")).unwrap();
    assert_eq!(code(&mico(d, &fit)), 0);
    assert_eq!(fs::read(d.join("embedding.json")).unwrap(), first);
    assert_eq!(
        code(&mico(d, &["validate", d.join("embedding.json").to_str().unwrap()])),
        0
    );
    assert_eq!(code(&mico(d, &["fit", "--mdp", "garnet:4x2:0"])), 2);
}

#[test]
fn experiments_write_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("gap.toml");
    fs::write(
        &cfg,
        "experiment = \"gap\"\nsizes = [5]\nactions = [2]\nn_policies = 4\n",
    )
    .unwrap();
    let out = mico(
        d,
        &["experiment", "--config", cfg.to_str().unwrap(), "--n-policies", "9"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("gap.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["results"][0]["report"]["n_policies"], 4);
    assert!(fs::read_to_string(d.join("gap.csv")).unwrap().contains("reduced_mico"));
    assert_eq!(
        code(&mico(d, &["experiment", "features", "--config", cfg.to_str().unwrap()])),
        2
    );
    fs::write(&cfg, "n_polices = 4\n").unwrap();
    assert_eq!(
        code(&mico(d, &["experiment", "gap", "--config", cfg.to_str().unwrap()])),
        2
    );
}

#[test]
fn experiment_results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_mico"))
            .args(["experiment", "violation-search", "--n-trials", "150", "--out-dir"])
            .arg(dir.path())
            .env("BM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        fs::read(dir.path().join("violation-search.json")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
    let out = Command::new(env!("CARGO_BIN_EXE_mico"))
        .args(["experiment", "violation-search", "--n-trials", "5"])
        .env("BM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

fn all_help() -> String {
    let mut cmd = Cli::command();
    let mut text = cmd.render_long_help().to_string();
    for sub in cmd.get_subcommands_mut() {
        text.push_str(&format!("\n==== {} ====\n", sub.get_name()));
        text.push_str(&sub.render_long_help().to_string());
    }
    text
}

#[test]
fn help_matches_snapshot() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots/help.txt");
    let current = all_help();
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, &current).unwrap();
    }
    let stored = fs::read_to_string(&path).expect("snapshot exists; run with UPDATE_SNAPSHOTS=1 to create it");
    assert_eq!(
        current, stored,
        "help text changed; rerun with UPDATE_SNAPSHOTS=1 after review"
    );
}

#[test]
fn help_lists_every_flag() {
    let help = all_help();
    let cmd = Cli::command();
    let subs = cmd.get_subcommands().flat_map(|s| s.get_arguments());
    for arg in cmd.get_arguments().chain(subs) {
        if let Some(long) = arg.get_long() {
            assert!(help.contains(&format!("--{long}")), "--{long} missing from help");
        }
    }
    let out = Command::new(env!("CARGO_BIN_EXE_mico")).arg("--help").output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("experiment"));
}
