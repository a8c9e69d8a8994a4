use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ailsrs_core::demo_io::{load_policy, load_trajectories, save_policy};
use ailsrs_core::envs::riccati_optimal;
use ailsrs_core::{Env, EnvKind, ObservationNormalizer};
use tempfile::TempDir;

fn ailsrs(args: &[&str]) -> Output {
    ailsrs_with_threads(args, "0")
}

fn ailsrs_with_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ailsrs"))
        .args(args)
        .env("AILSRS_THREADS", threads)
        .output()
        .expect("spawn ailsrs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn riccati_policy(dir: &Path) -> PathBuf {
    let sol = riccati_optimal(&Env::new(EnvKind::Lqr2d)).unwrap();
    let path = dir.join("riccati.policy");
    save_policy(
        EnvKind::Lqr2d,
        &sol.policy,
        &ObservationNormalizer::new(2),
        &path,
    )
    .unwrap();
    path
}

fn riccati_demos(dir: &Path, episodes: &str) -> PathBuf {
    let policy = riccati_policy(dir);
    let demos = dir.join(format!("demos{episodes}.jsonl"));
    let out = ailsrs(&[
        "record",
        "--env",
        "lqr2d",
        "--policy",
        p(&policy),
        "--episodes",
        episodes,
        "--seed",
        "7",
        "--out",
        p(&demos),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    demos
}

#[test]
fn missing_env_is_usage_error() {
    let out = ailsrs(&["eval", "--policy", "x.policy"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ailsrs(&["train-expert", "--iters", "5", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_env_is_usage_error() {
    let out = ailsrs(&["eval", "--env", "cartpole", "--policy", "x.policy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lqr2d"));
}

#[test]
fn record_writes_loadable_demos() {
    let dir = TempDir::new().unwrap();
    let demos = riccati_demos(dir.path(), "50");
    let set = load_trajectories(&demos).unwrap();
    assert_eq!(set.len(), 50);
    let header = fs::read_to_string(&demos).unwrap();
    assert!(header.lines().next().unwrap().contains("\"episodes\":50"));
}

#[test]
fn record_with_missing_policy_is_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = ailsrs(&[
        "record",
        "--env",
        "lqr2d",
        "--policy",
        p(&dir.path().join("nope")),
        "--episodes",
        "3",
        "--out",
        p(&dir.path().join("d.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn eval_matches_riccati_estimate() {
    let dir = TempDir::new().unwrap();
    let policy = riccati_policy(dir.path());
    let out = ailsrs(&[
        "eval",
        "--env",
        "lqr2d",
        "--policy",
        p(&policy),
        "--episodes",
        "100",
        "--seed",
        "0",
    ]);
    assert!(out.status.success());
    let sol = riccati_optimal(&Env::new(EnvKind::Lqr2d)).unwrap();
    let printed = stdout(&out);
    assert!(
        printed.starts_with(&format!("{:.6} ± ", sol.optimal_return)),
        "{printed}"
    );
}

#[test]
fn eval_single_episode_has_zero_std() {
    let dir = TempDir::new().unwrap();
    let policy = riccati_policy(dir.path());
    let out = ailsrs(&[
        "eval",
        "--env",
        "lqr2d",
        "--policy",
        p(&policy),
        "--episodes",
        "1",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).trim_end().ends_with("± 0.000000"));
}

#[test]
fn eval_rejects_policy_for_other_env() {
    let dir = TempDir::new().unwrap();
    let policy = riccati_policy(dir.path());
    let out = ailsrs(&["eval", "--env", "pendulum", "--policy", p(&policy)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bc_closed_form_recovers_expert() {
    let dir = TempDir::new().unwrap();
    let demos = riccati_demos(dir.path(), "50");
    let bc = dir.path().join("bc.policy");
    let out = ailsrs(&[
        "bc",
        "--demos",
        p(&demos),
        "--out",
        p(&bc),
        "--ridge",
        "1e-8",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let file = load_policy(&bc, Some(EnvKind::Lqr2d)).unwrap();
    let env = Env::new(EnvKind::Lqr2d);
    let eval = ailsrs_core::envs::evaluate(&file.policy, &file.normalizer, &env, 100, 0).unwrap();
    let expert = riccati_optimal(&env).unwrap().optimal_return;
    assert!(ailsrs_core::return_ratio(eval.mean, expert) >= 0.95);
}

#[test]
fn bc_modes_are_exclusive() {
    let out = ailsrs(&[
        "bc", "--demos", "d", "--out", "o", "--ridge", "0.1", "--epochs", "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = ailsrs(&[
        "bc", "--demos", "d", "--out", "o", "--ridge", "0.1", "--lr", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bc_on_empty_demos_is_runtime_error() {
    let dir = TempDir::new().unwrap();
    let demos = dir.path().join("empty.jsonl");
    fs::write(&demos, "").unwrap();
    let out = ailsrs(&[
        "bc",
        "--demos",
        p(&demos),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_expert_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.policy");
    let b = dir.path().join("b.policy");
    for (path, threads) in [(&a, "0"), (&b, "3")] {
        let out = ailsrs_with_threads(
            &[
                "train-expert",
                "--env",
                "pointmass2d",
                "--iters",
                "20",
                "--n-dirs",
                "4",
                "--seed",
                "3",
                "--out",
                p(path),
            ],
            threads,
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn bad_thread_count_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = ailsrs_with_threads(
        &[
            "train-expert",
            "--env",
            "lqr2d",
            "--iters",
            "1",
            "--out",
            p(&dir.path().join("x")),
        ],
        "many",
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_policy_and_metrics() {
    let dir = TempDir::new().unwrap();
    let demos = riccati_demos(dir.path(), "5");
    let config = dir.path().join("train.cfg");
    fs::write(
        &config,
        "# small run\nn_directions = 4\nmax_iterations = 50\neval_every = 5\neval_episodes = 3\n",
    )
    .unwrap();
    let policy = dir.path().join("out.policy");
    let metrics = dir.path().join("metrics.csv");
    let out = ailsrs(&[
        "train",
        "--env",
        "lqr2d",
        "--demos",
        p(&demos),
        "--config",
        p(&config),
        "--iters",
        "12",
        "--out",
        p(&policy),
        "--metrics",
        p(&metrics),
        "--seed",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 13, "flag --iters overrides the file");
    assert!(lines[0].starts_with("iteration,mean_disc_return"));
    for (k, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 7);
        assert_eq!(cells[0].parse::<usize>().unwrap(), k + 1);
        assert_eq!(cells[4].is_empty(), (k + 1) % 5 != 0 && k + 1 != 12);
        assert!(cells[6].is_empty());
    }
    assert!(load_policy(&policy, Some(EnvKind::Lqr2d)).is_ok());
}

#[test]
fn train_rejects_unknown_config_key() {
    let dir = TempDir::new().unwrap();
    let demos = riccati_demos(dir.path(), "2");
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "n_dirs = 4\n").unwrap();
    let out = ailsrs(&[
        "train",
        "--env",
        "lqr2d",
        "--demos",
        p(&demos),
        "--config",
        p(&config),
        "--out",
        p(&dir.path().join("o")),
        "--metrics",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_rejects_demos_for_other_env() {
    let dir = TempDir::new().unwrap();
    let demos = riccati_demos(dir.path(), "2");
    let out = ailsrs(&[
        "train",
        "--env",
        "pointmass2d",
        "--demos",
        p(&demos),
        "--iters",
        "2",
        "--out",
        p(&dir.path().join("o")),
        "--metrics",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_accepts_bc_init() {
    let dir = TempDir::new().unwrap();
    let demos = riccati_demos(dir.path(), "5");
    let bc = dir.path().join("bc.policy");
    assert!(ailsrs(&[
        "bc",
        "--demos",
        p(&demos),
        "--out",
        p(&bc),
        "--ridge",
        "1e-8"
    ])
    .status
    .success());
    let out = ailsrs(&[
        "train",
        "--env",
        "lqr2d",
        "--demos",
        p(&demos),
        "--init",
        p(&bc),
        "--iters",
        "3",
        "--n-dirs",
        "2",
        "--eval-every",
        "1",
        "--eval-episodes",
        "5",
        "--out",
        p(&dir.path().join("o")),
        "--metrics",
        p(&dir.path().join("m")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
