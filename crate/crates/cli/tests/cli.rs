use std::path::Path;
use std::process::Command;

use habit_cli::{run, RunConfig};

fn habit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_habit"))
}

/// Small grid so that a policy solve takes well under a second.
const SMALL: &str = "\
grid.w_max = 60
grid.n_w = 61
grid.c_min = 0.5
grid.c_max = 20
grid.n_c = 20
grid.n_time = 1100
sim.n_paths = 400
scaled.n_xs = 101
scaled.n_time = 2000
";

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path
}

#[test]
fn simulate_twice_gives_identical_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = habit()
            .args(["simulate", "--w0", "10", "--cbar0", "5", "--eta", "1.0", "--seed", "42", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("sim_stats.csv")).unwrap());
    }
    // the header names the output directory, which differs between runs
    let strip = |b: &[u8]| -> String {
        String::from_utf8(b.to_vec()).unwrap().lines().filter(|l| !l.starts_with("# output.dir")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip(&outputs[0]), strip(&outputs[1]));
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.contains("w0,cbar0,eta,mean_age,std_age,censored_frac"));
}

#[test]
fn missing_config_names_the_path() {
    let out = habit().args(["solve", "--config", "/no/such/file.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.cfg"));
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "model.gamma = 1\n");
    let out = habit().arg("solve").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.gamma"));

    let cfg = write_config(dir.path(), "model.unknown = 1\n");
    let out = habit().arg("solve").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.unknown"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(habit().arg("launch").output().unwrap().status.code(), Some(2));
    assert_eq!(habit().args(["solve", "--bogus"]).output().unwrap().status.code(), Some(2));
    assert_eq!(habit().args(["solve", "--eta", "fast"]).output().unwrap().status.code(), Some(2));
    assert_eq!(habit().output().unwrap().status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = habit().arg("solve").env("HABIT_HJB_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("HABIT_HJB_THREADS"));
}

#[test]
fn header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_text(SMALL).unwrap();
    cfg.model.eta = 0.3;
    cfg.out = dir.path().join("first");
    let files = run(habit_cli::Command::Solve, &cfg).unwrap();
    let first = std::fs::read_to_string(&files[0]).unwrap();
    assert!(first.starts_with("# habit-cli "));

    let mut again = RunConfig::from_header(&first).unwrap();
    assert_eq!(again, cfg.resolved());
    again.out = dir.path().join("second");
    let files = run(habit_cli::Command::Solve, &again).unwrap();
    let second = std::fs::read_to_string(&files[0]).unwrap();
    let body = |s: &str| s.lines().filter(|l| !l.starts_with('#')).map(String::from).collect::<Vec<_>>();
    assert_eq!(body(&first), body(&second));
    assert_eq!(body(&first)[0], "t,w,cbar,V,c_star");
}

#[test]
fn empty_sweep_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.eta =\n");
    let out = dir.path().join("out");
    let status = habit().arg("sweep").arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    assert!(!out.exists());
}

#[test]
fn sweep_isolates_failing_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_text(SMALL).unwrap();
    cfg.out = dir.path().to_path_buf();
    // theta = 1.5 fails validation, the other share still runs
    cfg.sweep.theta = Some(vec![0.2, 1.5]);
    let outcome = habit_cli::sweep::run_sweep(&cfg).unwrap();
    assert_eq!(outcome.combinations, 2);
    assert_eq!(outcome.failures.len(), 1);
    assert!(outcome.failures[0].1.contains("model.theta"));
    assert_eq!(outcome.written.len(), 3);
    assert!(outcome.written.iter().all(|p| p.exists()));
}

#[test]
fn sweep_curves_level_off_in_habit_and_ignore_volatility() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_text(SMALL).unwrap();
    cfg.out = dir.path().to_path_buf();
    cfg.model.eta = 0.01;
    cfg.grid.n_time = Some(1000);
    let sol = habit_core::pension::solve(&cfg.model, &cfg.grid2d().unwrap()).unwrap();
    let rows = habit_cli::sweep::consumption_vs_habit(&sol, &[1.0]);
    // consumption against habit at w = 1 flattens: the last steps change
    // it far less than the first
    let c: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let first = (c[3] - c[0]).abs();
    let last = (c[c.len() - 1] - c[c.len() - 4]).abs();
    assert!(last < 0.25 * first, "first {first} last {last}");

    let base = habit_core::ModelParams { eta: 1.0, theta: 0.2, ..cfg.model };
    let grid = habit_core::numerics::Grid2D::uniform(60.0, 61, 0.5, 20.0, 20, 4400, base.horizon).unwrap();
    let curves: Vec<Vec<Vec<f64>>> = [0.16, 0.5, 0.75]
        .iter()
        .map(|&sigma| {
            let p = habit_core::ModelParams { sigma, ..base };
            habit_cli::sweep::consumption_vs_wealth(&habit_core::pension::solve(&p, &grid).unwrap(), &[5.0])
        })
        .collect();
    for i in 0..curves[0].len() {
        let w = curves[0][i][2];
        if !(1.0..=40.0).contains(&w) {
            continue;
        }
        let base_c = curves[0][i][3];
        for other in &curves[1..] {
            assert!((other[i][3] - base_c).abs() <= 0.15 * base_c, "w {w}: {} vs {base_c}", other[i][3]);
        }
    }
}
