//! End-to-end runs of the `stab` binary against a small config.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stab"))
}

fn write_config(dir: &Path, levels: &str, t_final: f64) -> std::path::PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"
[params]
eta0 = 1.0
beta0 = 0.8
kappa = 1.0
nu0 = 0.0
eta1 = 5.0
omega = 25.0

[run]
levels = {levels}
dt = 0.001
t_final = {t_final}
eval_time = 0.1
output_dir = "{}"
"#,
        out.display()
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn eigs_command_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[2, 3]", 0.2);
    let output = bin().args(["eigs", "--config"]).arg(&cfg).output().unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/eigs.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("h,"));
    assert!(header.contains("err_1_1_plus"));
    assert!(header.contains("err_1_2_plus"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn simulate_controlled_produces_energy_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[2]", 0.3);
    let output = bin()
        .args(["simulate", "--controlled", "--level", "2", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("2 unstable eigenvalue(s)"));
    let csv = std::fs::read_to_string(dir.path().join("out/energy_controlled_L2.csv")).unwrap();
    assert!(csv.starts_with("t,state_energy,control_energy"));
    assert_eq!(csv.lines().count(), 302);
}

#[test]
fn dump_riccati_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[2]", 0.1);
    let dump = dir.path().join("riccati");
    let output = bin()
        .args(["simulate", "--controlled", "--config"])
        .arg(&cfg)
        .arg("--dump-riccati")
        .arg(&dump)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    for name in ["Au_L2.mtx", "Bu_L2.mtx", "Qu_L2.mtx", "P_L2.mtx"] {
        let text = std::fs::read_to_string(dump.join(name)).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix array real general"));
    }
}

#[test]
fn convergence_and_cost_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[2, 3]", 0.15);
    let output = bin().args(["convergence", "--config"]).arg(&cfg).output().unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/table2.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("err_l2_y"));
    assert_eq!(csv.lines().count(), 2); // header + one level pair

    let output = bin().args(["cost", "--config"]).arg(&cfg).output().unwrap();
    assert!(output.status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/cost.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn missing_config_exits_2() {
    let output = bin().args(["eigs", "--config", "/nonexistent/cfg.toml"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[params]\neta0 = -1.0\nbeta0 = 0.8\nkappa = 1.0\nnu0 = 0.0\neta1 = 5.0\nomega = 25.0\n\n[run]\nlevels = [2]\n").unwrap();
    let output = bin().args(["eigs", "--config"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[2]", 0.1);
    let run = || {
        let output = bin().args(["simulate", "--controlled", "--config"]).arg(&cfg).output().unwrap();
        assert!(output.status.success());
        std::fs::read(dir.path().join("out/energy_controlled_L2.csv")).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn full_precision_flag_changes_formatting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[2]", 0.1);
    let output = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--precision", "full"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/energy_uncontrolled_L2.csv")).unwrap();
    // standard mode always prints exponent notation; full mode round-trips
    let line2 = csv.lines().nth(1).unwrap();
    assert!(!line2.split(',').next().unwrap().contains('e'));
}
