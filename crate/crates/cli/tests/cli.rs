use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
base = "lorenz"
name = "cli"
seed = 11
[system]
n_steps = 5000
[reservoir]
neurons = 25
density = 0.2
[readout]
delays = { kind = "random", mean = 3.0, sigma = 1.0, min = 1, max = 5 }
washout = 200
[data]
n_train = 2500
lyapunov_steps = 2500
[predict]
warmup = 400
horizon = 400
reference = 1500
[dmi]
tau_max = 15
bins = 8
"#;

fn delay_rc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delay-rc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("cli.toml");
    fs::write(&path, CONFIG).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run_ok(args: &[&str]) -> String {
    let out = delay_rc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_train_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("run");
    let out = out.to_str().unwrap();
    for cmd in ["generate", "train", "predict"] {
        let stdout = run_ok(&[cmd, "--config", &cfg, "--out", out]);
        assert!(stdout.contains("wrote"), "{stdout}");
        assert!(Path::new(out).join(format!("{cmd}.manifest.json")).exists());
    }
    for f in [
        "trajectory.csv",
        "readout.json",
        "prediction.csv",
        "predict_report.json",
    ] {
        assert!(Path::new(out).join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(out).join("predict_report.json")).unwrap()).unwrap();
    assert!(report.get("climate").is_some());
}

#[test]
fn predict_without_training_names_the_missing_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("empty");
    let res = delay_rc(&["predict", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("delay-rc train"), "{err}");
}

#[test]
fn unknown_preset_lists_the_known_ones() {
    let res = delay_rc(&["generate", "--config", "no-such-preset"]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("lorenz"), "{err}");
}

#[test]
fn outputs_do_not_depend_on_jobs_and_replay_from_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let dirs: Vec<_> = ["one", "eight", "replay"].iter().map(|d| tmp.path().join(d)).collect();
    run_ok(&[
        "dmi",
        "--config",
        &cfg,
        "--jobs",
        "1",
        "--out",
        dirs[0].to_str().unwrap(),
    ]);
    run_ok(&[
        "dmi",
        "--config",
        &cfg,
        "--jobs",
        "8",
        "--out",
        dirs[1].to_str().unwrap(),
    ]);
    let manifest = dirs[0].join("dmi.manifest.json");
    run_ok(&[
        "dmi",
        "--config",
        manifest.to_str().unwrap(),
        "--jobs",
        "3",
        "--out",
        dirs[2].to_str().unwrap(),
    ]);
    for name in ["dmi.csv", "dmi.manifest.json"] {
        let first = fs::read(dirs[0].join(name)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(
                first,
                fs::read(d.join(name)).unwrap(),
                "{name} differs in {}",
                d.display()
            );
        }
    }
}

#[test]
fn seed_flag_changes_the_reservoir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["train", "--config", &cfg, "--out", a.to_str().unwrap()]);
    run_ok(&["train", "--config", &cfg, "--seed", "12", "--out", b.to_str().unwrap()]);
    assert_ne!(
        fs::read(a.join("readout.json")).unwrap(),
        fs::read(b.join("readout.json")).unwrap()
    );
}
