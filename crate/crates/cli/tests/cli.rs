use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fbm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Sinusoids plus a slow drift, `channels` columns after a date column.
fn toy_csv(dir: &Path, name: &str, rows: usize, channels: usize) -> PathBuf {
    let mut s = String::from("date");
    for c in 0..channels {
        s += &format!(",v{c}");
    }
    s.push('\n');
    for i in 0..rows {
        s += &format!("2020-01-01 {i:05}");
        for c in 0..channels {
            let x = i as f64;
            let v = (x * 0.4 + c as f64).sin() + 0.3 * (x * 0.1).cos() + 0.001 * x;
            s += &format!(",{v}");
        }
        s.push('\n');
    }
    let p = dir.join(name);
    std::fs::write(&p, s).unwrap();
    p
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const SMALL: &[&str] = &["--T", "16", "--L", "4", "--epochs", "3", "--batch", "16", "--lr", "0.01"];

fn train_toy(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", "toy.csv", "--out", out];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    fbm(&args, dir)
}

#[test]
fn missing_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbm(&["train", "--T", "16"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--data"));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn odd_lookback_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 300, 2);
    let o = fbm(&["train", "--data", "toy.csv", "--T", "335"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("even"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fbm(&["train", "--bogus"], dir.path())), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbm(&["data-inspect", "--data", "nope.csv"], dir.path());
    assert_eq!(code(&o), 2);
    std::fs::write(dir.path().join("bad.csv"), "date,a\nx,1\ny,abc\n").unwrap();
    let o = fbm(&["data-inspect", "--data", "bad.csv"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn train_then_eval_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 400, 2);
    let o = train_toy(dir.path(), "run", &["--predictions"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("run"));
    let test_mse = r["test"]["mse"].as_f64().unwrap();
    assert!(test_mse.is_finite());
    assert!(dir.path().join("run/predictions.csv").exists());

    let o = fbm(
        &["eval", "--checkpoint", "run/model.ckpt", "--data", "toy.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["mse"].as_f64().unwrap(), test_mse);
    assert_eq!(m["mae"].as_f64().unwrap(), r["test"]["mae"].as_f64().unwrap());

    let best = r["best_epoch"].as_u64().unwrap() as usize;
    let best_val = r["epochs"][best - 1]["val_mse"].as_f64().unwrap();
    let o = fbm(
        &["eval", "--checkpoint", "run/model.ckpt", "--data", "toy.csv", "--on", "val"],
        dir.path(),
    );
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["mse"].as_f64().unwrap(), best_val);
}

#[test]
fn eval_with_wrong_channel_count() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 400, 2);
    toy_csv(dir.path(), "wide.csv", 400, 3);
    assert_eq!(code(&train_toy(dir.path(), "run", &["--epochs", "1"])), 0);
    let o = fbm(&["eval", "--checkpoint", "run/model.ckpt", "--data", "wide.csv"], dir.path());
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("D=3") && e.contains("D=2"), "{e}");
}

#[test]
fn manifest_precedence_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 400, 2);
    std::fs::write(
        dir.path().join("m.txt"),
        "data=toy.csv\nT=16\nL=4\nepochs=2\nbatch=16\nlr=0.01\n",
    )
    .unwrap();
    let o = fbm(&["train", "--manifest", "m.txt", "--out", "a"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&dir.path().join("a"))["epochs"].as_array().unwrap().len(), 2);
    let o = fbm(&["train", "--manifest", "m.txt", "--epochs", "1", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(report(&dir.path().join("b"))["epochs"].as_array().unwrap().len(), 1);

    // the written manifest alone reproduces the run
    let o = fbm(&["train", "--manifest", "a/manifest.txt", "--out", "c"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (ra, rc) = (report(&dir.path().join("a")), report(&dir.path().join("c")));
    assert_eq!(ra["epochs"], rc["epochs"]);
    assert_eq!(ra["test"], rc["test"]);
    assert_eq!(ra["config"]["manifest"], rc["config"]["manifest"]);
}

#[test]
fn seeded_runs_match() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 400, 2);
    for out in ["x", "y"] {
        assert_eq!(code(&train_toy(dir.path(), out, &["--variant", "fbm-nl", "--h1", "8", "--h2", "8"])), 0);
    }
    let (a, b) = (report(&dir.path().join("x")), report(&dir.path().join("y")));
    assert_eq!(a["epochs"], b["epochs"]);
    assert_eq!(a["test"], b["test"]);
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 400, 2);
    let o = train_toy(dir.path(), "run", &["--lr", "1e300", "--epochs", "5"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("batch"), "{}", stderr(&o));
}

#[test]
fn seasonal_weights_export() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 400, 2);
    let o = train_toy(
        dir.path(),
        "s",
        &["--variant", "fbm-s", "--epochs", "1", "--patches", "2", "--h1", "4", "--h2", "4", "--h3", "4", "--c1", "4"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = fbm(&["weights", "--checkpoint", "s/model.ckpt", "--out", "w.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 16);
    assert!(text.starts_with("n,k1,"));
    assert!(text.lines().next().unwrap().ends_with(",k8"));

    assert_eq!(code(&train_toy(dir.path(), "l", &["--epochs", "1"])), 0);
    let o = fbm(&["weights", "--checkpoint", "l/model.ckpt"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn constant_window_features_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = String::from("date,a\n");
    for i in 0..40 {
        s += &format!("t{i},2.5\n");
    }
    std::fs::write(dir.path().join("flat.csv"), s).unwrap();
    let o = fbm(&["features", "--data", "flat.csv", "--T", "16", "--out", "f"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("f/features_c0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 9);
    for l in lines {
        assert!(l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{l}");
    }
}

#[test]
fn synthetic_spectrum_has_one_bin() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbm(&["synth", "--case", "1", "--n", "20", "--out", "c1.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let o = fbm(&["spectrum", "--data", "c1.csv", "--out", "s.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(text.starts_with("channel,k,mean_amp,lo95,hi95\n"));
    let active: Vec<String> = text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap() > 1e-6)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(active, vec!["4"]);
}

#[test]
fn describe_counts_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbm(&["model-describe", "--variant", "fbm-l", "--D", "1", "--json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["total"].as_u64().unwrap(), 56448 * 96);
}

#[test]
fn inspect_reports_shape_and_writes_cache() {
    let dir = tempfile::tempdir().unwrap();
    toy_csv(dir.path(), "toy.csv", 300, 3);
    let o = fbm(
        &["data-inspect", "--data", "toy.csv", "--T", "16", "--L", "4", "--cache", "c.bin"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((v["D"].as_u64(), v["N"].as_u64()), (Some(3), Some(300)));
    assert!(std::fs::read(dir.path().join("c.bin")).unwrap().starts_with(b"FBMCKPT1"));
}
