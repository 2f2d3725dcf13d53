use std::path::Path;
use std::process::{Command, Output};

fn flowmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowmap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run flowmap")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = flowmap(&["generate", "--system", "linear-2d", "--pairs", "50", "--seed", "4", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let body: Vec<&str> = std::str::from_utf8(&text)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect();
    assert_eq!(body[0], "delta,x_in_1,x_in_2,alpha_1,alpha_2,x_out_1,x_out_2");
    assert_eq!(body.len(), 51);
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    let traj = dir.path().join("traj.csv");
    let o = flowmap(&["generate", "--system", "linear-scalar", "--pairs", "300", "--out", path(&data)]);
    assert!(o.status.success());
    let o = flowmap(&[
        "train", "--data", path(&data), "--spec", "2,8", "--epochs", "3", "--out", path(&model),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = flowmap(&[
        "predict", "--model", path(&model), "--x0", "1", "--alpha", "0.5", "--steps", "10", "--out", path(&traj),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&traj).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x_1");
    assert_eq!(lines.len(), 12);
    assert!(lines[1].ends_with(",1.0000000000000000e0"), "{}", lines[1]);
}

#[test]
fn predict_rejects_wrong_state_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    flowmap(&["generate", "--system", "linear-scalar", "--pairs", "60", "--out", path(&data)]);
    flowmap(&["train", "--data", path(&data), "--spec", "1,3", "--epochs", "1", "--out", path(&model)]);
    let o = flowmap(&["predict", "--model", path(&model), "--x0", "1,2", "--alpha", "0.5", "--steps", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("expected 1"), "{err}");
}

#[test]
fn bound_prints_factor_and_bounds() {
    let o = flowmap(&["bound", "--n", "10", "--L", "1", "--delta", "0.1", "--eps", "1e-3", "--ct", "1"]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    let c = (1.0f64).exp_m1() / (0.1f64).exp_m1();
    let line = out.lines().find(|l| l.starts_with("C(n, L, Delta)")).expect("factor row");
    let value: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!((value - c).abs() <= 1e-12 * c, "{line}");
}

#[test]
fn bound_overflow_is_a_runtime_error() {
    let o = flowmap(&["bound", "--n", "100000", "--L", "1", "--delta", "0.1", "--eps", "1e-3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_model_file_is_invalid_input() {
    let o = flowmap(&["predict", "--model", "/nonexistent/model.json", "--x0", "1", "--alpha", "0.5", "--steps", "1"]);
    assert_eq!(o.status.code(), Some(1));
}
