use std::process::{Command, Output};

use symplectic_adjoint::dynamics::params_io::ParamFile;

fn sadj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sadj")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_kind(o: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).expect("error document on stderr");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn grad_json_on_decay() {
    let o = sadj(&["grad", "--problem", "decay", "--engine", "symplectic", "--fixed-h", "0.05"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // x(1) = e^{-1/2}; dL/dθ = x(1) in closed form.
    let expected = (-0.5f64).exp();
    assert!((v["grad_x0"][0].as_f64().unwrap() - expected).abs() < 1e-6);
    assert!((v["grad_theta"][0].as_f64().unwrap() - expected).abs() < 1e-6);
    assert_eq!(v["accounting"]["steps_accepted"], 20);
    assert!(v["gradient_error_vs_oracle"].as_f64().unwrap() < 1e-12);
}

#[test]
fn grad_csv_is_one_row() {
    let o = sadj(&["grad", "--problem", "rotation", "--engine", "backprop_full", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("engine,tableau,atol,rtol,N,"));
    assert!(lines[1].starts_with("backprop_full,dopri5,"));
    assert!(lines[1].ends_with(",ok"));
}

#[test]
fn unknown_names_are_usage_errors() {
    let o = sadj(&["grad", "--problem", "decay", "--engine", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "UnknownEngine");

    let o = sadj(&["grad", "--problem", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "UnknownProblem");

    let o = sadj(&["sweep-tableau", "--problem", "decay", "--tableaus", "rk99"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "UnknownMethod");

    let o = sadj(&["grad", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "UsageError");
}

#[test]
fn empty_engine_list_gives_header_only() {
    let o = sadj(&["sweep-tolerance", "--problem", "decay", "--engines", ""]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn tolerance_sweep_is_engine_major() {
    let o = sadj(&["sweep-tolerance", "--problem", "decay", "--engines", "adjoint,symplectic", "--atol", "1e-6,1e-4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let cells: Vec<(String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<_> = l.split(',').collect();
            (f[0].to_string(), f[2].to_string())
        })
        .collect();
    let expected = [("adjoint", "1e-6"), ("adjoint", "1e-4"), ("symplectic", "1e-6"), ("symplectic", "1e-4")];
    assert_eq!(cells.len(), 4);
    for ((e, a), (ee, ea)) in cells.iter().zip(expected) {
        assert_eq!(e, ee);
        assert_eq!(a.parse::<f64>().unwrap(), ea.parse::<f64>().unwrap());
    }
}

#[test]
fn zero_epochs_is_header_only() {
    let o = sadj(&["train", "--problem", "decay", "--epochs", "0"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "epoch,loss,nfe_fwd,nfe_bwd,vjp_count,peak_scalars");
}

#[test]
fn trained_parameters_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("theta.bin");
    let o = sadj(&["train", "--problem", "decay", "--epochs", "50", "--format", "json", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let theta = v["theta"][0].as_f64().unwrap();
    assert_eq!(v["losses"].as_array().unwrap().len(), 50);
    let file = ParamFile::load(&path).unwrap();
    assert_eq!(file.params, vec![theta]);
    assert_eq!(file.state_dim, 3);
}

#[test]
fn fixed_step_output_is_reproducible() {
    let args = ["sweep-tableau", "--problem", "mlp_node", "--fixed-h", "0.1", "--tableaus", "bosh3,dopri8"];
    let strip = |o: &Output| -> Vec<String> {
        stdout(o)
            .lines()
            .map(|l| {
                let mut f: Vec<_> = l.split(',').collect();
                f.remove(10);
                f.join(",")
            })
            .collect()
    };
    let a = sadj(&args);
    let b = sadj(&args);
    assert!(a.status.success());
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn help_exits_cleanly() {
    let o = sadj(&["--help"]);
    assert!(o.status.success());
    for cmd in ["grad", "sweep-tolerance", "sweep-tableau", "train"] {
        assert!(stdout(&o).contains(cmd));
    }
}
