use std::process::Command;

fn ican() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ican"))
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn simulate_is_byte_reproducible() {
    let d = tmp();
    let a = d.path().join("a.csv");
    let b = d.path().join("b.csv");
    for out in [&a, &b] {
        let st = ican().args(["simulate", "--dataset", "1", "--n", "200", "--seed", "7", "--out"]).arg(out).status().unwrap();
        assert_eq!(st.code(), Some(0));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 201);
}

#[test]
fn simulate_writes_truth() {
    let d = tmp();
    let out = d.path().join("s.csv");
    let truth = d.path().join("t.csv");
    let st = ican()
        .args(["simulate", "--dataset", "section3", "--n", "30", "--seed", "1", "--out"])
        .arg(&out)
        .arg("--truth")
        .arg(&truth)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let text = std::fs::read_to_string(truth).unwrap();
    assert!(text.starts_with("t,nx,ny"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(ican().arg("nonsense").status().unwrap().code(), Some(1));
    assert_eq!(ican().args(["simulate", "--dataset", "9", "--n", "5", "--seed", "1", "--out", "x"]).status().unwrap().code(), Some(1));
    assert_eq!(ican().args(["fit"]).status().unwrap().code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let d = tmp();
    let bad = d.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,x\n").unwrap();
    assert_eq!(ican().arg("hsic").arg(&bad).status().unwrap().code(), Some(2));
    assert_eq!(ican().args(["fit", "/nonexistent.csv"]).status().unwrap().code(), Some(2));
}

#[test]
fn hsic_reports_json() {
    let d = tmp();
    let data = d.path().join("d.csv");
    ican().args(["simulate", "--dataset", "1", "--n", "100", "--seed", "2", "--out"]).arg(&data).status().unwrap();
    let out = ican().arg("hsic").arg(&data).args(["--method", "perm", "--perms", "200"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["hsic"].as_f64().unwrap() > 0.0);
    let p = v["p_perm"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
}

#[test]
fn moments_subcommands() {
    let d = tmp();
    let problems = d.path().join("p.json");
    std::fs::write(&problems, r#"{"problems":[{"order":1,"c_values":[0.0,1.0],"observed":[0.0,0.5]}]}"#).unwrap();
    let out = ican().args(["moments", "--config"]).arg(&problems).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["moments_y"][0].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let study = d.path().join("s.json");
    std::fs::write(
        &study,
        r#"{"curve":{"kind":"sinh"},"noise_x":{"family":"normal","sd":0.3},"noise_y":{"family":"normal","sd":0.5},
            "latent":{"family":"normal","sd":1.0},"y_points":[0.0,1.5,5.0],"order":2,
            "ell_values":[1.0,2.0],"samples_per_ell":20000,"seeds":2}"#,
    )
    .unwrap();
    let out = ican().args(["moments", "--config"]).arg(&study).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);

    let table = d.path().join("t.csv");
    let st = ican().args(["scaling-study", "--config"]).arg(&study).arg("--out").arg(&table).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let text = std::fs::read_to_string(table).unwrap();
    assert!(text.starts_with("ell,order,seed"));
    // 2 ells × 2 seeds × 2 orders
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn fit_on_heteroscedastic_data_reports_no_can_fit() {
    let d = tmp();
    let data = d.path().join("d3.csv");
    let report = d.path().join("r.json");
    ican().args(["simulate", "--dataset", "3", "--n", "200", "--seed", "0", "--out"]).arg(&data).status().unwrap();
    let st = ican().arg("fit").arg(&data).args(["--max-iters", "5", "--out"]).arg(&report).status().unwrap();
    assert_eq!(st.code(), Some(3));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["decision"], "NoCanFit");
    for key in ["var_ratio", "p_values", "iterations", "config", "normalization", "t_hat", "curve_eval"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["t_hat"].as_array().unwrap().len(), 200);
    assert_eq!(v["curve_eval"]["grid"].as_array().unwrap().len(), v["curve_eval"]["u"].as_array().unwrap().len());
}
