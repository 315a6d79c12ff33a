use std::path::Path;
use std::process::Command;

fn lp_lab(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lp-lab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LP_LAB_OUT")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn exit_codes_follow_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "ok.json",
        r#"{"grid": {"L": 20, "N": 256}, "epsilons": [0.1], "T": 0.1}"#,
    );
    write(d, "bad_n.json", r#"{"grid": {"L": 20, "N": 1000}}"#);
    write(d, "foo.json", r#"{"grid": {"L": 20, "N": 256}, "foo": 1}"#);
    write(d, "kind.json", r#"{"grid": {"L": 20, "N": 256}, "kind": "reference"}"#);
    write(
        d,
        "blowup.json",
        r#"{"grid": {"L": 20, "N": 256}, "T": 5, "dt_ref": 0.1}"#,
    );

    assert_eq!(lp_lab(&["evolve", "--config", "ok.json", "--out", "o1"], d).0, 0);
    assert!(d.join("o1/manifest.json").exists());
    let (code, err) = lp_lab(&["evolve", "--config", "bad_n.json", "--out", "o2"], d);
    assert_eq!(code, 2);
    assert!(err.contains("N must be a power of two"), "{err}");
    assert_eq!(lp_lab(&["evolve", "--config", "foo.json", "--out", "o3"], d).0, 2);
    assert_eq!(lp_lab(&["evolve", "--config", "kind.json", "--out", "o4"], d).0, 2);
    assert_eq!(lp_lab(&["reference", "--config", "blowup.json", "--out", "o5"], d).0, 3);
    assert!(d.join("o5/manifest.json").exists());
    assert_eq!(lp_lab(&["evolve", "--config", "missing.json", "--out", "o6"], d).0, 1);
}

#[test]
fn output_root_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "c.json",
        r#"{"grid": {"L": 20, "N": 256}, "epsilons": [0.1], "T": 0.05, "output": "from_config"}"#,
    );
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lp-lab"));
        cmd.args(["evolve", "--config", "c.json"])
            .args(args)
            .current_dir(d)
            .env_remove("LP_LAB_OUT");
        if let Some(v) = env {
            cmd.env("LP_LAB_OUT", v);
        }
        assert!(cmd.status().unwrap().success());
    };
    run(None, &[]);
    assert!(d.join("from_config/manifest.json").exists());
    run(Some("from_env"), &[]);
    assert!(d.join("from_env/manifest.json").exists());
    run(Some("from_env2"), &["--out", "from_flag"]);
    assert!(d.join("from_flag/manifest.json").exists());
    assert!(!d.join("from_env2").exists());
}
