use std::path::Path;
use std::process::{Command, Output};

use cpl_core::suite::criteria::file_tree;

fn cpl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CPL_OUT_DIR")
        .output()
        .expect("spawn cpl")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

#[test]
fn out_of_range_rho_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "preset = \"confounded-desk\"\n[world]\ngrid = [0.5, 1.2]\n",
    )
    .unwrap();
    for cmd in ["validate", "run"] {
        let o = cpl(&[cmd, cfg.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(2), "{cmd}: {}", text(&o));
        assert!(text(&o).contains("world.grid[1]"), "{}", text(&o));
    }
    let o = cpl(
        &[
            "generate",
            "--world",
            "ultrafeedback",
            "--rho",
            "1.2",
            "--n",
            "5",
            "--out",
            "x.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn generate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (name, n, seed) in [("train", "300", "1"), ("val", "150", "2")] {
        let out = format!("data/{name}.jsonl");
        let o = cpl(
            &[
                "generate",
                "--world",
                "confounded",
                "--rho",
                "0.8",
                "--n",
                n,
                "--seed",
                seed,
                "--out",
                &out,
            ],
            d,
        );
        assert!(o.status.success(), "{}", text(&o));
    }
    let o = cpl(
        &[
            "train",
            "--train",
            "data/train.jsonl",
            "--validation",
            "data/val.jsonl",
            "--variant",
            "adversarial",
            "--epochs",
            "2",
            "--out",
            "m/adv.cplw",
        ],
        d,
    );
    assert!(o.status.success(), "{}", text(&o));
    assert!(d.join("m/adv.cplw").exists());
    let o = cpl(
        &[
            "eval",
            "--model",
            "m/adv.cplw",
            "--data",
            "data/val.jsonl",
            "--slice",
            "all",
            "--slice",
            "inconsistent",
            "--json",
        ],
        d,
    );
    assert!(o.status.success(), "{}", text(&o));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["n"], 150);

    let o = cpl(
        &[
            "eval",
            "--model",
            "m/adv.cplw",
            "--data",
            "data/val.jsonl",
            "--slice",
            "c=x",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_rerun_reproduces_outputs_and_env_sets_default_dir() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = Command::new(env!("CARGO_BIN_EXE_cpl"))
        .args(["gaussian", "--seed", "7"])
        .current_dir(d)
        .env("CPL_OUT_DIR", d.join("env"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o));
    let first = d.join("env/gaussian");
    assert!(first.join("manifest.json").exists());

    let o = cpl(
        &[
            "run",
            first.join("manifest.json").to_str().unwrap(),
            "--out",
            "again",
            "--jobs",
            "1",
        ],
        d,
    );
    assert!(o.status.success(), "{}", text(&o));
    assert_eq!(
        file_tree(&first).unwrap(),
        file_tree(&d.join("again")).unwrap()
    );
}

#[test]
fn missing_input_file_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpl(
        &["eval", "--model", "nope.cplw", "--data", "nope.jsonl"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("nope"), "{}", text(&o));
}
