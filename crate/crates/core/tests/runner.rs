use std::path::Path;

use cpl_core::config::ExperimentConfig;
use cpl_core::runner::{run, Manifest, RunOptions, StudyReport, MANIFEST_FILE};

fn opts(dir: &Path, jobs: usize) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        jobs,
    }
}

fn tiny(preset: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(preset).unwrap();
    let w = cfg.world.as_mut().unwrap();
    w.n_train = 120;
    w.n_validation = 40;
    w.n_test = 80;
    cfg
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn training_runs_are_byte_identical_across_worker_counts() {
    for preset in ["ultrafeedback-smoke", "confounded-smoke"] {
        let cfg = tiny(preset);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run(&cfg, &opts(a.path(), 1)).unwrap();
        let rb = run(&cfg, &opts(b.path(), 4)).unwrap();
        assert_eq!(ra.manifest, rb.manifest);
        let (ta, tb) = (tree(a.path()), tree(b.path()));
        assert_eq!(ta, tb, "{preset}");
        // every file but the manifest is listed, with its digest
        assert_eq!(ta.len(), ra.manifest.outputs.len() + 1);
        assert!(ta.iter().any(|(p, _)| p.ends_with("train.jsonl")));
        assert!(ta.iter().any(|(p, _)| p.ends_with(".cplw")));
        let StudyReport::Experiment(r) = ra.report else {
            panic!()
        };
        assert_eq!(r.meta.seeds, vec![0, 1]);
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let cfg = tiny("confounded-smoke");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run(&cfg, &opts(a.path(), 2)).unwrap();
    let loaded = Manifest::load(a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded, first.manifest);
    let second = run(&loaded.config, &opts(b.path(), 2)).unwrap();
    assert_eq!(second.manifest, first.manifest);
    assert_eq!(
        std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
    );
    assert!(first.manifest.seeds.keys().any(|k| k.ends_with("/init")));
}

#[test]
fn tampered_manifests_are_rejected() {
    let cfg = tiny("ultrafeedback-smoke");
    let dir = tempfile::tempdir().unwrap();
    let m = run(&cfg, &opts(dir.path(), 0)).unwrap().manifest;
    let mut bad = m.clone();
    bad.config.root_seed += 1;
    assert!(Manifest::from_json(&bad.to_json().unwrap()).is_err());
    assert!(Manifest::from_json(&m.to_json().unwrap()).is_ok());
}

#[test]
fn analytic_studies_are_reproducible() {
    for preset in ["gaussian", "oracle", "amce"] {
        let mut cfg = ExperimentConfig::preset(preset).unwrap();
        if let Some(g) = cfg.gaussian.as_mut() {
            g.mc_samples = 20_000;
            g.shift_n = 5_000;
            g.fit_reps = 5;
            g.fit_n = 500;
        }
        if let Some(o) = cfg.oracle.as_mut() {
            o.worlds = 3;
        }
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run(&cfg, &opts(a.path(), 3)).unwrap();
        run(&cfg, &opts(b.path(), 1)).unwrap();
        assert_eq!(tree(a.path()), tree(b.path()), "{preset}");
        if let StudyReport::Oracle(r) = &ra.report {
            assert!(
                r.all_pass(),
                "{:?}",
                r.checks
                    .iter()
                    .map(|c| (&c.name, c.report.verdict))
                    .collect::<Vec<_>>()
            );
            assert!(r.micro.bias.abs() > 0.05);
        }
    }
}

#[test]
fn failures_name_their_stage() {
    let mut cfg = tiny("confounded-smoke");
    cfg.world.as_mut().unwrap().n_validation = 0;
    let dir = tempfile::tempdir().unwrap();
    let e = run(&cfg, &opts(dir.path(), 1)).unwrap_err();
    assert_eq!(e.stage, "validate");
    assert!(e.to_string().contains("stage 'validate' failed"));
}
