use cpl_core::config::{
    validate, validate_preset, validate_str, ExperimentConfig, RuntimeClass, Severity, PRESETS,
};

fn fields(text: &str, severity: Severity) -> Vec<(String, String)> {
    validate_str(text)
        .findings
        .into_iter()
        .filter(|f| f.severity == severity)
        .map(|f| (f.field, f.message))
        .collect()
}

#[test]
fn out_of_range_confounding_is_rejected_with_its_field() {
    let errs = fields(
        "preset = \"confounded-desk\"\n[world]\ngrid = [0.5, 1.2]\n",
        Severity::Error,
    );
    assert_eq!(errs.len(), 1, "{errs:?}");
    assert_eq!(errs[0].0, "world.grid[1]");
    assert!(
        errs[0].1.contains("[0.5, 1]") && errs[0].1.contains("1.2"),
        "{}",
        errs[0].1
    );
    assert!(ExperimentConfig::from_toml_str(
        "preset = \"confounded-desk\"\n[world]\ngrid = [1.2]\n"
    )
    .is_err());
}

#[test]
fn reversal_strength_without_an_adversary_warns() {
    let text = "preset = \"confounded-desk\"\n[models]\nvariants = [\"multihead\"]\nlambda = 0.5\n";
    let report = validate_str(text);
    assert!(report.is_ok());
    let warns = fields(text, Severity::Warning);
    assert_eq!(warns.len(), 1);
    assert_eq!(warns[0].0, "models.lambda");
    assert!(warns[0].1.contains("adversarial"));
}

#[test]
fn runtime_classes_separate_desk_and_paper_scale() {
    let class = |p| validate_preset(p).runtime_class.unwrap();
    assert_eq!(class("ultrafeedback-paper"), RuntimeClass::LongRunning);
    assert_eq!(class("confounded-paper"), RuntimeClass::LongRunning);
    assert_eq!(class("ultrafeedback-smoke"), RuntimeClass::Quick);
    assert_ne!(class("confounded-desk"), RuntimeClass::LongRunning);
    assert!(validate_preset("confounded-paper")
        .render()
        .contains("long-running"));
}

#[test]
fn unknown_fields_are_reported_by_path() {
    let errs = fields(
        "preset = \"ultrafeedback-desk\"\n[train]\nlearning_rat = 0.1\n",
        Severity::Error,
    );
    assert_eq!(errs.len(), 1);
    assert!(errs[0].0.starts_with("train"), "{errs:?}");
    assert!(errs[0].1.contains("learning_rat"));
}

#[test]
fn preset_chains_resolve_and_loops_fail() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    std::fs::write(&a, "preset = \"b.toml\"\nroot_seed = 9\n").unwrap();
    std::fs::write(&b, "preset = \"gaussian\"\n[gaussian]\nshift_n = 77\n").unwrap();
    let report = validate(&a);
    assert!(report.is_ok(), "{}", report.render());
    assert_eq!(
        report.presets,
        vec!["b.toml".to_string(), "gaussian".into()]
    );
    let cfg = report.config.unwrap();
    assert_eq!(
        (cfg.root_seed, cfg.gaussian.as_ref().unwrap().shift_n),
        (9, 77)
    );
    assert_eq!(cfg.gaussian.unwrap().rho_count, 20);

    std::fs::write(&b, "preset = \"a.toml\"\n").unwrap();
    let looped = validate(&a);
    assert!(!looped.is_ok());
    assert!(looped.findings[0].message.contains("loops"));

    let unknown = validate_str("preset = \"no-such-thing\"\n");
    assert!(unknown.findings[0].message.contains("ultrafeedback-desk"));
}

#[test]
fn resolved_configs_round_trip_through_toml() {
    for (name, _) in PRESETS {
        let cfg = ExperimentConfig::preset(name).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
}

#[test]
fn missing_sections_are_errors_and_stray_ones_warnings() {
    let errs = fields("name = \"x\"\nstudy = \"confounded\"\n", Severity::Error);
    assert!(errs.iter().any(|(f, _)| f == "world"), "{errs:?}");
    let warns = fields(
        "preset = \"gaussian\"\n[train]\nepochs = 1\nbatch_size = 2\nlearning_rate = 0.1\nseeds = [0]\n",
        Severity::Warning,
    );
    assert!(warns.iter().any(|(f, _)| f == "train"), "{warns:?}");
}
