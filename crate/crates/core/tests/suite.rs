use cpl_core::suite::{
    assert_trend, coverage, run_full_battery, BatteryOptions, Budget, Outcome, TrendAssertion,
    INVARIANT_SUITES,
};

#[test]
fn trend_examples() {
    let ood = [64.5, 62.0, 59.7, 57.8];
    assert!(
        assert_trend(&ood, &TrendAssertion::decreasing(3.0))
            .unwrap()
            .pass
    );
    assert!(
        assert_trend(&ood, &TrendAssertion::decreasing(3.0).strict())
            .unwrap()
            .pass
    );
    assert!(
        !assert_trend(&ood, &TrendAssertion::increasing(0.0))
            .unwrap()
            .pass
    );
    let e = assert_trend(&[55.9, 56.3, 58.9], &TrendAssertion::increasing(1.0)).unwrap();
    assert!(e.pass);
    assert!((e.endpoint_delta - 3.0).abs() < 1e-12);
    assert!(
        !assert_trend(&[5.0; 4], &TrendAssertion::increasing(0.1))
            .unwrap()
            .pass
    );
    assert!(
        assert_trend(&[5.0; 4], &TrendAssertion::flat_within(0.0))
            .unwrap()
            .pass
    );
}

#[test]
fn incomplete_series_are_rejected() {
    assert!(assert_trend(&[], &TrendAssertion::increasing(0.0)).is_err());
    assert!(assert_trend(&[1.0], &TrendAssertion::increasing(0.0)).is_err());
    assert!(assert_trend(&[1.0, f64::NAN], &TrendAssertion::decreasing(0.0)).is_err());
    assert!(assert_trend(&[1.0, 2.0], &TrendAssertion::increasing(-1.0)).is_err());
}

#[test]
fn every_module_is_covered() {
    let modules: Vec<&str> = INVARIANT_SUITES.iter().map(|(m, _)| *m).collect();
    for m in &modules {
        assert!(coverage().iter().any(|e| e.module == *m), "{m}");
    }
    assert!(coverage().iter().all(|e| !e.checks.is_empty()));
}

#[test]
fn smoke_battery_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let opts = BatteryOptions {
        budget: Budget::Smoke,
        root_seed: 3,
        jobs: 4,
        out_dir: dir.path().to_path_buf(),
    };
    let s = run_full_battery(&opts).unwrap();
    assert!(s.pass(), "{}", s.render_text());
    let criteria = s.suites.iter().find(|x| x.name == "criteria").unwrap();
    let skipped = criteria
        .checks
        .iter()
        .filter(|c| c.outcome == Outcome::Skipped)
        .count();
    assert_eq!(skipped, 2);
    let coverage = s.suites.iter().find(|x| x.name == "coverage").unwrap();
    assert_eq!(
        coverage.checks[0].outcome,
        Outcome::Pass,
        "{}",
        coverage.checks[0].detail
    );

    s.write(dir.path()).unwrap();
    let xml = std::fs::read_to_string(dir.path().join("battery.xml")).unwrap();
    assert!(xml.starts_with("<?xml") && xml.trim_end().ends_with("</testsuites>"));
    assert_eq!(
        xml.matches("<testcase").count(),
        s.suites.iter().map(|x| x.checks.len()).sum::<usize>()
    );
    assert!(xml.contains("<skipped"));
    assert!(std::fs::read_to_string(dir.path().join("battery.txt"))
        .unwrap()
        .contains("PASS"));
}
