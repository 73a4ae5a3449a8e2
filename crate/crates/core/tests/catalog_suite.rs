use weylflow::catalog::{default_entries, entry_from_toml, from_selector, sample_points, CatalogError, FAMILIES};
use weylflow::identities::{run_check, run_suite, Status};

#[test]
fn every_family_builds_with_defaults() {
    for name in FAMILIES {
        let e = from_selector(name).unwrap_or_else(|err| panic!("{name}: {err}"));
        assert_eq!(e.family, *name);
        assert!(e.n() >= 3);
    }
}

#[test]
fn labels_are_canonical_selectors() {
    for e in default_entries() {
        let again = from_selector(&e.label()).unwrap();
        assert_eq!(again.label(), e.label());
    }
    let a = from_selector("sphere:r=1,n=4").unwrap().label();
    let b = from_selector("sphere:n=4, r=1").unwrap().label();
    assert_eq!(a, b);
}

#[test]
fn malformed_selectors() {
    for bad in [":n=4", "sphere:n", "sphere:n=4,n=5", "sphere:=4"] {
        assert!(matches!(from_selector(bad), Err(CatalogError::Selector(_))), "{bad}");
    }
    assert!(matches!(
        from_selector("perturbed_flat:eps=0.5"),
        Err(CatalogError::InvalidParam { .. })
    ));
}

#[test]
fn seeds_change_points() {
    let e = from_selector("perturbed_flat:n=4").unwrap();
    assert_eq!(sample_points(&e, 10, 1), sample_points(&e, 10, 1));
    assert_ne!(sample_points(&e, 10, 1), sample_points(&e, 10, 2));
    let first = sample_points(&e, 5, 7);
    assert_eq!(&sample_points(&e, 10, 7)[..5], &first[..]);
}

const CONFORMAL: &str = r#"
name = "conformal_bump"
n = 4
components = [
    "exp(c*x1^2)", "0", "0", "0",
    "exp(c*x1^2)", "0", "0",
    "exp(c*x1^2)", "0",
    "exp(c*x1^2)",
]
[parameters]
c = 0.5
[domain]
kind = "ball"
radius = 1.0
[facts]
weyl_vanishes = true
"#;

#[test]
fn file_entry_runs_through_the_suite() {
    let e = entry_from_toml(CONFORMAL).unwrap();
    assert_eq!(e.label(), "conformal_bump:c=0.5");
    let reports = run_suite(&[e], 42, 6);
    assert!(reports.iter().any(|r| r.check_id == "weyl_vanishes"));
    for r in &reports {
        assert!(r.pass, "{} on {}: {:?}", r.check_id, r.metric, r.max_residual);
        assert_eq!(r.status, Status::Pass, "{}", r.check_id);
    }
}

#[test]
fn false_fact_is_caught() {
    // the Weyl tensor of this metric is not zero
    let wrong = CONFORMAL.replace("\"exp(c*x1^2)\", \"0\", \"0\", \"0\",", "\"1 + c*x2^2\", \"0\", \"0\", \"0\",");
    let e = entry_from_toml(&wrong).unwrap();
    let points = sample_points(&e, 6, 42);
    let report = run_check("weyl_vanishes", &e, &points, None).unwrap();
    assert!(!report.pass);
    assert_eq!(report.status, Status::Fail);
}

#[test]
fn toml_errors_are_reported() {
    assert!(matches!(entry_from_toml("name = 3"), Err(CatalogError::File(_))));
    let unknown = CONFORMAL.replace("weyl_vanishes", "weyl_is_zero");
    assert!(matches!(entry_from_toml(&unknown), Err(CatalogError::File(_))));
    let short = CONFORMAL.replace("\"exp(c*x1^2)\",\n]", "]");
    assert!(entry_from_toml(&short).is_err());
}
