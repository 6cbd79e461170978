//! Every built-in scenario meets the properties it declares.

use daot_core::scenarios::{by_name, check_properties, ScenarioSpec, SCENARIO_NAMES};

fn assert_expected(spec: ScenarioSpec) {
    let inst = spec.instance().unwrap();
    assert!(inst.feasibility().unwrap().feasible, "{}", inst.name);
    let mut solver = inst.solver().unwrap();
    let report = solver.run().unwrap();
    let checks = check_properties(&inst, &mut solver, &report, &inst.expected).unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        assert!(c.passed, "{}: {:?} failed: {}", inst.name, c.property, c.detail);
    }
}

#[test]
fn scenario_61() {
    assert_expected(by_name("61").unwrap());
}

#[test]
fn scenario_62_line() {
    assert_expected(by_name("62_line").unwrap());
}

#[test]
fn scenario_62_coupled() {
    assert_expected(by_name("62_coupled").unwrap());
}

#[test]
fn scenario_63() {
    assert_expected(by_name("63").unwrap());
}

#[test]
fn scenario_64() {
    assert_expected(by_name("64").unwrap());
}

#[test]
fn names_resolve_and_round_trip() {
    for name in SCENARIO_NAMES {
        let spec = by_name(name).unwrap();
        assert_eq!(spec.name, name);
        assert_eq!(ScenarioSpec::from_json(&spec.to_json()).unwrap(), spec);
    }
}
