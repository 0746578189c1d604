use hypwin::experiment::{run_experiment, verify_trace, ExperimentSpec};
use hypwin::strategies::ReportB;
use hypwin::{Error, NumericMode, Scalar};

fn spec(text: &str) -> ExperimentSpec {
    ExperimentSpec::from_json(text).unwrap()
}

#[test]
fn certified_full_branch_run_avoids_the_diagonal() {
    let s = spec(
        r#"{"map":{"kind":"times","m":2},"target":{"kind":"identity"},"gamma":"0.25",
        "bob":{"kind":"random","lambda":"0.25","seed":4},"max_rounds":1200,"strategy":{"kind":"b","stages":2}}"#,
    );
    let out = run_experiment(&s, NumericMode::Rational, None).unwrap();
    let v = out.verification.clone().unwrap();
    assert!(v.passed, "{v:?}");
    assert!(v.certified);
    assert_eq!(v.stages_completed, 2);
    let delta = v.delta.clone().unwrap();
    assert!(v.min_covered.clone().unwrap().gt(&delta).unwrap());
    assert!(v.cube_failures.is_empty() && v.pointwise_failures.is_empty());

    // The recorded diagnostics carry enough to redo the check from scratch.
    let report: ReportB = serde_json::from_value(out.trace.diagnostics.clone()).unwrap();
    assert!(report.violations.is_empty());
    assert!(report.stages.iter().all(|st| st.max_nested_gap < report.constants.n));
    let again = verify_trace(&s, &out.trace, None).unwrap().unwrap();
    assert_eq!(serde_json::to_value(&again).unwrap(), serde_json::to_value(&v).unwrap());
}

#[test]
fn certified_finite_alphabet_run_avoids_zero() {
    let s = spec(
        r#"{"map":{"kind":"times","m":2},"target":{"kind":"constant","point":["0"]},"gamma":"0.25",
        "bob":{"kind":"random","lambda":"0.25","seed":9},"max_rounds":1200,"strategy":{"kind":"a","stages":2}}"#,
    );
    let out = run_experiment(&s, NumericMode::Rational, None).unwrap();
    let v = out.verification.unwrap();
    assert!(v.passed, "{v:?}");
    assert_eq!(v.strategy, "A");
    let delta = v.delta.unwrap();
    assert!(v.min_covered.unwrap().gt(&delta).unwrap());
}

#[test]
fn tampered_traces_are_rejected() {
    let s = spec(
        r#"{"map":{"kind":"gauss"},"target":{"kind":"constant","point":["0"]},"gamma":"0.25",
        "bob":{"kind":"random","lambda":"0.25","seed":2},"max_rounds":40,"strategy":{"kind":"pass"}}"#,
    );
    let out = run_experiment(&s, NumericMode::Rational, None).unwrap();
    let mut bad = out.trace.clone();
    bad.rounds[10].bob.radius = Scalar::ratio(1, 2);
    assert!(matches!(verify_trace(&s, &bad, None), Err(Error::IllegalMove(_))));

    let mut other = s.clone();
    other.gamma = Scalar::ratio(1, 5);
    assert!(verify_trace(&other, &out.trace, None).unwrap_err().is_spec_error());
}

#[test]
fn empirical_gauss_run_keeps_partial_quotients_bounded() {
    let s = spec(
        r#"{"map":{"kind":"gauss"},"target":{"kind":"constant","point":["0"]},"gamma":"0.25",
        "bob":{"kind":"random","lambda":"0.25","seed":11},"max_rounds":300,
        "strategy":{"kind":"b","stages":40,"constants":{"n":12,"s1":8,"s2":2,"delta":"0.000001"}}}"#,
    );
    let out = run_experiment(&s, NumericMode::Rational, None).unwrap();
    let v = out.verification.unwrap();
    assert!(!v.certified);
    let delta = 1e-6;
    assert!(v.min_horizon.unwrap() >= delta);

    // a_{n+1} = ⌊1/Tⁿx⌋ ≤ 1/δ whenever Tⁿx ≥ δ; read the digits shared by the whole final cube.
    let seq = s.map.build(NumericMode::Rational).unwrap();
    let cube = out.trace.final_cube();
    let path = seq.descend(1, &cube.lo(0), &cube.hi(0), 400).unwrap();
    let digits = &path.last().unwrap().word;
    assert!(digits.len() > 50);
    let upto = digits.len().min(201);
    assert!(digits[1..upto].iter().all(|&a| (a as f64) <= 1.0 / delta));
}
