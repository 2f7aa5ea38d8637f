use std::fs;
use std::path::PathBuf;

use mfrn_core::scenarios::{
    build_convergence_study, build_scale_control, build_shift_control, build_test1, build_test2,
    build_test3, Scenario, Test3Guess,
};
use mfrn_core::Activation;

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped() -> Vec<(&'static str, Scenario)> {
    vec![
        ("test1_identity", build_test1(Activation::Identity)),
        ("test1_tanh", build_test1(Activation::Tanh)),
        ("test1_sigmoid", build_test1(Activation::Sigmoid)),
        ("test2", build_test2()),
        ("test3_zero", build_test3(Test3Guess::Zero)),
        ("test3_linear", build_test3(Test3Guess::Linear)),
        ("convergence", build_convergence_study(vec![100, 1_000, 10_000, 100_000], 1)),
        ("shift_control", build_shift_control(Activation::Identity, 1.0, 1.0).unwrap()),
        ("scale_control", build_scale_control(0.25)),
    ]
}

#[test]
fn shipped_scenarios_match_builders() {
    let dir = scenario_dir();
    let regenerate = std::env::var_os("MFRN_WRITE_SCENARIOS").is_some();
    if regenerate {
        fs::create_dir_all(&dir).unwrap();
    }
    for (name, s) in shipped() {
        let path = dir.join(format!("{name}.json"));
        if regenerate {
            fs::write(&path, s.to_json() + "\n").unwrap();
        }
        let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let parsed = Scenario::from_json(&text).unwrap();
        parsed.validate().unwrap();
        assert_eq!(parsed, s, "{name}");
    }
}
