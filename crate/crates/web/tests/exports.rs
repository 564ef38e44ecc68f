use phdae_web::{convergence_json, energy_balance_json, simulate_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn simulate_returns_the_csv_table() {
    let v = parse(&simulate_json("circuit-uncontrolled", 1, 0.05, 0.5, 10.0, 1.0).unwrap());
    assert_eq!(v["header"][0], "t");
    assert_eq!(v["header"].as_array().unwrap().len(), 13);
    assert_eq!(v["rows"].as_array().unwrap().len(), 11);
    assert!(v["error"].is_null());
}

#[test]
fn energy_balance_residuals_vanish() {
    let v = parse(&energy_balance_json("circuit-controlled", 2, 0.02, 2.0, 10.0, 1.0).unwrap());
    assert_eq!(v["t"].as_array().unwrap().len(), 100);
    assert!(v["max_residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn convergence_on_decay_is_second_order() {
    let v = parse(&convergence_json("decay", 1, "0.1, 0.05, 0.025", 1.0).unwrap());
    let order = v["order"].as_f64().unwrap();
    assert!((1.9..=2.1).contains(&order), "{order}");
}

#[test]
fn bad_requests_are_reported() {
    assert!(simulate_json("pendulum", 1, 0.1, 1.0, 10.0, 1.0).is_err());
    assert!(simulate_json("decay", 1, 1e-6, 10.0, 10.0, 1.0).is_err());
    assert!(simulate_json("decay", 1, 0.0, 1.0, 10.0, 1.0)
        .unwrap_err()
        .contains("positive"));
    assert!(convergence_json("decay", 1, "0.1,0.05", 1.0).is_err());
    assert!(convergence_json("decay", 1, "0.1,x,0.05", 1.0).is_err());
}
