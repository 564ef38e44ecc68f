use phdae::circuits::ControlVariant;
use phdae::collocation::{
    convergence_study, discrete_energy_report, gauss_legendre_tableau, Reference,
};
use phdae::scenarios::{build_scenario, Scenario, ScenarioConfig, ScenarioKind};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_STEPS: f64 = 100_000.0;

fn scenario(
    name: &str,
    stages: usize,
    h: f64,
    t_final: f64,
    power: f64,
    alpha: f64,
) -> Result<Scenario, String> {
    let kind: ScenarioKind = name.parse().map_err(|e: phdae::Error| e.to_string())?;
    if !(h > 0.0 && t_final > 0.0) {
        return Err(format!(
            "h and T must be positive, got h = {h}, T = {t_final}"
        ));
    }
    if t_final / h > MAX_STEPS {
        return Err(format!(
            "{} steps requested, the demo allows {MAX_STEPS}",
            (t_final / h).ceil()
        ));
    }
    let cfg = ScenarioConfig {
        stages,
        h,
        t_final: Some(t_final),
        power,
        alpha,
        control: Some(ControlVariant::RampThenHold),
        ..ScenarioConfig::default()
    };
    build_scenario(kind, &cfg).map_err(|e| e.to_string())
}

/// Trajectory table: `{"header": [...], "rows": [[...], ...], "error": null | "..."}`.
pub fn simulate_json(
    name: &str,
    stages: usize,
    h: f64,
    t_final: f64,
    power: f64,
    alpha: f64,
) -> Result<String, String> {
    let sc = scenario(name, stages, h, t_final, power, alpha)?;
    let (traj, failure) = sc.run().map_err(|e| e.to_string())?;
    let rows = sc.rows(&traj).map_err(|e| e.to_string())?;
    let header: Vec<String> = sc.header().split(',').map(String::from).collect();
    Ok(json!({
        "header": header,
        "rows": rows,
        "error": failure.map(|e| e.to_string()),
    })
    .to_string())
}

/// Per-step `ΔH`, dissipation and port sums, and the balance residual.
pub fn energy_balance_json(
    name: &str,
    stages: usize,
    h: f64,
    t_final: f64,
    power: f64,
    alpha: f64,
) -> Result<String, String> {
    let sc = scenario(name, stages, h, t_final, power, alpha)?;
    let (traj, failure) = sc.run().map_err(|e| e.to_string())?;
    let reports: Vec<_> = traj.steps().iter().map(discrete_energy_report).collect();
    let max_residual = reports.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    Ok(json!({
        "t": traj.steps().iter().map(|r| r.t_end()).collect::<Vec<_>>(),
        "delta_h": reports.iter().map(|r| r.delta_h).collect::<Vec<_>>(),
        "dissipation": reports.iter().map(|r| r.dissipation_sum).collect::<Vec<_>>(),
        "port": reports.iter().map(|r| r.port_sum).collect::<Vec<_>>(),
        "residual": reports.iter().map(|r| r.residual).collect::<Vec<_>>(),
        "max_residual": max_residual,
        "error": failure.map(|e| e.to_string()),
    })
    .to_string())
}

/// Final-time errors for a comma-separated step list against the exact
/// solution (`decay`) or a 3-stage run at a tenth of the smallest step.
pub fn convergence_json(
    name: &str,
    stages: usize,
    h_list: &str,
    t_final: f64,
) -> Result<String, String> {
    let hs: Vec<f64> = h_list
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad step size `{v}`"))
        })
        .collect::<Result<_, _>>()?;
    if hs.len() < 3 {
        return Err("give at least three step sizes".into());
    }
    let hmin = hs.iter().copied().fold(f64::INFINITY, f64::min);
    let sc = scenario(name, stages, hmin, t_final, 10.0, 1.0)?;
    let reference = match sc.exact_final_state() {
        Some(x) => Reference::State(x),
        None => {
            let h = (hmin / 10.0).min(1e-3);
            if t_final / h > MAX_STEPS {
                return Err(format!("reference run at h = {h} is too long for the demo"));
            }
            Reference::Fine {
                tableau: gauss_legendre_tableau(3).map_err(|e| e.to_string())?,
                h,
            }
        }
    };
    let report = convergence_study(
        &sc.model,
        &sc.tableau,
        sc.t_span,
        &sc.x0,
        &sc.input,
        &sc.newton,
        &hs,
        &reference,
        None,
    )
    .map_err(|e| e.to_string())?;
    Ok(json!({
        "h": report.rows.iter().map(|r| r.h).collect::<Vec<_>>(),
        "error": report.rows.iter().map(|r| r.error).collect::<Vec<_>>(),
        "order": report.order,
        "monotone": report.monotone,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn simulate(
    scenario: &str,
    stages: usize,
    h: f64,
    t_final: f64,
    power: f64,
    alpha: f64,
) -> Result<String, JsError> {
    simulate_json(scenario, stages, h, t_final, power, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn energy_balance(
    scenario: &str,
    stages: usize,
    h: f64,
    t_final: f64,
    power: f64,
    alpha: f64,
) -> Result<String, JsError> {
    energy_balance_json(scenario, stages, h, t_final, power, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn convergence(
    scenario: &str,
    stages: usize,
    h_list: &str,
    t_final: f64,
) -> Result<String, JsError> {
    convergence_json(scenario, stages, h_list, t_final).map_err(|e| JsError::new(&e))
}
