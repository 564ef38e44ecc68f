use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use phdae::circuits::{build_dc_network, feedback_model};
use phdae::collocation::{convergence_study, gauss_legendre_tableau, Reference};
use phdae::model::{lti_to_model, parse_lti};
use phdae::scenarios::{build_scenario, decay_model, two_circuit_model, ScenarioKind};
use phdae::{validate_structure, Error, PhdaeModel, SampleBox};

use crate::config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_STRUCTURE: u8 = 2;
pub const EXIT_INTEGRATION: u8 = 3;

pub const DEFAULT_H_LIST: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
/// Horizon of a convergence study unless `--t-final` is given.
pub const CONVERGENCE_T_FINAL: f64 = 1.0;
const SAMPLE_RADIUS: f64 = 5.0;
/// Sampled time window, cut from the start of the model's interval.
const SAMPLE_SPAN: f64 = 1.0;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

/// Newton failures exit with 3, structure violations with 2, anything else with 1.
fn classify(e: Error) -> Failure {
    let code = match e {
        Error::NewtonDiverged { .. }
        | Error::SingularIteration { .. }
        | Error::StepFailed { .. } => EXIT_INTEGRATION,
        Error::Structure(_) => EXIT_STRUCTURE,
        _ => EXIT_USAGE,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn builtin_model(name: &str, cfg: &RunConfig) -> Option<phdae::Result<PhdaeModel>> {
    Some(match name {
        "circuit" | "circuit-uncontrolled" | "circuit-controlled" => build_dc_network(&cfg.params),
        "circuit-feedback" => feedback_model(&cfg.params, cfg.alpha),
        "decay" => Ok(decay_model()),
        "two-circuits" => two_circuit_model(&cfg.params),
        _ => return None,
    })
}

fn load_model(source: &str, cfg: &RunConfig) -> Result<PhdaeModel, Failure> {
    if let Some(model) = builtin_model(source, cfg) {
        return model.map_err(classify);
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| Failure::usage(format!("cannot read model {source}: {e}")))?;
    let file = parse_lti(&text).map_err(|e| Failure::usage(format!("{source}: {e}")))?;
    if let Some(ic) = &file.interconnection {
        println!(
            "note: {source} carries a port relation with {} rows over {} ports; it is not applied",
            ic.relations(),
            ic.ports()
        );
    }
    lti_to_model(&file.model).map_err(|e| {
        let mut f = classify(e);
        f.message = format!("{source}: {}", f.message);
        f
    })
}

pub fn validate(source: &str, cfg: &RunConfig) -> Result<u8, Failure> {
    let model = load_model(source, cfg)?;
    let n = model.dims().n;
    let (start, end) = model.time_interval();
    let t0 = if start.is_finite() {
        start
    } else {
        end.min(0.0)
    };
    let t1 = end.min(t0 + SAMPLE_SPAN);
    let sample_box = SampleBox::cube((t0, t1), n, SAMPLE_RADIUS).map_err(classify)?;
    let report = validate_structure(&model, &sample_box, cfg.samples, cfg.seed, cfg.tol)
        .map_err(classify)?;
    println!(
        "model: {source} (n = {n}, ell = {}, m = {})",
        model.dims().ell,
        model.dims().m
    );
    println!("{report}");
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_STRUCTURE
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::usage(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<u8, Failure> {
    let scenario = build_scenario(cfg.scenario, &cfg.scenario_config()).map_err(classify)?;
    let (traj, failure) = scenario.run().map_err(classify)?;
    let mut out = open_output(cfg.out.as_deref())?;
    let written = scenario
        .write_csv(&traj, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Failure::usage(format!("cannot write CSV: {e}")));
    if let Some(e) = failure {
        written?;
        return Err(Failure {
            code: EXIT_INTEGRATION,
            message: format!(
                "integration stopped at t = {}: {e}; wrote {} completed steps",
                traj.final_time(),
                traj.steps().len()
            ),
        });
    }
    written?;
    Ok(EXIT_OK)
}

pub fn convergence(cfg: &RunConfig) -> Result<u8, Failure> {
    let h_list = cfg
        .h_list
        .clone()
        .unwrap_or_else(|| DEFAULT_H_LIST.to_vec());
    if h_list.len() < 3 {
        return Err(Failure::usage(format!(
            "a convergence study needs at least three step sizes, got {}",
            h_list.len()
        )));
    }
    let mut scenario_cfg = cfg.scenario_config();
    scenario_cfg.t_final = Some(cfg.t_final.unwrap_or(CONVERGENCE_T_FINAL));
    let scenario = build_scenario(cfg.scenario, &scenario_cfg).map_err(classify)?;
    let hmin = h_list.iter().copied().fold(f64::INFINITY, f64::min);
    let (reference, label) = match scenario.exact_final_state() {
        Some(x) => (Reference::State(x), "exact solution".to_string()),
        None => {
            let h = (hmin / 10.0).min(1e-3);
            let tableau = gauss_legendre_tableau(3).map_err(classify)?;
            (
                Reference::Fine { tableau, h },
                format!("3-stage Gauss at h = {h:e}"),
            )
        }
    };
    let report = convergence_study(
        &scenario.model,
        &scenario.tableau,
        scenario.t_span,
        &scenario.x0,
        &scenario.input,
        &scenario.newton,
        &h_list,
        &reference,
        None,
    )
    .map_err(classify)?;

    println!(
        "scenario {}, s = {}, T = {}, reference: {label}",
        ScenarioKind::name(cfg.scenario),
        cfg.stages,
        scenario.t_span.1
    );
    println!("tracked components: {:?}", report.components);
    println!("{:>12}  {:>14}  {:>8}", "h", "error", "rate");
    for (i, row) in report.rows.iter().enumerate() {
        let rate = match i {
            0 => String::new(),
            _ => {
                let prev = &report.rows[i - 1];
                format!(
                    "{:.4}",
                    (prev.error / row.error).ln() / (prev.h / row.h).ln()
                )
            }
        };
        println!("{:>12.6e}  {:>14.6e}  {:>8}", row.h, row.error, rate);
    }
    let per_component: Vec<String> = report
        .component_orders
        .iter()
        .map(|o| o.map_or("-".into(), |v| format!("{v:.4}")))
        .collect();
    println!("component orders: {}", per_component.join(" "));
    println!("monotone: {}", report.monotone);
    println!("order: {:.4}", report.order);
    Ok(EXIT_OK)
}
