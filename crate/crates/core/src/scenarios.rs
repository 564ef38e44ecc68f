//! Builtin simulation setups and their CSV rendering.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::circuits::{
    build_dc_network, desired_state, shifted_hamiltonian, CircuitParams, ControlPlan,
    ControlVariant,
};
use crate::collocation::{
    consistent_init, gauss_legendre_tableau, integrate_until_failure, ButcherTableau, Input,
    NewtonOptions, StepRecord, Trajectory,
};
use crate::error::{Error, Result};
use crate::model::{Dims, PhdaeModel};
use crate::transform::{interconnect, InterconnectionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    CircuitUncontrolled,
    CircuitControlled,
    CircuitFeedback,
    Decay,
    TwoCircuits,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::CircuitUncontrolled,
        ScenarioKind::CircuitControlled,
        ScenarioKind::CircuitFeedback,
        ScenarioKind::Decay,
        ScenarioKind::TwoCircuits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CircuitUncontrolled => "circuit-uncontrolled",
            ScenarioKind::CircuitControlled => "circuit-controlled",
            ScenarioKind::CircuitFeedback => "circuit-feedback",
            ScenarioKind::Decay => "decay",
            ScenarioKind::TwoCircuits => "two-circuits",
        }
    }

    pub fn default_t_final(self) -> f64 {
        match self {
            ScenarioKind::CircuitUncontrolled => 200.0,
            ScenarioKind::Decay => 1.0,
            _ => 20.0,
        }
    }

    fn is_single_circuit(self) -> bool {
        matches!(
            self,
            ScenarioKind::CircuitUncontrolled
                | ScenarioKind::CircuitControlled
                | ScenarioKind::CircuitFeedback
        )
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown scenario `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Knobs shared by all builtin scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: CircuitParams,
    pub power: f64,
    pub alpha: f64,
    pub stages: usize,
    pub h: f64,
    /// Defaults to the scenario's own horizon.
    pub t_final: Option<f64>,
    pub newton: NewtonOptions,
    /// Overrides the control of `circuit-controlled`.
    pub control: Option<ControlVariant>,
    /// Report the collocation endpoint as computed instead of completing its
    /// algebraic coordinates from the constraints.
    pub raw_endpoints: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            params: CircuitParams::default(),
            power: 10.0,
            alpha: 1.0,
            stages: 1,
            h: 0.01,
            t_final: None,
            newton: NewtonOptions::default(),
            control: None,
            raw_endpoints: false,
        }
    }
}

/// A model, input, consistent start and grid, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub model: PhdaeModel,
    pub input: Input,
    pub t_span: (f64, f64),
    pub x0: DVector<f64>,
    /// Input at `t₀`, free ports included.
    pub u0: DVector<f64>,
    pub h: f64,
    pub tableau: ButcherTableau,
    pub newton: NewtonOptions,
    /// Target state for `H̃` in circuit scenarios.
    pub x_star: Option<DVector<f64>>,
    pub raw_endpoints: bool,
    params: CircuitParams,
}

/// `ẋ = −x` with `H = ½x²`; exact solution `e^{−t}`.
pub fn decay_model() -> PhdaeModel {
    PhdaeModel::builder(Dims::new(1, 1, 0))
        .flow_const(DMatrix::identity(1, 1))
        .dissipation_const(DMatrix::identity(1, 1))
        .effort(|_, x| x.clone())
        .hamiltonian(|_, x| 0.5 * x[0] * x[0])
        .grad_x(|_, x| x.clone())
        .grad_t(|_, _| 0.0)
        .effort_jacobian(|_, _| DMatrix::identity(1, 1))
        .state_independent(true)
        .autonomous(true)
        .build()
        .expect("constant scalar model")
}

/// Two networks coupled by `u₁ = −y₂`, `u₂ = y₁`, which exchanges power without loss.
pub fn two_circuit_model(p: &CircuitParams) -> Result<PhdaeModel> {
    let c = build_dc_network(p)?;
    interconnect(&c, &c, &gyrator_coupling())
}

pub fn gyrator_coupling() -> InterconnectionSpec {
    InterconnectionSpec::new(
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
    )
    .expect("2x2 relation")
}

pub fn build_scenario(kind: ScenarioKind, cfg: &ScenarioConfig) -> Result<Scenario> {
    let tableau = gauss_legendre_tableau(cfg.stages)?;
    let t_final = cfg.t_final.unwrap_or(kind.default_t_final());
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "final time must be positive, got {t_final}"
        )));
    }
    if !(cfg.h.is_finite() && cfg.h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {}",
            cfg.h
        )));
    }
    let p = cfg.params;
    let plan = |variant| ControlPlan {
        variant,
        power: cfg.power,
        alpha: cfg.alpha,
    };
    let (model, input, guess) = match kind {
        ScenarioKind::CircuitUncontrolled => (
            build_dc_network(&p)?,
            plan(ControlVariant::OpenLoopZero).input(&p)?,
            DVector::from_vec(vec![1.0, 2.0, -1.0, 0.0, 0.0]),
        ),
        ScenarioKind::CircuitControlled => (
            build_dc_network(&p)?,
            plan(cfg.control.unwrap_or(ControlVariant::RampThenHold)).input(&p)?,
            DVector::zeros(5),
        ),
        ScenarioKind::CircuitFeedback => (
            build_dc_network(&p)?,
            plan(ControlVariant::Feedback).input(&p)?,
            DVector::zeros(5),
        ),
        ScenarioKind::Decay => (decay_model(), Input::zero(0), DVector::from_element(1, 1.0)),
        ScenarioKind::TwoCircuits => (
            two_circuit_model(&p)?,
            Input::free(2),
            DVector::from_iterator(
                14,
                [1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 1.0, 0.5]
                    .into_iter()
                    .chain([0.0; 6]),
            ),
        ),
    };
    // Initialisation is setup, not stepping: a reduced iteration budget only
    // applies to the steps.
    let init_newton = NewtonOptions {
        max_iter: cfg.newton.max_iter.max(NewtonOptions::default().max_iter),
        ..cfg.newton
    };
    let start = consistent_init(&model, 0.0, &guess, &input, None, &init_newton)?;
    let x_star = if kind.is_single_circuit() {
        Some(desired_state(&p, cfg.power)?.0)
    } else {
        None
    };
    Ok(Scenario {
        kind,
        model,
        input,
        t_span: (0.0, t_final),
        x0: start.state,
        u0: start.input,
        h: cfg.h,
        tableau,
        newton: cfg.newton,
        x_star,
        raw_endpoints: cfg.raw_endpoints,
        params: p,
    })
}

pub const CIRCUIT_HEADER: &str = "t,I,V1,V2,IG,IR,u,y,H,Htilde,diss_sum,port_sum,pbe_residual";

/// `{:.16e}`: seventeen significant digits, lossless for `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl Scenario {
    /// Integrates, returning the computed prefix and the error if a step fails.
    pub fn run(&self) -> Result<(Trajectory, Option<Error>)> {
        integrate_until_failure(
            &self.model,
            &self.tableau,
            self.t_span,
            &self.x0,
            self.h,
            &self.input,
            &self.newton,
        )
    }

    /// Exact final state where one is known.
    pub fn exact_final_state(&self) -> Option<DVector<f64>> {
        (self.kind == ScenarioKind::Decay).then(|| DVector::from_element(1, (-self.t_span.1).exp()))
    }

    pub fn header(&self) -> String {
        if self.kind.is_single_circuit() {
            return CIRCUIT_HEADER.to_string();
        }
        let Dims { n, m, .. } = self.model.dims();
        let mut cols = vec!["t".to_string()];
        cols.extend((0..n).map(|i| format!("x{i}")));
        cols.extend((0..m).map(|i| format!("u{i}")));
        cols.extend((0..m).map(|i| format!("y{i}")));
        cols.extend(["H", "diss_sum", "port_sum", "pbe_residual"].map(String::from));
        cols.join(",")
    }

    /// State and input reported at the end of a step.
    ///
    /// Gauss methods do not damp errors in algebraic coordinates at step
    /// endpoints (the stability function is ±1 at infinity), so by default
    /// those coordinates and the free ports are recomputed from the algebraic
    /// equations with the differential coordinates fixed. Stage values, and
    /// hence the dynamics and the energy, do not depend on them.
    pub fn endpoint(&self, rec: &StepRecord) -> Result<(DVector<f64>, DVector<f64>)> {
        let t = rec.t_end();
        if self.raw_endpoints {
            let mut u = self.input.value(t, &rec.x_final);
            for &k in self.input.free_ports() {
                u[k] = (0..self.tableau.stages())
                    .map(|j| self.tableau.lagrange(j, 1.0) * rec.stage_inputs[j][k])
                    .sum();
            }
            return Ok((rec.x_final.clone(), u));
        }
        let c = consistent_init(
            &self.model,
            t,
            &rec.x_final,
            &self.input,
            None,
            &self.newton,
        )?;
        Ok((c.state, c.input))
    }

    /// Reported state at the final time.
    pub fn terminal_state(&self, traj: &Trajectory) -> Result<DVector<f64>> {
        match traj.steps().last() {
            Some(rec) => Ok(self.endpoint(rec)?.0),
            None => Ok(self.x0.clone()),
        }
    }

    fn row(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        rec: Option<&StepRecord>,
    ) -> Result<Vec<f64>> {
        let y = self.model.output(t, x, u)?;
        let mut row = vec![t];
        row.extend(x.iter());
        row.extend(u.iter());
        row.extend(y.iter());
        row.push(self.model.hamiltonian(t, x));
        if let Some(xs) = &self.x_star {
            row.push(shifted_hamiltonian(&self.params, xs)?.value(x));
        }
        let (diss, port, residual) = match rec {
            Some(r) => (
                r.dissipation_sum,
                r.port_sum,
                r.delta_energy() - r.dissipation_sum - r.port_sum,
            ),
            None => (0.0, 0.0, 0.0),
        };
        row.extend([diss, port, residual]);
        Ok(row)
    }

    /// One row per grid point, starting at `t₀`. Energy columns hold the sums of
    /// the step ending at that row.
    pub fn rows(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        let mut rows = vec![self.row(self.t_span.0, &self.x0, &self.u0, None)?];
        for rec in traj.steps() {
            let (x, u) = self.endpoint(rec)?;
            rows.push(self.row(rec.t_end(), &x, &u, Some(rec))?);
        }
        Ok(rows)
    }

    pub fn write_csv<W: Write>(&self, traj: &Trajectory, mut out: W) -> io::Result<()> {
        let rows = self
            .rows(traj)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        writeln!(out, "{}", self.header())?;
        for row in rows {
            let line: Vec<String> = row.into_iter().map(format_value).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(kind: ScenarioKind, t_final: f64) -> Scenario {
        let cfg = ScenarioConfig {
            t_final: Some(t_final),
            ..ScenarioConfig::default()
        };
        build_scenario(kind, &cfg).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for kind in ScenarioKind::ALL {
            assert_eq!(kind.name().parse::<ScenarioKind>().unwrap(), kind);
        }
        assert!("circuit".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn single_step_gives_two_rows() {
        let sc = short(ScenarioKind::CircuitUncontrolled, 0.01);
        let (traj, err) = sc.run().unwrap();
        assert!(err.is_none());
        let rows = sc.rows(&traj).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), CIRCUIT_HEADER.split(',').count());
        let mut buf = Vec::new();
        sc.write_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(CIRCUIT_HEADER));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn uncontrolled_start_is_consistent() {
        let sc = short(ScenarioKind::CircuitUncontrolled, 0.01);
        let p = CircuitParams::default();
        assert_eq!(sc.x0[3], 2.0 / p.r_g);
        assert_eq!(sc.x0[4], -1.0 / p.r_r);
    }

    #[test]
    fn generic_header_for_decay_and_coupled() {
        let decay = short(ScenarioKind::Decay, 0.1);
        assert_eq!(decay.header(), "t,x0,H,diss_sum,port_sum,pbe_residual");
        let two = short(ScenarioKind::TwoCircuits, 0.05);
        assert!(two.header().starts_with("t,x0,x1"));
        assert!(two.header().contains("u1,y0,y1,H"));
        let (traj, err) = two.run().unwrap();
        assert!(err.is_none(), "{err:?}");
        let rows = two.rows(&traj).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].len(), two.header().split(',').count());
    }

    #[test]
    fn endpoints_satisfy_the_constraints() {
        let cfg = ScenarioConfig {
            t_final: Some(1.5),
            ..ScenarioConfig::default()
        };
        let sc = build_scenario(ScenarioKind::CircuitControlled, &cfg).unwrap();
        let (traj, _) = sc.run().unwrap();
        let p = CircuitParams::default();
        let x = sc.terminal_state(&traj).unwrap();
        let u = crate::circuits::desired_state(&p, 10.0).unwrap().1;
        assert!((p.r_g * x[3] - x[1] - u).abs() < 1e-9);
        assert!((p.r_r * x[4] - x[2]).abs() < 1e-9);
        // the differential part is the integrator's own
        let raw = traj.final_state();
        assert_eq!(x.rows(0, 3), raw.rows(0, 3));
        let raw_cfg = ScenarioConfig {
            raw_endpoints: true,
            ..cfg
        };
        let raw_sc = build_scenario(ScenarioKind::CircuitControlled, &raw_cfg).unwrap();
        assert_eq!(&raw_sc.terminal_state(&traj).unwrap(), raw);
    }

    #[test]
    fn csv_is_deterministic() {
        let sc = short(ScenarioKind::CircuitControlled, 0.2);
        let render = || {
            let (traj, _) = sc.run().unwrap();
            let mut buf = Vec::new();
            sc.write_csv(&traj, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn bad_configs() {
        let cfg = ScenarioConfig {
            stages: 6,
            ..ScenarioConfig::default()
        };
        assert!(build_scenario(ScenarioKind::Decay, &cfg).is_err());
        let cfg = ScenarioConfig {
            t_final: Some(0.0),
            ..ScenarioConfig::default()
        };
        assert!(build_scenario(ScenarioKind::Decay, &cfg).is_err());
        let cfg = ScenarioConfig {
            alpha: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(build_scenario(ScenarioKind::CircuitFeedback, &cfg).is_err());
    }

    #[test]
    fn format_keeps_seventeen_digits() {
        let v = 0.1 + 0.2;
        assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        assert_eq!(format_value(1.0), "1.0000000000000000e0");
    }
}
