//! Gauss–Legendre collocation for pHDAEs.
//!
//! On each step the stage rates `ẋᵢ` solve
//! `E(tᵢ,xᵢ) ẋᵢ + r(tᵢ,xᵢ) = (J−R) z(tᵢ,xᵢ) + (B−P) uᵢ` with
//! `xᵢ = x₀ + h Σⱼ αᵢⱼ ẋⱼ`, and `x₁ = x₀ + h Σⱼ βⱼ ẋⱼ`.

mod convergence;
mod newton;
mod tableau;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dirac::{lift, DiracPoint};
use crate::error::{Error, Result};
use crate::model::{Dims, PhdaeModel};

pub use convergence::{convergence_study, fit_order, ConvergenceReport, ConvergenceRow, Reference};
pub use newton::NewtonOptions;
pub use tableau::{gauss_legendre_tableau, ButcherTableau, MAX_STAGES};

type InputFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Port input `u(t, x)`.
///
/// Components listed as free ports are not prescribed: they become algebraic
/// unknowns of the stage equations, which then need `ℓ = n + #free` rows.
#[derive(Clone)]
pub struct Input {
    dim: usize,
    f: InputFn,
    state_dependent: bool,
    free: Vec<usize>,
}

impl std::fmt::Debug for Input {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Input")
            .field("dim", &self.dim)
            .field("state_dependent", &self.state_dependent)
            .field("free", &self.free)
            .finish()
    }
}

impl Input {
    pub fn zero(m: usize) -> Self {
        Input::constant(DVector::zeros(m))
    }

    pub fn constant(u: DVector<f64>) -> Self {
        let dim = u.len();
        Input {
            dim,
            f: Arc::new(move |_, _| u.clone()),
            state_dependent: false,
            free: Vec::new(),
        }
    }

    pub fn time_dependent<F>(m: usize, f: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Input {
            dim: m,
            f: Arc::new(move |t, _| f(t)),
            state_dependent: false,
            free: Vec::new(),
        }
    }

    /// Feedback `u = f(t, x)`.
    pub fn state_dependent<F>(m: usize, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Input {
            dim: m,
            f: Arc::new(f),
            state_dependent: true,
            free: Vec::new(),
        }
    }

    /// All `m` components free.
    pub fn free(m: usize) -> Self {
        Input::zero(m).with_free_ports((0..m).collect())
    }

    pub fn with_free_ports(mut self, mut ports: Vec<usize>) -> Self {
        ports.sort_unstable();
        ports.dedup();
        self.free = ports;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn free_ports(&self) -> &[usize] {
        &self.free
    }

    pub fn is_state_dependent(&self) -> bool {
        self.state_dependent
    }

    /// Prescribed value; free components hold whatever the function returns.
    pub fn value(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(t, x)
    }

    fn value_with(&self, t: f64, x: &DVector<f64>, free_values: &[f64]) -> Result<DVector<f64>> {
        let mut u = self.value(t, x);
        if u.len() != self.dim {
            return Err(Error::Dimension(format!(
                "input function returned {} components, expected {}",
                u.len(),
                self.dim
            )));
        }
        for (&k, &v) in self.free.iter().zip(free_values) {
            u[k] = v;
        }
        Ok(u)
    }

    fn check(&self, model: &PhdaeModel) -> Result<()> {
        let Dims { n, ell, m } = model.dims();
        if self.dim != m {
            return Err(Error::Dimension(format!(
                "input has {} components, model has m = {m}",
                self.dim
            )));
        }
        if let Some(&k) = self.free.iter().find(|&&k| k >= m) {
            return Err(Error::InvalidArgument(format!(
                "free port {k} out of range 0..{m}"
            )));
        }
        if ell != n + self.free.len() {
            return Err(Error::Dimension(format!(
                "stage equations need ell = n + free ports, got ell = {ell}, n = {n}, {} free",
                self.free.len()
            )));
        }
        Ok(())
    }
}

/// Everything computed on one collocation step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t0: f64,
    pub h: f64,
    pub x0: DVector<f64>,
    pub x_final: DVector<f64>,
    pub stage_times: Vec<f64>,
    pub stage_rates: Vec<DVector<f64>>,
    pub stage_states: Vec<DVector<f64>>,
    /// Stage inputs, with free ports filled by their solved values.
    pub stage_inputs: Vec<DVector<f64>>,
    pub stage_outputs: Vec<DVector<f64>>,
    pub stage_points: Vec<DiracPoint>,
    pub weights: Vec<f64>,
    /// `H(t₀, x₀)` and `H(t₀+h, x₁)`.
    pub energy_start: f64,
    pub energy_end: f64,
    /// `h Σ βᵢ ⟨e_d, f_d⟩ᵢ`, never positive when `W ⪰ 0`.
    pub dissipation_sum: f64,
    /// `h Σ βᵢ yᵢᵀuᵢ`.
    pub port_sum: f64,
    pub newton_iterations: usize,
    pub newton_residual: f64,
}

impl StepRecord {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn delta_energy(&self) -> f64 {
        self.energy_end - self.energy_start
    }

    /// `x(t₀ + τh) = x₀ + h Σⱼ (∫₀^τ ℓⱼ) ẋⱼ` for `τ ∈ [0, 1]`.
    pub fn dense(&self, tab: &ButcherTableau, tau: f64) -> DVector<f64> {
        let mut x = self.x0.clone();
        for (j, rate) in self.stage_rates.iter().enumerate() {
            x.axpy(self.h * tab.basis_integral(j, tau), rate, 1.0);
        }
        x
    }
}

/// Discrete power balance of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub delta_h: f64,
    pub dissipation_sum: f64,
    pub port_sum: f64,
    /// `ΔH − dissipation_sum − port_sum`.
    pub residual: f64,
    pub dissipation_nonpositive: bool,
}

pub fn discrete_energy_report(rec: &StepRecord) -> EnergyReport {
    let delta_h = rec.delta_energy();
    EnergyReport {
        delta_h,
        dissipation_sum: rec.dissipation_sum,
        port_sum: rec.port_sum,
        residual: delta_h - rec.dissipation_sum - rec.port_sum,
        dissipation_nonpositive: rec.dissipation_sum <= 1e-12,
    }
}

struct StageSystem<'a> {
    model: &'a PhdaeModel,
    tab: &'a ButcherTableau,
    input: &'a Input,
    t0: f64,
    h: f64,
    x0: &'a DVector<f64>,
    fd_step: f64,
}

struct Stages {
    rates: Vec<DVector<f64>>,
    free: Vec<Vec<f64>>,
}

impl StageSystem<'_> {
    fn n(&self) -> usize {
        self.model.dims().n
    }

    fn nfree(&self) -> usize {
        self.input.free_ports().len()
    }

    fn unpack(&self, w: &DVector<f64>) -> Stages {
        let (s, n, f) = (self.tab.stages(), self.n(), self.nfree());
        Stages {
            rates: (0..s).map(|i| w.rows(i * n, n).into_owned()).collect(),
            free: (0..s)
                .map(|i| w.rows(s * n + i * f, f).iter().copied().collect())
                .collect(),
        }
    }

    fn pack(&self, rates: &[DVector<f64>], free: &[Vec<f64>]) -> DVector<f64> {
        let values = rates
            .iter()
            .flat_map(|r| r.iter().copied())
            .chain(free.iter().flat_map(|v| v.iter().copied()));
        DVector::from_iterator(self.tab.stages() * (self.n() + self.nfree()), values)
    }

    fn stage_time(&self, i: usize) -> f64 {
        self.t0 + self.tab.nodes()[i] * self.h
    }

    fn stage_state(&self, i: usize, rates: &[DVector<f64>]) -> DVector<f64> {
        let a = self.tab.matrix();
        let mut x = self.x0.clone();
        for (j, rate) in rates.iter().enumerate() {
            x.axpy(self.h * a[(i, j)], rate, 1.0);
        }
        x
    }

    fn residual(&self, w: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let stages = self.unpack(w);
        let ell = self.model.dims().ell;
        let mut out = DVector::zeros(self.tab.stages() * ell);
        let mut scale: f64 = 0.0;
        for i in 0..self.tab.stages() {
            let (t, x) = (self.stage_time(i), self.stage_state(i, &stages.rates));
            let c = self.model.coefficients(t, &x)?;
            let u = self.input.value_with(t, &x, &stages.free[i])?;
            let rhs = c.rhs(&u);
            scale = scale.max(if rhs.is_empty() { 0.0 } else { rhs.amax() });
            out.rows_mut(i * ell, ell)
                .copy_from(&(&c.e * &stages.rates[i] + &c.time_flow - rhs));
        }
        Ok((out, scale))
    }

    /// `∂u/∂x` of the prescribed input, by forward differences.
    fn input_jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.input.dim();
        let mut du = DMatrix::zeros(m, x.len());
        if !self.input.is_state_dependent() {
            return du;
        }
        let u0 = self.input.value(t, x);
        let mut xp = x.clone();
        for k in 0..x.len() {
            let step = self.fd_step * (1.0 + x[k].abs());
            xp[k] = x[k] + step;
            du.set_column(k, &((self.input.value(t, &xp) - &u0) / step));
            xp[k] = x[k];
        }
        for &k in self.input.free_ports() {
            du.row_mut(k).fill(0.0);
        }
        du
    }

    /// Block Jacobian for state-independent coefficients with a known `∂z/∂x`.
    fn jacobian(&self, w: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        if !(self.model.is_state_independent() && self.model.has_effort_jacobian()) {
            return Ok(None);
        }
        let stages = self.unpack(w);
        let (s, n, f) = (self.tab.stages(), self.n(), self.nfree());
        let ell = self.model.dims().ell;
        let a = self.tab.matrix();
        let mut jac = DMatrix::zeros(s * ell, s * (n + f));
        for i in 0..s {
            let (t, x) = (self.stage_time(i), self.stage_state(i, &stages.rates));
            let c = self.model.coefficients(t, &x)?;
            let Some(z_jac) = self.model.effort_jacobian(t, &x) else {
                return Ok(None);
            };
            let bp = &c.b - &c.p;
            let k = (&c.j - &c.r) * z_jac + &bp * self.input_jacobian(t, &x);
            for j in 0..s {
                let mut block = -(self.h * a[(i, j)]) * &k;
                if i == j {
                    block += &c.e;
                }
                jac.view_mut((i * ell, j * n), (ell, n)).copy_from(&block);
            }
            for (col, &port) in self.input.free_ports().iter().enumerate() {
                jac.view_mut((i * ell, s * n + i * f + col), (ell, 1))
                    .copy_from(&(-bp.column(port)));
            }
        }
        Ok(Some(jac))
    }
}

fn check_step_args(model: &PhdaeModel, x0: &DVector<f64>, h: f64, input: &Input) -> Result<()> {
    if x0.len() != model.dims().n {
        return Err(Error::Dimension(format!(
            "initial state has length {}, model has n = {}",
            x0.len(),
            model.dims().n
        )));
    }
    if !(h.is_finite() && h != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be finite and nonzero, got {h}"
        )));
    }
    input.check(model)
}

/// One collocation step from `(t0, x0)` of size `h` (negative `h` steps backwards).
pub fn step(
    model: &PhdaeModel,
    tab: &ButcherTableau,
    t0: f64,
    x0: &DVector<f64>,
    h: f64,
    input: &Input,
    newton: &NewtonOptions,
) -> Result<StepRecord> {
    step_from_guess(model, tab, t0, x0, h, input, newton, None)
}

#[allow(clippy::too_many_arguments)]
fn step_from_guess(
    model: &PhdaeModel,
    tab: &ButcherTableau,
    t0: f64,
    x0: &DVector<f64>,
    h: f64,
    input: &Input,
    newton: &NewtonOptions,
    previous: Option<&StepRecord>,
) -> Result<StepRecord> {
    check_step_args(model, x0, h, input)?;
    let sys = StageSystem {
        model,
        tab,
        input,
        t0,
        h,
        x0,
        fd_step: newton.fd_step,
    };
    let s = tab.stages();
    let guess = match previous {
        Some(prev) if prev.stage_rates.len() == s => {
            let free: Vec<Vec<f64>> = prev
                .stage_inputs
                .iter()
                .map(|u| input.free_ports().iter().map(|&k| u[k]).collect())
                .collect();
            sys.pack(&prev.stage_rates, &free)
        }
        _ => DVector::zeros(s * (sys.n() + sys.nfree())),
    };
    let outcome = newton::solve(
        |w: &DVector<f64>| sys.residual(w),
        |w: &DVector<f64>| sys.jacobian(w),
        guess,
        newton,
        t0,
    )?;
    let stages = sys.unpack(&outcome.solution);

    let mut x_final = x0.clone();
    for (j, rate) in stages.rates.iter().enumerate() {
        x_final.axpy(h * tab.weights()[j], rate, 1.0);
    }
    let mut rec = StepRecord {
        t0,
        h,
        x0: x0.clone(),
        energy_start: model.hamiltonian(t0, x0),
        energy_end: model.hamiltonian(t0 + h, &x_final),
        x_final,
        stage_times: Vec::with_capacity(s),
        stage_rates: Vec::with_capacity(s),
        stage_states: Vec::with_capacity(s),
        stage_inputs: Vec::with_capacity(s),
        stage_outputs: Vec::with_capacity(s),
        stage_points: Vec::with_capacity(s),
        weights: tab.weights().to_vec(),
        dissipation_sum: 0.0,
        port_sum: 0.0,
        newton_iterations: outcome.iterations,
        newton_residual: outcome.residual,
    };
    for i in 0..s {
        let (t, x) = (sys.stage_time(i), sys.stage_state(i, &stages.rates));
        let u = input.value_with(t, &x, &stages.free[i])?;
        let point = lift(model, t, &x, &stages.rates[i], &u)?;
        let beta = tab.weights()[i];
        rec.dissipation_sum += h * beta * point.e_d.dot(&point.f_d);
        rec.port_sum += h * beta * point.f_p.dot(&u);
        rec.stage_times.push(t);
        rec.stage_states.push(x);
        rec.stage_outputs.push(point.f_p.clone());
        rec.stage_inputs.push(u);
        rec.stage_points.push(point);
    }
    rec.stage_rates = stages.rates;
    if !(rec.energy_start.is_finite() && rec.energy_end.is_finite()) {
        return Err(Error::NonFinite {
            what: "Hamiltonian".into(),
            t: t0 + h,
            x: rec.x_final.iter().copied().collect(),
        });
    }
    Ok(rec)
}

/// A sequence of chained steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    t0: f64,
    x0: DVector<f64>,
    tableau: ButcherTableau,
    steps: Vec<StepRecord>,
}

/// Cumulative energy accounting of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTotals {
    pub delta_h: f64,
    pub dissipation: f64,
    pub port: f64,
    pub residual: f64,
}

impl Trajectory {
    pub fn new(t0: f64, x0: DVector<f64>, tableau: ButcherTableau) -> Self {
        Trajectory {
            t0,
            x0,
            tableau,
            steps: Vec::new(),
        }
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    pub fn start_time(&self) -> f64 {
        self.t0
    }

    pub fn final_time(&self) -> f64 {
        self.steps.last().map_or(self.t0, StepRecord::t_end)
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.steps.last().map_or(&self.x0, |s| &s.x_final)
    }

    /// Grid times, starting with `t₀`.
    pub fn times(&self) -> Vec<f64> {
        std::iter::once(self.t0)
            .chain(self.steps.iter().map(StepRecord::t_end))
            .collect()
    }

    /// Grid states, starting with `x₀`.
    pub fn states(&self) -> Vec<DVector<f64>> {
        std::iter::once(self.x0.clone())
            .chain(self.steps.iter().map(|s| s.x_final.clone()))
            .collect()
    }

    /// Collocation polynomial at `t`, or `None` outside the covered interval.
    pub fn evaluate(&self, t: f64) -> Option<DVector<f64>> {
        if self.steps.is_empty() {
            return (t == self.t0).then(|| self.x0.clone());
        }
        let (lo, hi) = (
            self.t0.min(self.final_time()),
            self.t0.max(self.final_time()),
        );
        if !(lo..=hi).contains(&t) {
            return None;
        }
        let idx = self
            .steps
            .iter()
            .position(|s| {
                let (a, b) = (s.t0.min(s.t_end()), s.t0.max(s.t_end()));
                (a..=b).contains(&t)
            })
            .unwrap_or(self.steps.len() - 1);
        let s = &self.steps[idx];
        Some(s.dense(&self.tableau, (t - s.t0) / s.h))
    }

    pub fn energy_totals(&self) -> EnergyTotals {
        let mut totals = EnergyTotals {
            delta_h: 0.0,
            dissipation: 0.0,
            port: 0.0,
            residual: 0.0,
        };
        for s in &self.steps {
            totals.delta_h += s.delta_energy();
            totals.dissipation += s.dissipation_sum;
            totals.port += s.port_sum;
        }
        totals.residual = totals.delta_h - totals.dissipation - totals.port;
        totals
    }

    /// Each step starts exactly where the previous one ended.
    pub fn is_chained(&self) -> bool {
        let mut t = self.t0;
        let mut x = &self.x0;
        for s in &self.steps {
            if s.t0 != t || &s.x0 != x {
                return false;
            }
            t = s.t_end();
            x = &s.x_final;
        }
        true
    }
}

fn grid(t_span: (f64, f64), h: f64) -> Result<Vec<f64>> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::InvalidArgument(format!(
            "invalid time span [{t0}, {t1}]"
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {h}"
        )));
    }
    let count = ((t1 - t0) / h - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..=count).map(|k| t0 + k as f64 * h).collect();
    if let Some(last) = times.last_mut() {
        *last = t1;
    }
    Ok(times)
}

/// Integrates over `t_span` with steps of size `h`; the last step is shortened to land on `t_span.1`.
pub fn integrate(
    model: &PhdaeModel,
    tab: &ButcherTableau,
    t_span: (f64, f64),
    x0: &DVector<f64>,
    h: f64,
    input: &Input,
    newton: &NewtonOptions,
) -> Result<Trajectory> {
    let (traj, err) = integrate_until_failure(model, tab, t_span, x0, h, input, newton)?;
    match err {
        None => Ok(traj),
        Some(e) => Err(e),
    }
}

/// Like [`integrate`], but a failing step returns the trajectory computed so far
/// together with the error. Argument errors are still returned as `Err`.
pub fn integrate_until_failure(
    model: &PhdaeModel,
    tab: &ButcherTableau,
    t_span: (f64, f64),
    x0: &DVector<f64>,
    h: f64,
    input: &Input,
    newton: &NewtonOptions,
) -> Result<(Trajectory, Option<Error>)> {
    let times = grid(t_span, h)?;
    check_step_args(model, x0, h, input)?;
    let mut traj = Trajectory::new(t_span.0, x0.clone(), tab.clone());
    for (index, w) in times.windows(2).enumerate() {
        let x = traj.final_state().clone();
        let result = step_from_guess(
            model,
            tab,
            w[0],
            &x,
            w[1] - w[0],
            input,
            newton,
            traj.steps.last(),
        );
        match result {
            Ok(rec) => traj.steps.push(rec),
            Err(source) => {
                return Ok((
                    traj,
                    Some(Error::StepFailed {
                        index,
                        source: Box::new(source),
                    }),
                ))
            }
        }
    }
    Ok((traj, None))
}

/// Makes `x_guess` consistent at `t0`: the algebraic rows of the model
/// (zero rows of `E`) are solved for the algebraic coordinates (zero
/// columns of `E`, or those marked `false` in `differential`) and the free
/// ports of `input`. Differential coordinates are kept.
pub fn consistent_init(
    model: &PhdaeModel,
    t0: f64,
    x_guess: &DVector<f64>,
    input: &Input,
    differential: Option<&[bool]>,
    newton: &NewtonOptions,
) -> Result<ConsistentState> {
    let Dims { n, ell, m } = model.dims();
    if x_guess.len() != n || input.dim() != m {
        return Err(Error::Dimension(format!(
            "consistent_init expects x in R^{n} and an input with {m} components"
        )));
    }
    let c = model.coefficients(t0, x_guess)?;
    let e_tol = 1e-14 * (if c.e.is_empty() { 0.0 } else { c.e.amax() }).max(1.0);
    let alg_rows: Vec<usize> = (0..ell)
        .filter(|&i| c.e.row(i).iter().all(|v| v.abs() <= e_tol))
        .collect();
    let diff_mask: Vec<bool> = match differential {
        Some(mask) if mask.len() == n => mask.to_vec(),
        Some(mask) => {
            return Err(Error::Dimension(format!(
                "differential mask has length {}, expected {n}",
                mask.len()
            )))
        }
        None => (0..n)
            .map(|j| c.e.column(j).iter().any(|v| v.abs() > e_tol))
            .collect(),
    };
    let alg_cols: Vec<usize> = (0..n).filter(|&j| !diff_mask[j]).collect();
    let free = input.free_ports().to_vec();
    if alg_rows.len() != alg_cols.len() + free.len() {
        return Err(Error::AmbiguousSplit(format!(
            "{} algebraic equations for {} algebraic coordinates and {} free ports",
            alg_rows.len(),
            alg_cols.len(),
            free.len()
        )));
    }
    let assemble = |y: &DVector<f64>| {
        let mut x = x_guess.clone();
        for (k, &j) in alg_cols.iter().enumerate() {
            x[j] = y[k];
        }
        (
            x,
            y.rows(alg_cols.len(), free.len())
                .iter()
                .copied()
                .collect::<Vec<f64>>(),
        )
    };
    let y0 = DVector::from_iterator(
        alg_cols.len() + free.len(),
        alg_cols
            .iter()
            .map(|&j| x_guess[j])
            .chain(free.iter().map(|_| 0.0)),
    );
    let outcome = newton::solve(
        |y: &DVector<f64>| {
            let (x, fv) = assemble(y);
            let c = model.coefficients(t0, &x)?;
            let u = input.value_with(t0, &x, &fv)?;
            let g = c.rhs(&u) - &c.time_flow;
            let scale = if g.is_empty() { 0.0 } else { c.rhs(&u).amax() };
            Ok((
                DVector::from_iterator(alg_rows.len(), alg_rows.iter().map(|&i| g[i])),
                scale,
            ))
        },
        |_: &DVector<f64>| Ok(None),
        y0,
        newton,
        t0,
    )?;
    let (state, fv) = assemble(&outcome.solution);
    let input_value = input.value_with(t0, &state, &fv)?;
    Ok(ConsistentState {
        state,
        input: input_value,
        algebraic_rows: alg_rows,
        algebraic_coordinates: alg_cols,
    })
}

/// Result of [`consistent_init`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistentState {
    pub state: DVector<f64>,
    /// Input at `t0` with solved free ports.
    pub input: DVector<f64>,
    pub algebraic_rows: Vec<usize>,
    pub algebraic_coordinates: Vec<usize>,
}
