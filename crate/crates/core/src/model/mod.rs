//! Port-Hamiltonian descriptor systems.
//!
//! A [`PhdaeModel`] stores the coefficient functions of
//!
//! ```text
//! E(t,x) ẋ + r(t,x) = (J(t,x) − R(t,x)) z(t,x) + (B(t,x) − P(t,x)) u
//!                 y = (B(t,x) + P(t,x))ᵀ z(t,x) + (S(t,x) − N(t,x)) u
//! ```
//!
//! together with the Hamiltonian `H(t,x)`. The structure conditions
//! (`Γ = −Γᵀ`, `W = Wᵀ ⪰ 0`, `∂ₓH = Eᵀz`, `∂ₜH = zᵀr`) are not enforced at
//! construction; [`validate_structure`] checks them on sampled points.

mod lti;
mod lti_file;
mod validate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::collocation::Trajectory;
use crate::error::{Error, Result};

pub use lti::{lti_to_model, LtiModel};
pub use lti_file::{parse_interconnection, parse_lti, LtiFile};
pub use validate::{validate_structure, Residual, SampleBox, ValidationReport};

pub type MatrixFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
/// Pointwise admissibility check run before every coefficient evaluation.
pub type GuardFn = Arc<dyn Fn(f64, &DVector<f64>) -> Result<()> + Send + Sync>;

/// State, equation and port dimensions `(n, ℓ, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub ell: usize,
    pub m: usize,
}

impl Dims {
    pub fn new(n: usize, ell: usize, m: usize) -> Self {
        Dims { n, ell, m }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n = {}, ell = {}, m = {}", self.n, self.ell, self.m)
    }
}

/// All coefficient matrices and vectors evaluated at one point `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub e: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub z: DVector<f64>,
    pub time_flow: DVector<f64>,
}

impl Coefficients {
    /// Extended structure matrix `Γ = [[J, B], [−Bᵀ, N]]`.
    pub fn gamma(&self) -> DMatrix<f64> {
        let (ell, m) = (self.j.nrows(), self.b.ncols());
        let mut g = DMatrix::zeros(ell + m, ell + m);
        g.view_mut((0, 0), (ell, ell)).copy_from(&self.j);
        g.view_mut((0, ell), (ell, m)).copy_from(&self.b);
        g.view_mut((ell, 0), (m, ell))
            .copy_from(&(-self.b.transpose()));
        g.view_mut((ell, ell), (m, m)).copy_from(&self.n);
        g
    }

    /// Extended dissipation matrix `W = [[R, P], [Pᵀ, S]]`.
    pub fn w(&self) -> DMatrix<f64> {
        let (ell, m) = (self.r.nrows(), self.p.ncols());
        let mut w = DMatrix::zeros(ell + m, ell + m);
        w.view_mut((0, 0), (ell, ell)).copy_from(&self.r);
        w.view_mut((0, ell), (ell, m)).copy_from(&self.p);
        w.view_mut((ell, 0), (m, ell))
            .copy_from(&self.p.transpose());
        w.view_mut((ell, ell), (m, m)).copy_from(&self.s);
        w
    }

    /// Right-hand side `(J − R) z + (B − P) u`.
    pub fn rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        (&self.j - &self.r) * &self.z + (&self.b - &self.p) * u
    }

    /// Output `(B + P)ᵀ z + (S − N) u`.
    pub fn output(&self, u: &DVector<f64>) -> DVector<f64> {
        (&self.b + &self.p).transpose() * &self.z + (&self.s - &self.n) * u
    }

    /// Stacked effort and input `[z; u]`.
    pub fn effort_and_input(&self, u: &DVector<f64>) -> DVector<f64> {
        stack(&self.z, u)
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// A port-Hamiltonian descriptor system. Immutable once built; cloning is cheap.
#[derive(Clone)]
pub struct PhdaeModel {
    dims: Dims,
    flow: MatrixFn,
    structure: MatrixFn,
    dissipation: MatrixFn,
    port: MatrixFn,
    port_dissipation: MatrixFn,
    feedthrough_sym: MatrixFn,
    feedthrough_skew: MatrixFn,
    effort: VectorFn,
    time_flow: VectorFn,
    hamiltonian: ScalarFn,
    grad_x: Option<VectorFn>,
    grad_t: Option<ScalarFn>,
    effort_jacobian: Option<MatrixFn>,
    guard: Option<GuardFn>,
    state_independent: bool,
    autonomous: bool,
    time_interval: (f64, f64),
}

impl fmt::Debug for PhdaeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhdaeModel")
            .field("dims", &self.dims)
            .field("autonomous", &self.autonomous)
            .field("state_independent", &self.state_independent)
            .field("time_interval", &self.time_interval)
            .finish_non_exhaustive()
    }
}

fn const_matrix(m: DMatrix<f64>) -> MatrixFn {
    Arc::new(move |_, _| m.clone())
}

fn const_vector(v: DVector<f64>) -> VectorFn {
    Arc::new(move |_, _| v.clone())
}

/// Label, given shape and expected shape of a constant coefficient.
type ShapeCheck = (&'static str, (usize, usize), (usize, usize));

/// Builder for [`PhdaeModel`]. Every coefficient defaults to zero.
pub struct ModelBuilder {
    model: PhdaeModel,
    const_shapes: Vec<ShapeCheck>,
}

macro_rules! coefficient_setters {
    ($($field:ident, $field_const:ident, $label:literal, $rows:ident, $cols:ident;)*) => {
        $(
            pub fn $field<F>(mut self, f: F) -> Self
            where
                F: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
            {
                self.model.$field = Arc::new(f);
                self
            }

            pub fn $field_const(mut self, m: DMatrix<f64>) -> Self {
                let d = self.model.dims;
                let expected = (d.$rows, d.$cols);
                self.const_shapes.push(($label, m.shape(), expected));
                self.model.$field = const_matrix(m);
                self
            }
        )*
    };
}

impl ModelBuilder {
    coefficient_setters! {
        flow, flow_const, "E", ell, n;
        structure, structure_const, "J", ell, ell;
        dissipation, dissipation_const, "R", ell, ell;
        port, port_const, "B", ell, m;
        port_dissipation, port_dissipation_const, "P", ell, m;
        feedthrough_sym, feedthrough_sym_const, "S", m, m;
        feedthrough_skew, feedthrough_skew_const, "N", m, m;
    }

    pub fn effort<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.model.effort = Arc::new(f);
        self
    }

    pub fn time_flow<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.model.time_flow = Arc::new(f);
        self
    }

    pub fn hamiltonian<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.model.hamiltonian = Arc::new(f);
        self
    }

    /// Analytic `∂ₓH`; without it central differences are used.
    pub fn grad_x<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.model.grad_x = Some(Arc::new(f));
        self
    }

    /// Analytic `∂ₜH`; without it central differences are used.
    pub fn grad_t<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.model.grad_t = Some(Arc::new(f));
        self
    }

    /// Analytic `∂z/∂x`, used by the stage Newton solver together with
    /// [`ModelBuilder::state_independent`].
    pub fn effort_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.model.effort_jacobian = Some(Arc::new(f));
        self
    }

    pub fn guard<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> Result<()> + Send + Sync + 'static,
    {
        self.model.guard = Some(Arc::new(f));
        self
    }

    /// Declares that `E, J, R, B, P, r` do not depend on the state.
    pub fn state_independent(mut self, yes: bool) -> Self {
        self.model.state_independent = yes;
        self
    }

    /// Declares that no coefficient depends on `t` and `r ≡ 0`.
    pub fn autonomous(mut self, yes: bool) -> Self {
        self.model.autonomous = yes;
        self
    }

    pub fn time_interval(mut self, start: f64, end: f64) -> Self {
        self.model.time_interval = (start, end);
        self
    }

    pub fn build(self) -> Result<PhdaeModel> {
        for (label, got, expected) in &self.const_shapes {
            if got != expected {
                return Err(Error::Dimension(format!(
                    "{label} is {}x{}, expected {}x{}",
                    got.0, got.1, expected.0, expected.1
                )));
            }
        }
        let (a, b) = self.model.time_interval;
        if !(a <= b) {
            return Err(Error::InvalidArgument(format!(
                "time interval [{a}, {b}] is empty"
            )));
        }
        Ok(self.model)
    }
}

/// Step for central differences: `cbrt(eps)·max(1, |coordinate|)`.
pub(crate) fn fd_step(coordinate: f64) -> f64 {
    f64::EPSILON.cbrt() * coordinate.abs().max(1.0)
}

impl PhdaeModel {
    pub fn builder(dims: Dims) -> ModelBuilder {
        let Dims { n, ell, m } = dims;
        let model = PhdaeModel {
            dims,
            flow: const_matrix(DMatrix::zeros(ell, n)),
            structure: const_matrix(DMatrix::zeros(ell, ell)),
            dissipation: const_matrix(DMatrix::zeros(ell, ell)),
            port: const_matrix(DMatrix::zeros(ell, m)),
            port_dissipation: const_matrix(DMatrix::zeros(ell, m)),
            feedthrough_sym: const_matrix(DMatrix::zeros(m, m)),
            feedthrough_skew: const_matrix(DMatrix::zeros(m, m)),
            effort: const_vector(DVector::zeros(ell)),
            time_flow: const_vector(DVector::zeros(ell)),
            hamiltonian: Arc::new(|_, _| 0.0),
            grad_x: None,
            grad_t: None,
            effort_jacobian: None,
            guard: None,
            state_independent: false,
            autonomous: false,
            time_interval: (f64::NEG_INFINITY, f64::INFINITY),
        };
        ModelBuilder {
            model,
            const_shapes: Vec::new(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn time_interval(&self) -> (f64, f64) {
        self.time_interval
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn is_state_independent(&self) -> bool {
        self.state_independent
    }

    pub fn has_effort_jacobian(&self) -> bool {
        self.effort_jacobian.is_some()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad_x.is_some()
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dims.n {
            return Err(Error::Dimension(format!(
                "state has length {}, model expects n = {}",
                x.len(),
                self.dims.n
            )));
        }
        Ok(())
    }

    /// Evaluates every coefficient at `(t, x)`, checking shapes and finiteness.
    pub fn coefficients(&self, t: f64, x: &DVector<f64>) -> Result<Coefficients> {
        self.check_state(x)?;
        if let Some(guard) = &self.guard {
            guard(t, x)?;
        }
        let Dims { n, ell, m } = self.dims;
        let c = Coefficients {
            e: (self.flow)(t, x),
            j: (self.structure)(t, x),
            r: (self.dissipation)(t, x),
            b: (self.port)(t, x),
            p: (self.port_dissipation)(t, x),
            s: (self.feedthrough_sym)(t, x),
            n: (self.feedthrough_skew)(t, x),
            z: (self.effort)(t, x),
            time_flow: (self.time_flow)(t, x),
        };
        let shapes = [
            ("E", c.e.shape(), (ell, n)),
            ("J", c.j.shape(), (ell, ell)),
            ("R", c.r.shape(), (ell, ell)),
            ("B", c.b.shape(), (ell, m)),
            ("P", c.p.shape(), (ell, m)),
            ("S", c.s.shape(), (m, m)),
            ("N", c.n.shape(), (m, m)),
            ("z", c.z.shape(), (ell, 1)),
            ("r", c.time_flow.shape(), (ell, 1)),
        ];
        for (label, got, expected) in shapes {
            if got != expected {
                return Err(Error::Dimension(format!(
                    "{label} evaluates to {}x{}, expected {}x{}",
                    got.0, got.1, expected.0, expected.1
                )));
            }
        }
        let all = [&c.e, &c.j, &c.r, &c.b, &c.p, &c.s, &c.n];
        let finite = all.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && c.z.iter().chain(c.time_flow.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                what: "coefficient".into(),
                t,
                x: x.iter().copied().collect(),
            });
        }
        Ok(c)
    }

    pub fn effort(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.effort)(t, x)
    }

    pub fn flow_matrix(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        (self.flow)(t, x)
    }

    pub fn hamiltonian(&self, t: f64, x: &DVector<f64>) -> f64 {
        (self.hamiltonian)(t, x)
    }

    /// `∂ₓH(t,x)`: analytic when supplied, central differences otherwise.
    pub fn grad_x(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        if let Some(g) = &self.grad_x {
            return g(t, x);
        }
        let mut xp = x.clone();
        DVector::from_fn(x.len(), |i, _| {
            let step = fd_step(x[i]);
            xp[i] = x[i] + step;
            let hp = (self.hamiltonian)(t, &xp);
            xp[i] = x[i] - step;
            let hm = (self.hamiltonian)(t, &xp);
            xp[i] = x[i];
            (hp - hm) / (2.0 * step)
        })
    }

    /// `∂ₜH(t,x)`: analytic when supplied, central differences otherwise.
    pub fn grad_t(&self, t: f64, x: &DVector<f64>) -> f64 {
        if let Some(g) = &self.grad_t {
            return g(t, x);
        }
        let step = fd_step(t);
        ((self.hamiltonian)(t + step, x) - (self.hamiltonian)(t - step, x)) / (2.0 * step)
    }

    /// Analytic `∂z/∂x` if the model provides one.
    pub fn effort_jacobian(&self, t: f64, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.effort_jacobian.as_ref().map(|f| f(t, x))
    }

    pub fn output(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(u)?;
        Ok(self.coefficients(t, x)?.output(u))
    }

    fn check_input(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.dims.m {
            return Err(Error::Dimension(format!(
                "input has length {}, model expects m = {}",
                u.len(),
                self.dims.m
            )));
        }
        Ok(())
    }

    pub(crate) fn guard_fn(&self) -> Option<GuardFn> {
        self.guard.clone()
    }

    pub(crate) fn parts(&self) -> ModelParts {
        ModelParts {
            flow: self.flow.clone(),
            structure: self.structure.clone(),
            dissipation: self.dissipation.clone(),
            port: self.port.clone(),
            port_dissipation: self.port_dissipation.clone(),
            feedthrough_sym: self.feedthrough_sym.clone(),
            feedthrough_skew: self.feedthrough_skew.clone(),
            effort: self.effort.clone(),
            time_flow: self.time_flow.clone(),
            hamiltonian: self.hamiltonian.clone(),
        }
    }
}

/// Shared handles to the raw coefficient closures, for model algebra.
#[derive(Clone)]
pub(crate) struct ModelParts {
    pub flow: MatrixFn,
    pub structure: MatrixFn,
    pub dissipation: MatrixFn,
    pub port: MatrixFn,
    pub port_dissipation: MatrixFn,
    pub feedthrough_sym: MatrixFn,
    pub feedthrough_skew: MatrixFn,
    pub effort: VectorFn,
    pub time_flow: VectorFn,
    pub hamiltonian: ScalarFn,
}

/// Residual of the power balance `dH/dt = −[z;u]ᵀ W [z;u] + uᵀy`.
///
/// Returns `dH/dt + [z;u]ᵀ W [z;u] − uᵀy` with `dH/dt = ∂ₜH + ∂ₓHᵀ ẋ`.
pub fn pbe_residual(
    model: &PhdaeModel,
    t: f64,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let Dims { n, m, .. } = model.dims();
    if xdot.len() != n || u.len() != m || y.len() != m {
        return Err(Error::Dimension(format!(
            "pbe_residual expects xdot in R^{n} and u, y in R^{m}"
        )));
    }
    let c = model.coefficients(t, x)?;
    let dh_dt = model.grad_t(t, x) + model.grad_x(t, x).dot(xdot);
    let zu = c.effort_and_input(u);
    let dissipated = zu.dot(&(c.w() * &zu));
    Ok(dh_dt + dissipated - u.dot(y))
}

/// Energy accounting on one stored interval of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub t_start: f64,
    pub t_end: f64,
    /// `H(t₂,x(t₂)) − H(t₁,x(t₁)) − ∫uᵀy`.
    pub excess: f64,
    pub satisfied: bool,
}

/// Dissipation inequality `H(t₂) − H(t₁) ≤ ∫ uᵀy` on every step of a trajectory.
///
/// The supply integral uses the Gauss quadrature of the stage inputs and outputs.
pub fn dissipation_check(
    trajectory: &Trajectory,
    model: &PhdaeModel,
    tol: f64,
) -> Vec<IntervalReport> {
    trajectory
        .steps()
        .iter()
        .map(|step| {
            let t_end = step.t0 + step.h;
            let delta =
                model.hamiltonian(t_end, &step.x_final) - model.hamiltonian(step.t0, &step.x0);
            let excess = delta - step.port_sum;
            IntervalReport {
                t_start: step.t0,
                t_end,
                excess,
                satisfied: excess <= tol,
            }
        })
        .collect()
}
