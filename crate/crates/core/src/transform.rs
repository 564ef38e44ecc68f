//! Structure-preserving model algebra: state/equation transformations,
//! autonomization and interconnection of two models.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::collocation::Input;
use crate::error::{Error, Result};
use crate::model::{Dims, MatrixFn, PhdaeModel, VectorFn};

/// Change of variables `x = φ(t, x̃)` together with an equation scaling `U(t, x̃)`.
#[derive(Clone)]
pub struct TransformSpec {
    state_dim: usize,
    new_dim: usize,
    equation_dim: usize,
    phi: VectorFn,
    dphi_dx: MatrixFn,
    dphi_dt: VectorFn,
    u: MatrixFn,
    phi_inverse: Option<VectorFn>,
    affine: bool,
    time_independent: bool,
}

/// Local admissibility of a transformation at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformCheck {
    pub full_column_rank: bool,
    pub u_condition: f64,
}

impl TransformSpec {
    /// General transformation. `phi` maps `R^new_dim → R^state_dim`, `u` is
    /// `equation_dim × equation_dim`.
    pub fn new(
        state_dim: usize,
        new_dim: usize,
        equation_dim: usize,
        phi: VectorFn,
        dphi_dx: MatrixFn,
        dphi_dt: VectorFn,
        u: MatrixFn,
    ) -> Self {
        TransformSpec {
            state_dim,
            new_dim,
            equation_dim,
            phi,
            dphi_dx,
            dphi_dt,
            u,
            phi_inverse: None,
            affine: false,
            time_independent: false,
        }
    }

    pub fn with_inverse(mut self, inverse: VectorFn) -> Self {
        self.phi_inverse = Some(inverse);
        self
    }

    /// `φ(t, x̃) = A x̃ + b + c·t` with constant `U`. The inverse is attached
    /// when `A` is square and invertible.
    pub fn affine(
        a: DMatrix<f64>,
        offset: DVector<f64>,
        drift: DVector<f64>,
        u: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, nt) = a.shape();
        if offset.len() != n || drift.len() != n || !u.is_square() {
            return Err(Error::Dimension(
                "affine transform: offset and drift must match rows of A, U must be square".into(),
            ));
        }
        let time_independent = drift.iter().all(|&v| v == 0.0);
        let (a1, b1, c1) = (a.clone(), offset.clone(), drift.clone());
        let a2 = a.clone();
        let c2 = drift.clone();
        let u1 = u.clone();
        let mut spec = TransformSpec::new(
            n,
            nt,
            u.nrows(),
            Arc::new(move |t, x| &a1 * x + &b1 + &c1 * t),
            Arc::new(move |_, _| a2.clone()),
            Arc::new(move |_, _| c2.clone()),
            Arc::new(move |_, _| u1.clone()),
        );
        spec.affine = true;
        spec.time_independent = time_independent;
        if n == nt {
            if let Some(a_inv) = a.clone().try_inverse() {
                spec.phi_inverse = Some(Arc::new(move |t, x| &a_inv * (x - &offset - &drift * t)));
            }
        }
        Ok(spec)
    }

    pub fn identity(n: usize, equation_dim: usize) -> Self {
        Self::affine(
            DMatrix::identity(n, n),
            DVector::zeros(n),
            DVector::zeros(n),
            DMatrix::identity(equation_dim, equation_dim),
        )
        .expect("identity transform is well formed")
    }

    /// `x = x̃ + shift`, `U = I`.
    pub fn shift(shift: DVector<f64>, equation_dim: usize) -> Self {
        let n = shift.len();
        Self::affine(
            DMatrix::identity(n, n),
            shift,
            DVector::zeros(n),
            DMatrix::identity(equation_dim, equation_dim),
        )
        .expect("shift transform is well formed")
    }

    /// Identity state map with a constant equation scaling `U`.
    pub fn scaling(n: usize, u: DMatrix<f64>) -> Result<Self> {
        Self::affine(
            DMatrix::identity(n, n),
            DVector::zeros(n),
            DVector::zeros(n),
            u,
        )
    }

    pub fn new_dim(&self) -> usize {
        self.new_dim
    }

    pub fn phi(&self, t: f64, x_new: &DVector<f64>) -> DVector<f64> {
        (self.phi)(t, x_new)
    }

    pub fn inverse(&self, t: f64, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.phi_inverse.as_ref().map(|f| f(t, x))
    }

    pub fn u(&self, t: f64, x_new: &DVector<f64>) -> DMatrix<f64> {
        (self.u)(t, x_new)
    }

    /// Rank of `∂φ/∂x̃` and condition number of `U` at `(t, x̃)`.
    pub fn check(&self, t: f64, x_new: &DVector<f64>) -> TransformCheck {
        let jac = (self.dphi_dx)(t, x_new);
        let sv = jac.singular_values();
        let full_column_rank = jac.ncols() == 0
            || (sv.len() == jac.ncols() && sv.min() > 1e-12 * sv.max().max(f64::MIN_POSITIVE));
        TransformCheck {
            full_column_rank,
            u_condition: condition_number(&(self.u)(t, x_new)),
        }
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn ensure_invertible(u: &DMatrix<f64>, t: f64, x: &DVector<f64>) -> Result<()> {
    if condition_number(u) > 1e14 {
        return Err(Error::SingularTransform {
            t,
            x: x.iter().copied().collect(),
        });
    }
    Ok(())
}

/// Pulls a model back along `spec`:
///
/// `Ẽ = Uᵀ(E∘φ)∂ₓ̃φ`, `J̃ = UᵀJU`, `R̃ = UᵀRU`, `B̃ = UᵀB`, `P̃ = UᵀP`,
/// `z̃ = U⁻¹(z∘φ)`, `r̃ = Uᵀ(r∘φ + (E∘φ)∂ₜφ)`, `H̃ = H∘φ`; `S` and `N` unchanged.
///
/// A singular `U` surfaces as [`Error::SingularTransform`] when the resulting
/// model is evaluated at that point.
pub fn apply_transformation(model: &PhdaeModel, spec: &TransformSpec) -> Result<PhdaeModel> {
    let Dims { n, ell, m } = model.dims();
    if spec.state_dim != n || spec.equation_dim != ell {
        return Err(Error::Dimension(format!(
            "transform maps into R^{} with U of size {}, model has n = {n}, ell = {ell}",
            spec.state_dim, spec.equation_dim
        )));
    }
    let parts = model.parts();
    let dims = Dims::new(spec.new_dim, ell, m);

    let s = spec.clone();
    let orig_guard = model.guard_fn();
    let guard = move |t: f64, xt: &DVector<f64>| -> Result<()> {
        ensure_invertible(&(s.u)(t, xt), t, xt)?;
        if let Some(g) = &orig_guard {
            g(t, &(s.phi)(t, xt))?;
        }
        Ok(())
    };

    // Congruence U^T F(φ) U for J and R.
    let congruent = |f: MatrixFn| {
        let s = spec.clone();
        move |t: f64, xt: &DVector<f64>| {
            let u = (s.u)(t, xt);
            u.transpose() * f(t, &(s.phi)(t, xt)) * u
        }
    };
    // U^T F(φ) for B and P.
    let scaled = |f: MatrixFn| {
        let s = spec.clone();
        move |t: f64, xt: &DVector<f64>| (s.u)(t, xt).transpose() * f(t, &(s.phi)(t, xt))
    };
    // F(φ) for S and N.
    let composed = |f: MatrixFn| {
        let s = spec.clone();
        move |t: f64, xt: &DVector<f64>| f(t, &(s.phi)(t, xt))
    };

    let (s_e, e_fn) = (spec.clone(), parts.flow.clone());
    let flow = move |t: f64, xt: &DVector<f64>| {
        let x = (s_e.phi)(t, xt);
        (s_e.u)(t, xt).transpose() * e_fn(t, &x) * (s_e.dphi_dx)(t, xt)
    };

    let (s_z, z_fn) = (spec.clone(), parts.effort.clone());
    let effort = move |t: f64, xt: &DVector<f64>| {
        let z = z_fn(t, &(s_z.phi)(t, xt));
        (s_z.u)(t, xt)
            .lu()
            .solve(&z)
            .unwrap_or_else(|| DVector::from_element(z.len(), f64::NAN))
    };

    let (s_r, r_fn, e_fn2) = (spec.clone(), parts.time_flow.clone(), parts.flow.clone());
    let time_flow = move |t: f64, xt: &DVector<f64>| {
        let x = (s_r.phi)(t, xt);
        let inner = r_fn(t, &x) + e_fn2(t, &x) * (s_r.dphi_dt)(t, xt);
        (s_r.u)(t, xt).transpose() * inner
    };

    let (s_h, h_fn) = (spec.clone(), parts.hamiltonian.clone());
    let hamiltonian = move |t: f64, xt: &DVector<f64>| h_fn(t, &(s_h.phi)(t, xt));

    let (s_gx, m_gx) = (spec.clone(), model.clone());
    let grad_x = move |t: f64, xt: &DVector<f64>| {
        let x = (s_gx.phi)(t, xt);
        (s_gx.dphi_dx)(t, xt).transpose() * m_gx.grad_x(t, &x)
    };

    let (s_gt, m_gt) = (spec.clone(), model.clone());
    let grad_t = move |t: f64, xt: &DVector<f64>| {
        let x = (s_gt.phi)(t, xt);
        m_gt.grad_t(t, &x) + m_gt.grad_x(t, &x).dot(&(s_gt.dphi_dt)(t, xt))
    };

    let mut builder = PhdaeModel::builder(dims)
        .flow(flow)
        .structure(congruent(parts.structure.clone()))
        .dissipation(congruent(parts.dissipation.clone()))
        .port(scaled(parts.port.clone()))
        .port_dissipation(scaled(parts.port_dissipation.clone()))
        .feedthrough_sym(composed(parts.feedthrough_sym.clone()))
        .feedthrough_skew(composed(parts.feedthrough_skew.clone()))
        .effort(effort)
        .time_flow(time_flow)
        .hamiltonian(hamiltonian)
        .grad_x(grad_x)
        .grad_t(grad_t)
        .guard(guard)
        .state_independent(model.is_state_independent() && spec.affine)
        .autonomous(model.is_autonomous() && spec.time_independent);
    if model.has_effort_jacobian() && spec.affine {
        let (s_j, m_j) = (spec.clone(), model.clone());
        builder = builder.effort_jacobian(move |t, xt| {
            let x = (s_j.phi)(t, xt);
            let zx = m_j.effort_jacobian(t, &x).expect("checked above");
            let rhs = zx * (s_j.dphi_dx)(t, xt);
            let ncols = rhs.ncols();
            (s_j.u)(t, xt)
                .lu()
                .solve(&rhs)
                .unwrap_or_else(|| DMatrix::from_element(rhs.nrows(), ncols, f64::NAN))
        });
    }
    let (a, b) = model.time_interval();
    builder.time_interval(a, b).build()
}

fn embed(m: &DMatrix<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    out.view_mut((0, 0), m.shape()).copy_from(m);
    out
}

fn split_time(xa: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = xa.len() - 1;
    (xa[n], xa.rows(0, n).into_owned())
}

/// Appends time as a state: `[[E, r], [0, 1]] (ẋ, ṫ) = diag(J−R, 0)(z, 0) + [[B−P, 0], [0, 1]](u, 1)`.
///
/// The result has dimensions `(n+1, ℓ+1, m+1)`; its last input channel must
/// be held at 1 (see [`autonomized_input`]). Coefficients read time from the
/// last state coordinate and ignore the outer time argument.
pub fn autonomize(model: &PhdaeModel) -> PhdaeModel {
    let Dims { n, ell, m } = model.dims();
    let dims = Dims::new(n + 1, ell + 1, m + 1);
    let p = model.parts();

    let (e_fn, r_fn) = (p.flow.clone(), p.time_flow.clone());
    let flow = move |_: f64, xa: &DVector<f64>| {
        let (t, x) = split_time(xa);
        let mut e = embed(&e_fn(t, &x), ell + 1, n + 1);
        e.view_mut((0, n), (ell, 1)).copy_from(&r_fn(t, &x));
        e[(ell, n)] = 1.0;
        e
    };
    let padded = |f: MatrixFn, rows: usize, cols: usize| {
        move |_: f64, xa: &DVector<f64>| {
            let (t, x) = split_time(xa);
            embed(&f(t, &x), rows, cols)
        }
    };
    let b_fn = p.port.clone();
    let port = move |_: f64, xa: &DVector<f64>| {
        let (t, x) = split_time(xa);
        let mut b = embed(&b_fn(t, &x), ell + 1, m + 1);
        b[(ell, m)] = 1.0;
        b
    };
    let z_fn = p.effort.clone();
    let effort = move |_: f64, xa: &DVector<f64>| {
        let (t, x) = split_time(xa);
        z_fn(t, &x).push(0.0)
    };
    let h_fn = p.hamiltonian.clone();
    let inner = model.clone();
    let mut builder = PhdaeModel::builder(dims)
        .flow(flow)
        .structure(padded(p.structure.clone(), ell + 1, ell + 1))
        .dissipation(padded(p.dissipation.clone(), ell + 1, ell + 1))
        .port(port)
        .port_dissipation(padded(p.port_dissipation.clone(), ell + 1, m + 1))
        .feedthrough_sym(padded(p.feedthrough_sym.clone(), m + 1, m + 1))
        .feedthrough_skew(padded(p.feedthrough_skew.clone(), m + 1, m + 1))
        .effort(effort)
        .hamiltonian(move |_, xa| {
            let (t, x) = split_time(xa);
            h_fn(t, &x)
        })
        .grad_x(move |_, xa| {
            let (t, x) = split_time(xa);
            inner.grad_x(t, &x).push(inner.grad_t(t, &x))
        })
        .grad_t(|_, _| 0.0)
        .autonomous(true);
    if let Some(g) = model.guard_fn() {
        builder = builder.guard(move |_, xa| {
            let (t, x) = split_time(xa);
            g(t, &x)
        });
    }
    builder.build().expect("autonomized model is well formed")
}

/// Input for an autonomized model: the original input evaluated at the
/// time stored in the state, followed by the constant 1.
pub fn autonomized_input(input: &Input) -> Input {
    let inner = input.clone();
    let m = input.dim();
    Input::state_dependent(m + 1, move |_, xa| {
        let (t, x) = split_time(xa);
        inner.value(t, &x).push(1.0)
    })
}

/// Linear port relation `M_ic u + N_ic y = 0` on the aggregated ports.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectionSpec {
    m_ic: DMatrix<f64>,
    n_ic: DMatrix<f64>,
}

impl InterconnectionSpec {
    pub fn new(m_ic: DMatrix<f64>, n_ic: DMatrix<f64>) -> Result<Self> {
        if m_ic.shape() != n_ic.shape() {
            return Err(Error::Dimension(format!(
                "M_ic is {}x{} but N_ic is {}x{}",
                m_ic.nrows(),
                m_ic.ncols(),
                n_ic.nrows(),
                n_ic.ncols()
            )));
        }
        Ok(InterconnectionSpec { m_ic, n_ic })
    }

    /// No relations: the two models run side by side.
    pub fn none(m: usize) -> Self {
        InterconnectionSpec {
            m_ic: DMatrix::zeros(0, m),
            n_ic: DMatrix::zeros(0, m),
        }
    }

    pub fn relations(&self) -> usize {
        self.m_ic.nrows()
    }

    pub fn ports(&self) -> usize {
        self.m_ic.ncols()
    }

    pub fn m_ic(&self) -> &DMatrix<f64> {
        &self.m_ic
    }

    pub fn n_ic(&self) -> &DMatrix<f64> {
        &self.n_ic
    }

    /// Advisory: `[M_ic N_ic]` has no redundant rows.
    pub fn has_full_row_rank(&self) -> bool {
        let k = self.relations();
        if k == 0 {
            return true;
        }
        let mut stacked = DMatrix::zeros(k, 2 * self.ports());
        stacked.columns_mut(0, self.ports()).copy_from(&self.m_ic);
        stacked
            .columns_mut(self.ports(), self.ports())
            .copy_from(&self.n_ic);
        let sv = stacked.singular_values();
        let tol = 1e-10 * sv.max();
        sv.iter().filter(|&&s| s > tol).count() == k
    }
}

/// Permutation taking `(z₁, u₁, z₂, u₂)` to `(z₁, z₂, u₁, u₂)`.
fn port_permutation(ell1: usize, m1: usize, ell2: usize, m2: usize) -> DMatrix<f64> {
    let size = ell1 + m1 + ell2 + m2;
    let mut pi = DMatrix::zeros(size, size);
    let ell = ell1 + ell2;
    for i in 0..ell1 {
        pi[(i, i)] = 1.0;
    }
    for i in 0..ell2 {
        pi[(ell1 + i, ell1 + m1 + i)] = 1.0;
    }
    for i in 0..m1 {
        pi[(ell + i, ell1 + i)] = 1.0;
    }
    for i in 0..m2 {
        pi[(ell + m1 + i, ell1 + m1 + ell2 + i)] = 1.0;
    }
    pi
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

/// Couples two autonomous models through `M_ic u + N_ic y = 0`.
///
/// The aggregate has state `(x₁, x₂, û, ŷ)` of dimension `n + 2m`,
/// `ℓ + 2m + k` equations and effort `(z₁, z₂, û, ŷ, 0_k)`:
///
/// ```text
/// [E 0 0]            [ Γ−W        | 0     0    ]                [0]
/// [0 0 0] [ẋ ]       [            | I_m  −M_icᵀ] [z ]           [0]
/// [0 0 0] [û'] =     [ 0   −I_m   | 0    −N_icᵀ] [û ]   +       [I] u,   y = ŷ
/// [0 0 0] [ŷ']       [ 0    M_ic  | N_ic   0   ] [ŷ ]           [0]
///                                                [0 ]
/// ```
///
/// with `Γ = Π diag(Γ₁, Γ₂) Πᵀ`, `W = Π diag(W₁, W₂) Πᵀ` and `H = H₁ + H₂`.
pub fn interconnect(
    m1: &PhdaeModel,
    m2: &PhdaeModel,
    spec: &InterconnectionSpec,
) -> Result<PhdaeModel> {
    if !m1.is_autonomous() || !m2.is_autonomous() {
        return Err(Error::InvalidArgument(
            "interconnection requires autonomous models; apply autonomize first".into(),
        ));
    }
    let (d1, d2) = (m1.dims(), m2.dims());
    let (n, ell, m) = (d1.n + d2.n, d1.ell + d2.ell, d1.m + d2.m);
    if spec.ports() != m {
        return Err(Error::Dimension(format!(
            "relation acts on {} ports, models have {m} together",
            spec.ports()
        )));
    }
    let k = spec.relations();
    let dims = Dims::new(n + 2 * m, ell + 2 * m + k, m);
    let pi = Arc::new(port_permutation(d1.ell, d1.m, d2.ell, d2.m));

    let split = move |x: &DVector<f64>| {
        (
            x.rows(0, d1.n).into_owned(),
            x.rows(d1.n, d2.n).into_owned(),
        )
    };

    let (a, b) = (m1.clone(), m2.clone());
    let pi_j = pi.clone();
    let rel = spec.clone();
    let structure = move |t: f64, x: &DVector<f64>| {
        let (x1, x2) = split(x);
        let (p1, p2) = (a.parts(), b.parts());
        let gamma = |p: &crate::model::ModelParts, x: &DVector<f64>| {
            let (j, bm, nm) = (
                (p.structure)(t, x),
                (p.port)(t, x),
                (p.feedthrough_skew)(t, x),
            );
            let (l, mm) = (j.nrows(), bm.ncols());
            let mut g = DMatrix::zeros(l + mm, l + mm);
            g.view_mut((0, 0), (l, l)).copy_from(&j);
            g.view_mut((0, l), (l, mm)).copy_from(&bm);
            g.view_mut((l, 0), (mm, l)).copy_from(&(-bm.transpose()));
            g.view_mut((l, l), (mm, mm)).copy_from(&nm);
            g
        };
        let g = &*pi_j * block_diag(&gamma(&p1, &x1), &gamma(&p2, &x2)) * pi_j.transpose();
        let mut ja = DMatrix::zeros(ell + 2 * m + k, ell + 2 * m + k);
        ja.view_mut((0, 0), (ell + m, ell + m)).copy_from(&g);
        let (r1, r2, r3) = (ell, ell + m, ell + 2 * m);
        for i in 0..m {
            ja[(r1 + i, r2 + i)] = 1.0;
            ja[(r2 + i, r1 + i)] = -1.0;
        }
        ja.view_mut((r1, r3), (m, k))
            .copy_from(&(-rel.m_ic.transpose()));
        ja.view_mut((r3, r1), (k, m)).copy_from(&rel.m_ic);
        ja.view_mut((r2, r3), (m, k))
            .copy_from(&(-rel.n_ic.transpose()));
        ja.view_mut((r3, r2), (k, m)).copy_from(&rel.n_ic);
        ja
    };

    let (a, b) = (m1.clone(), m2.clone());
    let pi_w = pi.clone();
    let dissipation = move |t: f64, x: &DVector<f64>| {
        let (x1, x2) = split(x);
        let w1 = a.parts();
        let w2 = b.parts();
        let w = |p: &crate::model::ModelParts, x: &DVector<f64>| {
            let (r, pm, s) = (
                (p.dissipation)(t, x),
                (p.port_dissipation)(t, x),
                (p.feedthrough_sym)(t, x),
            );
            let (l, mm) = (r.nrows(), pm.ncols());
            let mut out = DMatrix::zeros(l + mm, l + mm);
            out.view_mut((0, 0), (l, l)).copy_from(&r);
            out.view_mut((0, l), (l, mm)).copy_from(&pm);
            out.view_mut((l, 0), (mm, l)).copy_from(&pm.transpose());
            out.view_mut((l, l), (mm, mm)).copy_from(&s);
            out
        };
        let wa = &*pi_w * block_diag(&w(&w1, &x1), &w(&w2, &x2)) * pi_w.transpose();
        embed(&wa, ell + 2 * m + k, ell + 2 * m + k)
    };

    let (a, b) = (m1.clone(), m2.clone());
    let flow = move |t: f64, x: &DVector<f64>| {
        let (x1, x2) = split(x);
        let e = block_diag(&a.flow_matrix(t, &x1), &b.flow_matrix(t, &x2));
        embed(&e, ell + 2 * m + k, n + 2 * m)
    };

    let mut port = DMatrix::zeros(ell + 2 * m + k, m);
    port.view_mut((ell + m, 0), (m, m)).fill_with_identity();

    let (a, b) = (m1.clone(), m2.clone());
    let effort = move |t: f64, x: &DVector<f64>| {
        let (x1, x2) = split(x);
        let mut z = DVector::zeros(ell + 2 * m + k);
        z.rows_mut(0, d1.ell).copy_from(&a.effort(t, &x1));
        z.rows_mut(d1.ell, d2.ell).copy_from(&b.effort(t, &x2));
        z.rows_mut(ell, 2 * m).copy_from(&x.rows(n, 2 * m));
        z
    };

    let (a, b) = (m1.clone(), m2.clone());
    let hamiltonian = move |t: f64, x: &DVector<f64>| {
        let (x1, x2) = split(x);
        a.hamiltonian(t, &x1) + b.hamiltonian(t, &x2)
    };
    let (a, b) = (m1.clone(), m2.clone());
    let grad_x = move |t: f64, x: &DVector<f64>| {
        let (x1, x2) = split(x);
        let mut g = DVector::zeros(n + 2 * m);
        g.rows_mut(0, d1.n).copy_from(&a.grad_x(t, &x1));
        g.rows_mut(d1.n, d2.n).copy_from(&b.grad_x(t, &x2));
        g
    };

    let mut builder = PhdaeModel::builder(dims)
        .flow(flow)
        .structure(structure)
        .dissipation(dissipation)
        .port_const(port)
        .effort(effort)
        .hamiltonian(hamiltonian)
        .grad_x(grad_x)
        .grad_t(|_, _| 0.0)
        .state_independent(m1.is_state_independent() && m2.is_state_independent())
        .autonomous(true);

    if m1.has_effort_jacobian() && m2.has_effort_jacobian() {
        let (a, b) = (m1.clone(), m2.clone());
        builder = builder.effort_jacobian(move |t, x| {
            let (x1, x2) = split(x);
            let zj = block_diag(
                &a.effort_jacobian(t, &x1).expect("checked above"),
                &b.effort_jacobian(t, &x2).expect("checked above"),
            );
            let mut out = embed(&zj, ell + 2 * m + k, n + 2 * m);
            out.view_mut((ell, n), (2 * m, 2 * m)).fill_with_identity();
            out
        });
    }
    let (g1, g2) = (m1.guard_fn(), m2.guard_fn());
    if g1.is_some() || g2.is_some() {
        builder = builder.guard(move |t, x| {
            let (x1, x2) = split(x);
            if let Some(g) = &g1 {
                g(t, &x1)?;
            }
            if let Some(g) = &g2 {
                g(t, &x2)?;
            }
            Ok(())
        });
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{build_dc_network, CircuitParams};
    use crate::model::{pbe_residual, validate_structure, SampleBox};

    fn circuit() -> PhdaeModel {
        build_dc_network(&CircuitParams::default()).unwrap()
    }

    fn sample_points() -> Vec<(f64, DVector<f64>)> {
        (0..5)
            .map(|i| {
                let f = i as f64;
                (
                    0.3 * f,
                    DVector::from_fn(5, |j, _| (f + 1.0) * 0.7 - j as f64 * 0.4),
                )
            })
            .collect()
    }

    #[test]
    fn identity_transform_preserves_coefficients() {
        let model = circuit();
        let same = apply_transformation(&model, &TransformSpec::identity(5, 5)).unwrap();
        for (t, x) in sample_points() {
            assert_eq!(
                model.coefficients(t, &x).unwrap(),
                same.coefficients(t, &x).unwrap()
            );
            assert_eq!(model.hamiltonian(t, &x), same.hamiltonian(t, &x));
        }
    }

    #[test]
    fn constant_scaling_scales_structure_and_effort() {
        let model = circuit();
        let u = DMatrix::identity(5, 5) * 2.0;
        let scaled = apply_transformation(&model, &TransformSpec::scaling(5, u).unwrap()).unwrap();
        for (t, x) in sample_points() {
            let (c, cs) = (
                model.coefficients(t, &x).unwrap(),
                scaled.coefficients(t, &x).unwrap(),
            );
            assert_eq!(cs.j, &c.j * 4.0);
            assert_eq!(cs.z, &c.z * 0.5);
            assert_eq!(scaled.hamiltonian(t, &x), model.hamiltonian(t, &x));
            // Any (x, ẋ) solving the scaled equations solves the original ones,
            // so the PBE residual agrees on both.
            let xdot = DVector::from_element(5, 0.1);
            let u1 = DVector::from_element(1, 0.3);
            let y = cs.output(&u1);
            let r1 = pbe_residual(&model, t, &x, &xdot, &u1, &y).unwrap();
            let r2 = pbe_residual(&scaled, t, &x, &xdot, &u1, &y).unwrap();
            assert!((r1 - r2).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_reproduces_shifted_equations() {
        let model = circuit();
        let x_star = DVector::from_vec(vec![1.0, -3.1, -3.0, 1.0, -1.0]);
        let shifted =
            apply_transformation(&model, &TransformSpec::shift(x_star.clone(), 5)).unwrap();
        let xt = DVector::from_vec(vec![0.2, 0.1, -0.4, 0.3, 0.0]);
        let c = shifted.coefficients(0.0, &xt).unwrap();
        assert_eq!(c.z, &xt + &x_star);
        assert!(c.time_flow.iter().all(|&v| v == 0.0));
        assert_eq!(
            shifted.hamiltonian(0.0, &xt),
            model.hamiltonian(0.0, &(&xt + &x_star))
        );
    }

    #[test]
    fn singular_u_is_reported_with_point() {
        let model = circuit();
        let spec = TransformSpec::scaling(5, DMatrix::zeros(5, 5)).unwrap();
        let bad = apply_transformation(&model, &spec).unwrap();
        let x = DVector::from_element(5, 1.0);
        assert!(matches!(
            bad.coefficients(2.0, &x),
            Err(Error::SingularTransform { t, .. }) if t == 2.0
        ));
        let check = spec.check(0.0, &x);
        assert!(check.full_column_rank);
        assert!(check.u_condition.is_infinite());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = TransformSpec::identity(3, 3);
        assert!(apply_transformation(&circuit(), &spec).is_err());
    }

    #[test]
    fn autonomized_scalar_with_time_flow_validates() {
        let model = PhdaeModel::builder(Dims::new(1, 1, 0))
            .flow_const(DMatrix::identity(1, 1))
            .effort(|_, _| DVector::from_element(1, 1.0))
            .time_flow(|_, _| DVector::from_element(1, 1.0))
            .hamiltonian(|t, x| t + x[0])
            .build()
            .unwrap();
        let auto = autonomize(&model);
        assert_eq!(auto.dims(), Dims::new(2, 2, 1));
        let bx = SampleBox::cube((0.0, 0.0), 2, 3.0).unwrap();
        let report = validate_structure(&auto, &bx, 50, 5, 1e-8).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.grad_t.value == 0.0);
    }

    #[test]
    fn autonomized_time_independent_model_has_unit_corner() {
        let auto = autonomize(&circuit());
        let xa = DVector::from_element(6, 0.5);
        let c = auto.coefficients(0.0, &xa).unwrap();
        assert_eq!(
            c.e.row(5).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert!(c.e.column(5).rows(0, 5).iter().all(|&v| v == 0.0));
        assert_eq!(c.b[(5, 1)], 1.0);
        let bx = SampleBox::cube((0.0, 0.0), 6, 5.0).unwrap();
        assert!(validate_structure(&auto, &bx, 50, 1, 1e-9)
            .unwrap()
            .passed());
    }

    fn power_conserving() -> InterconnectionSpec {
        InterconnectionSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn coupled_circuits_validate() {
        let agg = interconnect(&circuit(), &circuit(), &power_conserving()).unwrap();
        assert_eq!(agg.dims(), Dims::new(14, 16, 2));
        let bx = SampleBox::cube((0.0, 1.0), 14, 5.0).unwrap();
        let report = validate_structure(&agg, &bx, 100, 9, 1e-9).unwrap();
        assert!(report.passed(), "{report}");
        assert!(power_conserving().has_full_row_rank());
    }

    #[test]
    fn aggregate_hamiltonian_is_additive() {
        let (c1, c2) = (circuit(), circuit());
        let agg = interconnect(&c1, &c2, &InterconnectionSpec::none(2)).unwrap();
        let x = DVector::from_fn(14, |i, _| (i as f64 * 0.37).sin());
        let x1 = x.rows(0, 5).into_owned();
        let x2 = x.rows(5, 5).into_owned();
        let expected = c1.hamiltonian(0.0, &x1) + c2.hamiltonian(0.0, &x2);
        assert_eq!(agg.hamiltonian(0.0, &x), expected);
    }

    #[test]
    fn interconnection_requires_autonomous_models() {
        let model = PhdaeModel::builder(Dims::new(1, 1, 1)).build().unwrap();
        let err = interconnect(&model, &model, &InterconnectionSpec::none(2));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let err = interconnect(&circuit(), &circuit(), &InterconnectionSpec::none(3));
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn permutation_orders_efforts_before_ports() {
        let pi = port_permutation(2, 1, 1, 1);
        let v = DVector::from_vec(vec![1.0, 2.0, 10.0, 3.0, 20.0]);
        assert_eq!((&pi * v).as_slice(), &[1.0, 2.0, 3.0, 10.0, 20.0]);
    }
}
