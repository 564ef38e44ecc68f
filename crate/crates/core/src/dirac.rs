//! The Dirac structure `D = {(f, e) : f + K e = 0}`, `K = [[Γ, I], [−I, 0]]`,
//! with flows `f = (f_s, f_p, f_d)` and efforts `e = (e_s, e_p, e_d)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{stack, Dims, PhdaeModel};

/// One flow/effort pair. Storage parts live in `ℝ^ℓ`, port parts in `ℝ^m`,
/// resistive parts in `ℝ^{ℓ+m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracPoint {
    pub f_s: DVector<f64>,
    pub e_s: DVector<f64>,
    pub f_p: DVector<f64>,
    pub e_p: DVector<f64>,
    pub f_d: DVector<f64>,
    pub e_d: DVector<f64>,
}

impl DiracPoint {
    /// Splits stacked `f` and `e` of length `2(ℓ+m)`.
    pub fn from_stacked(ell: usize, m: usize, f: &DVector<f64>, e: &DVector<f64>) -> Result<Self> {
        let total = 2 * (ell + m);
        if f.len() != total || e.len() != total {
            return Err(Error::Dimension(format!(
                "flow and effort must have length {total}, got {} and {}",
                f.len(),
                e.len()
            )));
        }
        let part = |v: &DVector<f64>, start: usize, len: usize| v.rows(start, len).into_owned();
        Ok(DiracPoint {
            f_s: part(f, 0, ell),
            f_p: part(f, ell, m),
            f_d: part(f, ell + m, ell + m),
            e_s: part(e, 0, ell),
            e_p: part(e, ell, m),
            e_d: part(e, ell + m, ell + m),
        })
    }

    pub fn storage_dim(&self) -> usize {
        self.f_s.len()
    }

    pub fn port_dim(&self) -> usize {
        self.f_p.len()
    }

    pub fn flow(&self) -> DVector<f64> {
        stack(&stack(&self.f_s, &self.f_p), &self.f_d)
    }

    pub fn effort(&self) -> DVector<f64> {
        stack(&stack(&self.e_s, &self.e_p), &self.e_d)
    }

    /// `⟨e, f⟩ = e_sᵀf_s + e_pᵀf_p + e_dᵀf_d`; zero on `D`.
    pub fn pairing(&self) -> f64 {
        self.e_s.dot(&self.f_s) + self.e_p.dot(&self.f_p) + self.e_d.dot(&self.f_d)
    }
}

/// Symmetric bilinear form `⟨e_a, f_b⟩ + ⟨e_b, f_a⟩`.
pub fn bilinear(a: &DiracPoint, b: &DiracPoint) -> f64 {
    a.effort().dot(&b.flow()) + b.effort().dot(&a.flow())
}

/// `K = [[Γ, I], [−I, 0]]` for a square `Γ`.
pub fn k_matrix(gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let q = gamma.nrows();
    let mut k = DMatrix::zeros(2 * q, 2 * q);
    k.view_mut((0, 0), (q, q)).copy_from(gamma);
    for i in 0..q {
        k[(i, q + i)] = 1.0;
        k[(q + i, i)] = -1.0;
    }
    k
}

/// Result of a membership test.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    /// `‖f + K e‖∞`.
    pub residual: f64,
    /// Distance of `E ẋ` from the range of `E`, when a model is supplied.
    pub fiber_residual: Option<f64>,
    pub member: bool,
}

fn check_point(point: &DiracPoint, gamma: &DMatrix<f64>) -> Result<()> {
    let q = point.storage_dim() + point.port_dim();
    if gamma.shape() != (q, q) || point.flow().len() != 2 * q || point.effort().len() != 2 * q {
        return Err(Error::Dimension(format!(
            "point of storage/port size ({}, {}) does not match a {}x{} Γ",
            point.storage_dim(),
            point.port_dim(),
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    Ok(())
}

/// `f + K e`.
pub fn membership_residual(point: &DiracPoint, gamma: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_point(point, gamma)?;
    Ok(point.flow() + k_matrix(gamma) * point.effort())
}

/// Tests `f + K e = 0` to `tol·(1 + ‖f‖∞ + ‖e‖∞)`.
pub fn membership(point: &DiracPoint, gamma: &DMatrix<f64>, tol: f64) -> Result<Membership> {
    let rho = membership_residual(point, gamma)?;
    let residual = rho.amax();
    let scale = 1.0 + point.flow().amax() + point.effort().amax();
    Ok(Membership {
        residual,
        fiber_residual: None,
        member: residual <= tol * scale,
    })
}

/// Membership at `(t, x)` of `model`, additionally checking that `−f_s − r`
/// lies in the range of `E(t,x)` to `1e−10·‖E‖`.
pub fn membership_in_model(
    model: &PhdaeModel,
    t: f64,
    x: &DVector<f64>,
    point: &DiracPoint,
    tol: f64,
) -> Result<Membership> {
    let c = model.coefficients(t, x)?;
    let mut report = membership(point, &c.gamma(), tol)?;
    let target = -(&point.f_s) - &c.time_flow;
    let fiber = range_distance(&c.e, &target);
    let e_norm = if c.e.is_empty() { 0.0 } else { c.e.amax() };
    report.member &= fiber <= 1e-10 * e_norm.max(1.0) * (1.0 + target.amax());
    report.fiber_residual = Some(fiber);
    Ok(report)
}

/// `‖b − A A⁺ b‖∞`.
fn range_distance(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    if b.is_empty() {
        return 0.0;
    }
    if a.ncols() == 0 {
        return b.amax();
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (1e-12 * smax).max(f64::MIN_POSITIVE);
    match svd.solve(b, eps) {
        Ok(sol) => (b - a * sol).amax(),
        Err(_) => b.amax(),
    }
}

/// Maps a state, rate and input to the Dirac point
/// `f_s = −(E ẋ + r)`, `e_s = z`, `f_p = y`, `e_p = u`, `f_d = (z, u)`, `e_d = −W f_d`.
///
/// The point lies in `D` exactly when `(x, ẋ, u)` satisfies the model equations.
pub fn lift(
    model: &PhdaeModel,
    t: f64,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DiracPoint> {
    let Dims { n, m, .. } = model.dims();
    if xdot.len() != n || u.len() != m {
        return Err(Error::Dimension(format!(
            "lift expects xdot in R^{n} and u in R^{m}, got lengths {} and {}",
            xdot.len(),
            u.len()
        )));
    }
    let c = model.coefficients(t, x)?;
    let f_d = c.effort_and_input(u);
    Ok(DiracPoint {
        f_s: -(&c.e * xdot + &c.time_flow),
        e_s: c.z.clone(),
        f_p: c.output(u),
        e_p: u.clone(),
        e_d: -(c.w() * &f_d),
        f_d,
    })
}

/// Numerical rank with threshold `1e−10·σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * smax).count()
}

/// Dimension and isotropy of `D` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionReport {
    /// Rank of a spanning set of `D`.
    pub rank: usize,
    /// Half the dimension of the bond space, `2(ℓ+m)`.
    pub expected: usize,
    /// Largest `|⟨eₐ, f_b⟩ + ⟨e_b, fₐ⟩|` over the spanning set.
    pub isotropy: f64,
    pub lagrangian: bool,
}

/// Spanning set of `D`: the columns of `[−K; I]`, one per effort direction.
pub fn basis(gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let q2 = 2 * gamma.nrows();
    let mut span = DMatrix::zeros(2 * q2, q2);
    span.view_mut((0, 0), (q2, q2))
        .copy_from(&(-k_matrix(gamma)));
    span.view_mut((q2, 0), (q2, q2)).fill_with_identity();
    span
}

/// Checks `dim D = 2(ℓ+m)` and `D ⊆ D^⊥` for a given `Γ`.
pub fn dimension_check_gamma(gamma: &DMatrix<f64>, tol: f64) -> Result<DimensionReport> {
    if !gamma.is_square() {
        return Err(Error::Dimension(format!(
            "Γ must be square, got {}x{}",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    let span = basis(gamma);
    let q2 = 2 * gamma.nrows();
    let f = span.rows(0, q2);
    let e = span.rows(q2, q2);
    // entry (a, b) is ⟨e_a, f_b⟩ + ⟨e_b, f_a⟩
    let gram = e.transpose() * f;
    let sym = &gram + gram.transpose();
    let isotropy = if sym.is_empty() { 0.0 } else { sym.amax() };
    let rank = numerical_rank(&span);
    let scale = 1.0 + if gamma.is_empty() { 0.0 } else { gamma.amax() };
    Ok(DimensionReport {
        rank,
        expected: q2,
        isotropy,
        lagrangian: rank == q2 && isotropy <= tol * scale,
    })
}

/// [`dimension_check_gamma`] for `Γ(t, x)` of a model.
pub fn dimension_check(
    model: &PhdaeModel,
    t: f64,
    x: &DVector<f64>,
    tol: f64,
) -> Result<DimensionReport> {
    dimension_check_gamma(&model.coefficients(t, x)?.gamma(), tol)
}

/// The member of `D` with effort `e`: `f = −K e`.
pub fn member_with_effort(
    gamma: &DMatrix<f64>,
    ell: usize,
    e: &DVector<f64>,
) -> Result<DiracPoint> {
    let q = gamma.nrows();
    if ell > q || e.len() != 2 * q {
        return Err(Error::Dimension(format!(
            "effort must have length {} with ell <= {q}",
            2 * q
        )));
    }
    let f = -(k_matrix(gamma) * e);
    DiracPoint::from_stacked(ell, q - ell, &f, e)
}

/// For a point outside `D`, a member `d ∈ D` with `bilinear(point, d) = 1`,
/// witnessing `point ∉ D^⊥ = D`. Returns `None` when the point is a member
/// to `tol`.
///
/// With `ρ = f + K e`, the member with effort `ρ/‖ρ‖²` pairs to exactly one
/// when `Γ` is skew.
pub fn separating_member(
    point: &DiracPoint,
    gamma: &DMatrix<f64>,
    tol: f64,
) -> Result<Option<DiracPoint>> {
    let rho = membership_residual(point, gamma)?;
    let norm2 = rho.norm_squared();
    if rho.amax() <= tol * (1.0 + point.flow().amax() + point.effort().amax()) {
        return Ok(None);
    }
    member_with_effort(gamma, point.storage_dim(), &(rho / norm2)).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skew(q: usize, seed: u64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(q, q, |i, j| {
            ((i * 7 + j * 13 + seed as usize) % 11) as f64 - 5.0
        });
        &a - a.transpose()
    }

    #[test]
    fn k_layout() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let k = k_matrix(&g);
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(0, 1)], 1.0);
        assert_eq!(k[(0, 2)], 1.0);
        assert_eq!(k[(3, 1)], -1.0);
        assert_eq!(k[(2, 2)], 0.0);
        assert_eq!((&k + k.transpose()).amax(), 0.0);
    }

    #[test]
    fn members_have_zero_pairing() {
        let g = skew(5, 3);
        let e = DVector::from_fn(10, |i, _| (i as f64 * 0.37).sin());
        let d = member_with_effort(&g, 3, &e).unwrap();
        assert!(d.pairing().abs() < 1e-12);
        assert!(membership(&d, &g, 1e-12).unwrap().member);
    }

    fn damped_scalar() -> PhdaeModel {
        PhdaeModel::builder(Dims::new(1, 1, 1))
            .flow_const(DMatrix::identity(1, 1))
            .dissipation_const(DMatrix::from_element(1, 1, 0.5))
            .port_const(DMatrix::identity(1, 1))
            .effort(|_, x| x.clone())
            .hamiltonian(|_, x| 0.5 * x[0] * x[0])
            .build()
            .unwrap()
    }

    #[test]
    fn lift_is_a_member_exactly_on_solutions() {
        let model = damped_scalar();
        let x = DVector::from_element(1, 2.0);
        let u = DVector::from_element(1, 3.0);
        let gamma = model.coefficients(0.0, &x).unwrap().gamma();
        let xdot = DVector::from_element(1, -0.5 * 2.0 + 3.0);
        let d = lift(&model, 0.0, &x, &xdot, &u).unwrap();
        assert!(membership(&d, &gamma, 1e-14).unwrap().member);
        assert!(
            membership_in_model(&model, 0.0, &x, &d, 1e-14)
                .unwrap()
                .member
        );
        // pairing is −dH/dt + uᵀy − dissipation
        assert!(d.pairing().abs() < 1e-14);
        assert_eq!(d.f_p[0], 2.0);
        assert_eq!(d.e_d, DVector::from_vec(vec![-1.0, 0.0]));
        let wrong = lift(&model, 0.0, &x, &(xdot.add_scalar(0.1)), &u).unwrap();
        let m = membership(&wrong, &gamma, 1e-12).unwrap();
        assert!(!m.member);
        assert!((m.residual - 0.1).abs() < 1e-14);
    }

    #[test]
    fn dimension_of_skew_gamma() {
        for q in [1, 3, 6] {
            let report = dimension_check_gamma(&skew(q, q as u64), 1e-12).unwrap();
            assert_eq!(report.rank, 2 * q);
            assert_eq!(report.expected, 2 * q);
            assert!(report.isotropy < 1e-12);
            assert!(report.lagrangian);
        }
    }

    #[test]
    fn non_skew_gamma_is_not_isotropic() {
        let g = DMatrix::identity(2, 2);
        let report = dimension_check_gamma(&g, 1e-12).unwrap();
        assert_eq!(report.rank, 4);
        assert!((report.isotropy - 2.0).abs() < 1e-15);
        assert!(!report.lagrangian);
    }

    #[test]
    fn separating_member_pairs_to_one() {
        let g = skew(4, 1);
        let e = DVector::from_fn(8, |i, _| i as f64 - 3.0);
        let mut d = member_with_effort(&g, 2, &e).unwrap();
        assert!(separating_member(&d, &g, 1e-12).unwrap().is_none());
        d.f_p[1] += 0.5;
        let s = separating_member(&d, &g, 1e-12).unwrap().unwrap();
        assert!(membership(&s, &g, 1e-12).unwrap().member);
        assert!((bilinear(&d, &s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fiber_check_uses_range_of_e() {
        let model = PhdaeModel::builder(Dims::new(1, 2, 0))
            .flow_const(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]))
            .effort(|_, x| DVector::from_vec(vec![x[0], 0.0]))
            .hamiltonian(|_, x| 0.5 * x[0] * x[0])
            .build()
            .unwrap();
        let x = DVector::from_element(1, 1.0);
        let mut d = lift(
            &model,
            0.0,
            &x,
            &DVector::from_element(1, 0.0),
            &DVector::zeros(0),
        )
        .unwrap();
        let inside = membership_in_model(&model, 0.0, &x, &d, 1e-12).unwrap();
        assert_eq!(inside.fiber_residual, Some(0.0));
        d.f_s[1] = 1.0;
        let outside = membership_in_model(&model, 0.0, &x, &d, 1e-12).unwrap();
        assert!(outside.fiber_residual.unwrap() > 0.5);
        assert!(!outside.member);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let g = skew(3, 0);
        let d = member_with_effort(&skew(2, 0), 1, &DVector::zeros(4)).unwrap();
        assert!(membership(&d, &g, 1e-12).is_err());
        assert!(DiracPoint::from_stacked(1, 1, &DVector::zeros(3), &DVector::zeros(4)).is_err());
    }
}
