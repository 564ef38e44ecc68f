use nalgebra::{DMatrix, DVector};

use super::{Dims, PhdaeModel};
use crate::error::{Error, Result};

/// Constant-coefficient pHDAE with affine effort `z = Zx + w` and quadratic
/// Hamiltonian `H(x) = ½xᵀQx + vᵀx + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub e: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub w: DVector<f64>,
    pub q: DMatrix<f64>,
    pub v: DVector<f64>,
    pub c: f64,
}

impl LtiModel {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { n, ell, m } = dims;
        LtiModel {
            e: DMatrix::zeros(ell, n),
            j: DMatrix::zeros(ell, ell),
            r: DMatrix::zeros(ell, ell),
            b: DMatrix::zeros(ell, m),
            p: DMatrix::zeros(ell, m),
            s: DMatrix::zeros(m, m),
            n: DMatrix::zeros(m, m),
            z: DMatrix::zeros(ell, n),
            w: DVector::zeros(ell),
            q: DMatrix::zeros(n, n),
            v: DVector::zeros(n),
            c: 0.0,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.e.ncols(), self.e.nrows(), self.b.ncols())
    }

    /// `H(x) = ½xᵀQx + vᵀx + c`.
    pub fn hamiltonian(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.v.dot(x) + self.c
    }

    fn check_shapes(&self) -> Result<()> {
        let Dims { n, ell, m } = self.dims();
        let shapes = [
            ("J", self.j.shape(), (ell, ell)),
            ("R", self.r.shape(), (ell, ell)),
            ("B", self.b.shape(), (ell, m)),
            ("P", self.p.shape(), (ell, m)),
            ("S", self.s.shape(), (m, m)),
            ("N", self.n.shape(), (m, m)),
            ("Z", self.z.shape(), (ell, n)),
            ("w", self.w.shape(), (ell, 1)),
            ("Q", self.q.shape(), (n, n)),
            ("v", self.v.shape(), (n, 1)),
        ];
        for (label, got, expected) in shapes {
            if got != expected {
                return Err(Error::Dimension(format!(
                    "{label} is {}x{}, expected {}x{}",
                    got.0, got.1, expected.0, expected.1
                )));
            }
        }
        Ok(())
    }

    /// Checks `Q = Qᵀ`, `Q = EᵀZ` and `v = Eᵀw` to `1e−9·(1 + ‖Q‖)`.
    pub fn check_hamiltonian(&self) -> Result<()> {
        self.check_shapes()?;
        let tol = 1e-9 * (1.0 + self.q.amax());
        let asym = (&self.q - self.q.transpose()).amax();
        if asym > tol {
            return Err(Error::Structure(format!(
                "Q is not symmetric (residual {asym:e})"
            )));
        }
        let grad_q = (&self.q - self.e.transpose() * &self.z).amax();
        if grad_q > tol {
            return Err(Error::Structure(format!(
                "gradient condition fails: Q differs from E^T Z by {grad_q:e}"
            )));
        }
        let grad_v = (&self.v - self.e.transpose() * &self.w).amax();
        if grad_v > tol {
            return Err(Error::Structure(format!(
                "gradient condition fails: v differs from E^T w by {grad_v:e}"
            )));
        }
        Ok(())
    }
}

/// Wraps constant data as a [`PhdaeModel`] with analytic `∂ₓH = Qx + v` and `∂z/∂x = Z`.
pub fn lti_to_model(lti: &LtiModel) -> Result<PhdaeModel> {
    lti.check_hamiltonian()?;
    let (z, w) = (lti.z.clone(), lti.w.clone());
    let (q, v, c) = (lti.q.clone(), lti.v.clone(), lti.c);
    let (q2, v2) = (q.clone(), v.clone());
    let z_jac = lti.z.clone();
    PhdaeModel::builder(lti.dims())
        .flow_const(lti.e.clone())
        .structure_const(lti.j.clone())
        .dissipation_const(lti.r.clone())
        .port_const(lti.b.clone())
        .port_dissipation_const(lti.p.clone())
        .feedthrough_sym_const(lti.s.clone())
        .feedthrough_skew_const(lti.n.clone())
        .effort(move |_, x| &z * x + &w)
        .hamiltonian(move |_, x| 0.5 * x.dot(&(&q * x)) + v.dot(x) + c)
        .grad_x(move |_, x| &q2 * x + &v2)
        .grad_t(|_, _| 0.0)
        .effort_jacobian(move |_, _| z_jac.clone())
        .state_independent(true)
        .autonomous(true)
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{dc_network_lti, CircuitParams};
    use crate::model::{validate_structure, SampleBox};

    #[test]
    fn circuit_lti_converts_and_validates() {
        let lti = dc_network_lti(&CircuitParams::default()).unwrap();
        let model = lti_to_model(&lti).unwrap();
        let bx = SampleBox::cube((0.0, 1.0), 5, 5.0).unwrap();
        assert!(validate_structure(&model, &bx, 100, 11, 1e-9)
            .unwrap()
            .passed());
    }

    #[test]
    fn zero_model_has_constant_energy() {
        let mut lti = LtiModel::zeros(Dims::new(3, 3, 1));
        lti.c = 5.0;
        let model = lti_to_model(&lti).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(model.hamiltonian(0.0, &x), 5.0);
        let bx = SampleBox::cube((0.0, 1.0), 3, 1.0).unwrap();
        assert!(validate_structure(&model, &bx, 20, 0, 1e-9)
            .unwrap()
            .passed());
    }

    #[test]
    fn asymmetric_q_is_rejected() {
        let mut lti = LtiModel::zeros(Dims::new(2, 2, 0));
        lti.q[(0, 1)] = 1.0;
        assert!(matches!(lti_to_model(&lti), Err(Error::Structure(_))));
    }

    #[test]
    fn inconsistent_gradient_is_rejected() {
        let mut lti = LtiModel::zeros(Dims::new(1, 1, 0));
        lti.e[(0, 0)] = 1.0;
        lti.z[(0, 0)] = 1.0;
        let err = lti_to_model(&lti).unwrap_err();
        assert!(err.to_string().contains("gradient condition"), "{err}");
    }

    #[test]
    fn coefficients_round_trip_bit_exactly() {
        let lti = dc_network_lti(&CircuitParams::default()).unwrap();
        let model = lti_to_model(&lti).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let c = model.coefficients(3.0, &x).unwrap();
        assert_eq!(c.e, lti.e);
        assert_eq!(c.j, lti.j);
        assert_eq!(c.r, lti.r);
        assert_eq!(c.b, lti.b);
        assert_eq!(c.p, lti.p);
        assert_eq!(c.s, lti.s);
        assert_eq!(c.n, lti.n);
        assert_eq!(c.z, &lti.z * &x + &lti.w);
    }
}
