//! DC power network: a generator with internal resistance feeding a resistive
//! load through a π-model transmission line.
//!
//! State `x = (I, V₁, V₂, I_G, I_R)`, input `u = E_G`, output `y = I_G`.

use nalgebra::{DMatrix, DVector};

use crate::collocation::Input;
use crate::error::{Error, Result};
use crate::model::{lti_to_model, Dims, LtiModel, PhdaeModel};

/// Inductance, capacitances and resistances of the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub r_l: f64,
    pub r_g: f64,
    pub r_r: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        CircuitParams {
            l: 2.0,
            c1: 0.01,
            c2: 0.02,
            r_l: 0.1,
            r_g: 6.0,
            r_r: 3.0,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("L", self.l),
            ("C1", self.c1),
            ("C2", self.c2),
            ("RL", self.r_l),
            ("RG", self.r_g),
            ("RR", self.r_r),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn e(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.l, self.c1, self.c2, 0.0, 0.0]))
    }

    pub fn j(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            5,
            5,
            &[
                0.0, -1.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, -1.0, 0.0, //
                -1.0, 0.0, 0.0, 0.0, -1.0, //
                0.0, 1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0,
            ],
        )
    }

    pub fn r(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.r_l, 0.0, 0.0, self.r_g, self.r_r,
        ]))
    }
}

fn e4() -> DMatrix<f64> {
    let mut b = DMatrix::zeros(5, 1);
    b[(3, 0)] = 1.0;
    b
}

/// Constant data `E ẋ = (J − R) x + e₄ u`, `y = e₄ᵀx`, `H = ½xᵀEx`.
pub fn dc_network_lti(p: &CircuitParams) -> Result<LtiModel> {
    p.validate()?;
    let mut lti = LtiModel::zeros(Dims::new(5, 5, 1));
    lti.e = p.e();
    lti.j = p.j();
    lti.r = p.r();
    lti.b = e4();
    lti.z = DMatrix::identity(5, 5);
    lti.q = p.e();
    Ok(lti)
}

pub fn build_dc_network(p: &CircuitParams) -> Result<PhdaeModel> {
    lti_to_model(&dc_network_lti(p)?)
}

/// Equilibrium delivering power `P` to the load, and the input holding it:
/// `x* = √(P/R_R)(1, −R_R−R_L, −R_R, 1, −1)`, `u* = (R_R+R_L+R_G)√(P/R_R)`,
/// so that `(J − R) x* + e₄u* = 0`.
pub fn desired_state(p: &CircuitParams, power: f64) -> Result<(DVector<f64>, f64)> {
    p.validate()?;
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power must be non-negative, got {power}"
        )));
    }
    let a = (power / p.r_r).sqrt();
    let x = DVector::from_vec(vec![a, -(p.r_r + p.r_l) * a, -p.r_r * a, a, -a]);
    Ok((x, (p.r_r + p.r_l + p.r_g) * a))
}

/// `u*(arctan(5(t − 0.5)) + 0.5)`.
pub fn ramp_control(t: f64, u_star: f64) -> f64 {
    u_star * ((5.0 * (t - 0.5)).atan() + 0.5)
}

/// `H̃(x) = ½(x − x*)ᵀE(x − x*)`, the energy of the deviation from `x*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedHamiltonian {
    e: DMatrix<f64>,
    x_star: DVector<f64>,
}

impl ShiftedHamiltonian {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x_star;
        0.5 * d.dot(&(&self.e * &d))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.e * (x - &self.x_star)
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }
}

pub fn shifted_hamiltonian(p: &CircuitParams, x_star: &DVector<f64>) -> Result<ShiftedHamiltonian> {
    p.validate()?;
    if x_star.len() != 5 {
        return Err(Error::Dimension(format!(
            "x* must have 5 entries, got {}",
            x_star.len()
        )));
    }
    Ok(ShiftedHamiltonian {
        e: p.e(),
        x_star: x_star.clone(),
    })
}

/// Closed loop under `u = u* − α(y − I_G*) + û`, written in `x̃ = x − x*`:
/// `E x̃' = (J − R_α) x̃ + e₄û`, `ỹ = e₄ᵀx̃`, `R_α = R + α e₄e₄ᵀ`, `H̃ = ½x̃ᵀEx̃`.
pub fn feedback_model(p: &CircuitParams, alpha: f64) -> Result<PhdaeModel> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "feedback gain must be non-negative, got {alpha}"
        )));
    }
    let mut lti = dc_network_lti(p)?;
    lti.r[(3, 3)] += alpha;
    lti_to_model(&lti)
}

/// Which input drives the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlVariant {
    /// `E_G ≡ 0`.
    OpenLoopZero,
    /// The arctan ramp for all times; it tends to `(π/2 + 0.5)u*`.
    RampToUstar,
    /// The arctan ramp for `t < 1`, then `u*`.
    RampThenHold,
    /// `u = u* − α(I_G − I_G*)`.
    Feedback,
}

/// Control variant with its power demand and gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPlan {
    pub variant: ControlVariant,
    pub power: f64,
    pub alpha: f64,
}

pub const RAMP_HOLD_TIME: f64 = 1.0;

impl ControlPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power must be non-negative, got {}",
                self.power
            )));
        }
        if self.variant == ControlVariant::Feedback && !(self.alpha.is_finite() && self.alpha > 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "feedback requires a positive gain, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Input for the network in original coordinates.
    pub fn input(&self, p: &CircuitParams) -> Result<Input> {
        self.validate()?;
        let (x_star, u_star) = desired_state(p, self.power)?;
        let one = |v: f64| DVector::from_element(1, v);
        Ok(match self.variant {
            ControlVariant::OpenLoopZero => Input::zero(1),
            ControlVariant::RampToUstar => {
                Input::time_dependent(1, move |t| one(ramp_control(t, u_star)))
            }
            ControlVariant::RampThenHold => Input::time_dependent(1, move |t| {
                one(if t < RAMP_HOLD_TIME {
                    ramp_control(t, u_star)
                } else {
                    u_star
                })
            }),
            ControlVariant::Feedback => {
                let (alpha, ig_star) = (self.alpha, x_star[3]);
                Input::state_dependent(1, move |_, x| one(u_star - alpha * (x[3] - ig_star)))
            }
        })
    }
}
