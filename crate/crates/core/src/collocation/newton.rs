use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stopping rule `‖F‖∞ ≤ abs_tol + rel_tol·scale`, where `scale` is the size
/// of the right-hand side reported by the residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Relative forward-difference step for numerical Jacobians.
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iter: 25,
            fd_step: 1e-7,
        }
    }
}

impl NewtonOptions {
    pub fn tolerance(&self, scale: f64) -> f64 {
        self.abs_tol + self.rel_tol * scale
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Forward-difference Jacobian with step `fd_step·(1 + |wⱼ|)`.
pub(crate) fn fd_jacobian<R>(
    residual: &mut R,
    w: &DVector<f64>,
    f0: &DVector<f64>,
    fd_step: f64,
) -> Result<DMatrix<f64>>
where
    R: FnMut(&DVector<f64>) -> Result<(DVector<f64>, f64)>,
{
    let mut jac = DMatrix::zeros(f0.len(), w.len());
    let mut wp = w.clone();
    for j in 0..w.len() {
        let step = fd_step * (1.0 + w[j].abs());
        wp[j] = w[j] + step;
        let (fp, _) = residual(&wp)?;
        jac.set_column(j, &((fp - f0) / step));
        wp[j] = w[j];
    }
    Ok(jac)
}

/// Full Newton iteration. `jacobian` may return `None` to request forward differences.
/// `t` only labels a singular-matrix error.
///
/// At least one update is taken unless the starting residual is exactly zero or
/// `max_iter` is 0, so that a guess within the absolute tolerance of a tiny
/// solution is still refined (one update is exact for linear residuals).
pub(crate) fn solve<R, J>(
    mut residual: R,
    mut jacobian: J,
    mut w: DVector<f64>,
    opts: &NewtonOptions,
    t: f64,
) -> Result<NewtonOutcome>
where
    R: FnMut(&DVector<f64>) -> Result<(DVector<f64>, f64)>,
    J: FnMut(&DVector<f64>) -> Result<Option<DMatrix<f64>>>,
{
    for iter in 0..=opts.max_iter {
        let (f, scale) = residual(&w)?;
        let norm = if f.is_empty() { 0.0 } else { f.amax() };
        if !norm.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations: iter,
                residual: norm,
            });
        }
        let must_update = iter == 0 && norm > 0.0 && opts.max_iter > 0;
        if norm <= opts.tolerance(scale) && !must_update {
            return Ok(NewtonOutcome {
                solution: w,
                iterations: iter,
                residual: norm,
            });
        }
        if iter == opts.max_iter {
            return Err(Error::NewtonDiverged {
                iterations: iter,
                residual: norm,
            });
        }
        let jac = match jacobian(&w)? {
            Some(j) => j,
            None => fd_jacobian(&mut residual, &w, &f, opts.fd_step)?,
        };
        let delta = jac
            .lu()
            .solve(&(-f))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularIteration { t })?;
        w += delta;
    }
    unreachable!("loop returns on its last iteration")
}
