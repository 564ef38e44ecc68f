use nalgebra::DVector;

use super::{integrate, ButcherTableau, Input, NewtonOptions};
use crate::error::{Error, Result};
use crate::model::PhdaeModel;

/// What the final states are compared with.
#[derive(Debug, Clone)]
pub enum Reference {
    /// A known exact final state.
    State(DVector<f64>),
    /// A run with another tableau at a step at most a tenth of the smallest tested one.
    Fine { tableau: ButcherTableau, h: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Max-norm error over the tracked components.
    pub error: f64,
    pub component_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Indices of the tracked state components.
    pub components: Vec<usize>,
    /// Least-squares slope of `log error` against `log h`.
    pub order: f64,
    /// Per-component slopes; `None` where some error vanished.
    pub component_orders: Vec<Option<f64>>,
    /// Errors decrease strictly as `h` decreases.
    pub monotone: bool,
    pub reference: DVector<f64>,
}

/// Least-squares slope of `log e` against `log h`. `None` with fewer than two
/// points or a non-positive error.
pub fn fit_order(hs: &[f64], errors: &[f64]) -> Option<f64> {
    if hs.len() < 2 || hs.len() != errors.len() || errors.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Final-time errors for each step size in `h_list` and the fitted order.
///
/// `components` defaults to the differential coordinates, the nonzero columns of `E(t₀, x₀)`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    model: &PhdaeModel,
    tab: &ButcherTableau,
    t_span: (f64, f64),
    x0: &DVector<f64>,
    input: &Input,
    newton: &NewtonOptions,
    h_list: &[f64],
    reference: &Reference,
    components: Option<&[usize]>,
) -> Result<ConvergenceReport> {
    if h_list.len() < 2 {
        return Err(Error::InvalidArgument(
            "a convergence study needs at least two step sizes".into(),
        ));
    }
    if h_list.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
        return Err(Error::InvalidArgument("step sizes must be positive".into()));
    }
    let n = model.dims().n;
    let components: Vec<usize> = match components {
        Some(c) => c.to_vec(),
        None => {
            let e = model.flow_matrix(t_span.0, x0);
            (0..n)
                .filter(|&j| e.column(j).iter().any(|v| *v != 0.0))
                .collect()
        }
    };
    if components.is_empty() || components.iter().any(|&j| j >= n) {
        return Err(Error::InvalidArgument(format!(
            "tracked components must be a non-empty subset of 0..{n}"
        )));
    }
    let reference = match reference {
        Reference::State(x) => {
            if x.len() != n {
                return Err(Error::Dimension(format!(
                    "reference state has length {}, expected {n}",
                    x.len()
                )));
            }
            x.clone()
        }
        Reference::Fine { tableau, h } => {
            let hmin = h_list.iter().copied().fold(f64::INFINITY, f64::min);
            if !(*h > 0.0 && *h <= hmin / 10.0) {
                return Err(Error::InvalidArgument(format!(
                    "reference step {h} must be at most a tenth of the smallest tested step {hmin}"
                )));
            }
            integrate(model, tableau, t_span, x0, *h, input, newton)?
                .final_state()
                .clone()
        }
    };
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let traj = integrate(model, tab, t_span, x0, h, input, newton)?;
        let x = traj.final_state();
        let component_errors: Vec<f64> = components
            .iter()
            .map(|&j| (x[j] - reference[j]).abs())
            .collect();
        let error = component_errors.iter().copied().fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            h,
            error,
            component_errors,
        });
    }
    let mut sorted: Vec<&ConvergenceRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.h.partial_cmp(&a.h).expect("finite step sizes"));
    let monotone = sorted.windows(2).all(|w| w[1].error < w[0].error);
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let order = fit_order(&hs, &errors).unwrap_or(f64::NAN);
    let component_orders = (0..components.len())
        .map(|k| {
            let e: Vec<f64> = rows.iter().map(|r| r.component_errors[k]).collect();
            fit_order(&hs, &e)
        })
        .collect();
    Ok(ConvergenceReport {
        rows,
        components,
        order,
        component_orders,
        monotone,
        reference,
    })
}
