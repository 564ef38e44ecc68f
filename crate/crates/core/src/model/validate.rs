use std::fmt;

use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PhdaeModel;
use crate::error::{Error, Result};

/// Axis-aligned region of the extended state space `[t₀,t₁] × Π[lᵢ,uᵢ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub t: (f64, f64),
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl SampleBox {
    pub fn new(t: (f64, f64), lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let ordered = t.0 <= t.1 && lower.iter().zip(upper.iter()).all(|(l, u)| l <= u);
        let finite = t.0.is_finite()
            && t.1.is_finite()
            && lower.iter().chain(upper.iter()).all(|v| v.is_finite());
        if !ordered || !finite {
            return Err(Error::InvalidArgument(
                "sample box is empty or unbounded".into(),
            ));
        }
        Ok(SampleBox { t, lower, upper })
    }

    /// `[t₀,t₁] × [−r, r]ⁿ`.
    pub fn cube(t: (f64, f64), n: usize, radius: f64) -> Result<Self> {
        Self::new(
            t,
            DVector::from_element(n, -radius),
            DVector::from_element(n, radius),
        )
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, DVector<f64>) {
        let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..=hi)
            }
        };
        let t = draw(rng, self.t.0, self.t.1);
        let x = DVector::from_iterator(
            self.lower.len(),
            self.lower
                .iter()
                .zip(self.upper.iter())
                .map(|(&l, &u)| draw(rng, l, u))
                .collect::<Vec<_>>(),
        );
        (t, x)
    }
}

/// Largest observed value of one check, with the point where it occurred.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Residual {
    pub value: f64,
    pub worst: Option<(f64, Vec<f64>)>,
}

impl Residual {
    fn record_max(&mut self, value: f64, t: f64, x: &DVector<f64>) {
        if self.worst.is_none() || value > self.value {
            self.value = value;
            self.worst = Some((t, x.iter().copied().collect()));
        }
    }

    fn record_min(&mut self, value: f64, t: f64, x: &DVector<f64>) {
        if self.worst.is_none() || value < self.value {
            self.value = value;
            self.worst = Some((t, x.iter().copied().collect()));
        }
    }
}

/// Outcome of [`validate_structure`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub sample_box: SampleBox,
    pub tol: f64,
    /// `max ‖Γ + Γᵀ‖_max`.
    pub skew: Residual,
    /// `max ‖W − Wᵀ‖_max`.
    pub symmetry: Residual,
    /// Most negative eigenvalue of `(W + Wᵀ)/2`.
    pub min_eigenvalue: Residual,
    /// `max ‖∂ₓH − Eᵀz‖_max`.
    pub grad_x: Residual,
    /// `max |∂ₜH − zᵀr|`.
    pub grad_t: Residual,
    /// Smallest sampled Hamiltonian value; advisory only.
    pub min_hamiltonian: Residual,
    pub skew_ok: bool,
    pub symmetry_ok: bool,
    pub psd_ok: bool,
    pub grad_x_ok: bool,
    pub grad_t_ok: bool,
    /// Evaluation failure (non-finite coefficient, singular transform, ...).
    pub failure: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
            && self.skew_ok
            && self.symmetry_ok
            && self.psd_ok
            && self.grad_x_ok
            && self.grad_t_ok
    }
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn where_(r: &Residual) -> String {
    match &r.worst {
        Some((t, x)) => format!(" at t = {t:.6}, x = {x:.6?}"),
        None => String::new(),
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "structure validation: {} samples, seed {}, tol {:e}",
            self.samples, self.seed, self.tol
        )?;
        let rows = [
            ("skew(Gamma)", &self.skew, self.skew_ok),
            ("sym(W)", &self.symmetry, self.symmetry_ok),
            ("min eig(W)", &self.min_eigenvalue, self.psd_ok),
            ("dH/dx - E^T z", &self.grad_x, self.grad_x_ok),
            ("dH/dt - z^T r", &self.grad_t, self.grad_t_ok),
        ];
        for (label, r, ok) in rows {
            writeln!(
                f,
                "  {label:<14} {:>12.4e}  {}{}",
                r.value,
                flag(ok),
                where_(r)
            )?;
        }
        writeln!(
            f,
            "  {:<14} {:>12.4e}  advisory{}",
            "min H",
            self.min_hamiltonian.value,
            where_(&self.min_hamiltonian)
        )?;
        if let Some(msg) = &self.failure {
            writeln!(f, "  evaluation failed: {msg}")?;
        }
        write!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Checks both structure conditions on `count` uniform samples from `sample_box`.
///
/// Sampling is deterministic given `seed`. The PSD test accepts eigenvalues down
/// to `−tol·(1 + ‖W‖₂)`; every other residual is compared with `tol` directly.
pub fn validate_structure(
    model: &PhdaeModel,
    sample_box: &SampleBox,
    count: usize,
    seed: u64,
    tol: f64,
) -> Result<ValidationReport> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if sample_box.lower.len() != model.dims().n {
        return Err(Error::Dimension(format!(
            "sample box has dimension {}, model state has n = {}",
            sample_box.lower.len(),
            model.dims().n
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut skew = Residual::default();
    let mut symmetry = Residual::default();
    let mut min_eigenvalue = Residual::default();
    let mut grad_x = Residual::default();
    let mut grad_t = Residual::default();
    let mut min_hamiltonian = Residual::default();
    let mut psd_ok = true;
    let mut failure = None;

    for _ in 0..count {
        let (t, x) = sample_box.sample(&mut rng);
        let c = match model.coefficients(t, &x) {
            Ok(c) => c,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };

        let gamma = c.gamma();
        skew.record_max((&gamma + gamma.transpose()).amax(), t, &x);

        let w = c.w();
        symmetry.record_max((&w - w.transpose()).amax(), t, &x);
        if w.nrows() > 0 {
            let sym = (&w + w.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym).eigenvalues;
            let lowest = eig.min();
            let norm = eig.amax();
            min_eigenvalue.record_min(lowest, t, &x);
            if lowest < -tol * (1.0 + norm) {
                psd_ok = false;
            }
        } else {
            min_eigenvalue.record_min(0.0, t, &x);
        }

        let gx = model.grad_x(t, &x);
        let gt = model.grad_t(t, &x);
        let hval = model.hamiltonian(t, &x);
        if !(gx.iter().all(|v| v.is_finite()) && gt.is_finite() && hval.is_finite()) {
            failure = Some(format!(
                "non-finite Hamiltonian or gradient at t = {t}, x = {:?}",
                x.as_slice()
            ));
            break;
        }
        grad_x.record_max((gx - c.e.transpose() * &c.z).amax(), t, &x);
        grad_t.record_max((gt - c.z.dot(&c.time_flow)).abs(), t, &x);
        min_hamiltonian.record_min(hval, t, &x);
    }

    Ok(ValidationReport {
        samples: count,
        seed,
        sample_box: sample_box.clone(),
        tol,
        skew_ok: skew.value <= tol,
        symmetry_ok: symmetry.value <= tol,
        psd_ok,
        grad_x_ok: grad_x.value <= tol,
        grad_t_ok: grad_t.value <= tol,
        skew,
        symmetry,
        min_eigenvalue,
        grad_x,
        grad_t,
        min_hamiltonian,
        failure,
    })
}
