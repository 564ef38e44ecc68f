use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Butcher coefficients of an `s`-stage collocation method.
///
/// `alpha[i][j] = ∫₀^{γᵢ} ℓⱼ`, `beta[j] = ∫₀¹ ℓⱼ`, where `ℓⱼ` is the Lagrange
/// basis on the nodes `γ`. The antiderivatives `∫₀^τ ℓⱼ` are kept as monomial
/// coefficients for dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    matrix: DMatrix<f64>,
    degree: usize,
    basis: Vec<Vec<f64>>,
    antiderivatives: Vec<Vec<f64>>,
}

pub const MAX_STAGES: usize = 5;

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Legendre polynomial `P_s(ξ)` and its derivative by the three-term recurrence.
fn legendre(s: usize, xi: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, xi);
    if s == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=s {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * xi * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let sf = s as f64;
    let dp = sf * (xi * p1 - p0) / (xi * xi - 1.0);
    (p1, dp)
}

/// Roots of the shifted Legendre polynomial `P_s(2τ − 1)`, ascending.
fn shifted_legendre_roots(s: usize) -> Vec<f64> {
    let mut roots: Vec<f64> = (1..=s)
        .map(|i| {
            let mut xi = (std::f64::consts::PI * (i as f64 - 0.25) / (s as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(s, xi);
                let dx = p / dp;
                xi -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            0.5 * (1.0 - xi)
        })
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    roots
}

fn lagrange_coefficients(nodes: &[f64], j: usize) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    let mut denom = 1.0;
    for (k, &g) in nodes.iter().enumerate() {
        if k == j {
            continue;
        }
        let mut next = vec![0.0; coeffs.len() + 1];
        for (p, &c) in coeffs.iter().enumerate() {
            next[p + 1] += c;
            next[p] -= g * c;
        }
        coeffs = next;
        denom *= nodes[j] - g;
    }
    coeffs.iter().map(|c| c / denom).collect()
}

fn antiderivative(coeffs: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(coeffs.iter().enumerate().map(|(p, c)| c / (p as f64 + 1.0)))
        .collect()
}

impl ButcherTableau {
    /// Collocation tableau for arbitrary distinct nodes in `[0, 1]`.
    pub fn from_nodes(nodes: Vec<f64>, degree: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one collocation node is required".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1]))
            || nodes.iter().any(|g| !(0.0..=1.0).contains(g))
        {
            return Err(Error::InvalidArgument(
                "collocation nodes must be strictly increasing in [0, 1]".into(),
            ));
        }
        let s = nodes.len();
        let basis: Vec<Vec<f64>> = (0..s).map(|j| lagrange_coefficients(&nodes, j)).collect();
        let antiderivatives: Vec<Vec<f64>> = basis.iter().map(|c| antiderivative(c)).collect();
        let matrix = DMatrix::from_fn(s, s, |i, j| horner(&antiderivatives[j], nodes[i]));
        let weights = antiderivatives.iter().map(|a| horner(a, 1.0)).collect();
        Ok(ButcherTableau {
            nodes,
            weights,
            matrix,
            degree,
            basis,
            antiderivatives,
        })
    }

    pub fn stages(&self) -> usize {
        self.nodes.len()
    }

    /// Collocation nodes `γ`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weights `β`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stage matrix `α`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Degree of exactness `p` of the quadrature `(β, γ)`.
    pub fn exactness_degree(&self) -> usize {
        self.degree
    }

    /// `ℓⱼ(τ)`.
    pub fn lagrange(&self, j: usize, tau: f64) -> f64 {
        horner(&self.basis[j], tau)
    }

    /// `∫₀^τ ℓⱼ(σ) dσ`.
    pub fn basis_integral(&self, j: usize, tau: f64) -> f64 {
        horner(&self.antiderivatives[j], tau)
    }
}

/// Gauss–Legendre collocation with `s` stages, `1 ≤ s ≤ 5`; exactness degree `2s − 1`.
pub fn gauss_legendre_tableau(s: usize) -> Result<ButcherTableau> {
    if !(1..=MAX_STAGES).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "stage count must be in 1..={MAX_STAGES}, got {s}"
        )));
    }
    let mut tab = ButcherTableau::from_nodes(shifted_legendre_roots(s), 2 * s - 1)?;
    if s == 1 {
        // exact midpoint
        tab.nodes[0] = 0.5;
        tab.weights[0] = 1.0;
        tab.matrix[(0, 0)] = 0.5;
    }
    Ok(tab)
}
