use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use phdae::circuits::{build_dc_network, CircuitParams};
use phdae::collocation::{
    discrete_energy_report, gauss_legendre_tableau, integrate, step, Input, NewtonOptions,
};
use phdae::dirac::{bilinear, dimension_check_gamma, member_with_effort, membership};
use phdae::model::{lti_to_model, validate_structure, Dims, LtiModel, SampleBox};
use phdae::transform::{apply_transformation, TransformSpec};

fn matrix(q: usize, r: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(q, r, |i, j| values[(i * r + j) % values.len()])
}

fn entries(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, len)
}

fn circuit_params() -> impl Strategy<Value = CircuitParams> {
    (
        0.5..4.0f64,
        0.005..0.05f64,
        0.005..0.05f64,
        0.05..1.0f64,
        1.0..10.0f64,
        1.0..10.0f64,
    )
        .prop_map(|(l, c1, c2, r_l, r_g, r_r)| CircuitParams {
            l,
            c1,
            c2,
            r_l,
            r_g,
            r_r,
        })
}

fn consistent_start(p: &CircuitParams, i: f64, v1: f64, v2: f64, u: f64) -> DVector<f64> {
    DVector::from_vec(vec![i, v1, v2, (v1 + u) / p.r_g, v2 / p.r_r])
}

/// ODE-type pH system `ẋ = (J − R) Q x + B u` with `R = LLᵀ`, `Q = MMᵀ + I`.
fn random_ode(n: usize, values: &[f64]) -> LtiModel {
    let a = matrix(n, n, values);
    let l = matrix(n, n, &values[1..]) * 0.5;
    let mm = matrix(n, n, &values[2..]) * 0.3;
    let mut lti = LtiModel::zeros(Dims::new(n, n, 1));
    lti.e = DMatrix::identity(n, n);
    lti.j = &a - a.transpose();
    lti.r = &l * l.transpose();
    lti.b = matrix(n, 1, &values[3..]);
    lti.q = &mm * mm.transpose() + DMatrix::identity(n, n);
    lti.z = lti.q.clone();
    lti
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dirac_structure_is_isotropic(q in 1usize..7, ell_frac in 0.0..1.0f64, g in entries(49), a in entries(28), b in entries(28)) {
        let raw = matrix(q, q, &g);
        let gamma = &raw - raw.transpose();
        let ell = ((q as f64) * ell_frac) as usize;
        let ea = DVector::from_fn(2 * q, |i, _| a[i]);
        let eb = DVector::from_fn(2 * q, |i, _| b[i]);
        let da = member_with_effort(&gamma, ell, &ea).unwrap();
        let db = member_with_effort(&gamma, ell, &eb).unwrap();
        prop_assert!(bilinear(&da, &db).abs() < 1e-11);
        prop_assert!(da.pairing().abs() < 1e-11);
        prop_assert!(membership(&da, &gamma, 1e-14).unwrap().member);
        let report = dimension_check_gamma(&gamma, 1e-12).unwrap();
        prop_assert_eq!(report.rank, 2 * q);
        prop_assert!(report.lagrangian);
    }

    #[test]
    fn quadrature_is_exact_up_to_degree(s in 1usize..=5, coeffs in entries(10)) {
        let tab = gauss_legendre_tableau(s).unwrap();
        let degree = 2 * s - 1;
        let poly = |x: f64| coeffs[..=degree].iter().rev().fold(0.0, |acc, c| acc * x + c);
        let exact: f64 = coeffs[..=degree].iter().enumerate().map(|(k, c)| c / (k as f64 + 1.0)).sum();
        let quad: f64 = (0..s).map(|j| tab.weights()[j] * poly(tab.nodes()[j])).sum();
        prop_assert!((quad - exact).abs() < 1e-13 * (1.0 + exact.abs()));
    }

    #[test]
    fn quadratic_energy_balance_is_exact(
        p in circuit_params(),
        s in 1usize..=3,
        h in 0.001..0.05f64,
        start in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
        amp in -10.0..10.0f64,
    ) {
        let model = build_dc_network(&p).unwrap();
        let tab = gauss_legendre_tableau(s).unwrap();
        let input = Input::time_dependent(1, move |t| DVector::from_element(1, amp * (2.0 * t).cos()));
        let x0 = consistent_start(&p, start.0, start.1, start.2, amp);
        let traj = integrate(&model, &tab, (0.0, 10.0 * h), &x0, h, &input, &NewtonOptions::default()).unwrap();
        for rec in traj.steps() {
            let r = discrete_energy_report(rec);
            prop_assert!(r.residual.abs() <= 1e-10 * (1.0 + r.delta_h.abs()), "{:?}", r);
        }
    }

    #[test]
    fn dissipation_sums_are_nonpositive(n in 1usize..5, values in entries(40), s in 1usize..=3, h in 0.01..0.2f64) {
        let model = lti_to_model(&random_ode(n, &values)).unwrap();
        let tab = gauss_legendre_tableau(s).unwrap();
        let x0 = DVector::from_fn(n, |i, _| values[i + 5]);
        let input = Input::constant(DVector::from_element(1, values[0]));
        let traj = integrate(&model, &tab, (0.0, 5.0 * h), &x0, h, &input, &NewtonOptions::default()).unwrap();
        for rec in traj.steps() {
            let r = discrete_energy_report(rec);
            prop_assert!(r.dissipation_nonpositive);
            prop_assert!(r.residual.abs() <= 1e-10 * (1.0 + r.delta_h.abs()));
        }
    }

    #[test]
    fn gauss_steps_are_symmetric(s in 1usize..=3, h in 0.001..0.1f64, start in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)) {
        let p = CircuitParams::default();
        let model = build_dc_network(&p).unwrap();
        let tab = gauss_legendre_tableau(s).unwrap();
        let x0 = consistent_start(&p, start.0, start.1, start.2, 0.0);
        let newton = NewtonOptions::default();
        let fwd = step(&model, &tab, 0.0, &x0, h, &Input::zero(1), &newton).unwrap();
        let back = step(&model, &tab, h, &fwd.x_final, -h, &Input::zero(1), &newton).unwrap();
        prop_assert!((&back.x_final - &x0).amax() < 1e-9 * (1.0 + x0.amax()));
    }

    #[test]
    fn affine_transforms_preserve_structure(n in 1usize..5, values in entries(40), t_values in entries(40), drift in prop::bool::ANY) {
        let model = lti_to_model(&random_ode(n, &values)).unwrap();
        let a = DMatrix::identity(n, n) + matrix(n, n, &t_values) * 0.1;
        let u = DMatrix::identity(n, n) + matrix(n, n, &t_values[3..]) * 0.1;
        let offset = DVector::from_fn(n, |i, _| t_values[i + 7]);
        let c = if drift { DVector::from_fn(n, |i, _| t_values[i + 11]) } else { DVector::zeros(n) };
        let spec = TransformSpec::affine(a, offset, c, u).unwrap();
        let transformed = apply_transformation(&model, &spec).unwrap();
        let bx = SampleBox::cube((0.0, 2.0), n, 3.0).unwrap();
        let report = validate_structure(&transformed, &bx, 30, 1, 1e-9).unwrap();
        prop_assert!(report.passed(), "{}", report);
    }

    #[test]
    fn stage_points_lie_in_the_dirac_structure(s in 1usize..=3, h in 0.005..0.05f64, amp in -5.0..5.0f64) {
        let p = CircuitParams::default();
        let model = build_dc_network(&p).unwrap();
        let tab = gauss_legendre_tableau(s).unwrap();
        let x0 = consistent_start(&p, 1.0, 2.0, -1.0, amp);
        let rec = step(&model, &tab, 0.0, &x0, h, &Input::constant(DVector::from_element(1, amp)), &NewtonOptions::default()).unwrap();
        for (i, point) in rec.stage_points.iter().enumerate() {
            let gamma = model.coefficients(rec.stage_times[i], &rec.stage_states[i]).unwrap().gamma();
            prop_assert!(membership(point, &gamma, 1e-9).unwrap().member);
            prop_assert!(point.pairing().abs() < 1e-8 * (1.0 + point.effort().norm_squared()));
        }
    }
}
