//! Rate-function search against zero-cost, known-control and scalar
//! bisection oracles.
use std::sync::Arc;

use num_complex::Complex64 as C;
use sggle::{
    cost, ell, estimate_rate, estimate_rate_from, skeleton_endpoint, Control, EndpointSpec,
    InitialCondition, JumpModel, OptConfig, Parameters, SolverOptions, SpectralBasis, StateField,
    TimeGrid,
};

struct Scenario {
    p: Parameters,
    basis: Arc<SpectralBasis>,
    jm: JumpModel,
    u0: StateField,
    grid: TimeGrid,
}

fn scenario() -> Scenario {
    let mut p = Parameters::default();
    p.lambda1 = [C::new(0.1, 0.0), C::new(0.0, 0.05)];
    let basis = Arc::new(SpectralBasis::for_params(6, 6, &p, 2).unwrap());
    let jm = JumpModel::from_lists(&[1.0, 0.5], &[0.8, -0.5]).unwrap();
    let u0 = InitialCondition::Bump { amplitude: 1.0 }.realize(&basis).unwrap();
    let grid = TimeGrid::new(0.5, 40).unwrap();
    Scenario { p, basis, jm, u0, grid }
}

fn endpoint(s: &Scenario, ctrl: &Control) -> StateField {
    skeleton_endpoint(&s.p, &s.basis, &s.u0, &s.jm, ctrl, &s.grid, &SolverOptions::default()).unwrap()
}

#[test]
fn noiseless_endpoint_has_zero_rate() {
    let s = scenario();
    let one = Control::constant(0.5, 4, 2, 1.0).unwrap();
    let target = EndpointSpec::new(endpoint(&s, &one), 0.0).unwrap();
    let r = estimate_rate(&target, &s.p, &s.basis, &s.jm, &s.u0, &s.grid, &OptConfig::default()).unwrap();
    assert!(r.feasible);
    assert!(r.value <= 1e-6, "value {}", r.value);
    assert!(r.control.phi().iter().all(|&v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn known_control_target() {
    let s = scenario();
    let star = Control::from_rows(0.5, &[vec![1.8, 0.6], vec![1.4, 1.0], vec![2.2, 0.3], vec![1.0, 1.2]]).unwrap();
    let c_star = cost(&star, &s.jm).unwrap();
    let center = endpoint(&s, &star);
    let target = EndpointSpec::new(center.clone(), 1e-3 * center.l2()).unwrap();
    let r = estimate_rate(&target, &s.p, &s.basis, &s.jm, &s.u0, &s.grid, &OptConfig::default()).unwrap();
    assert!(r.feasible, "{r:?}");
    assert!(r.value <= 1.05 * c_star, "value {} vs cost(φ*) {c_star}", r.value);
    let reached = endpoint(&s, &r.control);
    assert_eq!(target.gap(&reached), r.endpoint_gap);
    let scale = center.l2().max(s.u0.l2());
    assert!(r.endpoint_gap <= target.radius + 1e-4 * scale, "gap {} radius {}", r.endpoint_gap, target.radius);
    // the best-so-far trace never increases
    let vals: Vec<f64> = r.value_trace.iter().flatten().copied().collect();
    assert!(vals.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn never_worse_than_feasible_candidates() {
    let s = scenario();
    let star = Control::from_rows(0.5, &[vec![1.5, 0.8], vec![1.5, 0.8]]).unwrap();
    let center = endpoint(&s, &star);
    let target = EndpointSpec::new(center.clone(), 0.02 * center.l2()).unwrap();
    let library = [
        star.clone(),
        Control::from_rows(0.5, &[vec![1.6, 0.7], vec![1.4, 0.9], vec![1.5, 0.8], vec![1.5, 0.8]]).unwrap(),
        Control::constant(0.5, 1, 2, 1.45).unwrap(),
    ];
    let cfg = OptConfig {
        max_inner: 20,
        max_rounds: 3,
        ..OptConfig::default()
    };
    let r = estimate_rate_from(&target, &s.p, &s.basis, &s.jm, &s.u0, &s.grid, &cfg, &library).unwrap();
    assert!(r.feasible);
    for c in &library {
        if target.contains(&endpoint(&s, c)) {
            assert!(r.value <= cost(c, &s.jm).unwrap() + 1e-12);
        }
    }
}

#[test]
fn scalar_case_matches_bisection() {
    // one mark, one bin, single tiny mode: u(T) = u0 e^{ΛT} e^{g(φ−1)νT}
    let p = Parameters::default();
    let basis = Arc::new(SpectralBasis::for_params(1, 1, &p, 2).unwrap());
    let (nu, g, t) = (1.5, 0.6, 0.5);
    let jm = JumpModel::from_lists(&[nu], &[g]).unwrap();
    let c0 = C::new(1e-5, 0.0);
    let u0 = StateField::unit(&basis, 1, 1, c0).unwrap();
    let grid = TimeGrid::new(t, 50).unwrap();
    let lam = C::new(1.0, p.alpha) * basis.eigenvalues[[0, 0]] + p.gamma;
    let modulus = |phi: f64| (c0 * (lam * t).exp()).norm() * (g * (phi - 1.0) * nu * t).exp();
    // ball around the φ = 2.5 endpoint with radius 30% of its modulus
    let center_phi = 2.5;
    let center = StateField::unit(&basis, 1, 1, c0 * (lam * t).exp() * (g * (center_phi - 1.0) * nu * t).exp()).unwrap();
    let radius = 0.3 * center.l2();
    // the cheapest feasible φ sits on the near side of the ball
    let (mut lo, mut hi) = (1.0, center_phi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if modulus(center_phi) - modulus(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let want = ell(hi).unwrap() * nu * t;
    let target = EndpointSpec::new(center, radius).unwrap();
    let cfg = OptConfig {
        n_bins: 1,
        tol: 1e-7,
        ..OptConfig::default()
    };
    let r = estimate_rate(&target, &p, &basis, &jm, &u0, &grid, &cfg).unwrap();
    assert!(r.feasible);
    assert!((r.value - want).abs() <= 1e-3 * want, "value {} vs bisection {want}", r.value);
    assert!((r.control.phi()[[0, 0]] - hi).abs() < 1e-3, "φ {} vs {hi}", r.control.phi()[[0, 0]]);
}

#[test]
fn unreachable_target_is_flagged() {
    // a target in the orthogonal mode cannot be reached by scalar drifts of
    // a field supported on e₁₁
    let p = Parameters::default();
    let basis = Arc::new(SpectralBasis::for_params(2, 2, &p, 2).unwrap());
    let jm = JumpModel::from_lists(&[1.0], &[0.5]).unwrap();
    let u0 = StateField::unit(&basis, 1, 1, C::new(1e-3, 0.0)).unwrap();
    let grid = TimeGrid::new(0.2, 10).unwrap();
    let center = StateField::unit(&basis, 2, 2, C::new(1.0, 0.0)).unwrap();
    let target = EndpointSpec::new(center, 0.1).unwrap();
    let cfg = OptConfig {
        max_inner: 10,
        max_rounds: 2,
        n_bins: 1,
        ..OptConfig::default()
    };
    let r = estimate_rate(&target, &p, &basis, &jm, &u0, &grid, &cfg).unwrap();
    assert!(!r.feasible);
    assert!(r.value.is_finite());
    assert!(r.endpoint_gap > 0.1);
}
