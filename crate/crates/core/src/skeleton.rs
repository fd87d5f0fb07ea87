//! Skeleton equation: du/dt = Au + Bu + c(t)u with the control compensator
//! c(t) = Σ_j g_j (φ(t, z_j) − 1) ν_j.
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrator::{integrate, Record, ScalarDrift};
use crate::jump::{Control, JumpModel};
use crate::params::Parameters;
use crate::spectral::{InitialCondition, SpectralBasis, StateField};

pub use crate::integrator::{EventRecord, SolverOptions, TimeGrid, Trajectory};

pub(crate) fn check_inputs(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    grid: &TimeGrid,
) -> Result<()> {
    params.validate()?;
    if u0.basis.shape() != basis.shape() || u0.basis.l1 != basis.l1 || u0.basis.l2 != basis.l2 {
        return Err(Error::InvalidDimension(
            "initial field is not expressed in the solver basis".into(),
        ));
    }
    if basis.l1 != params.l1 || basis.l2 != params.l2 {
        return Err(Error::InvalidDimension(format!(
            "basis domain ({}, {}) differs from parameters ({}, {})",
            basis.l1, basis.l2, params.l1, params.l2
        )));
    }
    if !u0.is_finite() {
        return Err(Error::NonFinite("initial field"));
    }
    if !(grid.t_final > 0.0) {
        return Err(Error::InvalidParameter("T must be > 0".into()));
    }
    Ok(())
}

pub(crate) fn check_control(ctrl: &Control, jm: &JumpModel, grid: &TimeGrid) -> Result<()> {
    ctrl.check(jm)?;
    if ctrl.t_final() != grid.t_final {
        return Err(Error::InvalidControl(format!(
            "control horizon {} differs from time grid horizon {}",
            ctrl.t_final(),
            grid.t_final
        )));
    }
    Ok(())
}

/// Piecewise-constant drift on the control bins.
pub(crate) fn control_drift(ctrl: &Control, per_bin: Vec<f64>) -> ScalarDrift {
    ScalarDrift {
        edges: ctrl.bin_edges(),
        values: per_bin,
    }
}

/// Integrate the skeleton equation and store every saved state.
pub fn solve_skeleton(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    ctrl: &Control,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    skeleton(params, basis, u0, jm, ctrl, grid, opts, Record::Full)
}

/// Endpoint u^φ(T) only.
pub fn skeleton_endpoint(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    ctrl: &Control,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<StateField> {
    let traj = skeleton(params, basis, u0, jm, ctrl, grid, opts, Record::Endpoint)?;
    Ok(traj.endpoint().clone())
}

#[allow(clippy::too_many_arguments)]
fn skeleton(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    ctrl: &Control,
    grid: &TimeGrid,
    opts: &SolverOptions,
    record: Record,
) -> Result<Trajectory> {
    check_inputs(params, basis, u0, grid)?;
    check_control(ctrl, jm, grid)?;
    let drift = control_drift(ctrl, ctrl.drift_coefficients(jm)?);
    integrate(params, u0, &drift, &[], grid, opts, record)
}

/// Endpoint errors ‖u_n(T) − u_{n_max}(T)‖ of Galerkin truncations against
/// the finest one. The same `InitialCondition` is realized on every basis.
#[allow(clippy::too_many_arguments)]
pub fn galerkin_refine(
    params: &Parameters,
    jm: &JumpModel,
    ctrl: &Control,
    u0: &InitialCondition,
    grid: &TimeGrid,
    n_list: &[usize],
    pad_factor: usize,
    opts: &SolverOptions,
) -> Result<Vec<(usize, f64)>> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(format!(
            "n_list must be non-empty and strictly increasing, got {n_list:?}"
        )));
    }
    let endpoints = n_list
        .iter()
        .map(|&n| {
            let basis = Arc::new(SpectralBasis::for_params(n, n, params, pad_factor)?);
            let u = u0.realize(&basis)?;
            skeleton_endpoint(params, &basis, &u, jm, ctrl, grid, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = endpoints.last().unwrap();
    Ok(n_list
        .iter()
        .zip(&endpoints)
        .map(|(&n, u)| (n, u.distance_embedded(reference)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn setup() -> (Parameters, Arc<SpectralBasis>, JumpModel) {
        let p = Parameters::default();
        let b = Arc::new(SpectralBasis::for_params(4, 4, &p, 4).unwrap());
        let jm = JumpModel::from_lists(&[1.0, 2.0], &[0.5, -0.25]).unwrap();
        (p, b, jm)
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let (mut p, b, jm) = setup();
        p.lambda1 = [Complex64::new(0.3, 0.1), Complex64::new(0.0, 0.2)];
        let u0 = StateField::zeros(&b);
        let ctrl = Control::from_rows(0.5, &[vec![0.3, 2.0], vec![1.5, 0.0]]).unwrap();
        let grid = TimeGrid::new(0.5, 20).unwrap();
        let traj = solve_skeleton(&p, &b, &u0, &jm, &ctrl, &grid, &SolverOptions::default()).unwrap();
        assert_eq!(traj.len(), 21);
        assert!(traj.is_identically_zero());
        assert!(traj.norms.iter().all(|n| n.l2 == 0.0 && n.grad_l2 == 0.0));
    }

    #[test]
    fn linear_single_mode() {
        let (p, b, jm) = setup();
        let c = Complex64::new(1e-3, 5e-4);
        let u0 = StateField::unit(&b, 1, 1, c).unwrap();
        let ctrl = Control::constant(0.2, 1, 2, 1.0).unwrap();
        let grid = TimeGrid::new(0.2, 50).unwrap();
        let traj = solve_skeleton(&p, &b, &u0, &jm, &ctrl, &grid, &SolverOptions::default()).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let lam = Complex64::new(1.0, p.alpha) * b.eigenvalues[[0, 0]] + p.gamma;
            let want = c * (lam * t).exp();
            // nonlinear correction is O(|c|^{2σ+1} T)
            assert!((s.modes[[0, 0]] - want).norm() < 1e-15, "t = {t}");
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (p, b, jm) = setup();
        let u0 = StateField::zeros(&b);
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let opts = SolverOptions::default();
        let wrong_t = Control::constant(1.0, 1, 2, 1.0).unwrap();
        assert!(solve_skeleton(&p, &b, &u0, &jm, &wrong_t, &grid, &opts).is_err());
        let wrong_k = Control::constant(0.5, 1, 3, 1.0).unwrap();
        assert!(solve_skeleton(&p, &b, &u0, &jm, &wrong_k, &grid, &opts).is_err());
        let other = Arc::new(SpectralBasis::for_params(3, 4, &p, 4).unwrap());
        let u_other = StateField::zeros(&other);
        let ok = Control::constant(0.5, 1, 2, 1.0).unwrap();
        assert!(solve_skeleton(&p, &b, &u_other, &jm, &ok, &grid, &opts).is_err());
        let mut bad = p;
        bad.sigma = 1.5;
        assert!(solve_skeleton(&bad, &b, &u0, &jm, &ok, &grid, &opts).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let (mut p, b, _) = setup();
        p.gamma = 50.0;
        let jm = JumpModel::from_lists(&[1.0], &[1.0]).unwrap();
        let u0 = StateField::unit(&b, 1, 1, Complex64::new(1e-8, 0.0)).unwrap();
        let ctrl = Control::constant(1.0, 1, 1, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let opts = SolverOptions { blowup_factor: 0.5 };
        match solve_skeleton(&p, &b, &u0, &jm, &ctrl, &grid, &opts) {
            Err(Error::BlowUp { step, .. }) => assert!(step > 0 && step <= 100),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn refine_rejects_bad_list() {
        let (p, _, jm) = setup();
        let ctrl = Control::constant(0.1, 1, 2, 1.0).unwrap();
        let grid = TimeGrid::new(0.1, 5).unwrap();
        let ic = InitialCondition::Bump { amplitude: 0.1 };
        let o = SolverOptions::default();
        assert!(galerkin_refine(&p, &jm, &ctrl, &ic, &grid, &[], 4, &o).is_err());
        assert!(galerkin_refine(&p, &jm, &ctrl, &ic, &grid, &[8, 4], 4, &o).is_err());
    }
}
