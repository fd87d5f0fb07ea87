//! Pathwise solves of the jump-driven equation and of its controlled version.
//!
//! Between events the state follows du = (Au + Bu + d(t)u) dt with the
//! compensators merged into the scalar drift d. At an event (t, j) the state
//! is multiplied by 1 + ε g_j after the step ending at t.
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrator::{integrate, Kick, Record, ScalarDrift};
use crate::jump::{sample_controlled_prm, sample_prm, Control, JumpModel, JumpSample, NoiseScale};
use crate::params::Parameters;
use crate::skeleton::{check_control, check_inputs, control_drift};
use crate::spectral::{SpectralBasis, StateField};

pub use crate::integrator::{SolverOptions, TimeGrid, Trajectory};

/// Noise fed to a controlled solve.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseInput {
    /// Events of the controlled measure drawn from this seed.
    Seed(u64),
    /// A fixed realization; its compensator is kept.
    Sample(JumpSample),
    /// The ε-noise term is dropped entirely, both events and compensator.
    Silent,
}

fn kicks(sample: &JumpSample, jm: &JumpModel, eps: NoiseScale, t_final: f64) -> Result<Vec<Kick>> {
    sample
        .events
        .iter()
        .map(|e| {
            if e.mark >= jm.len() {
                return Err(Error::Precondition(format!(
                    "event mark {} outside 0..{}",
                    e.mark,
                    jm.len()
                )));
            }
            if !(e.t > 0.0 && e.t <= t_final) {
                return Err(Error::Precondition(format!(
                    "event time {} outside (0, {t_final}]",
                    e.t
                )));
            }
            Ok(Kick {
                t: e.t,
                mark: e.mark,
                factor: 1.0 + eps.epsilon() * jm.marks()[e.mark].g,
            })
        })
        .collect()
}

/// Jump-driven solve for the events of `sample_prm(jm, eps, T, seed)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_spde(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    eps: NoiseScale,
    grid: &TimeGrid,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let sample = sample_prm(jm, eps, grid.t_final, seed)?;
    solve_spde_with_sample(params, basis, u0, jm, eps, &sample, grid, opts)
}

/// Endpoint of `solve_spde` without storing the path.
#[allow(clippy::too_many_arguments)]
pub(crate) fn spde_endpoint(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    eps: NoiseScale,
    grid: &TimeGrid,
    seed: u64,
    opts: &SolverOptions,
) -> Result<StateField> {
    check_inputs(params, basis, u0, grid)?;
    let sample = sample_prm(jm, eps, grid.t_final, seed)?;
    let drift = ScalarDrift::constant(grid.t_final, -jm.g_moment());
    let kicks = kicks(&sample, jm, eps, grid.t_final)?;
    let traj = integrate(params, u0, &drift, &kicks, grid, opts, Record::Endpoint)?;
    Ok(traj.endpoint().clone())
}

/// Jump-driven solve along a given realization.
#[allow(clippy::too_many_arguments)]
pub fn solve_spde_with_sample(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    eps: NoiseScale,
    sample: &JumpSample,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    check_inputs(params, basis, u0, grid)?;
    let drift = ScalarDrift::constant(grid.t_final, -jm.g_moment());
    let kicks = kicks(sample, jm, eps, grid.t_final)?;
    integrate(params, u0, &drift, &kicks, grid, opts, Record::Full)
}

/// Controlled solve with events of `sample_controlled_prm(jm, eps, ctrl, seed)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_controlled_spde(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    eps: NoiseScale,
    ctrl: &Control,
    grid: &TimeGrid,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    solve_controlled_spde_with(params, basis, u0, jm, eps, ctrl, &NoiseInput::Seed(seed), grid, opts)
}

/// Controlled solve with an explicit noise input.
#[allow(clippy::too_many_arguments)]
pub fn solve_controlled_spde_with(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    u0: &StateField,
    jm: &JumpModel,
    eps: NoiseScale,
    ctrl: &Control,
    noise: &NoiseInput,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    check_inputs(params, basis, u0, grid)?;
    check_control(ctrl, jm, grid)?;
    let c = ctrl.drift_coefficients(jm)?;
    let noisy = |sample: &JumpSample| -> Result<(ScalarDrift, Vec<Kick>)> {
        let moments = ctrl.controlled_g_moments(jm)?;
        let values = c.iter().zip(&moments).map(|(c, m)| c - m).collect();
        Ok((control_drift(ctrl, values), kicks(sample, jm, eps, grid.t_final)?))
    };
    let (drift, kicks) = match noise {
        NoiseInput::Silent => (control_drift(ctrl, c.clone()), Vec::new()),
        NoiseInput::Seed(seed) => noisy(&sample_controlled_prm(jm, eps, ctrl, *seed)?)?,
        NoiseInput::Sample(s) => noisy(s)?,
    };
    integrate(params, u0, &drift, &kicks, grid, opts, Record::Full)
}

/// sup over saved times of ‖a(t) − b(t)‖² for trajectories on one grid.
pub fn sup_distance_sq(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::Precondition("trajectories are saved on different grids".into()));
    }
    Ok(a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| crate::spectral::distance(&x.modes, &y.modes).powi(2))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::JumpEvent;
    use crate::skeleton::solve_skeleton;
    use num_complex::Complex64;

    fn setup() -> (Parameters, Arc<SpectralBasis>) {
        let p = Parameters::default();
        let b = Arc::new(SpectralBasis::for_params(4, 4, &p, 3).unwrap());
        (p, b)
    }

    fn field(b: &Arc<SpectralBasis>) -> StateField {
        let mut u = StateField::unit(b, 1, 1, Complex64::new(0.4, 0.1)).unwrap();
        u.modes[[1, 2]] = Complex64::new(-0.1, 0.2);
        u
    }

    #[test]
    fn zero_stays_zero_for_every_seed() {
        let (p, b) = setup();
        let jm = JumpModel::from_lists(&[1.0, 0.5], &[0.8, -0.6]).unwrap();
        let eps = NoiseScale::new(0.1).unwrap();
        let grid = TimeGrid::new(0.5, 25).unwrap();
        let o = SolverOptions::default();
        for seed in 0..5 {
            let tr = solve_spde(&p, &b, &StateField::zeros(&b), &jm, eps, &grid, seed, &o).unwrap();
            assert!(tr.is_identically_zero());
            assert!(!tr.events.is_empty());
        }
    }

    #[test]
    fn endpoint_only_solve_matches_full_path() {
        let (p, b) = setup();
        let jm = JumpModel::from_lists(&[1.0, 0.5], &[0.8, -0.6]).unwrap();
        let eps = NoiseScale::new(0.1).unwrap();
        let grid = TimeGrid::with_stride(0.5, 24, 4).unwrap();
        let o = SolverOptions::default();
        for seed in 0..5 {
            let full = solve_spde(&p, &b, &field(&b), &jm, eps, &grid, seed, &o).unwrap();
            let end = spde_endpoint(&p, &b, &field(&b), &jm, eps, &grid, seed, &o).unwrap();
            assert_eq!(full.endpoint().modes, end.modes);
        }
    }

    #[test]
    fn zero_amplitude_matches_skeleton() {
        let (p, b) = setup();
        let jm = JumpModel::from_lists(&[2.0], &[0.0]).unwrap();
        let eps = NoiseScale::new(0.05).unwrap();
        let grid = TimeGrid::new(0.3, 30).unwrap();
        let o = SolverOptions::default();
        let u0 = field(&b);
        let a = solve_spde(&p, &b, &u0, &jm, eps, &grid, 7, &o).unwrap();
        let ctrl = Control::constant(0.3, 1, 1, 1.0).unwrap();
        let s = solve_skeleton(&p, &b, &u0, &jm, &ctrl, &grid, &o).unwrap();
        for (x, y) in a.states.iter().zip(&s.states) {
            assert_eq!(x.modes, y.modes);
        }
    }

    #[test]
    fn unit_control_is_pathwise_equal() {
        let (p, b) = setup();
        let jm = JumpModel::from_lists(&[1.0, 0.5], &[0.8, -0.6]).unwrap();
        let eps = NoiseScale::new(0.1).unwrap();
        let grid = TimeGrid::new(0.4, 20).unwrap();
        let o = SolverOptions::default();
        let u0 = field(&b);
        let ctrl = Control::constant(0.4, 4, 2, 1.0).unwrap();
        for seed in [1, 99, 12345] {
            let a = solve_spde(&p, &b, &u0, &jm, eps, &grid, seed, &o).unwrap();
            let c = solve_controlled_spde(&p, &b, &u0, &jm, eps, &ctrl, &grid, seed, &o).unwrap();
            assert_eq!(a.events, c.events);
            for (x, y) in a.states.iter().zip(&c.states) {
                assert_eq!(x.modes, y.modes);
            }
        }
    }

    #[test]
    fn silent_noise_equals_skeleton() {
        let (p, b) = setup();
        let jm = JumpModel::from_lists(&[1.0, 0.5], &[0.8, -0.6]).unwrap();
        let grid = TimeGrid::new(0.4, 20).unwrap();
        let o = SolverOptions::default();
        let u0 = field(&b);
        let ctrl = Control::from_rows(0.4, &[vec![0.5, 2.0], vec![1.5, 0.0]]).unwrap();
        let s = solve_skeleton(&p, &b, &u0, &jm, &ctrl, &grid, &o).unwrap();
        for eps in [1e-2, 1e-6] {
            let eps = NoiseScale::new(eps).unwrap();
            let c = solve_controlled_spde_with(&p, &b, &u0, &jm, eps, &ctrl, &NoiseInput::Silent, &grid, &o)
                .unwrap();
            for (x, y) in c.states.iter().zip(&s.states) {
                assert_eq!(x.modes, y.modes);
            }
        }
    }

    #[test]
    fn bit_identical_reruns() {
        let (mut p, b) = setup();
        p.lambda1 = [Complex64::new(0.1, 0.2), Complex64::new(-0.2, 0.0)];
        let jm = JumpModel::from_lists(&[1.0, 0.5], &[0.8, -0.6]).unwrap();
        let eps = NoiseScale::new(0.2).unwrap();
        let grid = TimeGrid::new(0.4, 20).unwrap();
        let o = SolverOptions::default();
        let u0 = field(&b);
        let ctrl = Control::from_rows(0.4, &[vec![0.5, 2.0], vec![1.5, 0.0]]).unwrap();
        let run = || solve_controlled_spde(&p, &b, &u0, &jm, eps, &ctrl, &grid, 3, &o).unwrap();
        let (x, y) = (run(), run());
        assert_eq!(x.events, y.events);
        assert!(x
            .states
            .iter()
            .zip(&y.states)
            .all(|(a, b)| a.modes.iter().zip(b.modes.iter()).all(|(p, q)| p.re.to_bits() == q.re.to_bits()
                && p.im.to_bits() == q.im.to_bits())));
    }

    #[test]
    fn rejects_bad_samples() {
        let (p, b) = setup();
        let jm = JumpModel::from_lists(&[1.0], &[0.5]).unwrap();
        let eps = NoiseScale::new(0.1).unwrap();
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let o = SolverOptions::default();
        let u0 = field(&b);
        for ev in [JumpEvent { t: 0.2, mark: 1 }, JumpEvent { t: 0.7, mark: 0 }, JumpEvent { t: 0.0, mark: 0 }] {
            let s = JumpSample { events: vec![ev] };
            assert!(solve_spde_with_sample(&p, &b, &u0, &jm, eps, &s, &grid, &o).is_err());
        }
    }

    #[test]
    fn kick_at_final_time_is_in_endpoint() {
        let (mut p, b) = setup();
        p.gamma = 1.0;
        let jm = JumpModel::from_lists(&[1.0], &[0.5]).unwrap();
        let eps = NoiseScale::new(0.2).unwrap();
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let o = SolverOptions::default();
        let u0 = field(&b);
        let none = solve_spde_with_sample(&p, &b, &u0, &jm, eps, &JumpSample::empty(), &grid, &o).unwrap();
        let s = JumpSample {
            events: vec![JumpEvent { t: 0.5, mark: 0 }],
        };
        let one = solve_spde_with_sample(&p, &b, &u0, &jm, eps, &s, &grid, &o).unwrap();
        let want = none.endpoint().modes.mapv(|v| v * 1.1);
        assert_eq!(one.endpoint().modes, want);
        assert_eq!(one.events.len(), 1);
    }
}
