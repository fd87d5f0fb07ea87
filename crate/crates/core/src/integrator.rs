//! Exponential time differencing for du/dt = (L + d(t)) u + N(u).
//!
//! `L = (1+iα)Δ + γ` is diagonal in the sine basis and integrated exactly;
//! `d(t)` is a scalar drift, constant on every step; `N` is the nonlinear
//! remainder `−(1−iβ)|u|^{2σ}u + F(u)`. Each step is the two-stage scheme
//!
//! ```text
//! a     = e^{hL} u + h φ₁(hL) N(u)
//! u_new = a + h φ₂(hL) (N(a) − N(u))
//! ```
//!
//! Multiplicative kicks `u ← (1 + κ) u` are applied at prescribed node times
//! after the step that ends there, so saved states are right limits.
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::spectral::{compute_norms, NormReport, SpectralBasis, StateField};

type C = Complex64;

/// φ₁(z) = (e^z − 1)/z and φ₂(z) = (e^z − 1 − z)/z².
pub(crate) fn phi_functions(z: C) -> (C, C, C) {
    let e = z.exp();
    if z.norm() < 0.2 {
        let (mut p1, mut p2) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
        let mut term = C::new(1.0, 0.0); // z^k / k!
        for k in 0..18 {
            // z^k/(k+1)! and z^k/(k+2)!
            let t1 = term / (k as f64 + 1.0);
            p1 += t1;
            p2 += t1 / (k as f64 + 2.0);
            term = term * z / (k as f64 + 1.0);
        }
        (e, p1, p2)
    } else {
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        (e, p1, p2)
    }
}

/// Uniform time grid with `n_steps` steps on [0, T]; every `save_every`-th
/// node is recorded.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
    #[serde(default = "one")]
    pub save_every: usize,
}

fn one() -> usize {
    1
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        Self::with_stride(t_final, n_steps, 1)
    }

    pub fn with_stride(t_final: f64, n_steps: usize, save_every: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be > 0, got {t_final}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        if save_every == 0 || n_steps % save_every != 0 {
            return Err(Error::InvalidParameter(format!(
                "save_every = {save_every} must divide n_steps = {n_steps}"
            )));
        }
        Ok(Self {
            t_final,
            n_steps,
            save_every,
        })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// t_i = i·T/n, computed without accumulation.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_final
        } else {
            i as f64 * self.t_final / self.n_steps as f64
        }
    }

    /// Same horizon with the step count multiplied.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::with_stride(self.t_final, self.n_steps * factor, self.save_every * factor)
    }

    /// Saved times.
    pub fn save_times(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .step_by(self.save_every)
            .map(|i| self.time(i))
            .collect()
    }
}

/// Logged kick of a pathwise jump solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub mark: usize,
    pub pre_norm: f64,
    pub post_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateField>,
    pub norms: Vec<NormReport>,
    /// Kicks applied along the path (empty for deterministic solves).
    pub events: Vec<EventRecord>,
    /// Exponents held in every `NormReport` (2 and 2σ+2).
    pub norm_exponents: Vec<f64>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &StateField {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.states.iter().all(StateField::is_zero)
    }
}

/// Solver knobs shared by all pathwise solves.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Abort when ‖u‖ > blowup_factor · (‖u₀‖ + 1).
    pub blowup_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { blowup_factor: 1e6 }
    }
}

/// Piecewise-constant scalar drift: `values[b]` on `[edges[b], edges[b+1])`.
#[derive(Debug, Clone)]
pub(crate) struct ScalarDrift {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarDrift {
    pub fn constant(t_final: f64, value: f64) -> Self {
        Self {
            edges: vec![0.0, t_final],
            values: vec![value],
        }
    }

    fn at(&self, t: f64) -> f64 {
        let b = self.edges[1..self.edges.len() - 1]
            .iter()
            .take_while(|&&e| e <= t)
            .count();
        self.values[b]
    }

    /// Interior edges where the value changes.
    fn breaks(&self) -> impl Iterator<Item = f64> + '_ {
        (1..self.values.len())
            .filter(|&b| self.values[b] != self.values[b - 1])
            .map(|b| self.edges[b])
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Kick {
    pub t: f64,
    pub mark: usize,
    /// multiplier 1 + κ
    pub factor: f64,
}

pub(crate) enum Record {
    Full,
    Endpoint,
}

#[derive(Clone, Copy)]
enum NodeKind {
    Save(usize),
    Break,
    Kick(usize),
}

struct StepCache {
    key: (u64, u64),
    e: Array2<C>,
    p1h: Array2<C>,
    p2h: Array2<C>,
}

pub(crate) struct Stepper<'a> {
    params: &'a Parameters,
    basis: &'a SpectralBasis,
    linear: Array2<C>,
    cache: Option<StepCache>,
}

impl<'a> Stepper<'a> {
    pub fn new(params: &'a Parameters, basis: &'a SpectralBasis) -> Self {
        let f = C::new(1.0, params.alpha);
        let linear = basis.eigenvalues.mapv(|mu| f * mu + params.gamma);
        Self {
            params,
            basis,
            linear,
            cache: None,
        }
    }

    fn coefficients(&mut self, h: f64, d: f64) -> &StepCache {
        let key = (h.to_bits(), d.to_bits());
        if self.cache.as_ref().map(|c| c.key) != Some(key) {
            let dim = self.linear.raw_dim();
            let mut e = Array2::zeros(dim);
            let mut p1h = Array2::zeros(dim);
            let mut p2h = Array2::zeros(dim);
            Zip::from(&mut e)
                .and(&mut p1h)
                .and(&mut p2h)
                .and(&self.linear)
                .for_each(|e, p1, p2, l| {
                    let (ez, f1, f2) = phi_functions((l + d) * h);
                    *e = ez;
                    *p1 = f1 * h;
                    *p2 = f2 * h;
                });
            self.cache = Some(StepCache { key, e, p1h, p2h });
        }
        self.cache.as_ref().unwrap()
    }

    /// One step of length h with scalar drift d.
    pub fn step(&mut self, u: &Array2<C>, h: f64, d: f64) -> Array2<C> {
        let n0 = self.basis.nonlinear_part(u, self.params);
        let (params, basis) = (self.params, self.basis);
        let c = self.coefficients(h, d);
        let mut a = Array2::zeros(u.raw_dim());
        Zip::from(&mut a)
            .and(u)
            .and(&c.e)
            .and(&c.p1h)
            .and(&n0)
            .for_each(|a, u, e, p1, n| *a = e * u + p1 * n);
        let n1 = basis.nonlinear_part(&a, params);
        let c = self.cache.as_ref().unwrap();
        Zip::from(&mut a)
            .and(&c.p2h)
            .and(&n1)
            .and(&n0)
            .for_each(|a, p2, n1, n0| *a += p2 * (n1 - n0));
        a
    }
}

pub(crate) fn norm_exponents(params: &Parameters) -> Vec<f64> {
    vec![2.0, 2.0 * params.sigma + 2.0]
}

/// Integrate from `u0` over `grid` with scalar drift and kicks.
pub(crate) fn integrate(
    params: &Parameters,
    u0: &StateField,
    drift: &ScalarDrift,
    kicks: &[Kick],
    grid: &TimeGrid,
    opts: &SolverOptions,
    record: Record,
) -> Result<Trajectory> {
    let basis: &Arc<SpectralBasis> = &u0.basis;
    let exps = norm_exponents(params);
    let cap = opts.blowup_factor * (u0.l2() + 1.0);

    // node list: saves, drift breaks, kicks; stable order at equal times is
    // break < kick < save so the saved value is the right limit
    let mut nodes: Vec<(f64, u8, NodeKind)> = Vec::new();
    for i in (0..=grid.n_steps).step_by(grid.save_every) {
        nodes.push((grid.time(i), 2, NodeKind::Save(i)));
    }
    for i in 1..grid.n_steps {
        if i % grid.save_every != 0 {
            nodes.push((grid.time(i), 0, NodeKind::Break));
        }
    }
    for t in drift.breaks() {
        nodes.push((t, 0, NodeKind::Break));
    }
    for (k, kick) in kicks.iter().enumerate() {
        if kick.factor != 1.0 {
            nodes.push((kick.t, 1, NodeKind::Kick(k)));
        }
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut stepper = Stepper::new(params, basis);
    let mut u = u0.modes.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut out = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        norms: Vec::new(),
        events: Vec::new(),
        norm_exponents: exps.clone(),
    };

    for &(tn, _, kind) in &nodes {
        let h = tn - t;
        if h > 0.0 {
            let d = drift.at(t + 0.5 * h);
            u = stepper.step(&u, h, d);
            steps += 1;
            t = tn;
            let norm = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if !(norm <= cap) {
                return Err(Error::BlowUp {
                    step: steps,
                    time: t,
                    norm,
                    cap,
                });
            }
        }
        match kind {
            NodeKind::Break => {}
            NodeKind::Kick(k) => {
                let kick = kicks[k];
                let pre = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                u.mapv_inplace(|v| v * kick.factor);
                if matches!(record, Record::Full) {
                    out.events.push(EventRecord {
                        t: kick.t,
                        mark: kick.mark,
                        pre_norm: pre,
                        post_norm: pre * kick.factor.abs(),
                    });
                }
            }
            NodeKind::Save(i) => {
                let keep = matches!(record, Record::Full) || i == grid.n_steps;
                if keep {
                    let field = StateField {
                        modes: u.clone(),
                        basis: Arc::clone(basis),
                    };
                    if matches!(record, Record::Full) {
                        out.norms.push(compute_norms(&field, &exps)?);
                    }
                    out.times.push(grid.time(i));
                    out.states.push(field);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_continuous_at_threshold() {
        for &r in &[0.19999, 0.20001] {
            for k in 0..8 {
                let z = C::from_polar(r, k as f64 * 0.7);
                let (e, p1, p2) = phi_functions(z);
                assert!((p1 * z + 1.0 - e).norm() < 1e-14);
                assert!((p2 * z * z + 1.0 + z - e).norm() < 1e-13);
            }
        }
        let (_, p1, p2) = phi_functions(C::new(0.0, 0.0));
        assert_eq!(p1, C::new(1.0, 0.0));
        assert!((p2 - C::new(0.5, 0.0)).norm() < 1e-16);
        // stiff limit
        let (e, p1, p2) = phi_functions(C::new(-1e4, 3.0));
        assert_eq!(e.norm(), 0.0);
        assert!((p1 + 1.0 / C::new(-1e4, 3.0)).norm() < 1e-12);
        assert!(p2.norm().is_finite());
    }

    #[test]
    fn time_grid() {
        let g = TimeGrid::new(0.5, 7).unwrap();
        assert!((g.dt() * 7.0 - 0.5).abs() <= f64::EPSILON);
        assert_eq!(g.time(7), 0.5);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::with_stride(1.0, 10, 3).is_err());
        let g = TimeGrid::with_stride(1.0, 10, 5).unwrap();
        assert_eq!(g.save_times(), vec![0.0, 0.5, 1.0]);
        assert_eq!(g.refined(2).unwrap().save_times(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn scalar_drift_lookup() {
        let d = ScalarDrift {
            edges: vec![0.0, 0.5, 1.0, 1.5],
            values: vec![1.0, 1.0, 3.0],
        };
        assert_eq!(d.at(0.2), 1.0);
        assert_eq!(d.at(0.75), 1.0);
        assert_eq!(d.at(1.2), 3.0);
        assert_eq!(d.breaks().collect::<Vec<_>>(), vec![1.0]);
    }
}
