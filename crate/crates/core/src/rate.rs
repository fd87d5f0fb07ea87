//! Relative-entropy cost of controls, level sets, and a penalized search for
//! the cheapest control steering the skeleton endpoint into a target ball.
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{SolverOptions, TimeGrid};
use crate::jump::{Control, JumpModel};
use crate::params::Parameters;
use crate::skeleton::skeleton_endpoint;
use crate::spectral::{distance, SpectralBasis, StateField};

/// l(r) = r log r − r + 1, with l(0) = 1.
pub fn ell(r: f64) -> Result<f64> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Precondition(format!("l(r) needs finite r >= 0, got {r}")));
    }
    Ok(if r == 0.0 { 1.0 } else { r * r.ln() - r + 1.0 })
}

/// L_T(φ) = Σ_b Σ_j l(φ_{b,j}) ν_j T/n_bins.
pub fn cost(ctrl: &Control, jm: &JumpModel) -> Result<f64> {
    ctrl.check(jm)?;
    let w = ctrl.bin_width();
    let mut total = 0.0;
    for row in ctrl.phi().rows() {
        for (p, m) in row.iter().zip(jm.marks()) {
            total += ell(*p)? * m.nu_weight * w;
        }
    }
    Ok(total)
}

/// φ ∈ S^N, i.e. L_T(φ) ≤ N.
pub fn in_level_set(ctrl: &Control, jm: &JumpModel, n: f64) -> Result<bool> {
    if !(n >= 0.0) {
        return Err(Error::Precondition(format!("level N must be >= 0, got {n}")));
    }
    Ok(cost(ctrl, jm)? <= n)
}

/// Closed ball {v : ‖v − center‖ ≤ radius}.
#[derive(Debug, Clone)]
pub struct EndpointSpec {
    pub center: StateField,
    pub radius: f64,
}

impl EndpointSpec {
    pub fn new(center: StateField, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Precondition(format!("radius must be >= 0, got {radius}")));
        }
        if !center.is_finite() {
            return Err(Error::NonFinite("target center"));
        }
        Ok(Self { center, radius })
    }

    pub fn gap(&self, u: &StateField) -> f64 {
        distance(&u.modes, &self.center.modes)
    }

    pub fn contains(&self, u: &StateField) -> bool {
        self.gap(u) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptConfig {
    /// Time bins of the searched control.
    pub n_bins: usize,
    /// Gradient iterations per penalty level.
    pub max_inner: usize,
    /// Number of penalty levels ρ, 10ρ, 100ρ, ...
    pub max_rounds: usize,
    pub rho0: f64,
    pub rho_growth: f64,
    /// Feasibility tolerance on the gap, relative to the target scale.
    pub tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Stationarity tolerance of the projected gradient.
    pub grad_tol: f64,
    /// Lower clamp of control entries (keeps l'(φ) = log φ finite).
    pub phi_floor: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            n_bins: 4,
            max_inner: 60,
            max_rounds: 6,
            rho0: 10.0,
            rho_growth: 10.0,
            tol: 1e-4,
            fd_step: 1e-6,
            grad_tol: 1e-9,
            phi_floor: 1e-10,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Precondition(format!("optimizer: {what}")));
        if self.n_bins == 0 {
            return bad("n_bins must be >= 1");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be >= 1");
        }
        if !(self.rho0 > 0.0 && self.rho_growth > 1.0) {
            return bad("need rho0 > 0 and rho_growth > 1");
        }
        if !(self.tol > 0.0 && self.fd_step > 0.0 && self.grad_tol >= 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.phi_floor >= 0.0 && self.phi_floor < 1.0) {
            return bad("phi_floor must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult {
    /// Cost of the returned control; finite even when infeasible.
    pub value: f64,
    pub control: Control,
    pub endpoint_gap: f64,
    pub iterations: usize,
    /// False when no control met the constraint (I = ∞ at this budget).
    pub feasible: bool,
    /// Best feasible value after each iteration (None until one is found).
    pub value_trace: Vec<Option<f64>>,
}

struct Problem<'a> {
    params: &'a Parameters,
    basis: &'a Arc<SpectralBasis>,
    jm: &'a JumpModel,
    u0: &'a StateField,
    grid: &'a TimeGrid,
    target: &'a EndpointSpec,
    cfg: &'a OptConfig,
    opts: SolverOptions,
    shape: (usize, usize),
    /// gap normalization
    scale: f64,
    nu_dt: Vec<f64>,
}

#[derive(Clone)]
struct Point {
    x: Array2<f64>,
    cost: f64,
    gap: f64,
}

impl Problem<'_> {
    fn control(&self, x: &Array2<f64>) -> Result<Control> {
        Control::new(self.grid.t_final, x.clone())
    }

    fn gap(&self, x: &Array2<f64>) -> Result<f64> {
        let ctrl = self.control(x)?;
        let end = skeleton_endpoint(self.params, self.basis, self.u0, self.jm, &ctrl, self.grid, &self.opts)?;
        Ok(self.target.gap(&end))
    }

    fn cost(&self, x: &Array2<f64>) -> f64 {
        x.indexed_iter()
            .map(|((_, j), &p)| ell(p).unwrap_or(f64::INFINITY) * self.nu_dt[j])
            .sum()
    }

    fn point(&self, x: Array2<f64>) -> Result<Point> {
        let gap = self.gap(&x)?;
        Ok(Point {
            cost: self.cost(&x),
            gap,
            x,
        })
    }

    fn violation(&self, gap: f64) -> f64 {
        ((gap - self.target.radius) / self.scale).max(0.0)
    }

    fn objective(&self, p: &Point, rho: f64) -> f64 {
        let v = self.violation(p.gap);
        p.cost + rho * v * v
    }

    fn feasible(&self, gap: f64) -> bool {
        gap <= self.target.radius + self.cfg.tol * self.scale
    }

    fn project(&self, x: &mut Array2<f64>) {
        let floor = self.cfg.phi_floor;
        x.mapv_inplace(|v| if v.is_finite() { v.max(floor) } else { floor });
    }

    /// ∂gap/∂φ by central differences (one-sided at the floor), in parallel
    /// over entries and collected in entry order.
    fn gap_gradient(&self, p: &Point) -> Result<Array2<f64>> {
        let (nb, k) = self.shape;
        let entries: Vec<(usize, usize)> = (0..nb).flat_map(|b| (0..k).map(move |j| (b, j))).collect();
        let parts = entries
            .par_iter()
            .map(|&(b, j)| {
                let x0 = p.x[[b, j]];
                let h = self.cfg.fd_step * x0.abs().max(1.0);
                let mut plus = p.x.clone();
                plus[[b, j]] = x0 + h;
                let gp = self.gap(&plus)?;
                if x0 - h >= self.cfg.phi_floor {
                    let mut minus = p.x.clone();
                    minus[[b, j]] = x0 - h;
                    Ok((gp - self.gap(&minus)?) / (2.0 * h))
                } else {
                    Ok((gp - p.gap) / h)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Array2::from_shape_vec((nb, k), parts).expect("shape matches entry count"))
    }

    fn cost_gradient(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut g = x.mapv(|p| p.ln());
        for ((_, j), v) in g.indexed_iter_mut() {
            *v *= self.nu_dt[j];
        }
        g
    }

    fn gradient(&self, p: &Point, rho: f64) -> Result<(Array2<f64>, Array2<f64>)> {
        let dgap = self.gap_gradient(p)?;
        let mut g = self.cost_gradient(&p.x);
        let v = self.violation(p.gap);
        if v > 0.0 {
            g.scaled_add(2.0 * rho * v / self.scale, &dgap);
        }
        Ok((g, dgap))
    }

    /// Gauss-Newton steps on the scalar gap toward the ball boundary.
    fn restore(&self, mut p: Point, dgap: Option<Array2<f64>>) -> Result<Point> {
        let mut dgap = dgap;
        for _ in 0..30 {
            if self.feasible(p.gap) {
                break;
            }
            let d = match dgap.take() {
                Some(d) => d,
                None => self.gap_gradient(&p)?,
            };
            let n2 = d.iter().map(|v| v * v).sum::<f64>();
            if !(n2 > 0.0) {
                break;
            }
            let mut x = &p.x - &(&d * ((p.gap - self.target.radius) / n2));
            self.project(&mut x);
            let q = self.point(x)?;
            if !(q.gap < p.gap) {
                break;
            }
            p = q;
        }
        Ok(p)
    }
}

/// Estimate I over the target ball, starting from φ ≡ 1.
#[allow(clippy::too_many_arguments)]
pub fn estimate_rate(
    target: &EndpointSpec,
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    jm: &JumpModel,
    u0: &StateField,
    grid: &TimeGrid,
    cfg: &OptConfig,
) -> Result<RateResult> {
    estimate_rate_from(target, params, basis, jm, u0, grid, cfg, &[])
}

/// As [`estimate_rate`], with extra candidate controls. Each candidate is
/// evaluated and the search also starts from the best of them, so the
/// returned value never exceeds the cost of a feasible candidate.
#[allow(clippy::too_many_arguments)]
pub fn estimate_rate_from(
    target: &EndpointSpec,
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    jm: &JumpModel,
    u0: &StateField,
    grid: &TimeGrid,
    cfg: &OptConfig,
    candidates: &[Control],
) -> Result<RateResult> {
    cfg.validate()?;
    if target.center.basis.shape() != basis.shape() {
        return Err(Error::InvalidDimension("target center is not in the solver basis".into()));
    }
    let shape = (cfg.n_bins, jm.len());
    let dt = grid.t_final / cfg.n_bins as f64;
    let scale = target.center.l2().max(u0.l2()).max(target.radius).max(f64::MIN_POSITIVE);
    let pb = Problem {
        params,
        basis,
        jm,
        u0,
        grid,
        target,
        cfg,
        opts: SolverOptions::default(),
        shape,
        scale,
        nu_dt: jm.marks().iter().map(|m| m.nu_weight * dt).collect(),
    };

    let mut best_feasible: Option<Point> = None;
    let mut least_gap: Option<Point> = None;
    let offer = |p: &Point, best: &mut Option<Point>, least: &mut Option<Point>| {
        if pb.feasible(p.gap) && best.as_ref().is_none_or(|b| p.cost < b.cost) {
            *best = Some(p.clone());
        }
        if least.as_ref().is_none_or(|b| p.gap < b.gap) {
            *least = Some(p.clone());
        }
    };

    // starting point: φ ≡ 1 or the cheapest feasible candidate
    let mut start = pb.point(Array2::from_elem(shape, 1.0))?;
    offer(&start, &mut best_feasible, &mut least_gap);
    let mut extra: Vec<(Control, f64, f64)> = Vec::new();
    for c in candidates {
        c.check(jm)?;
        if c.t_final() != grid.t_final {
            return Err(Error::InvalidControl("candidate horizon differs from the time grid".into()));
        }
        let end = skeleton_endpoint(params, basis, u0, jm, c, grid, &pb.opts)?;
        let gap = target.gap(&end);
        let cst = cost(c, jm)?;
        if pb.feasible(gap) {
            extra.push((c.clone(), cst, gap));
        }
        if c.n_bins() == cfg.n_bins {
            let p = Point {
                x: c.phi().clone(),
                cost: cst,
                gap,
            };
            offer(&p, &mut best_feasible, &mut least_gap);
            if pb.feasible(gap) && best_feasible.as_ref().is_some_and(|b| b.x == p.x) {
                start = p;
            }
        }
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut x = start;
    let mut rho = cfg.rho0;
    for _ in 0..cfg.max_rounds {
        let mut prev: Option<(Array2<f64>, Array2<f64>)> = None;
        let mut dgap_at_x = None;
        for _ in 0..cfg.max_inner {
            let (g, dgap) = pb.gradient(&x, rho)?;
            iterations += 1;
            // projected-gradient stationarity
            let mut probe = &x.x - &g;
            pb.project(&mut probe);
            let station = (&probe - &x.x).iter().map(|v| v * v).sum::<f64>().sqrt();
            if station <= cfg.grad_tol {
                dgap_at_x = Some(dgap);
                trace.push(best_feasible.as_ref().map(|b| b.cost));
                break;
            }
            // Barzilai-Borwein initial step, then Armijo backtracking
            let mut step = match &prev {
                Some((px, pg)) => {
                    let s = &x.x - px;
                    let y = &g - pg;
                    let sy = (&s * &y).sum();
                    let ss = (&s * &s).sum();
                    if sy > 0.0 { (ss / sy).clamp(1e-8, 1e8) } else { 1.0 }
                }
                None => 1.0 / g.iter().map(|v| v.abs()).fold(1.0, f64::max),
            };
            let f0 = pb.objective(&x, rho);
            let mut accepted = None;
            for _ in 0..40 {
                let mut xn = &x.x - &(&g * step);
                pb.project(&mut xn);
                let decrease = (&g * &(&x.x - &xn)).sum();
                let cand = pb.point(xn)?;
                offer(&cand, &mut best_feasible, &mut least_gap);
                if pb.objective(&cand, rho) <= f0 - 1e-4 * decrease {
                    accepted = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            trace.push(best_feasible.as_ref().map(|b| b.cost));
            match accepted {
                Some(cand) => {
                    prev = Some((x.x.clone(), g));
                    x = cand;
                }
                None => {
                    dgap_at_x = Some(dgap);
                    break;
                }
            }
        }
        let restored = pb.restore(x.clone(), dgap_at_x)?;
        offer(&restored, &mut best_feasible, &mut least_gap);
        trace.push(best_feasible.as_ref().map(|b| b.cost));
        if pb.feasible(x.gap) {
            break;
        }
        rho *= cfg.rho_growth;
    }

    let (point, feasible) = match (best_feasible, least_gap) {
        (Some(p), _) => (p, true),
        (None, Some(p)) => (p, false),
        (None, None) => unreachable!("the start point is always offered"),
    };
    let mut result = RateResult {
        value: point.cost,
        control: pb.control(&point.x)?,
        endpoint_gap: point.gap,
        iterations,
        feasible,
        value_trace: trace,
    };
    // a feasible candidate on a different bin count may still be cheaper
    if let Some((c, cst, gap)) = extra
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|(_, cst, _)| !result.feasible || *cst < result.value)
    {
        result.value = cst;
        result.control = c;
        result.endpoint_gap = gap;
        result.feasible = true;
        result.value_trace.push(Some(cst));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ell_values() {
        assert_eq!(ell(1.0).unwrap(), 0.0);
        assert_eq!(ell(0.0).unwrap(), 1.0);
        assert!((ell(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(ell(-1e-12).is_err());
        assert!(ell(f64::NAN).is_err());
    }

    #[test]
    fn cost_examples() {
        let jm = JumpModel::from_lists(&[2.0], &[0.5]).unwrap();
        let c = Control::from_rows(1.0, &[vec![std::f64::consts::E], vec![1.0]]).unwrap();
        // 2·(l(e)·0.5 + l(1)·0.5)
        let want = 2.0 * (1.0 * 0.5 + 0.0 * 0.5);
        assert!((cost(&c, &jm).unwrap() - want).abs() < 1e-14);
        let jm = JumpModel::from_lists(&[1.5, 1.0], &[0.5, 1.0]).unwrap();
        assert_eq!(cost(&Control::constant(2.0, 3, 2, 1.0).unwrap(), &jm).unwrap(), 0.0);
        // ν_T mass = 2.5 · 2
        assert!((cost(&Control::constant(2.0, 3, 2, 0.0).unwrap(), &jm).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn level_sets() {
        let jm = JumpModel::from_lists(&[2.5], &[1.0]).unwrap();
        let one = Control::constant(2.0, 2, 1, 1.0).unwrap();
        assert!(in_level_set(&one, &jm, 0.0).unwrap());
        let zero = Control::constant(2.0, 2, 1, 0.0).unwrap();
        assert!(!in_level_set(&zero, &jm, 4.0).unwrap());
        let exact = cost(&zero, &jm).unwrap();
        assert!(in_level_set(&zero, &jm, exact).unwrap());
        assert!(in_level_set(&one, &jm, -1.0).is_err());
    }

    #[test]
    fn cost_scales_with_horizon() {
        let jm = JumpModel::from_lists(&[1.0, 0.3], &[0.5, 1.0]).unwrap();
        let c = Control::from_rows(1.0, &[vec![0.2, 3.0], vec![1.7, 0.0]]).unwrap();
        let base = cost(&c, &jm).unwrap();
        let scaled = cost(&c.with_t_final(3.0).unwrap(), &jm).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-13);
        // additivity over bins
        let b0 = Control::from_rows(0.5, &[vec![0.2, 3.0]]).unwrap();
        let b1 = Control::from_rows(0.5, &[vec![1.7, 0.0]]).unwrap();
        let sum = cost(&b0, &jm).unwrap() + cost(&b1, &jm).unwrap();
        assert!((sum - base).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn ell_is_convex(r1 in 0.0f64..20.0, r2 in 0.0f64..20.0, t in 0.0f64..1.0) {
            let lhs = ell(t * r1 + (1.0 - t) * r2).unwrap();
            let rhs = t * ell(r1).unwrap() + (1.0 - t) * ell(r2).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
            prop_assert!(lhs >= 0.0);
        }
    }
}
