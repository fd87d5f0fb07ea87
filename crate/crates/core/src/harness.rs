//! Monte Carlo experiments: controlled-to-skeleton convergence sweeps,
//! small-noise tail probabilities, and energy-bound audits.
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{SolverOptions, TimeGrid, Trajectory};
use crate::jump::{Control, JumpModel, NoiseScale};
use crate::params::Parameters;
use crate::rate::{cost, estimate_rate, EndpointSpec, OptConfig, RateResult};
use crate::rng::derive_seed;
use crate::skeleton::solve_skeleton;
use crate::spde::{solve_controlled_spde, spde_endpoint};
use crate::spectral::{apply_a, apply_b, apply_f, SpectralBasis, StateField};

/// Summation by recursive halving; the result depends only on the order of
/// `xs`, not on how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares line through (x, y): (slope, intercept, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((slope, my - slope * mx, r2))
}

/// Runs `f(i)` for i in 0..n on a pool of `workers` threads (all cores when
/// None) and returns the results in index order.
pub fn par_collect<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Precondition("workers must be >= 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition(format!(
            "eps_list must be non-empty and strictly decreasing, got {eps_list:?}"
        )));
    }
    Ok(())
}

/// Right-endpoint weights Δt_i of the saved times (zero for the first).
fn save_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for i in 1..times.len() {
        w[i] = times[i] - times[i - 1];
    }
    w
}

fn diff_modes(a: &StateField, b: &StateField) -> Array2<Complex64> {
    &a.modes - &b.modes
}

/// One ε row of a convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub eps: f64,
    pub n_samples: usize,
    /// E sup_t ‖ũ^ε − u^φ‖²
    pub sup_sq: f64,
    pub sup_sq_se: f64,
    /// E Σ dt ‖∇(ũ^ε − u^φ)‖²
    pub grad_sq: f64,
    pub grad_sq_se: f64,
    /// E Σ dt ‖ũ^ε − u^φ‖_{2σ+2}^{2σ+2}
    pub lp: f64,
    pub lp_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// R² below 0.9
    pub poor_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub master_seed: u64,
    pub cells: Vec<SweepCell>,
    /// log-log fit of `sup_sq` against ε; None when a statistic is zero
    pub fit: Option<SlopeFit>,
}

impl SweepReport {
    /// `sup_sq` is non-increasing as ε decreases, up to `k` standard errors.
    pub fn monotone_within(&self, k: f64) -> bool {
        self.cells.windows(2).all(|w| {
            let band = k * (w[0].sup_sq_se.powi(2) + w[1].sup_sq_se.powi(2)).sqrt();
            w[1].sup_sq <= w[0].sup_sq + band
        })
    }
}

fn fit_cells(cells: &[SweepCell]) -> Option<SlopeFit> {
    if cells.iter().any(|c| !(c.sup_sq > 0.0)) {
        return None;
    }
    let x: Vec<f64> = cells.iter().map(|c| c.eps.ln()).collect();
    let y: Vec<f64> = cells.iter().map(|c| c.sup_sq.ln()).collect();
    linear_fit(&x, &y).map(|(slope, intercept, r2)| SlopeFit {
        slope,
        intercept,
        r2,
        poor_fit: r2 < 0.9,
    })
}

/// Controlled-to-skeleton distances over an ε list. Sample i uses seed
/// `derive_seed(master_seed, i)` at every ε, so cells share base randomness.
#[allow(clippy::too_many_arguments)]
pub fn convergence_sweep(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    jm: &JumpModel,
    u0: &StateField,
    ctrl: &Control,
    grid: &TimeGrid,
    eps_list: &[f64],
    n_samples: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<SweepReport> {
    convergence_sweep_resumable(
        params, basis, jm, u0, ctrl, grid, eps_list, n_samples, master_seed, workers, &[], &mut |_| Ok(()),
    )
}

/// As [`convergence_sweep`], reusing `done` cells whose ε and sample count
/// match and reporting every finished cell to `on_cell`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_sweep_resumable(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    jm: &JumpModel,
    u0: &StateField,
    ctrl: &Control,
    grid: &TimeGrid,
    eps_list: &[f64],
    n_samples: usize,
    master_seed: u64,
    workers: Option<usize>,
    done: &[SweepCell],
    on_cell: &mut dyn FnMut(&SweepCell) -> Result<()>,
) -> Result<SweepReport> {
    check_eps_list(eps_list)?;
    if n_samples < 100 {
        return Err(Error::Precondition(format!("n_samples must be >= 100, got {n_samples}")));
    }
    let opts = SolverOptions::default();
    let reference = solve_skeleton(params, basis, u0, jm, ctrl, grid, &opts)?;
    let w = save_weights(&reference.times);
    let p = 2.0 * params.sigma + 2.0;
    let mut cells = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if let Some(c) = done.iter().find(|c| c.eps == eps && c.n_samples == n_samples) {
            cells.push(c.clone());
            continue;
        }
        let noise = NoiseScale::new(eps)?;
        let stats = par_collect(n_samples, workers, |i| {
            let seed = derive_seed(master_seed, i as u64);
            let tr = solve_controlled_spde(params, basis, u0, jm, noise, ctrl, grid, seed, &opts)?;
            let mut sup: f64 = 0.0;
            let (mut grad, mut lp) = (0.0, 0.0);
            for (k, (a, b)) in tr.states.iter().zip(&reference.states).enumerate() {
                let d = diff_modes(a, b);
                sup = sup.max(d.iter().map(|v| v.norm_sqr()).sum());
                if w[k] > 0.0 {
                    grad += w[k] * basis.grad_norm_sq(&d);
                    lp += w[k] * basis.lp_pow(&d, p);
                }
            }
            Ok([sup, grad, lp])
        })?;
        let col = |k: usize| stats.iter().map(|s| s[k]).collect::<Vec<f64>>();
        let (sup_sq, sup_sq_se) = mean_se(&col(0));
        let (grad_sq, grad_sq_se) = mean_se(&col(1));
        let (lp, lp_se) = mean_se(&col(2));
        let cell = SweepCell {
            eps,
            n_samples,
            sup_sq,
            sup_sq_se,
            grad_sq,
            grad_sq_se,
            lp,
            lp_se,
        };
        on_cell(&cell)?;
        cells.push(cell);
    }
    let fit = fit_cells(&cells);
    Ok(SweepReport {
        master_seed,
        cells,
        fit,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub eps: f64,
    pub n_samples: usize,
    pub hits: usize,
    pub p_hat: f64,
    /// ε log p̂; None for a zero-hit (censored) cell
    pub eps_log_p: Option<f64>,
    /// delta-method standard error of ε log p̂
    pub se: Option<f64>,
    /// ε log of the 95% Wilson bounds; the lower one is None when it is 0
    pub band_lo: Option<f64>,
    pub band_hi: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub master_seed: u64,
    pub cells: Vec<TailCell>,
    /// estimated I(event); infinite rate is reported by `rate.feasible`
    pub rate: RateResult,
    /// distance from the noiseless endpoint to the event
    pub noiseless_gap: f64,
}

impl TailReport {
    pub fn resolvable(&self) -> impl Iterator<Item = &TailCell> {
        self.cells.iter().filter(|c| !c.censored)
    }

    /// ε log p̂ + I ≥ −(2 se + band·I) on every resolvable cell.
    pub fn bound_direction_holds(&self, band: f64) -> bool {
        let i = self.rate.value;
        self.resolvable()
            .all(|c| c.eps_log_p.unwrap() + i >= -(2.0 * c.se.unwrap() + band * i))
    }

    /// ε log p̂ is non-increasing in ε within 2 combined standard errors.
    pub fn monotone_in_eps(&self) -> bool {
        let mut cells: Vec<&TailCell> = self.resolvable().collect();
        cells.sort_by(|a, b| a.eps.total_cmp(&b.eps));
        cells.windows(2).all(|w| {
            let band = 2.0 * (w[0].se.unwrap().powi(2) + w[1].se.unwrap().powi(2)).sqrt();
            w[1].eps_log_p.unwrap() <= w[0].eps_log_p.unwrap() + band
        })
    }

    /// ε log p̂ ≤ −I(1 − band) + 2 se at the smallest resolvable ε.
    pub fn upper_band_at_smallest(&self, band: f64) -> Option<bool> {
        let c = self.resolvable().min_by(|a, b| a.eps.total_cmp(&b.eps))?;
        Some(c.eps_log_p.unwrap() <= -self.rate.value * (1.0 - band) + 2.0 * c.se.unwrap())
    }
}

/// Fraction of uncontrolled endpoints inside `event`, per ε, next to the
/// estimated rate of the event.
#[allow(clippy::too_many_arguments)]
pub fn tail_probability(
    params: &Parameters,
    basis: &Arc<SpectralBasis>,
    jm: &JumpModel,
    u0: &StateField,
    grid: &TimeGrid,
    event: &EndpointSpec,
    eps_list: &[f64],
    n_samples: usize,
    master_seed: u64,
    opt: &OptConfig,
    workers: Option<usize>,
) -> Result<TailReport> {
    check_eps_list(eps_list)?;
    if n_samples == 0 {
        return Err(Error::Precondition("n_samples must be >= 1".into()));
    }
    let opts = SolverOptions::default();
    let one = Control::constant(grid.t_final, 1, jm.len(), 1.0)?;
    let noiseless = solve_skeleton(params, basis, u0, jm, &one, grid, &opts)?;
    let noiseless_gap = event.gap(noiseless.endpoint());
    if !(noiseless_gap > event.radius) {
        return Err(Error::Precondition(format!(
            "event contains the noiseless endpoint (distance {noiseless_gap} <= radius {})",
            event.radius
        )));
    }
    let rate = estimate_rate(event, params, basis, jm, u0, grid, opt)?;
    let mut cells = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let noise = NoiseScale::new(eps)?;
        let inside = par_collect(n_samples, workers, |i| {
            let seed = derive_seed(master_seed, i as u64);
            let end = spde_endpoint(params, basis, u0, jm, noise, grid, seed, &opts)?;
            Ok(event.contains(&end))
        })?;
        let hits = inside.iter().filter(|&&b| b).count();
        let p_hat = hits as f64 / n_samples as f64;
        let (lo, hi) = wilson_interval(hits, n_samples, 1.96);
        let censored = hits == 0;
        let (eps_log_p, se) = if censored {
            (None, None)
        } else {
            let se = eps * ((1.0 - p_hat) / (n_samples as f64 * p_hat)).sqrt();
            (Some(eps * p_hat.ln()), Some(se))
        };
        cells.push(TailCell {
            eps,
            n_samples,
            hits,
            p_hat,
            eps_log_p,
            se,
            band_lo: (lo > 0.0).then(|| eps * lo.ln()),
            band_hi: eps * hi.ln(),
            censored,
        });
    }
    Ok(TailReport {
        master_seed,
        cells,
        rate,
        noiseless_gap,
    })
}

/// Drift behind an audited trajectory.
#[derive(Debug, Clone)]
pub enum AuditDrift {
    /// skeleton solve under this control
    Control(Control),
    /// uncontrolled jump solve at this noise scale (kicks read from the
    /// trajectory's event log)
    Noise(NoiseScale),
}

/// Fitted derivative-term constants of the energy bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    /// C_F in 2Re⟨u,F(u)⟩ ≤ ½‖∇u‖² + ½‖u‖_{2σ+2}^{2σ+2} + C_F‖u‖²
    pub c_f: f64,
    /// C_G in the gradient inequality, see [`gradient_residual`]
    pub c_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// exponent of the gradient bound, 2 ≤ p < 2σ
    pub p: f64,
    /// relative slack on every bound
    pub slack: f64,
    pub constants: FittedConstants,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            slack: 0.2,
            constants: FittedConstants { c_f: 0.0, c_g: 0.0 },
        }
    }
}

/// λ_β = 1 − σ|β|/√(2σ+1), positive under the parameter constraint; used as
/// the coefficient kept on the weighted gradient integral.
pub fn lambda_beta(params: &Parameters) -> f64 {
    1.0 - params.sigma * params.beta.abs() / (2.0 * params.sigma + 1.0).sqrt()
}

fn inner_re(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// (2Re⟨u,F⟩ − ½‖∇u‖² − ½‖u‖_{2σ+2}^{2σ+2}) / ‖u‖², or −∞ for u = 0.
pub fn energy_residual(u: &StateField, params: &Parameters) -> Result<f64> {
    let l2 = u.l2_sq();
    if l2 == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let f = apply_f(u, params)?;
    let b = &u.basis;
    let r = 2.0 * inner_re(&u.modes, &f.modes)
        - 0.5 * b.grad_norm_sq(&u.modes)
        - 0.5 * b.lp_pow(&u.modes, 2.0 * params.sigma + 2.0);
    Ok(r / l2)
}

/// Normalized excess of the gradient identity over the kept dissipation:
///
/// ```text
/// ( −p‖∇u‖^{p−2} Re⟨Δu, P_n G(u)⟩ + (p/2)‖∇u‖^{p−2}‖Δu‖² + λ_β W − pγ‖∇u‖^p ) / ‖∇u‖^p
/// ```
///
/// with G = Au + Bu and W = ‖∇u‖^{p−2}∫|u|^{2σ}|∇u|². −∞ for u = 0.
pub fn gradient_residual(u: &StateField, params: &Parameters, p: f64) -> Result<f64> {
    let b = &u.basis;
    let g2 = b.grad_norm_sq(&u.modes);
    if g2 == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut g = apply_a(u, params)?;
    g.modes += &apply_b(u, params)?.modes;
    let lap = &u.modes * &b.eigenvalues.mapv(|m| Complex64::new(m, 0.0));
    let gp2 = g2.powf(0.5 * (p - 2.0));
    let w = gp2 * b.weighted_gradient_integral(&u.modes, params.sigma);
    let lap2 = b.laplacian_norm_sq(&u.modes);
    let r = -p * gp2 * inner_re(&lap, &g.modes) + 0.5 * p * gp2 * lap2 + lambda_beta(params) * w
        - p * params.gamma * g2.powf(0.5 * p);
    Ok(r / g2.powf(0.5 * p))
}

/// Smallest nonnegative constants for which both pointwise inequalities hold
/// on `states`.
pub fn fit_constants<'a>(
    params: &Parameters,
    states: impl IntoIterator<Item = &'a StateField>,
    p: f64,
) -> Result<FittedConstants> {
    let mut c = FittedConstants { c_f: 0.0, c_g: 0.0 };
    for u in states {
        c.c_f = c.c_f.max(energy_residual(u, params)?);
        c.c_g = c.c_g.max(gradient_residual(u, params, p)?);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditItem {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub items: Vec<AuditItem>,
}

impl AuditReport {
    pub fn violations(&self) -> usize {
        self.items.iter().filter(|i| i.violated).count()
    }

    pub fn get(&self, name: &str) -> Option<&AuditItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

/// The three energy quantities and the three gradient quantities of a
/// trajectory, each checked against its Gronwall bound.
///
/// With a(t) = 2γ + C_F + 2|c|(t) and b(t) = pγ + C_G + p|c|(t), where |c| is
/// Σ|g||φ−1|ν (control) or |Σgν| (noise), and K_q the product of
/// max(1, |1+εg|^q) over logged kicks:
///
/// ```text
/// sup ‖u‖²                      ≤ K_2 ‖u₀‖² e^{∫a}
/// Σdt ‖∇u‖², Σdt ‖u‖^{2σ+2}     ≤ K_2 ‖u₀‖² e^{∫a} / (3/2)
/// sup ‖∇u‖^p                    ≤ K_p ‖∇u₀‖^p e^{∫b}
/// Σdt ‖∇u‖^{p−2}‖Δu‖²           ≤ K_p ‖∇u₀‖^p e^{∫b} / (p/2)
/// Σdt ‖∇u‖^{p−2}∫|u|^{2σ}|∇u|²  ≤ K_p ‖∇u₀‖^p e^{∫b} / λ_β
/// ```
///
/// each inflated by 1 + slack.
pub fn energy_audit(
    traj: &Trajectory,
    params: &Parameters,
    jm: &JumpModel,
    drift: &AuditDrift,
    cfg: &AuditConfig,
) -> Result<AuditReport> {
    params.validate()?;
    let p = cfg.p;
    if !(2.0..2.0 * params.sigma).contains(&p) {
        return Err(Error::Precondition(format!("audit exponent p = {p} outside [2, 2σ)")));
    }
    if traj.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    let t_final = *traj.times.last().unwrap();
    // ∫|c| dt and the kick factors
    let (abs_c_int, k2, kp) = match drift {
        AuditDrift::Control(ctrl) => {
            ctrl.check(jm)?;
            let a: f64 = ctrl.abs_drift_coefficients(jm)?.iter().sum::<f64>() * ctrl.bin_width();
            (a, 1.0, 1.0)
        }
        AuditDrift::Noise(eps) => {
            let (mut k2, mut kp) = (1.0f64, 1.0f64);
            for e in &traj.events {
                let f = (1.0 + eps.epsilon() * jm.marks()[e.mark].g).abs();
                k2 *= f.powi(2).max(1.0);
                kp *= f.powf(p).max(1.0);
            }
            (jm.g_moment().abs() * t_final, k2, kp)
        }
    };
    let u0 = &traj.states[0];
    let basis = &u0.basis;
    let c = cfg.constants;
    let energy = k2 * u0.l2_sq() * ((2.0 * params.gamma + c.c_f) * t_final + 2.0 * abs_c_int).exp();
    let g0 = basis.grad_norm_sq(&u0.modes).powf(0.5 * p);
    let gradient = kp * g0 * ((p * params.gamma + c.c_g) * t_final + p * abs_c_int).exp();

    let w = save_weights(&traj.times);
    let q = 2.0 * params.sigma + 2.0;
    let mut vals = [0.0f64; 6];
    for (k, u) in traj.states.iter().enumerate() {
        let g2 = basis.grad_norm_sq(&u.modes);
        vals[0] = vals[0].max(u.l2_sq());
        vals[3] = vals[3].max(g2.powf(0.5 * p));
        if w[k] > 0.0 {
            let gp2 = g2.powf(0.5 * (p - 2.0));
            vals[1] += w[k] * g2;
            vals[2] += w[k] * basis.lp_pow(&u.modes, q);
            vals[4] += w[k] * gp2 * basis.laplacian_norm_sq(&u.modes);
            vals[5] += w[k] * gp2 * basis.weighted_gradient_integral(&u.modes, params.sigma);
        }
    }
    let bounds = [
        energy,
        energy / 1.5,
        energy / 1.5,
        gradient,
        gradient / (0.5 * p),
        gradient / lambda_beta(params),
    ];
    let names = [
        "sup_l2_sq",
        "int_grad_sq",
        "int_lp",
        "sup_grad_p",
        "int_grad_p2_lap_sq",
        "int_grad_p2_weighted",
    ];
    let items = names
        .iter()
        .zip(vals.iter().zip(&bounds))
        .map(|(name, (&value, &bound))| AuditItem {
            name: name.to_string(),
            value,
            bound,
            violated: !(value <= bound * (1.0 + cfg.slack)),
        })
        .collect();
    Ok(AuditReport { items })
}

/// A random control with cost ≤ `level`: log-normal entries pulled toward
/// φ ≡ 1 until the cost fits.
pub fn random_level_set_control<R: Rng>(
    jm: &JumpModel,
    t_final: f64,
    n_bins: usize,
    level: f64,
    spread: f64,
    rng: &mut R,
) -> Result<Control> {
    let raw = Array2::from_shape_fn((n_bins, jm.len()), |_| {
        let z: f64 = rng.sample(StandardNormal);
        (spread * z).exp()
    });
    let at = |s: f64| Control::new(t_final, raw.mapv(|v| 1.0 + s * (v - 1.0)));
    if cost(&at(1.0)?, jm)? <= level {
        return at(1.0);
    }
    // cost(s) is convex with cost(0) = 0
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cost(&at(mid)?, jm)? <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}
