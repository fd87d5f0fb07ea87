//! Invariant suite run by the `verify` subcommand, plus the audit and
//! calibration drivers it shares with the `audit` subcommand.
use std::sync::Arc;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::error::Result;
use crate::harness::{
    convergence_sweep, energy_audit, fit_constants, par_collect, random_level_set_control,
    tail_probability, AuditDrift, AuditReport, FittedConstants,
};
use crate::jump::{sample_prm, Control, NoiseScale};
use crate::rate::{cost, estimate_rate, EndpointSpec};
use crate::rng::{derive_seed, stream_rng};
use crate::skeleton::{galerkin_refine, solve_skeleton};
use crate::spde::{solve_controlled_spde, solve_spde};
use crate::spectral::{apply_a, SpectralBasis, StateField};

const AUDIT_STREAM: u64 = 0xa0d1;
const CALIBRATION_STREAM: u64 = 0xca1b;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCase {
    pub index: usize,
    pub cost: f64,
    pub report: AuditReport,
}

fn level_set_control(cfg: &LoadedConfig, seed: u64, stream: u64, i: usize) -> Result<Control> {
    let a = &cfg.config.audit;
    let mut rng = stream_rng(derive_seed(seed, i as u64), stream);
    random_level_set_control(&cfg.jm, cfg.grid.t_final, a.n_bins, a.level, a.spread, &mut rng)
}

/// Fit C_F and C_G over skeleton runs driven by controls drawn independently
/// of the audited ones, together with the φ ≡ 1 run.
pub fn calibrate_constants(cfg: &LoadedConfig, seed: u64, workers: Option<usize>) -> Result<FittedConstants> {
    let n = cfg.config.audit.cases;
    let opts = cfg.config.solver;
    let fits = par_collect(n + 1, workers, |i| {
        let ctrl = if i == n {
            Control::constant(cfg.grid.t_final, 1, cfg.jm.len(), 1.0)?
        } else {
            level_set_control(cfg, seed, CALIBRATION_STREAM, i)?
        };
        let tr = solve_skeleton(&cfg.params, &cfg.basis, &cfg.u0, &cfg.jm, &ctrl, &cfg.grid, &opts)?;
        fit_constants(&cfg.params, &tr.states, cfg.config.audit.p)
    })?;
    Ok(fits.iter().fold(FittedConstants { c_f: 0.0, c_g: 0.0 }, |acc, f| FittedConstants {
        c_f: acc.c_f.max(f.c_f),
        c_g: acc.c_g.max(f.c_g),
    }))
}

/// Audit `audit.cases` skeleton runs with random controls in S^level.
pub fn run_audit(
    cfg: &LoadedConfig,
    constants: FittedConstants,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<AuditCase>> {
    let mut acfg = cfg.config.audit.audit_config();
    acfg.constants = constants;
    let opts = cfg.config.solver;
    par_collect(cfg.config.audit.cases, workers, |i| {
        let ctrl = level_set_control(cfg, seed, AUDIT_STREAM, i)?;
        let tr = solve_skeleton(&cfg.params, &cfg.basis, &cfg.u0, &cfg.jm, &ctrl, &cfg.grid, &opts)?;
        let report = energy_audit(&tr, &cfg.params, &cfg.jm, &AuditDrift::Control(ctrl.clone()), &acfg)?;
        Ok(AuditCase {
            index: i,
            cost: cost(&ctrl, &cfg.jm)?,
            report,
        })
    })
}

fn spectral_exactness(cfg: &LoadedConfig) -> Result<Check> {
    let basis = &cfg.basis;
    let mut worst = 0.0f64;
    for k in 1..=basis.n1 {
        for m in 1..=basis.n2 {
            let e = StateField::unit(basis, k, m, C::new(1.0, 0.0))?;
            let got = apply_a(&e, &cfg.params)?;
            let want = C::new(1.0, cfg.params.alpha) * basis.eigenvalues[[k - 1, m - 1]];
            let mut expected = StateField::zeros(basis);
            expected.modes[[k - 1, m - 1]] = want;
            let err = crate::spectral::distance(&got.modes, &expected.modes) / want.norm();
            worst = worst.max(err);
        }
    }
    Ok(Check::new("spectral_exactness", worst <= 1e-13, format!("max relative error {worst:e}")))
}

fn zero_invariance(cfg: &LoadedConfig, eps: NoiseScale, ctrl: &Control, workers: Option<usize>) -> Result<Check> {
    let zero = StateField::zeros(&cfg.basis);
    let opts = cfg.config.solver;
    let (p, b, jm, g) = (&cfg.params, &cfg.basis, &cfg.jm, &cfg.grid);
    let skel = solve_skeleton(p, b, &zero, jm, ctrl, g, &opts)?.is_identically_zero();
    let noisy = par_collect(cfg.config.checks.seeds, workers, |s| {
        let a = solve_spde(p, b, &zero, jm, eps, g, s as u64, &opts)?;
        let c = solve_controlled_spde(p, b, &zero, jm, eps, ctrl, g, s as u64, &opts)?;
        Ok(a.is_identically_zero() && c.is_identically_zero())
    })?;
    let bad = noisy.iter().filter(|ok| !**ok).count();
    Ok(Check::new(
        "zero_invariance",
        skel && bad == 0,
        format!("skeleton zero: {skel}; nonzero stochastic seeds: {bad}/{}", noisy.len()),
    ))
}

/// Single mode, no derivative term, amplitude small enough that the
/// polynomial term is below rounding: u(T) = u₀ e^{(Λ − Σgν)T} Π(1 + εg).
fn scalar_closed_form(cfg: &LoadedConfig, eps: NoiseScale) -> Result<Check> {
    let mut p = cfg.params;
    p.lambda1 = [C::new(0.0, 0.0); 2];
    p.lambda2 = p.lambda1;
    let basis = Arc::new(SpectralBasis::for_params(2, 2, &p, 2)?);
    let c0 = C::new(1e-6, -3e-7);
    let u0 = StateField::unit(&basis, 1, 1, c0)?;
    let jm = &cfg.jm;
    let t = cfg.grid.t_final;
    let lin = C::new(1.0, p.alpha) * basis.eigenvalues[[0, 0]] + p.gamma - jm.g_moment();
    let mut worst = 0.0f64;
    let n = cfg.config.checks.seeds.min(50);
    for seed in 0..n as u64 {
        let tr = solve_spde(&p, &basis, &u0, jm, eps, &cfg.grid, seed, &cfg.config.solver)?;
        let sample = sample_prm(jm, eps, t, seed)?;
        let kicks: f64 = sample
            .events
            .iter()
            .map(|e| 1.0 + eps.epsilon() * jm.marks()[e.mark].g)
            .product();
        let want = c0 * (lin * t).exp() * kicks;
        worst = worst.max((tr.endpoint().modes[[0, 0]] - want).norm() / want.norm());
    }
    Ok(Check::new("scalar_closed_form", worst <= 1e-8, format!("max relative error {worst:e} over {n} seeds")))
}

fn noiseless_rate(cfg: &LoadedConfig) -> Result<Check> {
    let one = Control::constant(cfg.grid.t_final, 1, cfg.jm.len(), 1.0)?;
    let end = solve_skeleton(&cfg.params, &cfg.basis, &cfg.u0, &cfg.jm, &one, &cfg.grid, &cfg.config.solver)?;
    let target = EndpointSpec::new(end.endpoint().clone(), 0.0)?;
    let r = estimate_rate(&target, &cfg.params, &cfg.basis, &cfg.jm, &cfg.u0, &cfg.grid, &cfg.config.rate)?;
    Ok(Check::new(
        "noiseless_rate_zero",
        r.feasible && r.value <= 1e-6,
        format!("I = {:e}, feasible {}", r.value, r.feasible),
    ))
}

fn galerkin(cfg: &LoadedConfig, ctrl: &Control) -> Result<Check> {
    let errs = galerkin_refine(
        &cfg.params,
        &cfg.jm,
        ctrl,
        &cfg.config.initial,
        &cfg.grid,
        &[4, 8, 16, 32],
        cfg.config.basis.pad_factor,
        &cfg.config.solver,
    )?;
    let e: Vec<f64> = errs[..3].iter().map(|x| x.1).collect();
    let ok = e.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    Ok(Check::new("galerkin_refinement", ok, format!("errors vs n = 32 at n = 4, 8, 16: {e:?}")))
}

fn audit(cfg: &LoadedConfig, seed: u64, workers: Option<usize>) -> Result<Check> {
    let a = &cfg.config.audit;
    let cases = run_audit(cfg, FittedConstants { c_f: a.c_f, c_g: a.c_g }, seed, workers)?;
    let v: usize = cases.iter().map(|c| c.report.violations()).sum();
    Ok(Check::new("energy_audit", v == 0, format!("{v} violations over {} controls", cases.len())))
}

fn sweep(cfg: &LoadedConfig, ctrl: &Control, seed: u64, workers: Option<usize>) -> Result<Vec<Check>> {
    let eps = &cfg.config.noise.sweep_eps;
    if eps.len() < 2 {
        return Ok(vec![]);
    }
    let c = &cfg.config.checks;
    let run = |list: &[f64], n: usize, w: Option<usize>| {
        convergence_sweep(&cfg.params, &cfg.basis, &cfg.jm, &cfg.u0, ctrl, &cfg.grid, list, n, seed, w)
    };
    let rep = run(eps, cfg.config.run.sweep_samples, workers)?;
    let (slope_ok, detail) = match &rep.fit {
        Some(f) => (
            f.slope >= c.slope_floor && f.r2 >= c.r2_floor,
            format!("slope {:.4}, R² {:.4}", f.slope, f.r2),
        ),
        None => (false, "no fit (zero statistic)".to_string()),
    };
    let mono = rep.monotone_within(c.monotone_k);
    // the same sub-sweep on one and on two workers must agree bit for bit
    let small = &eps[..2];
    let a = serde_json::to_string(&run(small, 100, Some(1))?)?;
    let b = serde_json::to_string(&run(small, 100, Some(2))?)?;
    Ok(vec![
        Check::new("sweep_slope", slope_ok, detail),
        Check::new("sweep_monotone", mono, format!("within {} standard errors", c.monotone_k)),
        Check::new("sweep_worker_independence", a == b, "workers 1 vs 2".to_string()),
    ])
}

fn tail(cfg: &LoadedConfig, seed: u64, workers: Option<usize>) -> Result<Vec<Check>> {
    let (event, _) = cfg.event()?;
    let rep = tail_probability(
        &cfg.params,
        &cfg.basis,
        &cfg.jm,
        &cfg.u0,
        &cfg.grid,
        &event,
        &cfg.config.noise.tail_eps,
        cfg.config.run.tail_samples,
        seed,
        &cfg.config.rate,
        workers,
    )?;
    let band = cfg.config.checks.ldp_band;
    let resolvable = rep.resolvable().count();
    Ok(vec![
        Check::new(
            "ldp_upper_direction",
            resolvable > 0 && rep.bound_direction_holds(band),
            format!("I = {:.5}, {resolvable} resolvable cells", rep.rate.value),
        ),
        Check::new("ldp_monotone", rep.monotone_in_eps(), String::new()),
    ])
}

/// Run every invariant check on the configuration. The tail check is the
/// most expensive and runs only when requested.
pub fn verify(cfg: &LoadedConfig, seed: u64, workers: Option<usize>, with_tail: bool) -> Result<Vec<Check>> {
    let eps = cfg.eps()?;
    let ctrl = cfg.control()?;
    let mut out = vec![
        spectral_exactness(cfg)?,
        zero_invariance(cfg, eps, &ctrl, workers)?,
        scalar_closed_form(cfg, eps)?,
        noiseless_rate(cfg)?,
        galerkin(cfg, &ctrl)?,
        audit(cfg, seed, workers)?,
    ];
    out.extend(sweep(cfg, &ctrl, seed, workers)?);
    if with_tail {
        out.extend(tail(cfg, seed, workers)?);
    }
    Ok(out)
}
