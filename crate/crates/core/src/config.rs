//! Run specification read from a TOML file.
//!
//! Every section rejects unknown keys. Parameter constraints are checked at
//! load time and reported with the violated inequality.
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{AuditConfig, FittedConstants};
use crate::integrator::{SolverOptions, TimeGrid};
use crate::jump::{Control, JumpModel, NoiseScale};
use crate::params::{CVec2, Parameters};
use crate::rate::{EndpointSpec, OptConfig};
use crate::skeleton::skeleton_endpoint;
use crate::spectral::{distance, InitialCondition, SpectralBasis, StateField};

fn zero_lambda() -> CVec2 {
    [num_complex::Complex64::new(0.0, 0.0); 2]
}

/// `[params]`: α, β, γ, σ, λ₁, λ₂ (pairs of [re, im]), L₁, L₂.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    #[serde(default = "zero_lambda")]
    pub lambda1: CVec2,
    #[serde(default = "zero_lambda")]
    pub lambda2: CVec2,
    pub l1: f64,
    pub l2: f64,
}

/// `[basis]`: Galerkin modes per direction and collocation oversampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub n1: usize,
    pub n2: usize,
    #[serde(default = "default_pad")]
    pub pad_factor: usize,
}

fn default_pad() -> usize {
    3
}

/// `[jump]`: weights ν_j and amplitudes g_j of the marks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSection {
    pub nu: Vec<f64>,
    pub g: Vec<f64>,
}

/// `[control]`: φ rows, one per time bin, one entry per mark.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub phi: Vec<Vec<f64>>,
}

/// `[noise]`: ε for single solves and the ε lists of sweeps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub eps: Option<f64>,
    #[serde(default)]
    pub sweep_eps: Vec<f64>,
    #[serde(default)]
    pub tail_eps: Vec<f64>,
}

/// `[run]`: master seed and Monte Carlo sample counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub sweep_samples: usize,
    pub tail_samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            sweep_samples: 400,
            tail_samples: 10_000,
        }
    }
}

/// `[event]`: closed ball around the skeleton endpoint under `phi`, with
/// radius `radius_fraction` times its distance from the noiseless endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub phi: Vec<Vec<f64>>,
    pub radius_fraction: f64,
}

/// `[audit]`: bound exponent, slack, fitted constants and the random
/// control family (S^level, `cases` draws on `n_bins` bins).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub p: f64,
    pub slack: f64,
    pub c_f: f64,
    pub c_g: f64,
    pub level: f64,
    pub cases: usize,
    pub n_bins: usize,
    pub spread: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            p: 2.0,
            slack: 0.2,
            c_f: 0.0,
            c_g: 0.0,
            level: 5.0,
            cases: 50,
            n_bins: 4,
            spread: 1.0,
        }
    }
}

impl AuditSection {
    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig {
            p: self.p,
            slack: self.slack,
            constants: FittedConstants {
                c_f: self.c_f,
                c_g: self.c_g,
            },
        }
    }
}

/// `[checks]`: acceptance thresholds used by `verify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    /// minimum log-log slope of the sweep statistic
    pub slope_floor: f64,
    pub r2_floor: f64,
    /// standard errors allowed in the monotonicity checks
    pub monotone_k: f64,
    /// relative band on I in the LDP checks
    pub ldp_band: f64,
    /// seeds for the zero-invariance and scalar closed-form checks
    pub seeds: usize,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            slope_floor: 0.4,
            r2_floor: 0.9,
            monotone_k: 2.0,
            ldp_band: 0.5,
            seeds: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub basis: BasisSection,
    pub initial: InitialCondition,
    pub jump: JumpSection,
    pub control: Option<ControlSection>,
    pub time: TimeGrid,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub rate: OptConfig,
    pub event: Option<EventSection>,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub checks: ChecksSection,
}

/// A parsed and validated configuration together with the hash of its text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub params: Parameters,
    pub basis: Arc<SpectralBasis>,
    pub jm: JumpModel,
    pub grid: TimeGrid,
    pub u0: StateField,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Read, parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| cfg_err(format!("config is not UTF-8: {e}")))?;
    let mut loaded = parse_config_str(text)?;
    loaded.sha256 = sha256_hex(&bytes);
    Ok(loaded)
}

pub fn parse_config_str(text: &str) -> Result<LoadedConfig> {
    let config: RunConfig = toml::from_str(text).map_err(cfg_err)?;
    let s = &config.params;
    let params = Parameters {
        alpha: s.alpha,
        beta: s.beta,
        gamma: s.gamma,
        sigma: s.sigma,
        lambda1: s.lambda1,
        lambda2: s.lambda2,
        l1: s.l1,
        l2: s.l2,
    };
    params.validate().map_err(cfg_err)?;
    let b = &config.basis;
    let basis = Arc::new(SpectralBasis::for_params(b.n1, b.n2, &params, b.pad_factor).map_err(cfg_err)?);
    let jm = JumpModel::from_lists(&config.jump.nu, &config.jump.g).map_err(cfg_err)?;
    let t = &config.time;
    let grid = TimeGrid::with_stride(t.t_final, t.n_steps, t.save_every).map_err(cfg_err)?;
    let u0 = config.initial.realize(&basis).map_err(cfg_err)?;
    if !(config.solver.blowup_factor > 0.0) {
        return Err(cfg_err("solver.blowup_factor must be > 0"));
    }
    config.rate.validate().map_err(cfg_err)?;
    if let Some(eps) = config.noise.eps {
        NoiseScale::new(eps).map_err(cfg_err)?;
    }
    for list in [&config.noise.sweep_eps, &config.noise.tail_eps] {
        if list.windows(2).any(|w| w[1] >= w[0]) || list.iter().any(|e| !(*e > 0.0)) {
            return Err(cfg_err(format!("eps lists must be positive and strictly decreasing, got {list:?}")));
        }
    }
    let loaded = LoadedConfig {
        sha256: sha256_hex(text.as_bytes()),
        config,
        params,
        basis,
        jm,
        grid,
        u0,
    };
    loaded.control()?;
    if let Some(ev) = &loaded.config.event {
        Control::from_rows(loaded.grid.t_final, &ev.phi)
            .and_then(|c| c.check(&loaded.jm).map(|_| c))
            .map_err(cfg_err)?;
        if !(ev.radius_fraction >= 0.0 && ev.radius_fraction < 1.0) {
            return Err(cfg_err("event.radius_fraction must lie in [0, 1)"));
        }
    }
    let a = &loaded.config.audit;
    if !(2.0..2.0 * params.sigma).contains(&a.p) {
        return Err(cfg_err(format!("audit.p = {} outside [2, 2σ)", a.p)));
    }
    if !(a.slack >= 0.0 && a.c_f >= 0.0 && a.c_g >= 0.0 && a.level >= 0.0 && a.n_bins >= 1) {
        return Err(cfg_err("audit: slack, c_f, c_g, level must be >= 0 and n_bins >= 1"));
    }
    let c = &loaded.config.checks;
    if !(c.monotone_k >= 0.0 && c.ldp_band >= 0.0 && c.ldp_band < 1.0 && c.seeds >= 1) {
        return Err(cfg_err("checks: monotone_k >= 0, 0 <= ldp_band < 1 and seeds >= 1 required"));
    }
    Ok(loaded)
}

impl LoadedConfig {
    /// The configured control, or φ ≡ 1 on a single bin.
    pub fn control(&self) -> Result<Control> {
        let c = match &self.config.control {
            Some(c) => Control::from_rows(self.grid.t_final, &c.phi),
            None => Control::constant(self.grid.t_final, 1, self.jm.len(), 1.0),
        }
        .map_err(cfg_err)?;
        c.check(&self.jm).map_err(cfg_err)?;
        Ok(c)
    }

    pub fn eps(&self) -> Result<NoiseScale> {
        let eps = self
            .config
            .noise
            .eps
            .ok_or_else(|| cfg_err("missing noise.eps"))?;
        NoiseScale::new(eps)
    }

    pub fn seed(&self, overridden: Option<u64>) -> u64 {
        overridden.unwrap_or(self.config.run.seed)
    }

    /// The `[event]` ball and the noiseless endpoint it is measured from.
    pub fn event(&self) -> Result<(EndpointSpec, StateField)> {
        let ev = self.config.event.as_ref().ok_or_else(|| cfg_err("missing [event] section"))?;
        let ctrl = Control::from_rows(self.grid.t_final, &ev.phi)?;
        let opts = self.config.solver;
        let center = skeleton_endpoint(&self.params, &self.basis, &self.u0, &self.jm, &ctrl, &self.grid, &opts)?;
        let one = Control::constant(self.grid.t_final, 1, self.jm.len(), 1.0)?;
        let noiseless = skeleton_endpoint(&self.params, &self.basis, &self.u0, &self.jm, &one, &self.grid, &opts)?;
        let radius = ev.radius_fraction * distance(&center.modes, &noiseless.modes);
        Ok((EndpointSpec::new(center, radius)?, noiseless))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[params]
alpha = 0.5
beta = 0.5
gamma = 1.0
sigma = 3.0
l1 = 3.141592653589793
l2 = 3.141592653589793

[basis]
n1 = 4
n2 = 4

[initial]
kind = "bump"
amplitude = 1.0

[jump]
nu = [1.0]
g = [0.5]

[time]
t_final = 0.5
n_steps = 10
"#;

    #[test]
    fn minimal_config_is_accepted() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.params.sigma, 3.0);
        assert_eq!(c.basis.pad_factor, 3);
        assert_eq!(c.grid.save_every, 1);
        assert_eq!(c.control().unwrap().n_bins(), 1);
        assert_eq!(c.sha256.len(), 64);
    }

    #[test]
    fn beta_constraint_is_cited() {
        let text = MINIMAL.replace("beta = 0.5", "beta = 0.9");
        let e = parse_config_str(&text).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("0<|β|<√(2σ+1)/σ"), "{e}");
    }

    #[test]
    fn sigma_constraint_is_cited() {
        let text = MINIMAL.replace("sigma = 3.0", "sigma = 2.0");
        let e = parse_config_str(&text).unwrap_err();
        assert!(e.to_string().contains("σ>2"), "{e}");
    }

    #[test]
    fn unknown_and_missing_keys_fail() {
        let text = MINIMAL.replace("gamma = 1.0", "gamma = 1.0\ndelta = 2.0");
        let e = parse_config_str(&text).unwrap_err();
        assert!(e.to_string().contains("delta"), "{e}");
        let text = MINIMAL.replace("gamma = 1.0\n", "");
        let e = parse_config_str(&text).unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
        let text = format!("{MINIMAL}\n[bogus]\nx = 1\n");
        assert!(parse_config_str(&text).is_err());
    }

    #[test]
    fn lambdas_and_controls_parse() {
        let text = format!(
            "{}\n[control]\nphi = [[1.5], [0.5]]\n",
            MINIMAL.replace("l1 = 3.1", "lambda1 = [[0.1, 0.0], [0.0, 0.2]]\nl1 = 3.1")
        );
        let c = parse_config_str(&text).unwrap();
        assert_eq!(c.params.lambda1[1].im, 0.2);
        assert_eq!(c.control().unwrap().phi()[[1, 0]], 0.5);
        let bad = format!("{MINIMAL}\n[control]\nphi = [[1.5, 1.0]]\n");
        assert!(parse_config_str(&bad).is_err());
    }
}
