//! Finite-activity Poisson random measures on [0, T] × Z.
//!
//! The mark space is a finite set `{z_1, …, z_K}` with weights ν_j = ν({z_j})
//! and real amplitudes g_j. The noise enters multiplicatively, `u·g(z)`.
//!
//! Sampling uses one unit-rate arrival stream per mark and maps arrival
//! `E_i` to time `E_i / rate`. Samples for different ε (or different
//! controls) drawn from the same seed therefore share their base randomness.
use ndarray::Array2;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::spectral::StateField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    /// ν({z_j}) > 0
    pub nu_weight: f64,
    /// amplitude g(z_j)
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Mark>", into = "Vec<Mark>")]
pub struct JumpModel {
    marks: Vec<Mark>,
    total_nu: f64,
}

impl JumpModel {
    pub fn new(marks: Vec<Mark>) -> Result<Self> {
        if marks.is_empty() {
            return Err(Error::InvalidJumpModel("at least one mark is required".into()));
        }
        for (j, m) in marks.iter().enumerate() {
            if !m.g.is_finite() || !m.nu_weight.is_finite() {
                return Err(Error::InvalidJumpModel(format!("mark {j} is not finite")));
            }
            if !(m.nu_weight > 0.0) {
                return Err(Error::InvalidJumpModel(format!(
                    "mark {j}: nu_weight must be > 0, got {}",
                    m.nu_weight
                )));
            }
        }
        let total_nu = marks.iter().map(|m| m.nu_weight).sum();
        Ok(Self { marks, total_nu })
    }

    /// Build from parallel weight and amplitude lists.
    pub fn from_lists(nu: &[f64], g: &[f64]) -> Result<Self> {
        if nu.len() != g.len() {
            return Err(Error::InvalidJumpModel(format!(
                "nu has {} entries but g has {}",
                nu.len(),
                g.len()
            )));
        }
        Self::new(
            nu.iter()
                .zip(g)
                .map(|(&nu_weight, &g)| Mark { nu_weight, g })
                .collect(),
        )
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn total_nu(&self) -> f64 {
        self.total_nu
    }

    /// Σ_j g_j ν_j
    pub fn g_moment(&self) -> f64 {
        self.marks.iter().map(|m| m.g * m.nu_weight).sum()
    }

    /// All amplitudes vanish.
    pub fn is_silent(&self) -> bool {
        self.marks.iter().all(|m| m.g == 0.0)
    }
}

impl TryFrom<Vec<Mark>> for JumpModel {
    type Error = Error;

    fn try_from(marks: Vec<Mark>) -> Result<Self> {
        Self::new(marks)
    }
}

impl From<JumpModel> for Vec<Mark> {
    fn from(jm: JumpModel) -> Self {
        jm.marks
    }
}

/// Noise intensity ε > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon.is_finite() {
            Ok(Self(epsilon))
        } else {
            Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for NoiseScale {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NoiseScale> for f64 {
    fn from(e: NoiseScale) -> f64 {
        e.0
    }
}

/// Deterministic, piecewise-constant control intensity
/// φ(t, z_j) = phi[⌊t·n_bins/T⌋][j].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlRepr", into = "ControlRepr")]
pub struct Control {
    t_final: f64,
    phi: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct ControlRepr {
    t_final: f64,
    phi: Vec<Vec<f64>>,
}

impl TryFrom<ControlRepr> for Control {
    type Error = Error;

    fn try_from(r: ControlRepr) -> Result<Self> {
        Control::from_rows(r.t_final, &r.phi)
    }
}

impl From<Control> for ControlRepr {
    fn from(c: Control) -> Self {
        ControlRepr {
            t_final: c.t_final,
            phi: c.phi.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl Control {
    pub fn new(t_final: f64, phi: Array2<f64>) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidControl(format!("T must be > 0, got {t_final}")));
        }
        let (nb, k) = phi.dim();
        if nb == 0 || k == 0 {
            return Err(Error::InvalidControl(format!(
                "control needs at least one bin and one mark, got {nb}×{k}"
            )));
        }
        if let Some(((b, j), v)) = phi.indexed_iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidControl(format!(
                "phi[{b}][{j}] = {v} must be finite and >= 0"
            )));
        }
        Ok(Self { t_final, phi })
    }

    pub fn from_rows(t_final: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let nb = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidControl("ragged phi rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let phi = Array2::from_shape_vec((nb, k), flat)
            .map_err(|e| Error::InvalidControl(e.to_string()))?;
        Self::new(t_final, phi)
    }

    /// φ ≡ value.
    pub fn constant(t_final: f64, n_bins: usize, n_marks: usize, value: f64) -> Result<Self> {
        Self::new(t_final, Array2::from_elem((n_bins, n_marks), value))
    }

    pub fn n_bins(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_marks(&self) -> usize {
        self.phi.ncols()
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn bin_width(&self) -> f64 {
        self.t_final / self.n_bins() as f64
    }

    /// Bin containing t; t = T belongs to the last bin.
    pub fn bin(&self, t: f64) -> usize {
        let b = (t * self.n_bins() as f64 / self.t_final).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.n_bins() - 1)
        }
    }

    /// Left edges of the bins plus T.
    pub fn bin_edges(&self) -> Vec<f64> {
        let nb = self.n_bins();
        (0..=nb)
            .map(|b| {
                if b == nb {
                    self.t_final
                } else {
                    b as f64 * self.t_final / nb as f64
                }
            })
            .collect()
    }

    pub fn value(&self, t: f64, mark: usize) -> f64 {
        self.phi[[self.bin(t), mark]]
    }

    /// Same control with T rescaled; used for time-scaling checks.
    pub fn with_t_final(&self, t_final: f64) -> Result<Self> {
        Self::new(t_final, self.phi.clone())
    }

    fn check_marks(&self, jm: &JumpModel) -> Result<()> {
        if self.n_marks() != jm.len() {
            return Err(Error::InvalidControl(format!(
                "control has {} marks, jump model has {}",
                self.n_marks(),
                jm.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check(&self, jm: &JumpModel) -> Result<()> {
        self.check_marks(jm)
    }

    /// c_b = Σ_j g_j (φ_{b,j} − 1) ν_j for every bin.
    pub fn drift_coefficients(&self, jm: &JumpModel) -> Result<Vec<f64>> {
        self.check_marks(jm)?;
        Ok(self
            .phi
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(jm.marks())
                    .map(|(p, m)| m.g * (p - 1.0) * m.nu_weight)
                    .sum()
            })
            .collect())
    }

    /// Σ_j g_j φ_{b,j} ν_j for every bin (compensator of the controlled measure).
    pub fn controlled_g_moments(&self, jm: &JumpModel) -> Result<Vec<f64>> {
        self.check_marks(jm)?;
        Ok(self
            .phi
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(jm.marks()).map(|(p, m)| m.g * p * m.nu_weight).sum())
            .collect())
    }

    /// Σ_j |g_j| |φ_{b,j} − 1| ν_j for every bin.
    pub fn abs_drift_coefficients(&self, jm: &JumpModel) -> Result<Vec<f64>> {
        self.check_marks(jm)?;
        Ok(self
            .phi
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(jm.marks())
                    .map(|(p, m)| m.g.abs() * (p - 1.0).abs() * m.nu_weight)
                    .sum()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub mark: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpSample {
    pub events: Vec<JumpEvent>,
}

impl JumpSample {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of events per mark.
    pub fn counts(&self, n_marks: usize) -> Vec<usize> {
        let mut c = vec![0; n_marks];
        for e in &self.events {
            c[e.mark] += 1;
        }
        c
    }

    fn from_unsorted(mut events: Vec<JumpEvent>) -> Self {
        events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.mark.cmp(&b.mark)));
        Self { events }
    }
}

/// Σ_j e^{δ g_j²} ν_j, the exponential-integrability sum. Finite for any
/// finite mark set.
pub fn validate_model(jm: &JumpModel, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta must be > 0, got {delta}")));
    }
    let s: f64 = jm
        .marks()
        .iter()
        .map(|m| (delta * m.g * m.g).exp() * m.nu_weight)
        .sum();
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::InvalidJumpModel(format!(
            "exponential integrability sum overflows for delta = {delta}"
        )))
    }
}

const ARRIVALS: u64 = 0;
const ACCEPT: u64 = 1;

fn stream_id(mark: usize, purpose: u64) -> u64 {
    2 * mark as u64 + purpose
}

/// Arrival times on [0, T] of a homogeneous Poisson process of the given
/// rate, read from the mark's arrival stream.
fn arrivals(seed: u64, mark: usize, rate: f64, t_final: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(rate > 0.0) {
        return out;
    }
    let mut rng = stream_rng(seed, stream_id(mark, ARRIVALS));
    let mut e = 0.0;
    loop {
        let step: f64 = rng.sample(Exp1);
        e += step;
        let t = e / rate;
        if t > t_final {
            break;
        }
        out.push(t);
    }
    out
}

/// Poisson random measure with intensity ε⁻¹ λ_T ⊗ ν on [0, T] × Z.
pub fn sample_prm(jm: &JumpModel, eps: NoiseScale, t_final: f64, seed: u64) -> Result<JumpSample> {
    if !(t_final > 0.0) {
        return Err(Error::Precondition(format!("T must be > 0, got {t_final}")));
    }
    let inv = 1.0 / eps.epsilon();
    let mut events = Vec::new();
    for (j, m) in jm.marks().iter().enumerate() {
        events.extend(
            arrivals(seed, j, inv * m.nu_weight, t_final)
                .into_iter()
                .map(|t| JumpEvent { t, mark: j }),
        );
    }
    Ok(JumpSample::from_unsorted(events))
}

/// Poisson random measure with intensity ε⁻¹ φ(t, z) ν(dz) dt, realized by
/// thinning a measure of per-mark intensity ε⁻¹ M_j ν_j, M_j = max_b φ_{b,j}.
/// A candidate at (t, j) is kept with probability φ(t, j)/M_j.
pub fn sample_controlled_prm(
    jm: &JumpModel,
    eps: NoiseScale,
    ctrl: &Control,
    seed: u64,
) -> Result<JumpSample> {
    ctrl.check(jm)?;
    let inv = 1.0 / eps.epsilon();
    let mut events = Vec::new();
    for (j, m) in jm.marks().iter().enumerate() {
        let col = ctrl.phi().column(j);
        let dominating = col.iter().copied().fold(0.0, f64::max);
        if dominating == 0.0 {
            continue;
        }
        let candidates = arrivals(seed, j, inv * dominating * m.nu_weight, ctrl.t_final());
        let mut accept = stream_rng(seed, stream_id(j, ACCEPT));
        for t in candidates {
            let u: f64 = accept.random();
            if u * dominating < ctrl.value(t, j) {
                events.push(JumpEvent { t, mark: j });
            }
        }
    }
    Ok(JumpSample::from_unsorted(events))
}

/// Σ_j g_j (φ(t, z_j) − 1) ν_j.
pub fn compensator_coefficient(jm: &JumpModel, ctrl: &Control, t: f64) -> Result<f64> {
    ctrl.check(jm)?;
    if !(0.0..=ctrl.t_final()).contains(&t) {
        return Err(Error::Precondition(format!(
            "t = {t} outside [0, {}]",
            ctrl.t_final()
        )));
    }
    Ok(jm
        .marks()
        .iter()
        .enumerate()
        .map(|(j, m)| m.g * (ctrl.value(t, j) - 1.0) * m.nu_weight)
        .sum())
}

/// `∫_Z u g(z) (φ(t,z) − 1) ν(dz) = c(t) u`.
pub fn compensator_drift(u: &StateField, jm: &JumpModel, ctrl: &Control, t: f64) -> Result<StateField> {
    let c = compensator_coefficient(jm, ctrl, t)?;
    let mut out = u.clone();
    out.modes.mapv_inplace(|v| v * c);
    Ok(out)
}
