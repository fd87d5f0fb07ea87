//! Physical constants of the generalized Ginzburg-Landau equation
//!
//! ```text
//! du = (1+iα)Δu dt − (1−iβ)|u|^{2σ}u dt + γu dt + F(u) dt + noise
//! F(u) = λ₁·∇(|u|²u) + (λ₂·∇u)|u|²
//! ```
//!
//! on the rectangle (0, L₁) × (0, L₂) with Dirichlet boundary conditions.
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex 2-vector acting on gradients as `λ·∇u = λ_x ∂_x u + λ_y ∂_y u`.
pub type CVec2 = [Complex64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Linear dispersion.
    pub alpha: f64,
    /// Nonlinear dispersion.
    pub beta: f64,
    /// Linear gain.
    pub gamma: f64,
    /// Nonlinearity exponent.
    pub sigma: f64,
    pub lambda1: CVec2,
    pub lambda2: CVec2,
    /// Domain width.
    pub l1: f64,
    /// Domain height.
    pub l2: f64,
}

impl Parameters {
    /// Upper bound on |β| for a given σ: √(2σ+1)/σ.
    pub fn beta_bound(sigma: f64) -> f64 {
        (2.0 * sigma + 1.0).sqrt() / sigma
    }

    /// Check the well-posedness constraints. The error text names the
    /// violated constraint.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.beta,
            self.gamma,
            self.sigma,
            self.l1,
            self.l2,
            self.lambda1[0].re,
            self.lambda1[0].im,
            self.lambda1[1].re,
            self.lambda1[1].im,
            self.lambda2[0].re,
            self.lambda2[0].im,
            self.lambda2[1].re,
            self.lambda2[1].im,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        if !(self.sigma > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "σ>2 violated (sigma = {})",
                self.sigma
            )));
        }
        let bound = Self::beta_bound(self.sigma);
        if !(self.beta.abs() > 0.0 && self.beta.abs() < bound) {
            return Err(Error::InvalidParameter(format!(
                "0<|β|<√(2σ+1)/σ violated (|beta| = {}, bound = {:.6})",
                self.beta.abs(),
                bound
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "γ>0 violated (gamma = {})",
                self.gamma
            )));
        }
        if !(self.l1 > 0.0 && self.l2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "L1>0 and L2>0 violated (L1 = {}, L2 = {})",
                self.l1, self.l2
            )));
        }
        Ok(())
    }

    /// `λ₁ = λ₂ = 0`, i.e. no derivative nonlinearity.
    pub fn has_derivative_term(&self) -> bool {
        self.lambda1
            .iter()
            .chain(self.lambda2.iter())
            .any(|c| *c != Complex64::new(0.0, 0.0))
    }

    /// |λ₁| + |λ₂| with the Euclidean norm on C².
    pub fn lambda_size(&self) -> f64 {
        let n = |v: &CVec2| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        n(&self.lambda1) + n(&self.lambda2)
    }
}

impl Default for Parameters {
    fn default() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            alpha: 0.5,
            beta: 0.5,
            gamma: 1.0,
            sigma: 3.0,
            lambda1: [z, z],
            lambda2: [z, z],
            l1: std::f64::consts::PI,
            l2: std::f64::consts::PI,
        }
    }
}
