//! Orthonormal sine basis on D = (0, L₁) × (0, L₂) with Dirichlet boundary
//! conditions and the pseudo-spectral evaluation of the nonlinear terms.
//!
//! Basis functions are
//!
//! ```text
//! e_{k,m}(x, y) = 2/√(L₁L₂) · sin(kπx/L₁) · sin(mπy/L₂),   k, m ≥ 1
//! ```
//!
//! so the Laplacian is diagonal with eigenvalues μ_{k,m} = −π²(k²/L₁² + m²/L₂²).
//! Products are evaluated on a uniform midpoint grid with `M = pad·n + 1`
//! points per direction. The midpoint rule on that grid integrates
//! `cos(pπx/L)` exactly for `p < 2M`, so the projection of any product of
//! up to `2·pad − 1` fields onto the basis is alias-free.
//!
//! A first derivative turns a sine factor into a cosine, and a product with
//! an odd number of sine factors is not integrated exactly by the midpoint
//! rule. Such grid functions are projected through their cosine series
//! instead: the DCT coefficients are exact on the grid and
//! `∫₀ᴸ cos(pπx/L) sin(kπx/L) dx` is known in closed form.
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    pub pad_factor: usize,
    /// Dirichlet Laplacian eigenvalues, `eigenvalues[[k, m]]` for 0-indexed k, m.
    pub eigenvalues: Array2<f64>,
    /// Collocation points per direction.
    pub m1: usize,
    pub m2: usize,
    // evaluation tables: grid = gx · a · gy_t
    gx: Array2<C>,
    gy_t: Array2<C>,
    dgx: Array2<C>,
    dgy_t: Array2<C>,
    // projection tables: a = px · grid · py
    px: Array2<C>,
    py: Array2<C>,
    // projection of cosine-type grid functions onto sine modes
    pxc: Array2<C>,
    pyc: Array2<C>,
    /// Quadrature weight of one collocation cell.
    cell: f64,
}

impl SpectralBasis {
    pub fn new(n1: usize, n2: usize, l1: f64, l2: f64, pad_factor: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidDimension(format!(
                "mode counts must be positive (n1 = {n1}, n2 = {n2})"
            )));
        }
        if pad_factor == 0 {
            return Err(Error::InvalidDimension("pad_factor must be >= 1".into()));
        }
        if !(l1 > 0.0 && l2 > 0.0) || !l1.is_finite() || !l2.is_finite() {
            return Err(Error::InvalidDimension(format!(
                "domain lengths must be positive (L1 = {l1}, L2 = {l2})"
            )));
        }
        let m1 = pad_factor * n1 + 1;
        let m2 = pad_factor * n2 + 1;
        let norm = 2.0 / (l1 * l2).sqrt();
        let cell = (l1 / m1 as f64) * (l2 / m2 as f64);

        let eigenvalues = Array2::from_shape_fn((n1, n2), |(k, m)| {
            let (k, m) = ((k + 1) as f64, (m + 1) as f64);
            -PI * PI * (k * k / (l1 * l1) + m * m / (l2 * l2))
        });

        let sin_tab = |n: usize, mm: usize, l: f64| {
            Array2::from_shape_fn((mm, n), |(j, k)| {
                let x = (j as f64 + 0.5) * l / mm as f64;
                C::new(((k + 1) as f64 * PI * x / l).sin(), 0.0)
            })
        };
        let dcos_tab = |n: usize, mm: usize, l: f64| {
            Array2::from_shape_fn((mm, n), |(j, k)| {
                let x = (j as f64 + 0.5) * l / mm as f64;
                let w = (k + 1) as f64 * PI / l;
                C::new(w * (w * x).cos(), 0.0)
            })
        };
        let sx = sin_tab(n1, m1, l1);
        let sy = sin_tab(n2, m2, l2);
        let gx = sx.clone();
        let gy_t = sy.t().mapv(|v| v * norm);
        let dgx = dcos_tab(n1, m1, l1);
        let dgy_t = dcos_tab(n2, m2, l2).t().mapv(|v| v * norm);
        let px = sx.t().to_owned();
        let py = sy.mapv(|v| v * norm * cell);
        // px carries no weight (the full cell weight sits in py), so the
        // x-direction cosine table is rescaled by M₁/L₁ and the y-direction
        // one absorbs the x weight L₁/M₁
        let pxc = cosine_projection(n1, m1, l1).mapv(|v| v * (m1 as f64 / l1));
        let pyc = cosine_projection(n2, m2, l2)
            .t()
            .mapv(|v| v * norm * (l1 / m1 as f64));

        Ok(Self {
            n1,
            n2,
            l1,
            l2,
            pad_factor,
            eigenvalues,
            m1,
            m2,
            gx,
            gy_t,
            dgx,
            dgy_t,
            px,
            py,
            pxc,
            pyc,
            cell,
        })
    }

    /// Basis for the parameter set's domain.
    pub fn for_params(n1: usize, n2: usize, params: &Parameters, pad_factor: usize) -> Result<Self> {
        Self::new(n1, n2, params.l1, params.l2, pad_factor)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Collocation coordinates in x.
    pub fn grid_x(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.m1, |j| (j as f64 + 0.5) * self.l1 / self.m1 as f64)
    }

    pub fn grid_y(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.m2, |j| (j as f64 + 0.5) * self.l2 / self.m2 as f64)
    }

    /// Quadrature weight per collocation point.
    pub fn cell_weight(&self) -> f64 {
        self.cell
    }

    /// Evaluate a mode array on the collocation grid.
    pub fn to_grid(&self, modes: &Array2<C>) -> Array2<C> {
        self.gx.dot(&modes.dot(&self.gy_t))
    }

    /// Project grid values onto the basis (quadrature inner products).
    pub fn to_modes(&self, grid: &Array2<C>) -> Array2<C> {
        self.px.dot(&grid.dot(&self.py))
    }

    /// `(u, ∂ₓu, ∂ᵧu)` on the collocation grid.
    pub fn grid_with_gradient(&self, modes: &Array2<C>) -> (Array2<C>, Array2<C>, Array2<C>) {
        let tmp = modes.dot(&self.gy_t);
        let u = self.gx.dot(&tmp);
        let ux = self.dgx.dot(&tmp);
        let uy = self.gx.dot(&modes.dot(&self.dgy_t));
        (u, ux, uy)
    }

    /// Σ |μ_{k,m}| |a_{k,m}|² = ‖∇u‖².
    pub fn grad_norm_sq(&self, modes: &Array2<C>) -> f64 {
        Zip::from(modes)
            .and(&self.eigenvalues)
            .fold(0.0, |acc, a, mu| acc + mu.abs() * a.norm_sqr())
    }

    /// Σ μ² |a|² = ‖Δu‖².
    pub fn laplacian_norm_sq(&self, modes: &Array2<C>) -> f64 {
        Zip::from(modes)
            .and(&self.eigenvalues)
            .fold(0.0, |acc, a, mu| acc + mu * mu * a.norm_sqr())
    }

    /// ∫|u|^p by collocation quadrature.
    pub fn lp_pow(&self, modes: &Array2<C>, p: f64) -> f64 {
        let g = self.to_grid(modes);
        self.cell * g.iter().map(|v| pow_abs(v.norm(), p)).sum::<f64>()
    }

    /// ∫ |u|^{2σ} |∇u|² by collocation quadrature.
    pub fn weighted_gradient_integral(&self, modes: &Array2<C>, sigma: f64) -> f64 {
        let (u, ux, uy) = self.grid_with_gradient(modes);
        let mut acc = 0.0;
        Zip::from(&u).and(&ux).and(&uy).for_each(|u, ux, uy| {
            acc += pow_abs(u.norm(), 2.0 * sigma) * (ux.norm_sqr() + uy.norm_sqr());
        });
        self.cell * acc
    }

    /// Pointwise evaluation of `−(1−iβ)|u|^{2σ}u + F(u)` projected back
    /// onto the basis. γu is linear and handled by the caller.
    pub fn nonlinear_part(&self, modes: &Array2<C>, params: &Parameters) -> Array2<C> {
        self.nonlinear_terms(modes, params, true, true)
    }

    fn nonlinear_terms(
        &self,
        modes: &Array2<C>,
        params: &Parameters,
        power: bool,
        derivative: bool,
    ) -> Array2<C> {
        let derivative = derivative && params.has_derivative_term();
        if !power && !derivative {
            return Array2::zeros(modes.raw_dim());
        }
        let damp = -C::new(1.0, -params.beta);
        let two_s = 2.0 * params.sigma;
        if !derivative {
            let mut u = self.to_grid(modes);
            u.mapv_inplace(|v| damp * v * pow_abs(v.norm(), two_s));
            return self.to_modes(&u);
        }
        let (u, ux, uy) = self.grid_with_gradient(modes);
        // F(u) = ((2λ₁+λ₂)·∇u)|u|² + (λ₁·∇ū) u², split by the direction of
        // the derivative so each part has a definite parity
        let c = [
            params.lambda1[0] * 2.0 + params.lambda2[0],
            params.lambda1[1] * 2.0 + params.lambda2[1],
        ];
        let l1 = params.lambda1;
        let mut gx = Array2::<C>::zeros(u.raw_dim());
        let mut gy = Array2::<C>::zeros(u.raw_dim());
        let mut gs = Array2::<C>::zeros(u.raw_dim());
        Zip::from(&mut gx)
            .and(&mut gy)
            .and(&mut gs)
            .and(&u)
            .and(&ux)
            .and(&uy)
            .for_each(|gx, gy, gs, &v, ux, uy| {
                let m2 = v.norm_sqr();
                let v2 = v * v;
                *gx = c[0] * ux * m2 + l1[0] * ux.conj() * v2;
                *gy = c[1] * uy * m2 + l1[1] * uy.conj() * v2;
                if power {
                    *gs = damp * v * pow_abs(m2.sqrt(), two_s);
                }
            });
        let mut rhs = gy.dot(&self.pyc);
        if power {
            rhs += &gs.dot(&self.py);
        }
        let mut out = self.px.dot(&rhs);
        out += &self.pxc.dot(&gx.dot(&self.py));
        out
    }
}

/// Matrix `Q` (n × M) with `Σ_j Q[k][j] g(x_j) = ∫₀ᴸ g(x) sin((k+1)πx/L) dx`
/// for cosine polynomials `g` of degree below `M` sampled on the midpoint grid.
fn cosine_projection(n: usize, mm: usize, l: f64) -> Array2<C> {
    // DCT-II on the midpoint grid: c_p = ω_p/M Σ_j g(x_j) cos(pπx_j/L)
    let overlap = |k: usize, p: usize| -> f64 {
        // ∫₀ᴸ cos(pπx/L) sin(kπx/L) dx
        if (k + p) % 2 == 0 {
            0.0
        } else {
            let (k, p) = (k as f64, p as f64);
            l / PI * 2.0 * k / (k * k - p * p)
        }
    };
    Array2::from_shape_fn((n, mm), |(k, j)| {
        let x = (j as f64 + 0.5) / mm as f64;
        let mut acc = 0.0;
        for p in 0..mm {
            let w = if p == 0 { 1.0 } else { 2.0 };
            acc += overlap(k + 1, p) * w * (p as f64 * PI * x).cos();
        }
        C::new(acc / mm as f64, 0.0)
    })
}

/// |u|^p with the convention 0^p = 0 for p > 0.
#[inline]
pub(crate) fn pow_abs(r: f64, p: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        r.powi(p as i32)
    } else {
        (p * r.ln()).exp()
    }
}

/// A complex field held through its sine-mode coefficients.
#[derive(Debug, Clone)]
pub struct StateField {
    pub modes: Array2<C>,
    pub basis: Arc<SpectralBasis>,
}

impl StateField {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        Self {
            modes: Array2::zeros((basis.n1, basis.n2)),
            basis: Arc::clone(basis),
        }
    }

    pub fn from_modes(basis: &Arc<SpectralBasis>, modes: Array2<C>) -> Result<Self> {
        if modes.dim() != basis.shape() {
            return Err(Error::InvalidDimension(format!(
                "mode array {:?} does not match basis {:?}",
                modes.dim(),
                basis.shape()
            )));
        }
        Ok(Self {
            modes,
            basis: Arc::clone(basis),
        })
    }

    /// `c · e_{k,m}` with 1-indexed k, m.
    pub fn unit(basis: &Arc<SpectralBasis>, k: usize, m: usize, c: C) -> Result<Self> {
        if k == 0 || m == 0 || k > basis.n1 || m > basis.n2 {
            return Err(Error::InvalidDimension(format!(
                "mode ({k}, {m}) outside basis {:?}",
                basis.shape()
            )));
        }
        let mut f = Self::zeros(basis);
        f.modes[[k - 1, m - 1]] = c;
        Ok(f)
    }

    /// Values on the collocation grid.
    pub fn to_grid(&self) -> Array2<C> {
        self.basis.to_grid(&self.modes)
    }

    pub fn from_grid(basis: &Arc<SpectralBasis>, grid: &Array2<C>) -> Result<Self> {
        if grid.dim() != (basis.m1, basis.m2) {
            return Err(Error::InvalidDimension(format!(
                "grid {:?} does not match collocation grid ({}, {})",
                grid.dim(),
                basis.m1,
                basis.m2
            )));
        }
        Self::from_modes(basis, basis.to_modes(grid))
    }

    pub fn is_finite(&self) -> bool {
        self.modes.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// ‖u‖ by Parseval.
    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    pub fn l2_sq(&self) -> f64 {
        self.modes.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|v| *v == ZERO)
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("state field"))
        }
    }

    fn with_modes(&self, modes: Array2<C>) -> Self {
        Self {
            modes,
            basis: Arc::clone(&self.basis),
        }
    }

    /// ‖self − other‖ after zero-padding both to the larger mode block.
    pub fn distance_embedded(&self, other: &StateField) -> f64 {
        let (a1, a2) = self.modes.dim();
        let (b1, b2) = other.modes.dim();
        let mut acc = 0.0;
        for k in 0..a1.max(b1) {
            for m in 0..a2.max(b2) {
                let a = if k < a1 && m < a2 { self.modes[[k, m]] } else { ZERO };
                let b = if k < b1 && m < b2 { other.modes[[k, m]] } else { ZERO };
                acc += (a - b).norm_sqr();
            }
        }
        acc.sqrt()
    }
}

/// ‖·‖ for fields on possibly different bases is [`StateField::distance_embedded`];
/// this is the fast path for a shared basis.
pub fn distance(a: &Array2<C>, b: &Array2<C>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0, |acc, x, y| acc + (x - y).norm_sqr())
        .sqrt()
}

/// `(1+iα)Δu`, exact mode-wise multiplication.
pub fn apply_a(u: &StateField, params: &Parameters) -> Result<StateField> {
    u.check_finite()?;
    let f = C::new(1.0, params.alpha);
    let mut out = u.modes.clone();
    Zip::from(&mut out)
        .and(&u.basis.eigenvalues)
        .for_each(|a, mu| *a *= f * mu);
    Ok(u.with_modes(out))
}

/// `F(u) = λ₁·∇(|u|²u) + (λ₂·∇u)|u|²`, evaluated as
/// `((2λ₁+λ₂)·∇u)|u|² + (λ₁·∇ū)u²`.
///
/// The product rule gives `∇(|u|²u) = 2|u|²∇u + u²∇ū`; the second factor
/// carries the conjugate gradient.
pub fn apply_f(u: &StateField, params: &Parameters) -> Result<StateField> {
    u.check_finite()?;
    let out = u.basis.nonlinear_terms(&u.modes, params, false, true);
    Ok(u.with_modes(out))
}

/// `−(1−iβ)|u|^{2σ}u + γu + F(u)`.
pub fn apply_b(u: &StateField, params: &Parameters) -> Result<StateField> {
    u.check_finite()?;
    let mut out = u.basis.nonlinear_part(&u.modes, params);
    out.zip_mut_with(&u.modes, |o, a| *o += a * params.gamma);
    Ok(u.with_modes(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// ‖u‖
    pub l2: f64,
    /// ‖∇u‖
    pub grad_l2: f64,
    /// `(p, ‖u‖_p)` pairs from collocation quadrature.
    pub lp: Vec<(f64, f64)>,
}

impl NormReport {
    pub fn lp(&self, p: f64) -> Option<f64> {
        self.lp.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }

    /// Map view keyed by integer exponent, for the even-integer case.
    pub fn lp_map(&self) -> BTreeMap<u32, f64> {
        self.lp
            .iter()
            .filter(|(p, _)| p.fract() == 0.0)
            .map(|(p, v)| (*p as u32, *v))
            .collect()
    }
}

pub fn compute_norms(u: &StateField, p_list: &[f64]) -> Result<NormReport> {
    u.check_finite()?;
    if let Some(p) = p_list.iter().find(|p| !(**p >= 1.0)) {
        return Err(Error::Precondition(format!("Lp exponent must be >= 1, got {p}")));
    }
    let basis = &u.basis;
    let lp = if p_list.is_empty() {
        Vec::new()
    } else {
        let g = u.to_grid();
        let mags: Vec<f64> = g.iter().map(|v| v.norm()).collect();
        p_list
            .iter()
            .map(|&p| {
                let s: f64 = mags.iter().map(|&r| pow_abs(r, p)).sum();
                (p, (basis.cell * s).powf(1.0 / p))
            })
            .collect()
    };
    Ok(NormReport {
        l2: u.l2(),
        grad_l2: basis.grad_norm_sq(&u.modes).sqrt(),
        lp,
    })
}

/// One nonzero sine coefficient, 1-indexed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub k: usize,
    pub m: usize,
    pub re: f64,
    pub im: f64,
}

/// Initial data that can be realized on any basis size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    /// Explicit sine coefficients; entries outside the basis are truncated.
    Modes { modes: Vec<ModeEntry> },
    /// `A · 16 x(L₁−x) y(L₂−y) / (L₁²L₂²)`, peak value `A` at the centre.
    /// Coefficients are exact: ∫₀ᴸ x(L−x) sin(kπx/L) dx = 4L³/(kπ)³ for odd k.
    Bump { amplitude: f64 },
}

impl InitialCondition {
    pub fn realize(&self, basis: &Arc<SpectralBasis>) -> Result<StateField> {
        let mut f = StateField::zeros(basis);
        match self {
            InitialCondition::Zero => {}
            InitialCondition::Modes { modes } => {
                for e in modes {
                    if e.k == 0 || e.m == 0 {
                        return Err(Error::InvalidDimension(format!(
                            "mode indices are 1-based, got ({}, {})",
                            e.k, e.m
                        )));
                    }
                    if e.k <= basis.n1 && e.m <= basis.n2 {
                        f.modes[[e.k - 1, e.m - 1]] += C::new(e.re, e.im);
                    }
                }
            }
            InitialCondition::Bump { amplitude } => {
                let (l1, l2) = (basis.l1, basis.l2);
                let coef = |k: usize, l: f64| {
                    if k % 2 == 1 {
                        4.0 * l.powi(3) / (k as f64 * PI).powi(3)
                    } else {
                        0.0
                    }
                };
                let scale = amplitude * 16.0 / (l1 * l1 * l2 * l2) * 2.0 / (l1 * l2).sqrt();
                for k in 0..basis.n1 {
                    for m in 0..basis.n2 {
                        f.modes[[k, m]] = C::new(scale * coef(k + 1, l1) * coef(m + 1, l2), 0.0);
                    }
                }
            }
        }
        f.check_finite()?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pi_basis(n1: usize, n2: usize) -> Arc<SpectralBasis> {
        Arc::new(SpectralBasis::new(n1, n2, PI, PI, 4).unwrap())
    }

    fn random_field(basis: &Arc<SpectralBasis>, rng: &mut ChaCha8Rng, scale: f64) -> StateField {
        let modes = Array2::from_shape_fn(basis.shape(), |_| {
            C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
        });
        StateField::from_modes(basis, modes).unwrap()
    }

    #[test]
    fn eigenvalue_table() {
        let b = SpectralBasis::new(1, 1, PI, PI, 4).unwrap();
        assert!((b.eigenvalues[[0, 0]] + 2.0).abs() < 1e-14);
        let b = SpectralBasis::new(2, 1, PI, PI, 4).unwrap();
        assert!((b.eigenvalues[[0, 0]] + 2.0).abs() < 1e-14);
        assert!((b.eigenvalues[[1, 0]] + 5.0).abs() < 1e-14);
        let b = SpectralBasis::new(8, 8, 1.0, 2.0, 4).unwrap();
        assert!((b.eigenvalues[[0, 0]] + PI * PI * 1.25).abs() < 1e-13);
        assert!(b.eigenvalues.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(SpectralBasis::new(0, 4, 1.0, 1.0, 4).is_err());
        assert!(SpectralBasis::new(4, 0, 1.0, 1.0, 4).is_err());
        assert!(SpectralBasis::new(4, 4, 1.0, 1.0, 0).is_err());
        assert!(SpectralBasis::new(4, 4, -1.0, 1.0, 2).is_err());
    }

    #[test]
    fn apply_a_examples() {
        let b = pi_basis(2, 2);
        let e = StateField::unit(&b, 1, 1, C::new(1.0, 0.0)).unwrap();
        let mut p = Parameters::default();
        p.alpha = 0.0;
        let r = apply_a(&e, &p).unwrap();
        assert!((r.modes[[0, 0]] - C::new(-2.0, 0.0)).norm() < 1e-14);
        p.alpha = 0.5;
        let r = apply_a(&e, &p).unwrap();
        assert!((r.modes[[0, 0]] - C::new(-2.0, -1.0)).norm() < 1e-14);
        let z = StateField::zeros(&b);
        assert!(apply_a(&z, &p).unwrap().is_zero());
    }

    #[test]
    fn rejects_non_finite() {
        let b = pi_basis(2, 2);
        let mut u = StateField::zeros(&b);
        u.modes[[0, 1]] = C::new(f64::NAN, 0.0);
        let p = Parameters::default();
        assert!(apply_a(&u, &p).is_err());
        assert!(apply_b(&u, &p).is_err());
        assert!(apply_f(&u, &p).is_err());
        assert!(compute_norms(&u, &[2.0]).is_err());
    }

    #[test]
    fn zero_preservation() {
        let b = pi_basis(6, 5);
        let mut p = Parameters::default();
        p.lambda1 = [C::new(0.3, 0.1), C::new(-0.2, 0.4)];
        p.lambda2 = [C::new(0.1, 0.0), C::new(0.0, 0.7)];
        let z = StateField::zeros(&b);
        assert!(apply_a(&z, &p).unwrap().is_zero());
        assert!(apply_b(&z, &p).unwrap().is_zero());
        assert!(apply_f(&z, &p).unwrap().is_zero());
    }

    #[test]
    fn f_vanishes_without_lambdas() {
        let b = pi_basis(4, 4);
        let u = StateField::unit(&b, 1, 1, C::new(0.7, -0.2)).unwrap();
        let p = Parameters::default();
        assert!(apply_f(&u, &p).unwrap().is_zero());
    }

    #[test]
    fn unit_norms() {
        let b = pi_basis(4, 4);
        let u = StateField::unit(&b, 1, 1, C::new(1.0, 0.0)).unwrap();
        let r = compute_norms(&u, &[2.0, 4.0]).unwrap();
        assert!((r.l2 - 1.0).abs() < 1e-14);
        assert!((r.grad_l2 - 2f64.sqrt()).abs() < 1e-14);
        assert!((r.lp(2.0).unwrap() - 1.0).abs() < 1e-13);
        // ‖e₁₁‖₄⁴ = (2/π)⁴ (3π/8)² = 9/(4π²), exact on the padded grid
        let want = 9.0 / (4.0 * PI * PI);
        assert!((r.lp(4.0).unwrap().powi(4) - want).abs() < 1e-13);
        assert_eq!(r.lp_map().len(), 2);
    }

    #[test]
    fn roundtrip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n1, n2, pad) in &[(1, 1, 1), (5, 3, 1), (8, 8, 4), (6, 9, 2)] {
            let b = Arc::new(SpectralBasis::new(n1, n2, 1.3, 2.1, pad).unwrap());
            let u = random_field(&b, &mut rng, 1.0);
            let back = b.to_modes(&u.to_grid());
            let rel = distance(&back, &u.modes) / u.l2();
            assert!(rel < 1e-12, "roundtrip rel {rel}");
            let r = compute_norms(&u, &[2.0]).unwrap();
            assert!((r.lp(2.0).unwrap() - r.l2).abs() < 1e-12 * r.l2);
        }
    }

    #[test]
    fn conjugate_consistency() {
        let b = pi_basis(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut u = random_field(&b, &mut rng, 0.5);
        u.modes.mapv_inplace(|v| C::new(v.re, 0.0));
        let mut p = Parameters::default();
        p.lambda1 = [C::new(0.4, 0.0), C::new(-0.3, 0.0)];
        p.lambda2 = [C::new(0.2, 0.0), C::new(0.5, 0.0)];
        let f = apply_f(&u, &p).unwrap();
        let g = f.to_grid();
        let scale = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let imag = g.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        assert!(imag <= 1e-12 * scale.max(1.0), "imag {imag}");
        // complex λ produce an imaginary part
        p.lambda1[0] = C::new(0.4, 0.3);
        let g = apply_f(&u, &p).unwrap().to_grid();
        assert!(g.iter().map(|v| v.im.abs()).fold(0.0, f64::max) > 1e-6);
    }

    #[test]
    fn sobolev_interpolation() {
        let b = pi_basis(8, 8);
        let s = 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..200 {
            let nn = 1 + i % 8;
            let mut u = random_field(&b, &mut rng, 1.0);
            for k in 0..8 {
                for m in 0..8 {
                    if k >= nn || m >= nn {
                        u.modes[[k, m]] = ZERO;
                    }
                }
            }
            let r = compute_norms(&u, &[2.0 * s + 2.0, 4.0 * s + 2.0]).unwrap();
            let lhs = r.lp(4.0 * s + 2.0).unwrap();
            let rhs = r.grad_l2.powf(s / (2.0 * s + 1.0))
                * r.lp(2.0 * s + 2.0).unwrap().powf((s + 1.0) / (2.0 * s + 1.0));
            assert!(lhs <= rhs * (1.0 + 1e-9), "case {i}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn non_integer_sigma_zero_field() {
        let b = pi_basis(3, 3);
        let mut p = Parameters::default();
        p.sigma = 2.5;
        p.beta = 0.3;
        let z = StateField::zeros(&b);
        assert!(apply_b(&z, &p).unwrap().is_zero());
        let u = StateField::unit(&b, 1, 1, C::new(0.3, 0.0)).unwrap();
        assert!(apply_b(&u, &p).unwrap().is_finite());
    }

    #[test]
    fn bump_coefficients_match_quadrature() {
        // fine midpoint quadrature of the explicit bump
        let b = Arc::new(SpectralBasis::new(5, 5, 2.0, 3.0, 4).unwrap());
        let u = InitialCondition::Bump { amplitude: 0.8 }.realize(&b).unwrap();
        let nq = 2000;
        let (l1, l2) = (2.0, 3.0);
        let mut c = [0.0; 3];
        for (idx, (k, m)) in [(1usize, 1usize), (3, 1), (1, 5)].iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..nq {
                let x = (i as f64 + 0.5) * l1 / nq as f64;
                let fx = x * (l1 - x) * (*k as f64 * PI * x / l1).sin();
                for j in 0..nq {
                    let y = (j as f64 + 0.5) * l2 / nq as f64;
                    acc += fx * y * (l2 - y) * (*m as f64 * PI * y / l2).sin();
                }
            }
            c[idx] = acc * (l1 / nq as f64) * (l2 / nq as f64) * 0.8 * 16.0
                / (l1 * l1 * l2 * l2)
                * 2.0
                / (l1 * l2).sqrt();
        }
        assert!((u.modes[[0, 0]].re - c[0]).abs() < 1e-6);
        assert!((u.modes[[2, 0]].re - c[1]).abs() < 1e-6);
        assert!((u.modes[[0, 4]].re - c[2]).abs() < 1e-6);
        assert_eq!(u.modes[[1, 0]], ZERO);
    }

    proptest! {
        #[test]
        fn parseval_random(seed in 0u64..10_000, n1 in 1usize..7, n2 in 1usize..7) {
            let b = Arc::new(SpectralBasis::new(n1, n2, 1.7, 0.9, 2).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&b, &mut rng, 3.0);
            let r = compute_norms(&u, &[2.0]).unwrap();
            let s: f64 = u.modes.iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((r.l2 * r.l2 - s).abs() <= 1e-12 * s);
            prop_assert!((r.lp(2.0).unwrap().powi(2) - s).abs() <= 1e-11 * s);
        }

        #[test]
        fn eigen_exactness(k in 1usize..=16, m in 1usize..=16, alpha in -3.0f64..3.0) {
            let b = Arc::new(SpectralBasis::new(16, 16, 1.0, 2.5, 1).unwrap());
            let mut p = Parameters::default();
            p.alpha = alpha;
            let e = StateField::unit(&b, k, m, C::new(1.0, 0.0)).unwrap();
            let r = apply_a(&e, &p).unwrap();
            let want = C::new(1.0, alpha) * b.eigenvalues[[k - 1, m - 1]];
            prop_assert!((r.modes[[k - 1, m - 1]] - want).norm() <= 1e-13 * want.norm());
            prop_assert_eq!(r.modes.iter().filter(|v| v.norm() > 0.0).count(), 1);
        }
    }
}
