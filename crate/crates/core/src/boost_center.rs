//! The associated 4-vector `Z`, boost vectors, boosted spheres and Lorentz
//! boosts of cross-sections of the Minkowski lightcone.
//!
//! A boost with velocity parameter `a⃗` acts on `ℝ^{1,3}` by
//! `Λ_a(t, x⃗) = (γt + a⃗·x⃗, x⃗ + ((γ−1)/|a⃗|²)(a⃗·x⃗)a⃗ + a⃗t)` with
//! `γ = √(1+|a⃗|²)`. The first spherical harmonics entering `Z` are the
//! Cartesian coordinate functions `x^i` restricted to the unit sphere.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cross_section_geometry::CrossSection;
use crate::error::{Error, Result};
use crate::sphere_spectral::{ScalarField, SphereGrid};

/// A vector `(Z^t, Z⃗)` of Minkowski space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourVector {
    /// Time component.
    pub t: f64,
    /// Spatial components.
    pub x: [f64; 3],
}

impl FourVector {
    /// Build from components.
    pub fn new(t: f64, x: [f64; 3]) -> Self {
        Self { t, x }
    }

    /// `(Z^t)² − |Z⃗|²`.
    pub fn minkowski_square(&self) -> f64 {
        self.t * self.t - dot(&self.x, &self.x)
    }

    /// Largest componentwise absolute difference.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let mut m = (self.t - other.t).abs();
        for i in 0..3 {
            m = m.max((self.x[i] - other.x[i]).abs());
        }
        m
    }
}

/// Boost vector `a⃗`.
pub type BoostVector = [f64; 3];

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `γ = √(1+|a⃗|²)`.
pub fn lorentz_factor(a: &BoostVector) -> f64 {
    (1.0 + dot(a, a)).sqrt()
}

/// Euclidean length of a boost vector.
pub fn norm(a: &BoostVector) -> f64 {
    dot(a, a).sqrt()
}

/// Apply the boost `Λ_a`.
pub fn lorentz_boost(a: &BoostVector, v: &FourVector) -> FourVector {
    let a2 = dot(a, a);
    if a2 == 0.0 {
        return *v;
    }
    let g = (1.0 + a2).sqrt();
    let ax = dot(a, &v.x);
    let c = (g - 1.0) / a2 * ax;
    FourVector {
        t: g * v.t + ax,
        x: [v.x[0] + c * a[0] + a[0] * v.t, v.x[1] + c * a[1] + a[1] * v.t, v.x[2] + c * a[2] + a[2] * v.t],
    }
}

/// The associated 4-vector
/// `Z^t = |Σ|⁻¹∫ω³ dμ̂`, `Z^i = |Σ|⁻¹∫ω³x^i dμ̂` with `|Σ| = ∫ω² dμ̂`.
pub fn z_vector(omega: &ScalarField) -> Result<FourVector> {
    if !(omega.min() > 0.0) {
        return Err(Error::InvalidArgument("z_vector requires ω > 0".into()));
    }
    let grid = omega.grid();
    let w = omega.values();
    let n = grid.len();
    let mut sums = [0.0; 5];
    for k in 0..n {
        let wt = grid.node_weight(k);
        let (o2, o3) = (w[k] * w[k], w[k] * w[k] * w[k]);
        let x = grid.position(k);
        sums[0] += wt * o2;
        sums[1] += wt * o3;
        for i in 0..3 {
            sums[2 + i] += wt * o3 * x[i];
        }
    }
    let area = sums[0];
    Ok(FourVector { t: sums[1] / area, x: [sums[2] / area, sums[3] / area, sums[4] / area] })
}

/// `a⃗ = Z⃗/√((Z^t)² − |Z⃗|²)` for timelike future-pointing `Z`.
pub fn boost_vector(z: &FourVector) -> Result<BoostVector> {
    let q = z.minkowski_square();
    if !(q > 0.0) {
        return Err(Error::NonTimelike(q));
    }
    if !(z.t > 0.0) {
        return Err(Error::PastPointing(z.t));
    }
    let s = q.sqrt();
    Ok([z.x[0] / s, z.x[1] / s, z.x[2] / s])
}

/// `b_{ρ,a⃗}(x⃗) = ρ/(√(1+|a⃗|²) − a⃗·x⃗)` sampled at the nodes.
pub fn boosted_profile(grid: &Arc<SphereGrid>, rho: f64, a: &BoostVector) -> Result<ScalarField> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("ρ must be positive, got {rho}")));
    }
    let g = lorentz_factor(a);
    Ok(ScalarField::from_fn(grid, |x| rho / (g - dot(a, &x))))
}

/// `Φ_a(x⃗)`: the spatial part of `Λ_{−a}(1, x⃗)` divided by its time part.
pub fn mobius_map(a: &BoostVector, x: &[f64; 3]) -> [f64; 3] {
    let minus = [-a[0], -a[1], -a[2]];
    let v = lorentz_boost(&minus, &FourVector::new(1.0, *x));
    [v.x[0] / v.t, v.x[1] / v.t, v.x[2] / v.t]
}

/// The boosted surface `ω_a(x⃗) = ω(Φ_a(x⃗))/(√(1+|a⃗|²) − a⃗·x⃗)`, with `ω`
/// evaluated from its band-limited expansion at the mapped points.
pub fn boost_surface(omega: &ScalarField, a: &BoostVector) -> Result<ScalarField> {
    let grid = omega.grid().clone();
    let coeffs = omega.spectral()?;
    let g = lorentz_factor(a);
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let x = grid.position(k);
        let y = mobius_map(a, &x);
        values.push(grid.evaluate_at(&coeffs, y)? / (g - dot(a, &x)));
    }
    ScalarField::from_values(&grid, values)
}

/// Deviation of a cross-section from its best-fitting boosted sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundnessReport {
    /// Area radius of `ω²ĝ`.
    pub rho_tilde: f64,
    /// Boost vector from `Z`.
    pub a: BoostVector,
    /// `sup|ω − b_{ρ̃,a⃗}|`.
    pub sup: f64,
    /// `sup|∇̂(ω − b_{ρ̃,a⃗})|_ĝ`.
    pub gradient: f64,
    /// `sup|∇̂²(ω − b_{ρ̃,a⃗})|_ĝ`.
    pub hessian: f64,
}

/// Compare `ω` with `b_{ρ̃,a⃗}` where `a⃗` comes from `Z(ω)`.
pub fn roundness_report(cs: &CrossSection) -> Result<RoundnessReport> {
    let rho_tilde = cs.area_radius();
    let a = boost_vector(&z_vector(cs.omega())?)?;
    let b = boosted_profile(cs.grid(), rho_tilde, &a)?.band_limited()?;
    let diff = cs.omega().axpby(1.0, &b, -1.0)?;
    let gradient = diff.grad()?.max_norm();
    let hessian = diff.hess_round()?.norm_sq().iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
    Ok(RoundnessReport { rho_tilde, a, sup: diff.max_abs(), gradient, hessian })
}
