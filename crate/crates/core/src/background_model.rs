//! Spherically symmetric null-cone backgrounds.
//!
//! The cone is foliated by round spheres `S_r` with induced metric `r²ĝ`,
//! generated by a geodesic null field `ul_L = ∂_r` (surface gravity `κ = 0`)
//! and a transversal null field `L_r` normalized by `ḡ(ul_L, L_r) = 2`. The
//! only free datum is the radial profile
//!
//! ```text
//! h(r) = 1 − 2m/r + q(r),
//! ```
//!
//! with `q ≡ 0` for Schwarzschild (and Minkowski when `m = 0`). The ambient
//! curvature enters through the component tables below, written in the frame
//! `{ul_L, L_r, ∂_I}` where `∂_I` are `ĝ`-orthonormal sphere directions.
//!
//! Sign convention: `Rm(X,Y,W,Z) = ḡ(∇_X∇_Y Z − ∇_Y∇_X Z − ∇_{[X,Y]}Z, W)`,
//! `Ric(V,W) = tr Rm(V,·,W,·)`, so a round sphere has positive sectional
//! curvature `Rm(e_1,e_2,e_1,e_2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial perturbation `q(r)` of the Schwarzschild profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum Perturbation {
    /// `q ≡ 0`.
    #[default]
    None,
    /// `q(r) = c / r²`.
    InverseSquare {
        /// The coefficient `c`.
        coeff: f64,
    },
}

impl Perturbation {
    /// `(q, q′, q″)` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        match *self {
            Perturbation::None => (0.0, 0.0, 0.0),
            Perturbation::InverseSquare { coeff } => {
                let r2 = r * r;
                (coeff / r2, -2.0 * coeff / (r2 * r), 6.0 * coeff / (r2 * r2))
            }
        }
    }

    /// True for the trivial perturbation.
    pub fn is_zero(&self) -> bool {
        match *self {
            Perturbation::None => true,
            Perturbation::InverseSquare { coeff } => coeff == 0.0,
        }
    }
}

/// The family a model belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Flat lightcone, `h ≡ 1`.
    Minkowski,
    /// `h = 1 − 2m/r`.
    Schwarzschild,
    /// `h = 1 − 2m/r + q(r)`.
    Generalized,
}

/// A letter of the frame alphabet used to address curvature components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    /// A sphere direction `∂_I`.
    Sphere,
    /// The generator `ul_L`.
    UlL,
    /// The transversal null direction `L_r`.
    Lr,
}

/// A concrete frame vector: `ul_L`, `L_r`, or the `ĝ`-orthonormal sphere
/// direction with index 0 or 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    /// `ul_L`.
    UlL,
    /// `L_r`.
    Lr,
    /// `∂_I` for `I ∈ {0, 1}`.
    Sphere(usize),
}

impl Basis {
    /// The four frame vectors, in the order used by [`FrameVector`].
    pub const ALL: [Basis; 4] = [Basis::UlL, Basis::Lr, Basis::Sphere(0), Basis::Sphere(1)];

    fn slot(self) -> Slot {
        match self {
            Basis::UlL => Slot::UlL,
            Basis::Lr => Slot::Lr,
            Basis::Sphere(_) => Slot::Sphere,
        }
    }
}

/// A vector expanded in the frame `(ul_L, L_r, ∂_0, ∂_1)`.
pub type FrameVector = [f64; 4];

/// The eight index permutations preserving Riemann symmetries, with signs.
const RIEMANN_IMAGES: [([usize; 4], f64); 8] = [
    ([0, 1, 2, 3], 1.0),
    ([1, 0, 2, 3], -1.0),
    ([0, 1, 3, 2], -1.0),
    ([1, 0, 3, 2], 1.0),
    ([2, 3, 0, 1], 1.0),
    ([3, 2, 0, 1], -1.0),
    ([2, 3, 1, 0], -1.0),
    ([3, 2, 1, 0], 1.0),
];

/// The null-cone background: mass, radial profile and admissible region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    kind: ModelKind,
    mass: f64,
    q: Perturbation,
    r_min: f64,
}

impl BackgroundModel {
    /// Minkowski lightcone (`m = 0`, `q ≡ 0`).
    pub fn minkowski() -> Self {
        Self { kind: ModelKind::Minkowski, mass: 0.0, q: Perturbation::None, r_min: 1e-3 }
    }

    /// Schwarzschild lightcone with the default admissible radius `3m`.
    pub fn schwarzschild(mass: f64) -> Result<Self> {
        Self::new(ModelKind::Schwarzschild, mass, Perturbation::None, None)
    }

    /// General constructor; `r_min` defaults to `3m` (or `10⁻³` when `m = 0`).
    pub fn new(kind: ModelKind, mass: f64, q: Perturbation, r_min: Option<f64>) -> Result<Self> {
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(Error::InvalidModel(format!("mass must be finite and non-negative, got {mass}")));
        }
        match kind {
            ModelKind::Minkowski if mass != 0.0 || !q.is_zero() => {
                return Err(Error::InvalidModel("the Minkowski model has m = 0 and q = 0".into()))
            }
            ModelKind::Schwarzschild if !q.is_zero() => {
                return Err(Error::InvalidModel("the Schwarzschild model has q = 0".into()))
            }
            _ => {}
        }
        let r_min = r_min.unwrap_or(if mass > 0.0 { 3.0 * mass } else { 1e-3 });
        if !(r_min > 0.0) || !r_min.is_finite() {
            return Err(Error::InvalidModel(format!("r_min must be positive, got {r_min}")));
        }
        let model = Self { kind, mass, q, r_min };
        let worst = match q {
            Perturbation::InverseSquare { .. } => r_min.max(mass.min(f64::MAX)),
            Perturbation::None => r_min,
        };
        let h_worst = model.profile(worst).0.min(model.profile(r_min).0);
        if !(h_worst > 0.0) {
            return Err(Error::InvalidModel(format!(
                "h must stay positive on [r_min, ∞); h = {h_worst} at r = {worst}"
            )));
        }
        Ok(model)
    }

    /// Model family.
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Mass parameter `m`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Radial perturbation.
    pub fn perturbation(&self) -> Perturbation {
        self.q
    }

    /// Smallest admissible radius.
    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    /// True when the model is exactly Schwarzschild or Minkowski (`q ≡ 0`).
    pub fn is_exact_schwarzschild(&self) -> bool {
        self.q.is_zero()
    }

    /// `(h, h′, h″)` without the admissibility check.
    #[inline]
    pub fn profile(&self, r: f64) -> (f64, f64, f64) {
        let m = self.mass;
        let (q, dq, ddq) = self.q.eval(r);
        (1.0 - 2.0 * m / r + q, 2.0 * m / (r * r) + dq, -4.0 * m / (r * r * r) + ddq)
    }

    fn check(&self, r: f64) -> Result<()> {
        if r < self.r_min || !r.is_finite() {
            Err(Error::RadiusBelowMinimum { r, r_min: self.r_min })
        } else {
            Ok(())
        }
    }

    /// `(h, h′, h″)` at an admissible radius.
    pub fn h_eval(&self, r: f64) -> Result<(f64, f64, f64)> {
        self.check(r)?;
        Ok(self.profile(r))
    }

    /// Background expansions `(ul_θ_r, θ_r, 𝓗²_r) = (2/r, 2h/r, 4h/r²)`.
    pub fn background_quantities(&self, r: f64) -> Result<(f64, f64, f64)> {
        self.check(r)?;
        let (ul, th) = (2.0 / r, 2.0 * self.profile(r).0 / r);
        Ok((ul, th, ul * th))
    }

    /// `ul_χ_r = c·ĝ` on `S_r`; returns `c = r`.
    pub fn ul_chi_coefficient(&self, r: f64) -> f64 {
        r
    }

    /// `χ_r = c·ĝ` on `S_r`; returns `c = r·h(r)`.
    pub fn chi_coefficient(&self, r: f64) -> f64 {
        r * self.profile(r).0
    }

    /// Ambient metric on frame vectors at radius `r`.
    pub fn metric(&self, r: f64, a: Basis, b: Basis) -> f64 {
        match (a, b) {
            (Basis::UlL, Basis::Lr) | (Basis::Lr, Basis::UlL) => 2.0,
            (Basis::Sphere(i), Basis::Sphere(j)) if i == j => r * r,
            _ => 0.0,
        }
    }

    /// Inverse ambient metric on frame covectors at radius `r`.
    pub fn inverse_metric(&self, r: f64, a: Basis, b: Basis) -> f64 {
        match (a, b) {
            (Basis::UlL, Basis::Lr) | (Basis::Lr, Basis::UlL) => 0.5,
            (Basis::Sphere(i), Basis::Sphere(j)) if i == j => 1.0 / (r * r),
            _ => 0.0,
        }
    }

    /// Riemann tensor on frame vectors at radius `r`, from the three
    /// non-trivial families
    /// `Rm(ul_L,L_r,ul_L,L_r) = 2h″`, `Rm(I,ul_L,J,L_r) = −r h′ ĝ_{IJ}`,
    /// `Rm(I,J,K,M) = r²(1−h)(ĝ_{IK}ĝ_{JM} − ĝ_{IM}ĝ_{KJ})` and their
    /// symmetric images. Every other component is zero.
    pub fn riemann(&self, r: f64, a: Basis, b: Basis, c: Basis, d: Basis) -> f64 {
        let (h, dh, ddh) = self.profile(r);
        let idx = [a, b, c, d];
        let n_sphere = idx.iter().filter(|x| matches!(x, Basis::Sphere(_))).count();
        let delta = |x: Basis, y: Basis| match (x, y) {
            (Basis::Sphere(i), Basis::Sphere(j)) if i == j => 1.0,
            _ => 0.0,
        };
        match n_sphere {
            4 => r * r * (1.0 - h) * (delta(a, c) * delta(b, d) - delta(a, d) * delta(c, b)),
            2 => {
                let (mut a, mut b, mut c, mut d) = (a, b, c, d);
                let mut sign = 1.0;
                if !matches!(a, Basis::Sphere(_)) {
                    std::mem::swap(&mut a, &mut b);
                    sign = -sign;
                }
                if !matches!(c, Basis::Sphere(_)) {
                    std::mem::swap(&mut c, &mut d);
                    sign = -sign;
                }
                if !matches!(a, Basis::Sphere(_)) || !matches!(c, Basis::Sphere(_)) || b == d {
                    return 0.0;
                }
                sign * (-r * dh) * delta(a, c)
            }
            0 => {
                if a == b || c == d {
                    return 0.0;
                }
                let sa = if a == Basis::UlL { 1.0 } else { -1.0 };
                let sc = if c == Basis::UlL { 1.0 } else { -1.0 };
                sa * sc * 2.0 * ddh
            }
            _ => 0.0,
        }
    }

    /// Riemann tensor on arbitrary frame-expanded vectors (multilinear).
    pub fn riemann_vectors(&self, r: f64, u: &FrameVector, v: &FrameVector, w: &FrameVector, z: &FrameVector) -> f64 {
        let mut total = 0.0;
        for (i, bi) in Basis::ALL.iter().enumerate() {
            if u[i] == 0.0 {
                continue;
            }
            for (j, bj) in Basis::ALL.iter().enumerate() {
                if v[j] == 0.0 {
                    continue;
                }
                for (k, bk) in Basis::ALL.iter().enumerate() {
                    if w[k] == 0.0 {
                        continue;
                    }
                    for (l, bl) in Basis::ALL.iter().enumerate() {
                        if z[l] == 0.0 {
                            continue;
                        }
                        total += u[i] * v[j] * w[k] * z[l] * self.riemann(r, *bi, *bj, *bk, *bl);
                    }
                }
            }
        }
        total
    }

    /// Ricci tensor on frame vectors, traced from [`Self::riemann`].
    pub fn ricci(&self, r: f64, a: Basis, b: Basis) -> f64 {
        let mut total = 0.0;
        for c in Basis::ALL {
            for d in Basis::ALL {
                let g = self.inverse_metric(r, c, d);
                if g != 0.0 {
                    total += g * self.riemann(r, a, c, b, d);
                }
            }
        }
        total
    }

    /// Ricci tensor on frame-expanded vectors.
    pub fn ricci_vectors(&self, r: f64, u: &FrameVector, v: &FrameVector) -> f64 {
        let mut total = 0.0;
        for (i, bi) in Basis::ALL.iter().enumerate() {
            for (j, bj) in Basis::ALL.iter().enumerate() {
                if u[i] != 0.0 && v[j] != 0.0 {
                    total += u[i] * v[j] * self.ricci(r, *bi, *bj);
                }
            }
        }
        total
    }

    /// Ambient scalar curvature traced from the table.
    pub fn scalar_curvature(&self, r: f64) -> f64 {
        let mut total = 0.0;
        for a in Basis::ALL {
            for b in Basis::ALL {
                let g = self.inverse_metric(r, a, b);
                if g != 0.0 {
                    total += g * self.ricci(r, a, b);
                }
            }
        }
        total
    }

    /// Coefficient of the listed tensor structure for a curvature pattern.
    ///
    /// Listed patterns: `(ul_L, L_r, ul_L, L_r)` with value `2h″`;
    /// `(I, ul_L, J, L_r)` with coefficient `−r h′` on `ĝ_{IJ}`;
    /// `(I, J, K, M)` with coefficient `r²(1−h)` on
    /// `ĝ_{IK}ĝ_{JM} − ĝ_{IM}ĝ_{KJ}`. Symmetric images return the signed
    /// coefficient of the correspondingly permuted structure; every other
    /// pattern returns 0.
    pub fn curvature_component(&self, pattern: &[Slot], r: f64) -> Result<f64> {
        let p = four(pattern)?;
        self.check(r)?;
        let (h, dh, ddh) = self.profile(r);
        use Slot::*;
        let listed: [([Slot; 4], f64); 3] = [
            ([UlL, Lr, UlL, Lr], 2.0 * ddh),
            ([Sphere, UlL, Sphere, Lr], -r * dh),
            ([Sphere, Sphere, Sphere, Sphere], r * r * (1.0 - h)),
        ];
        Ok(match_images(&p, &listed))
    }

    /// Coefficient of the listed structure for `∇̄_e Rm̄_{abcd}` patterns.
    ///
    /// Listed (with `s = 1 − h + r h′/2` and the structure
    /// `ĝ_{BD}ĝ_{AC} − ĝ_{AB}ĝ_{CD}` where relevant):
    /// `∇_A Rm_{BCD L_r} = −r h s`, `∇_A Rm_{BCD ul_L} = −r s`,
    /// `∇_A Rm_{B ul_L ul_L L_r} = h′ + r h″` (on `ĝ_{AB}`),
    /// `∇_{ul_L} Rm_{BCDA} = −2 r s`,
    /// `∇_{ul_L} Rm_{B ul_L D L_r} = h′ − r h″` (on `ĝ_{BD}`).
    /// Symmetric images in the last four slots are signed; everything else
    /// is 0.
    pub fn deriv_curvature_component(&self, deriv: Slot, pattern: &[Slot], r: f64) -> Result<f64> {
        let p = four(pattern)?;
        self.check(r)?;
        let (h, dh, ddh) = self.profile(r);
        let s = 1.0 - h + 0.5 * r * dh;
        use Slot::*;
        let listed: Vec<([Slot; 4], f64)> = match deriv {
            Sphere => vec![
                ([Sphere, Sphere, Sphere, Lr], -r * h * s),
                ([Sphere, Sphere, Sphere, UlL], -r * s),
                ([Sphere, UlL, UlL, Lr], dh + r * ddh),
            ],
            UlL => vec![
                ([Sphere, Sphere, Sphere, Sphere], -2.0 * r * s),
                ([Sphere, UlL, Sphere, Lr], dh - r * ddh),
            ],
            Lr => vec![],
        };
        Ok(match_images(&p, &listed))
    }
}

fn four(pattern: &[Slot]) -> Result<[Slot; 4]> {
    pattern
        .try_into()
        .map_err(|_| Error::MalformedPattern(format!("expected 4 slots, got {}", pattern.len())))
}

fn match_images(p: &[Slot; 4], listed: &[([Slot; 4], f64)]) -> f64 {
    for (perm, sign) in RIEMANN_IMAGES {
        let image = [p[perm[0]], p[perm[1]], p[perm[2]], p[perm[3]]];
        if let Some((_, v)) = listed.iter().find(|(pat, _)| *pat == image) {
            return sign * v;
        }
    }
    0.0
}

/// Slot signature of a concrete basis pattern.
pub fn slots_of(pattern: &[Basis; 4]) -> [Slot; 4] {
    [pattern[0].slot(), pattern[1].slot(), pattern[2].slot(), pattern[3].slot()]
}

/// Least-squares slope of `log‖T_r‖` against `log r`.
pub fn decay_order_estimate(radii: &[f64], norms: &[f64]) -> Result<f64> {
    if radii.len() != norms.len() {
        return Err(Error::InvalidArgument("radii and norms differ in length".into()));
    }
    if radii.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, have: radii.len() });
    }
    if let Some(i) = norms.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveSeries(i));
    }
    if let Some(i) = radii.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!("radius {i} is not positive")));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    Ok(least_squares_slope(&xs, &ys))
}

/// Slope of the least-squares line through `(x_i, y_i)`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
