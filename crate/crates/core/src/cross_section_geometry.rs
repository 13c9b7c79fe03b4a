//! Geometry of a cross-section `Σ_ω = {r = ω}` of the null cone.
//!
//! All tensors are stored by their components in the `ĝ`-orthonormal frame
//! `(e_θ, e_φ)`. The induced metric is `γ_ω = ω²ĝ`, so a covariant tensor of
//! rank `k` has `|T|_γ = ω^{−k}|T|_ĝ` and traces satisfy
//! `tr_γ = ω^{−2} tr_ĝ`.
//!
//! Every derived quantity is computed once from `ω` at construction and kept
//! immutable.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use crate::background_model::{BackgroundModel, Basis, FrameVector};
use crate::error::{Error, Result};
use crate::sphere_spectral::{CovectorField, FrameTensor, ScalarField, SphereGrid, SymTensor2Field};

/// A cross-section of the null cone given as a graph over the unit sphere.
#[derive(Clone, Debug)]
pub struct CrossSection {
    model: BackgroundModel,
    omega: ScalarField,
    d_omega: CovectorField,
    hess_round: SymTensor2Field,
    lap_omega: Vec<f64>,
    grad_sq: Vec<f64>,
    h: [Vec<f64>; 3],
    ul_theta: Vec<f64>,
    h2: Vec<f64>,
    gauss: Vec<f64>,
    a: SymTensor2Field,
    a_tf: SymTensor2Field,
    area: f64,
    mean_h2: f64,
}

/// Ambient curvature contractions available through [`CrossSection::ambient_contract`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmbientSelector {
    /// `Ric̄(ul_L, L)`.
    RicLL,
    /// `Rm̄(ul_L, L, ul_L, L)`.
    RmLLLL,
    /// `Ric̄(ul_L, ul_L)`.
    RicUlUl,
    /// Ambient scalar curvature `R̄`.
    RBar,
    /// `Rm̄(∂_i, ∂_j, ∂_k, L)` as a rank-3 tensor on `Σ`.
    RmIjkL,
}

impl FromStr for AmbientSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RicLL" => Ok(Self::RicLL),
            "RmLLLL" => Ok(Self::RmLLLL),
            "Ric_ulul" => Ok(Self::RicUlUl),
            "Rbar" => Ok(Self::RBar),
            "Rm_ijkL" => Ok(Self::RmIjkL),
            other => Err(Error::UnknownSelector(other.to_string())),
        }
    }
}

/// Result of an ambient contraction.
#[derive(Clone, Debug)]
pub enum Contraction {
    /// A scalar field.
    Scalar(ScalarField),
    /// A rank-3 frame tensor.
    Tensor(FrameTensor),
}

impl CrossSection {
    /// Build the cross-section `{r = ω}`; `ω` is projected to its band-limited
    /// representation on its grid.
    pub fn new(model: &BackgroundModel, omega: &ScalarField) -> Result<Self> {
        let omega = omega.band_limited()?;
        let min = omega.min();
        if !(min >= model.r_min()) {
            return Err(Error::RadiusBelowMinimum { r: min, r_min: model.r_min() });
        }
        let grid = omega.grid().clone();
        let n = grid.len();
        let d_omega = omega.grad()?;
        let hess_round = omega.hess_round()?;
        let lap_omega = hess_round.trace();
        let grad_sq = d_omega.norm_sq();
        let w = omega.values();
        let mut h = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for k in 0..n {
            let (a, b, c) = model.profile(w[k]);
            h[0][k] = a;
            h[1][k] = b;
            h[2][k] = c;
        }
        let ul_theta: Vec<f64> = w.iter().map(|v| 2.0 / v).collect();
        let h2: Vec<f64> = (0..n)
            .map(|k| {
                let o = w[k];
                4.0 * h[0][k] / (o * o) - 4.0 * lap_omega[k] / (o * o * o) + 4.0 * grad_sq[k] / (o * o * o * o)
            })
            .collect();
        let gauss: Vec<f64> = (0..n)
            .map(|k| {
                let o = w[k];
                let lap_log = lap_omega[k] / o - grad_sq[k] / (o * o);
                (1.0 - lap_log) / (o * o)
            })
            .collect();
        let hess_gamma = conformal_hessian(&omega, &d_omega, &hess_round);
        let a = {
            let [htt, htp, hpp] = hess_gamma.comps();
            let mut comps = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            for k in 0..n {
                let o = w[k];
                let iso = 2.0 * h[0][k] + ul_theta[k] * model.ul_chi_coefficient(o) * grad_sq[k] / (o * o);
                comps[0][k] = iso - 2.0 * ul_theta[k] * htt[k];
                comps[1][k] = -2.0 * ul_theta[k] * htp[k];
                comps[2][k] = iso - 2.0 * ul_theta[k] * hpp[k];
            }
            let [tt, tp, pp] = comps;
            SymTensor2Field::new(&grid, tt, tp, pp)?
        };
        let a_tf = a.trace_free();
        let w2: Vec<f64> = w.iter().map(|v| v * v).collect();
        let area = grid.integrate(&w2);
        let weighted: Vec<f64> = h2.iter().zip(&w2).map(|(x, y)| x * y).collect();
        let mean_h2 = grid.integrate(&weighted) / area;
        Ok(Self {
            model: model.clone(),
            omega,
            d_omega,
            hess_round,
            lap_omega,
            grad_sq,
            h,
            ul_theta,
            h2,
            gauss,
            a,
            a_tf,
            area,
            mean_h2,
        })
    }

    /// The background model.
    pub fn model(&self) -> &BackgroundModel {
        &self.model
    }

    /// The grid.
    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.omega.grid()
    }

    /// The graph function `ω` (band-limited).
    pub fn omega(&self) -> &ScalarField {
        &self.omega
    }

    /// Round frame gradient of `ω`.
    pub fn d_omega(&self) -> &CovectorField {
        &self.d_omega
    }

    /// Round frame gradient of `ln ω`, the conformal exponent of `γ_ω`.
    pub fn d_log_omega(&self) -> CovectorField {
        let w = self.omega.values();
        let [t, p] = self.d_omega.comps();
        CovectorField {
            grid: self.grid().clone(),
            comps: [
                t.iter().zip(w).map(|(a, o)| a / o).collect(),
                p.iter().zip(w).map(|(a, o)| a / o).collect(),
            ],
        }
    }

    /// Round Hessian of `ω`.
    pub fn hess_round_omega(&self) -> &SymTensor2Field {
        &self.hess_round
    }

    /// `Δ̂ω` at the nodes.
    pub fn laplace_round_omega(&self) -> &[f64] {
        &self.lap_omega
    }

    /// `|∇̂ω|²_ĝ` at the nodes.
    pub fn grad_sq_round(&self) -> &[f64] {
        &self.grad_sq
    }

    /// `(h, h′, h″)` evaluated at `ω`, as three node arrays.
    pub fn h_at_omega(&self) -> &[Vec<f64>; 3] {
        &self.h
    }

    /// `ul_θ = 2/ω`.
    pub fn ul_theta(&self) -> ScalarField {
        self.scalar(self.ul_theta.clone())
    }

    /// `ul_θ` node values.
    pub fn ul_theta_values(&self) -> &[f64] {
        &self.ul_theta
    }

    /// Spacetime mean curvature `𝓗²` and its area-weighted mean.
    pub fn spacetime_mean_curvature(&self) -> (ScalarField, f64) {
        (self.scalar(self.h2.clone()), self.mean_h2)
    }

    /// `𝓗²` node values.
    pub fn h2_values(&self) -> &[f64] {
        &self.h2
    }

    /// Area-weighted mean `⨍𝓗²`.
    pub fn mean_h2(&self) -> f64 {
        self.mean_h2
    }

    /// Scalar second fundamental form `A` and its trace-free part `Å`.
    pub fn scalar_a(&self) -> (&SymTensor2Field, &SymTensor2Field) {
        (&self.a, &self.a_tf)
    }

    /// Torsion `τ` assembled from its source terms; identically zero in the
    /// spherically symmetric model.
    pub fn torsion(&self) -> CovectorField {
        let grid = self.grid().clone();
        let n = grid.len();
        let w = self.omega.values();
        let [dt, dp] = self.d_omega.comps();
        let mut out = [vec![0.0; n], vec![0.0; n]];
        for k in 0..n {
            let o = w[k];
            let chi = self.model.ul_chi_coefficient(o);
            let ul_chi = [[chi, 0.0], [0.0, chi]];
            let half_trace = 0.5 * (ul_chi[0][0] + ul_chi[1][1]);
            let tf = [[ul_chi[0][0] - half_trace, ul_chi[0][1]], [ul_chi[1][0], ul_chi[1][1] - half_trace]];
            let tf_norm_sq = (tf[0][0] * tf[0][0] + tf[1][1] * tf[1][1] + 2.0 * tf[0][1] * tf[0][1]) / o.powi(4);
            let ric = self.model.ricci(o, Basis::UlL, Basis::UlL);
            let grad_up = [dt[k] / (o * o), dp[k] / (o * o)];
            for i in 0..2 {
                let chi_term = tf[0][i] * grad_up[0] + tf[1][i] * grad_up[1];
                let d = [dt[k], dp[k]][i];
                out[i][k] = -chi_term - (tf_norm_sq + ric) * d / self.ul_theta[k];
            }
        }
        let [t, p] = out;
        CovectorField { grid, comps: [t, p] }
    }

    /// Gauss curvature `K` of `γ_ω`; the scalar curvature is `R = 2K`.
    pub fn gauss_curvature(&self) -> ScalarField {
        self.scalar(self.gauss.clone())
    }

    /// `K` node values.
    pub fn gauss_values(&self) -> &[f64] {
        &self.gauss
    }

    /// Area `|Σ| = ∫ω² dμ̂`.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Area radius `ρ = √(|Σ|/4π)`.
    pub fn area_radius(&self) -> f64 {
        (self.area / (4.0 * PI)).sqrt()
    }

    /// `∫ f dμ_{γ_ω}`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let w = self.omega.values();
        let v: Vec<f64> = f.iter().zip(w).map(|(a, o)| a * o * o).collect();
        self.grid().integrate(&v)
    }

    /// Frame vectors `∂_i = e_i + (e_i ω) ul_L` at node `k`.
    pub fn tangent_frame(&self, k: usize) -> [FrameVector; 2] {
        let [dt, dp] = self.d_omega.comps();
        [[dt[k], 0.0, 1.0, 0.0], [dp[k], 0.0, 0.0, 1.0]]
    }

    /// Transversal null normal `L = L_r − |∇ω|²_γ ul_L − 2∇ω^I ∂_I` at node `k`.
    pub fn null_normal(&self, k: usize) -> FrameVector {
        let o = self.omega.values()[k];
        let [dt, dp] = self.d_omega.comps();
        let o2 = o * o;
        [-self.grad_sq[k] / o2, 1.0, -2.0 * dt[k] / o2, -2.0 * dp[k] / o2]
    }

    /// Ambient curvature contracted through the frame decomposition of `Σ`.
    pub fn ambient_contract(&self, which: AmbientSelector) -> Contraction {
        let n = self.grid().len();
        let w = self.omega.values();
        let ul: FrameVector = [1.0, 0.0, 0.0, 0.0];
        match which {
            AmbientSelector::RmIjkL => {
                let mut t = FrameTensor::zero(self.grid(), 3);
                for k in 0..n {
                    let e = self.tangent_frame(k);
                    let l = self.null_normal(k);
                    for i in 0..2 {
                        for j in 0..2 {
                            if i == j {
                                continue;
                            }
                            for kk in 0..2 {
                                t.comps[4 * i + 2 * j + kk][k] =
                                    self.model.riemann_vectors(w[k], &e[i], &e[j], &e[kk], &l);
                            }
                        }
                    }
                }
                Contraction::Tensor(t)
            }
            sel => {
                let values = (0..n)
                    .map(|k| {
                        let r = w[k];
                        let l = self.null_normal(k);
                        match sel {
                            AmbientSelector::RicLL => self.model.ricci_vectors(r, &ul, &l),
                            AmbientSelector::RmLLLL => self.model.riemann_vectors(r, &ul, &l, &ul, &l),
                            AmbientSelector::RicUlUl => self.model.ricci_vectors(r, &ul, &ul),
                            _ => self.model.scalar_curvature(r),
                        }
                    })
                    .collect();
                Contraction::Scalar(self.scalar(values))
            }
        }
    }

    /// `A` as a rank-2 frame tensor.
    pub fn a_tensor(&self) -> FrameTensor {
        self.a.to_tensor()
    }

    /// Pointwise `γ_ω` norm of a rank-`k` frame tensor.
    pub fn gamma_norm(&self, t: &FrameTensor) -> Vec<f64> {
        let w = self.omega.values();
        t.pointwise_norm().iter().zip(w).map(|(v, o)| v / o.powi(t.rank() as i32)).collect()
    }

    /// Covariant derivative with respect to `γ_ω`.
    pub fn covariant_derivative(&self, t: &FrameTensor) -> Result<FrameTensor> {
        t.covariant_derivative_conformal(&self.d_log_omega())
    }

    fn scalar(&self, values: Vec<f64>) -> ScalarField {
        ScalarField::from_values(self.grid(), values).expect("node array matches grid")
    }
}

/// `Hess_{γ_ω}ω = Hess_ĝω − (2 dω⊗dω/ω − ĝ|∇̂ω|²/ω)`.
fn conformal_hessian(omega: &ScalarField, d: &CovectorField, hess: &SymTensor2Field) -> SymTensor2Field {
    let w = omega.values();
    let [dt, dp] = d.comps();
    let [htt, htp, hpp] = hess.comps();
    let n = w.len();
    let mut tt = vec![0.0; n];
    let mut tp = vec![0.0; n];
    let mut pp = vec![0.0; n];
    for k in 0..n {
        let o = w[k];
        let g2 = dt[k] * dt[k] + dp[k] * dp[k];
        tt[k] = htt[k] - (2.0 * dt[k] * dt[k] - g2) / o;
        tp[k] = htp[k] - 2.0 * dt[k] * dp[k] / o;
        pp[k] = hpp[k] - (2.0 * dp[k] * dp[k] - g2) / o;
    }
    SymTensor2Field { grid: omega.grid().clone(), comps: [tt, tp, pp] }
}

/// The conformal-metric Hessian of `ω` for a cross-section.
pub fn hessian_gamma(cs: &CrossSection) -> SymTensor2Field {
    conformal_hessian(cs.omega(), cs.d_omega(), cs.hess_round_omega())
}

/// Free-function form of [`CrossSection::ul_theta`].
pub fn ul_theta(cs: &CrossSection) -> ScalarField {
    cs.ul_theta()
}

/// Free-function form of [`CrossSection::spacetime_mean_curvature`].
pub fn spacetime_mean_curvature(cs: &CrossSection) -> (ScalarField, f64) {
    cs.spacetime_mean_curvature()
}

/// Free-function form of [`CrossSection::scalar_a`], returning owned fields.
pub fn scalar_a(cs: &CrossSection) -> (SymTensor2Field, SymTensor2Field) {
    let (a, b) = cs.scalar_a();
    (a.clone(), b.clone())
}

/// Free-function form of [`CrossSection::torsion`].
pub fn torsion(cs: &CrossSection) -> CovectorField {
    cs.torsion()
}

/// Free-function form of [`CrossSection::gauss_curvature`].
pub fn gauss_curvature(cs: &CrossSection) -> ScalarField {
    cs.gauss_curvature()
}

/// Free-function form of [`CrossSection::area_radius`].
pub fn area_radius(cs: &CrossSection) -> f64 {
    cs.area_radius()
}

/// Free-function form of [`CrossSection::ambient_contract`], taking the
/// selector by name (`RicLL`, `RmLLLL`, `Ric_ulul`, `Rbar`, `Rm_ijkL`).
pub fn ambient_contract(cs: &CrossSection, which: &str) -> Result<Contraction> {
    Ok(cs.ambient_contract(which.parse()?))
}

/// In-model closed form `Rm̄_{ijkL} = (2(1−h)/ω² + h′/ω)(ω_iγ_jk − ω_jγ_ik)`.
pub fn rm_ijkl_closed_form(cs: &CrossSection) -> FrameTensor {
    let n = cs.grid().len();
    let w = cs.omega().values();
    let [dt, dp] = cs.d_omega().comps();
    let mut t = FrameTensor::zero(cs.grid(), 3);
    for k in 0..n {
        let o = w[k];
        let (h, dh) = (cs.h[0][k], cs.h[1][k]);
        let c = 2.0 * (1.0 - h) / (o * o) + dh / o;
        let d = [dt[k], dp[k]];
        for i in 0..2 {
            for j in 0..2 {
                for kk in 0..2 {
                    let g = |a: usize, b: usize| if a == b { o * o } else { 0.0 };
                    t.comps[4 * i + 2 * j + kk][k] = c * (d[i] * g(j, kk) - d[j] * g(i, kk));
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_spectral::random_band_limited;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(l: usize) -> Arc<SphereGrid> {
        SphereGrid::new(l).unwrap()
    }

    fn schw() -> BackgroundModel {
        BackgroundModel::schwarzschild(1.0).unwrap()
    }

    fn boosted(g: &Arc<SphereGrid>, rho: f64, a: [f64; 3]) -> ScalarField {
        let gam = (1.0 + a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        ScalarField::from_fn(g, |x| rho / (gam - a[0] * x[0] - a[1] * x[1] - a[2] * x[2]))
    }

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    fn perturbed(g: &Arc<SphereGrid>, base: f64, seed: u64) -> ScalarField {
        let p = random_band_limited(g, 6, 1.0, seed).unwrap();
        p.axpby(1.0, &ScalarField::constant(g, base), 1.0).unwrap()
    }

    #[test]
    fn ul_theta_examples() {
        let g = grid(12);
        let cs = CrossSection::new(&schw(), &ScalarField::constant(&g, 10.0)).unwrap();
        assert!(cs.ul_theta_values().iter().all(|v| (v - 0.2).abs() < 1e-15));
        let b = boosted(&g, 5.0, [0.0, 0.0, 0.3]);
        let cs = CrossSection::new(&BackgroundModel::minkowski(), &b).unwrap();
        for (u, o) in cs.ul_theta_values().iter().zip(cs.omega().values()) {
            assert_abs_diff_eq!(u * o, 2.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(2.0 / 8.0, 0.25, epsilon = 0.0);
    }

    #[test]
    fn spacetime_mean_curvature_examples() {
        let g = grid(24);
        let (h2, mean) = CrossSection::new(&schw(), &ScalarField::constant(&g, 10.0)).unwrap().spacetime_mean_curvature();
        assert!(h2.values().iter().all(|v| (v - 0.032).abs() < 1e-15));
        assert_abs_diff_eq!(mean, 0.032, epsilon = 1e-15);

        let cs = CrossSection::new(&BackgroundModel::minkowski(), &boosted(&g, 5.0, [0.0, 0.0, 0.3])).unwrap();
        for v in cs.h2_values() {
            assert!((v - 0.16).abs() <= 1e-10 * 0.16);
        }

        let w = ScalarField::from_fn(&g, |x| 20.0 + 0.5 * x[2]);
        let cs = CrossSection::new(&schw(), &w).unwrap();
        let rhs: Vec<f64> = (0..g.len())
            .map(|k| {
                let o = cs.omega().values()[k];
                4.0 * cs.gauss_values()[k] + 4.0 * (cs.h_at_omega()[0][k] - 1.0) / (o * o)
            })
            .collect();
        assert!(max_rel(cs.h2_values(), &rhs) <= 1e-9);
    }

    #[test]
    fn scalar_a_examples() {
        let g = grid(24);
        let cs = CrossSection::new(&schw(), &ScalarField::constant(&g, 10.0)).unwrap();
        let (a, a_tf) = cs.scalar_a();
        for k in 0..g.len() {
            // (𝓗²/2)γ_ω in frame components is (𝓗²/2)ω².
            assert_abs_diff_eq!(a.comps()[0][k], 0.016 * 100.0, epsilon = 1e-13);
            assert_abs_diff_eq!(a.comps()[1][k], 0.0, epsilon = 1e-13);
        }
        assert!(a_tf.comps().iter().flatten().all(|v| v.abs() < 1e-13));

        let rho = 7.0;
        let cs = CrossSection::new(&BackgroundModel::minkowski(), &boosted(&g, rho, [0.1, -0.2, 0.3])).unwrap();
        let gn = cs.gamma_norm(&cs.scalar_a().1.to_tensor());
        assert!(gn.iter().all(|v| *v <= 1e-10 / (rho * rho)));

        let cs = CrossSection::new(&schw(), &perturbed(&g, 20.0, 3)).unwrap();
        let (a, a_tf) = cs.scalar_a();
        let tr: Vec<f64> = a.trace().iter().zip(cs.omega().values()).map(|(t, o)| t / (o * o)).collect();
        assert!(max_rel(&tr, cs.h2_values()) <= 1e-10);
        let scale = a.comps().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(a_tf.trace().iter().all(|v| v.abs() <= 1e-11 * scale));
    }

    #[test]
    fn torsion_examples() {
        let g = grid(16);
        for w in [ScalarField::constant(&g, 12.0), perturbed(&g, 20.0, 5)] {
            let cs = CrossSection::new(&schw(), &w).unwrap();
            let t = cs.torsion();
            assert!(t.max_norm() <= 1e-13 / cs.omega().min());
        }
        let cs = CrossSection::new(&schw(), &perturbed(&g, 20.0, 6)).unwrap();
        assert_eq!(cs.torsion().max_norm(), 0.0);
    }

    #[test]
    fn gauss_curvature_examples() {
        let g = grid(24);
        let cs = CrossSection::new(&schw(), &ScalarField::constant(&g, 6.0)).unwrap();
        assert!(cs.gauss_values().iter().all(|v| (v - 1.0 / 36.0).abs() < 1e-15));
        let rho = 3.0;
        let cs = CrossSection::new(&BackgroundModel::minkowski(), &boosted(&g, rho, [0.0, 0.4, 0.2])).unwrap();
        for v in cs.gauss_values() {
            assert!((v - 1.0 / (rho * rho)).abs() <= 1e-10 / (rho * rho));
        }
        for seed in 0..4 {
            let cs = CrossSection::new(&schw(), &perturbed(&g, 20.0, seed)).unwrap();
            assert!((cs.integrate(cs.gauss_values()) - 4.0 * PI).abs() <= 1e-9);
        }
    }

    #[test]
    fn ambient_contraction_examples() {
        let g = grid(16);
        let model = schw();
        let cs = CrossSection::new(&model, &perturbed(&g, 20.0, 9)).unwrap();
        let Contraction::Scalar(ric) = cs.ambient_contract(AmbientSelector::RicLL) else { panic!() };
        assert!(ric.max_abs() < 1e-17);
        let cs10 = CrossSection::new(&model, &ScalarField::constant(&g, 10.0)).unwrap();
        let Contraction::Scalar(rm) = cs10.ambient_contract(AmbientSelector::RmLLLL) else { panic!() };
        assert!(rm.values().iter().all(|v| (v + 0.008).abs() < 1e-15));
        let flat = CrossSection::new(&BackgroundModel::minkowski(), &perturbed(&g, 20.0, 2)).unwrap();
        for sel in ["RicLL", "RmLLLL", "Ric_ulul", "Rbar", "Rm_ijkL"] {
            match ambient_contract(&flat, sel).unwrap() {
                Contraction::Scalar(s) => assert_eq!(s.max_abs(), 0.0),
                Contraction::Tensor(t) => assert_eq!(t.max_abs(), 0.0),
            }
        }
        assert!(matches!(ambient_contract(&flat, "Weyl"), Err(Error::UnknownSelector(_))));
    }

    #[test]
    fn ambient_contractions_match_closed_forms() {
        use crate::background_model::{ModelKind, Perturbation};
        let g = grid(16);
        let model = BackgroundModel::new(ModelKind::Generalized, 1.0, Perturbation::InverseSquare { coeff: 2.0 }, None).unwrap();
        let cs = CrossSection::new(&model, &perturbed(&g, 15.0, 4)).unwrap();
        let w = cs.omega().values();
        let [h, dh, ddh] = cs.h_at_omega();
        let get = |s| match cs.ambient_contract(s) {
            Contraction::Scalar(f) => f.into_values(),
            Contraction::Tensor(_) => unreachable!(),
        };
        let (ric, rm, ricul, rbar) = (get(AmbientSelector::RicLL), get(AmbientSelector::RmLLLL), get(AmbientSelector::RicUlUl), get(AmbientSelector::RBar));
        for k in 0..g.len() {
            let o = w[k];
            assert_abs_diff_eq!(ric[k], -2.0 * dh[k] / o - ddh[k], epsilon = 1e-15);
            assert_abs_diff_eq!(rm[k], 2.0 * ddh[k], epsilon = 1e-15);
            assert_eq!(ricul[k], 0.0);
            assert_abs_diff_eq!(rbar[k], 2.0 * (1.0 - h[k]) / (o * o) - 4.0 * dh[k] / o - ddh[k], epsilon = 1e-15);
        }
        let Contraction::Tensor(t) = cs.ambient_contract(AmbientSelector::RmIjkL) else { panic!() };
        let closed = rm_ijkl_closed_form(&cs);
        let mut diff = t.clone();
        diff.add_scaled(&closed, -1.0);
        assert!(diff.max_abs() <= 1e-14 * closed.max_abs().max(1e-300));
    }

    #[test]
    fn area_radius_examples() {
        let g = grid(32);
        let cs = CrossSection::new(&schw(), &ScalarField::constant(&g, 11.0)).unwrap();
        assert_abs_diff_eq!(cs.area_radius(), 11.0, epsilon = 1e-13);
        let cs = CrossSection::new(&BackgroundModel::minkowski(), &boosted(&g, 7.0, [0.2, 0.1, -0.3])).unwrap();
        assert!((cs.area_radius() - 7.0).abs() <= 1e-10);
        let w = perturbed(&g, 20.0, 1);
        let r1 = CrossSection::new(&schw(), &w).unwrap().area_radius();
        let r2 = CrossSection::new(&schw(), &w.scale(2.0)).unwrap().area_radius();
        assert!((r2 - 2.0 * r1).abs() <= 1e-13 * r2);
    }

    #[test]
    fn radius_below_minimum_rejected() {
        let g = grid(8);
        assert!(matches!(
            CrossSection::new(&schw(), &ScalarField::constant(&g, 2.5)),
            Err(Error::RadiusBelowMinimum { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn prop_gauss_identity_and_trace(seed in 0u64..10_000, base in 12.0f64..30.0) {
            let g = grid(16);
            let cs = CrossSection::new(&schw(), &perturbed(&g, base, seed)).unwrap();
            let scale = cs.h2_values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..g.len() {
                let o = cs.omega().values()[k];
                let rhs = 4.0 * cs.gauss_values()[k] + 4.0 * (cs.h_at_omega()[0][k] - 1.0) / (o * o);
                prop_assert!((cs.h2_values()[k] - rhs).abs() <= 1e-9 * scale);
            }
            let tr: Vec<f64> = cs.scalar_a().0.trace().iter().zip(cs.omega().values()).map(|(t, o)| t / (o * o)).collect();
            prop_assert!(max_rel(&tr, cs.h2_values()) <= 1e-10);
        }

        #[test]
        fn prop_area_stationarity_weight(seed in 0u64..10_000) {
            let g = grid(12);
            let cs = CrossSection::new(&schw(), &perturbed(&g, 20.0, seed)).unwrap();
            let dev: Vec<f64> = cs.h2_values().iter().map(|v| v - cs.mean_h2()).collect();
            prop_assert!(cs.integrate(&dev).abs() <= 1e-13 * cs.area() * cs.mean_h2());
        }
    }
}
