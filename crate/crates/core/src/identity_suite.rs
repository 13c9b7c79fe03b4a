//! Residual checks of the structural identities of cross-sections, a-priori
//! class diagnostics and weighted norms.
//!
//! Each check assembles both sides of an identity from independently
//! computed fields and reports the largest pointwise residual relative to the
//! largest constituent term. The field being differentiated counts as a
//! constituent, so identities whose terms are all round-off report a relative
//! residual at round-off level.

use serde::{Deserialize, Serialize};

use crate::cross_section_geometry::{AmbientSelector, Contraction, CrossSection};
use crate::error::{Error, Result};
use crate::sphere_spectral::{flat_index, unflatten, FrameTensor, ScalarField};
use crate::stcmc_solver::JacobiContext;

/// Outcome of one identity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Identity name.
    pub name: String,
    /// Largest pointwise residual.
    pub max_residual: f64,
    /// Largest constituent term.
    pub scale: f64,
    /// `max_residual / scale` (0 when both vanish).
    pub relative: f64,
    /// Grid bandlimit.
    pub bandlimit: usize,
}

impl ResidualReport {
    fn new(name: &str, max_residual: f64, scale: f64, bandlimit: usize) -> Self {
        let relative = if scale > 0.0 { max_residual / scale } else if max_residual == 0.0 { 0.0 } else { f64::INFINITY };
        Self { name: name.to_string(), max_residual, scale, relative, bandlimit }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn tensor_scale(ts: &[&FrameTensor]) -> f64 {
    ts.iter().fold(0.0f64, |m, t| m.max(t.max_abs()))
}

/// `𝓗² − 2R − 4(h(ω)−1)/ω²`, with `R = 2K` computed from an independent
/// spectral Laplacian of `ln ω`.
pub fn gauss_residual(cs: &CrossSection) -> Result<ResidualReport> {
    let grid = cs.grid();
    let w = cs.omega().values();
    let log_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let coeffs = grid.analyze(&log_w, grid.extended_degree())?;
    let lap_log = grid.laplacian(&coeffs)?;
    let h2 = cs.h2_values();
    let h = &cs.h_at_omega()[0];
    let mut res = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..grid.len() {
        let o2 = w[k] * w[k];
        let r = 2.0 * (1.0 - lap_log[k]) / o2;
        let model_term = 4.0 * (h[k] - 1.0) / o2;
        res = res.max((h2[k] - 2.0 * r - model_term).abs());
        scale = scale.max(h2[k].abs()).max((2.0 * r).abs()).max(model_term.abs());
    }
    Ok(ResidualReport::new("gauss", res, scale, grid.bandlimit()))
}

/// `W_{ijk} = ul_θ Rm̄(∂_i, ∂_j, ∂_k, L)`.
fn codazzi_source(cs: &CrossSection) -> FrameTensor {
    let Contraction::Tensor(mut t) = cs.ambient_contract(AmbientSelector::RmIjkL) else {
        unreachable!("tensor selector")
    };
    let ul = cs.ul_theta_values();
    for c in t.comps_mut() {
        for (v, u) in c.iter_mut().zip(ul) {
            *v *= u;
        }
    }
    t
}

/// Full and contracted Codazzi residuals.
///
/// Full: `∇_iA_jk − ∇_jA_ik − ul_θRm̄_{ijkL} − τ_jA_ik + τ_iA_jk`.
/// Contracted: `div Å − ½d𝓗² − tr_γ(ul_θRm̄_{·j·L} + τ_jA − τ⊗A)`.
pub fn codazzi_residual(cs: &CrossSection) -> Result<(ResidualReport, ResidualReport)> {
    let grid = cs.grid();
    let n = grid.len();
    let w = cs.omega().values();
    let a = cs.a_tensor();
    let da = cs.covariant_derivative(&a)?;
    let src = codazzi_source(cs);
    let tau = cs.torsion();
    let mut full = FrameTensor::zero(grid, 3);
    let mut tau_terms = FrameTensor::zero(grid, 3);
    let mut idx = [0usize; 3];
    for c in 0..8 {
        unflatten(c, &mut idx);
        let [i, j, kk] = idx;
        for p in 0..n {
            let t = tau.comps()[j][p] * a.get(&[i, kk])[p] - tau.comps()[i][p] * a.get(&[j, kk])[p];
            tau_terms.comps_mut()[c][p] = t;
            full.comps_mut()[c][p] = da.get(&[i, j, kk])[p] - da.get(&[j, i, kk])[p] - src.get(&[i, j, kk])[p] - t;
        }
    }
    let a_ref = a.max_abs();
    let full_report = ResidualReport::new(
        "codazzi",
        full.max_abs(),
        tensor_scale(&[&a, &da, &src, &tau_terms]),
        grid.bandlimit(),
    );

    let (_, a_tf) = cs.scalar_a();
    let da_tf = cs.covariant_derivative(&a_tf.to_tensor())?;
    let h2 = ScalarField::from_values(grid, cs.h2_values().to_vec())?;
    let h2_coeffs = grid.analyze(h2.values(), grid.extended_degree())?;
    let dh2 = grid.gradient(&h2_coeffs)?;
    let mut res = 0.0f64;
    let mut scale = a_ref / cs.omega().max().powi(2);
    for j in 0..2 {
        for p in 0..n {
            let o2 = w[p] * w[p];
            let div = (da_tf.get(&[0, 0, j])[p] + da_tf.get(&[1, 1, j])[p]) / o2;
            let rhs = (src.get(&[0, j, 0])[p] + src.get(&[1, j, 1])[p] + tau_terms.get(&[0, j, 0])[p] + tau_terms.get(&[1, j, 1])[p]) / o2;
            res = res.max((div - 0.5 * dh2[j][p] - rhs).abs());
            scale = scale.max(div.abs()).max((0.5 * dh2[j][p]).abs()).max(rhs.abs());
        }
    }
    Ok((full_report, ResidualReport::new("codazzi_contracted", res, scale, grid.bandlimit())))
}

/// Which form of the Simon identity to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimonForm {
    /// `∇_k∇_lA_ij − ∇_i∇_jA_kl` against commutators and derivatives of the
    /// Codazzi source.
    Full,
    /// `Hess 𝓗² = ΔA − (R + c)Å + κ(dω⊗dω)°` with the published coefficient
    /// `κ = ul_θ²(2(1−h)/ω² + 2h′/ω − h″) − ul_θ(16(1−h)/ω³ + 12h′/ω²)`.
    Contracted,
    /// The contracted form with `κ = 2 (ul_θ c)′`, `c = 2(1−h)/ω² + h′/ω`,
    /// which differs from the published coefficient in the sign of its `h″`
    /// term.
    ContractedRederived,
}

/// Commutator `[∇_a, ∇_b]T_cd = −K(γ_bc T_ad − γ_ac T_bd) − K(γ_bd T_ca − γ_ad T_cb)`.
fn commutator(cs: &CrossSection, t: &FrameTensor, idx: [usize; 4], p: usize) -> f64 {
    let [a, b, c, d] = idx;
    let o2 = cs.omega().values()[p].powi(2);
    let k = cs.gauss_values()[p];
    let g = |x: usize, y: usize| if x == y { o2 } else { 0.0 };
    let tv = |x: usize, y: usize| t.get(&[x, y])[p];
    -k * (g(b, c) * tv(a, d) - g(a, c) * tv(b, d)) - k * (g(b, d) * tv(c, a) - g(a, d) * tv(c, b))
}

/// Residual of the Simon identity in the requested form.
pub fn simon_residual(cs: &CrossSection, form: SimonForm) -> Result<ResidualReport> {
    let grid = cs.grid();
    let n = grid.len();
    let a = cs.a_tensor();
    let da = cs.covariant_derivative(&a)?;
    let dda = cs.covariant_derivative(&da)?;
    match form {
        SimonForm::Full => {
            let wsrc = codazzi_source(cs);
            let dw = cs.covariant_derivative(&wsrc)?;
            let mut res = 0.0f64;
            let mut scale = a.max_abs().max(dda.max_abs()).max(dw.max_abs());
            let mut idx = [0usize; 4];
            for c in 0..16 {
                unflatten(c, &mut idx);
                let [k, l, i, j] = idx;
                for p in 0..n {
                    let lhs = dda.get(&[k, l, i, j])[p] - dda.get(&[i, j, k, l])[p];
                    let c1 = commutator(cs, &a, [k, j, l, i], p);
                    let c2 = commutator(cs, &a, [j, i, k, l], p);
                    let rhs = dw.get(&[k, l, j, i])[p] + dw.get(&[j, k, i, l])[p] + c1 + c2;
                    scale = scale.max(c1.abs()).max(c2.abs());
                    res = res.max((lhs - rhs).abs());
                }
            }
            Ok(ResidualReport::new("simon", res, scale, grid.bandlimit()))
        }
        SimonForm::Contracted | SimonForm::ContractedRederived => {
            let w = cs.omega().values();
            let h2 = FrameTensor::from_scalar(&ScalarField::from_values(grid, cs.h2_values().to_vec())?);
            let hess = cs.covariant_derivative(&cs.covariant_derivative(&h2)?)?;
            let (_, a_tf) = cs.scalar_a();
            let [dt, dp] = cs.d_omega().comps();
            let [h, dh, ddh] = cs.h_at_omega();
            let mut res = 0.0f64;
            let mut scale = max_abs(cs.h2_values());
            for p in 0..n {
                let o = w[p];
                let o2 = o * o;
                let ul = 2.0 / o;
                let c = 2.0 * (1.0 - h[p]) / o2 + dh[p] / o;
                let kappa = match form {
                    SimonForm::Contracted => {
                        ul * ul * (2.0 * (1.0 - h[p]) / o2 + 2.0 * dh[p] / o - ddh[p])
                            - ul * (16.0 * (1.0 - h[p]) / (o2 * o) + 12.0 * dh[p] / o2)
                    }
                    _ => -24.0 * (1.0 - h[p]) / (o2 * o2) - 16.0 * dh[p] / (o2 * o) + 4.0 * ddh[p] / o2,
                };
                let r = 2.0 * cs.gauss_values()[p];
                let d = [dt[p], dp[p]];
                let dsq = d[0] * d[0] + d[1] * d[1];
                let atf = [[a_tf.comps()[0][p], a_tf.comps()[1][p]], [a_tf.comps()[1][p], a_tf.comps()[2][p]]];
                for i in 0..2 {
                    for j in 0..2 {
                        let lap_a = (dda.get(&[0, 0, i, j])[p] + dda.get(&[1, 1, i, j])[p]) / o2;
                        let dd_tf = d[i] * d[j] - if i == j { 0.5 * dsq } else { 0.0 };
                        let term_a = (r + c) * atf[i][j];
                        let term_d = kappa * dd_tf;
                        let lhs = hess.get(&[i, j])[p];
                        res = res.max((lhs - lap_a + term_a - term_d).abs());
                        scale = scale.max(lhs.abs()).max(lap_a.abs()).max(term_a.abs()).max(term_d.abs());
                    }
                }
            }
            let name = if form == SimonForm::Contracted { "simon_contracted" } else { "simon_contracted_rederived" };
            Ok(ResidualReport::new(name, res, scale, grid.bandlimit()))
        }
    }
}

/// Central-difference check of `d𝓗²/ds = J(ul_θ f)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobiConsistency {
    /// Residual at `ε`.
    pub at_eps: ResidualReport,
    /// Residual at `ε/2`.
    pub at_half: ResidualReport,
    /// `at_eps.max_residual / at_half.max_residual` (about 4 for second order).
    pub ratio: f64,
}

fn central_difference_report(cs: &CrossSection, f: &ScalarField, eps: f64, jf: &[f64]) -> Result<ResidualReport> {
    let plus = cs.omega().axpby(1.0, f, eps)?;
    let minus = cs.omega().axpby(1.0, f, -eps)?;
    if plus.min() <= 0.0 || minus.min() <= 0.0 {
        return Err(Error::PositivityLost(plus.min().min(minus.min())));
    }
    let cp = CrossSection::new(cs.model(), &plus)?;
    let cm = CrossSection::new(cs.model(), &minus)?;
    let fd: Vec<f64> = cp.h2_values().iter().zip(cm.h2_values()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    let res = fd.iter().zip(jf).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(ResidualReport::new("jacobi_consistency", res, max_abs(&fd).max(max_abs(jf)), cs.grid().bandlimit()))
}

/// Compare the central difference of `𝓗²` along `ω ± εf` with `J(ul_θ f)`
/// at `ε` and `ε/2`.
pub fn jacobi_consistency(cs: &CrossSection, f: &ScalarField, eps: f64) -> Result<JacobiConsistency> {
    let bound = 1e-3 * cs.omega().min();
    if !(eps > 0.0 && eps <= bound * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("ε = {eps} outside (0, {bound}]")));
    }
    let f = f.band_limited()?;
    let ctx = JacobiContext::new(cs)?;
    let jf = ctx.apply_graph(&f)?;
    let at_eps = central_difference_report(cs, &f, eps, jf.values())?;
    let at_half = central_difference_report(cs, &f, 0.5 * eps, jf.values())?;
    let ratio = at_eps.max_residual / at_half.max_residual;
    Ok(JacobiConsistency { at_eps, at_half, ratio })
}

/// Membership measurements for the a-priori class `B_σ(B₁, B₂, B₃)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct APrioriReport {
    /// Reference radius.
    pub sigma: f64,
    /// `max|ω − σ|`.
    pub sup_deviation: f64,
    /// `σ⁴ max|Å|_γ`.
    pub a_tf_scaled: f64,
    /// `σ⁵ max|∇Å|_γ`.
    pub grad_a_tf_scaled: f64,
    /// `max_{0≤l≤3} sup|∇̂^l(ω/ρ)|_ĝ`.
    pub c3_surrogate: f64,
    /// Conjunction of the three class inequalities.
    pub member: bool,
}

/// Measure the a-priori class quantities of `cs` at radius `σ`.
pub fn apriori_report(cs: &CrossSection, sigma: f64, bounds: [f64; 3]) -> Result<APrioriReport> {
    let sup_deviation = cs.omega().values().iter().fold(0.0f64, |m, v| m.max((v - sigma).abs()));
    let (_, a_tf) = cs.scalar_a();
    let t = a_tf.to_tensor();
    let a_tf_scaled = sigma.powi(4) * max_abs(&cs.gamma_norm(&t));
    let grad_a_tf_scaled = sigma.powi(5) * max_abs(&cs.gamma_norm(&cs.covariant_derivative(&t)?));
    let rho = cs.area_radius();
    let mut tensor = FrameTensor::from_scalar(&cs.omega().scale(1.0 / rho));
    let mut c3_surrogate = 0.0f64;
    for l in 0..=3 {
        if l > 0 {
            tensor = tensor.covariant_derivative_round()?;
        }
        c3_surrogate = c3_surrogate.max(max_abs(&tensor.pointwise_norm()));
    }
    let member = sup_deviation <= bounds[0] && a_tf_scaled <= bounds[1] && grad_a_tf_scaled <= bounds[2];
    Ok(APrioriReport { sigma, sup_deviation, a_tf_scaled, grad_a_tf_scaled, c3_surrogate, member })
}

/// Metric used by [`weighted_norm`].
#[derive(Clone, Copy, Debug)]
pub enum NormMetric<'a> {
    /// The round metric `ĝ` (area radius 1).
    Round,
    /// The induced metric `γ_ω` of a cross-section.
    Conformal(&'a CrossSection),
}

/// Lebesgue exponent of [`weighted_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormExponent {
    /// `p = 2`.
    Two,
    /// `p = ∞`.
    Infinity,
}

/// `‖f‖_{W^{k,p}}` defined by `‖T‖_{W^{0,p}} = ‖T‖_{L^p}` and
/// `‖T‖_{W^{k+1,p}} = ‖T‖_{L^p} + ρ‖∇T‖_{W^{k,p}}`, for `k ≤ 3`.
pub fn weighted_norm(f: &ScalarField, metric: NormMetric<'_>, k: usize, p: NormExponent) -> Result<f64> {
    if k > 3 {
        return Err(Error::InvalidArgument(format!("weighted norms are supported for k ≤ 3, got {k}")));
    }
    let grid = f.grid();
    let (rho, weight): (f64, Vec<f64>) = match metric {
        NormMetric::Round => (1.0, vec![1.0; grid.len()]),
        NormMetric::Conformal(cs) => (cs.area_radius(), cs.omega().values().to_vec()),
    };
    let lp = |t: &FrameTensor| -> f64 {
        let pn: Vec<f64> = t
            .pointwise_norm()
            .iter()
            .zip(&weight)
            .map(|(v, o)| v / o.powi(t.rank() as i32))
            .collect();
        match p {
            NormExponent::Infinity => max_abs(&pn),
            NormExponent::Two => {
                let sq: Vec<f64> = pn.iter().zip(&weight).map(|(v, o)| v * v * o * o).collect();
                grid.integrate(&sq).sqrt()
            }
        }
    };
    let mut t = FrameTensor::from_scalar(&f.band_limited()?);
    let mut total = lp(&t);
    let mut factor = 1.0;
    for _ in 0..k {
        t = match metric {
            NormMetric::Round => t.covariant_derivative_round()?,
            NormMetric::Conformal(cs) => cs.covariant_derivative(&t)?,
        };
        factor *= rho;
        total += factor * lp(&t);
    }
    Ok(total)
}

/// Component index helper for rank-4 frame tensors.
pub fn component(t: &FrameTensor, idx: [usize; 4], node: usize) -> f64 {
    t.comps()[flat_index(&idx)][node]
}
