//! The Jacobi operator of `𝓗²`, its linear solves and mean-zero spectrum, and
//! a constrained Newton iteration for surfaces of constant spacetime mean
//! curvature.
//!
//! The operator is
//!
//! ```text
//! J(f) = −2Δf − 4τ(∇f) − 𝓗²f − f(Ric̄(ul_L,L) − ½Rm̄(ul_L,L,L,ul_L))
//!        − f(𝓗²/ul_θ²)(|ul_χ°|² + Ric̄(ul_L,ul_L))
//!        − f((1/ul_θ)⟨ul_χ°, Å⟩ + 2 div τ + 2|τ|²),
//! ```
//!
//! with every coefficient assembled from the computed geometry. It is the
//! linearization of `𝓗²` along graph variations: `d𝓗²/ds = J(ul_θ f)` for
//! `ω_s = ω + s f`.
//!
//! Linear solves are Galerkin projections onto harmonics of degree at most
//! the bandlimit, solved by restarted GMRES with the round-sphere spectrum as
//! a diagonal preconditioner.

use serde::{Deserialize, Serialize};

use crate::cross_section_geometry::{AmbientSelector, Contraction, CrossSection};
use crate::error::{Error, Result};
use crate::sphere_spectral::{coeff_len, FrameTensor, ScalarField};

/// Tolerances for the iterative linear solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearOptions {
    /// Relative residual target of the projected system.
    pub tol: f64,
    /// Krylov dimension before restart.
    pub restart: usize,
    /// Total iteration budget.
    pub max_iter: usize,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { tol: 1e-12, restart: 60, max_iter: 600 }
    }
}

/// The Jacobi operator at a fixed cross-section.
#[derive(Clone, Debug)]
pub struct JacobiContext {
    cs: CrossSection,
    potential: Vec<f64>,
    div_tau: Vec<f64>,
    tau_up: [Vec<f64>; 2],
    precond_scale: f64,
    mean_potential: f64,
}

impl JacobiContext {
    /// Assemble the coefficient fields of `J` on `cs`.
    pub fn new(cs: &CrossSection) -> Result<Self> {
        let n = cs.grid().len();
        let w = cs.omega().values();
        let model = cs.model();
        let h2 = cs.h2_values();
        let ul = cs.ul_theta_values();
        let tau = cs.torsion();
        let div_tau = {
            let d = cs.covariant_derivative(&tau.to_tensor())?;
            let c = d.contract(0, 1);
            c.comps()[0].iter().zip(w).map(|(v, o)| v / (o * o)).collect::<Vec<f64>>()
        };
        let tau_sq: Vec<f64> = tau.norm_sq().iter().zip(w).map(|(v, o)| v / (o * o)).collect();
        let tau_up = [
            tau.comps()[0].iter().zip(w).map(|(v, o)| v / (o * o)).collect(),
            tau.comps()[1].iter().zip(w).map(|(v, o)| v / (o * o)).collect(),
        ];
        let scalar = |s| match cs.ambient_contract(s) {
            Contraction::Scalar(f) => f.into_values(),
            Contraction::Tensor(_) => unreachable!("scalar selector"),
        };
        let ric_ll = scalar(AmbientSelector::RicLL);
        let rm_llll = scalar(AmbientSelector::RmLLLL);
        let ric_ulul = scalar(AmbientSelector::RicUlUl);
        let (_, a_tf) = cs.scalar_a();
        let mut potential = vec![0.0; n];
        for k in 0..n {
            let o = w[k];
            let chi = model.ul_chi_coefficient(o);
            let half_trace = chi;
            let chi_tf = [chi - half_trace, 0.0, chi - half_trace];
            let chi_tf_sq = (chi_tf[0] * chi_tf[0] + 2.0 * chi_tf[1] * chi_tf[1] + chi_tf[2] * chi_tf[2]) / o.powi(4);
            let [att, atp, app] = [a_tf.comps()[0][k], a_tf.comps()[1][k], a_tf.comps()[2][k]];
            let chi_dot_a = (chi_tf[0] * att + 2.0 * chi_tf[1] * atp + chi_tf[2] * app) / o.powi(4);
            // Rm̄(ul_L, L, L, ul_L) = −Rm̄(ul_L, L, ul_L, L).
            let rm_llllu = -rm_llll[k];
            potential[k] = -h2[k]
                - (ric_ll[k] - 0.5 * rm_llllu)
                - h2[k] / (ul[k] * ul[k]) * (chi_tf_sq + ric_ulul[k])
                - (chi_dot_a / ul[k] + 2.0 * div_tau[k] + 2.0 * tau_sq[k]);
        }
        let rho = cs.area_radius();
        let mean_potential = cs.integrate(&potential) / cs.area();
        Ok(Self { cs: cs.clone(), potential, div_tau, tau_up, precond_scale: rho, mean_potential })
    }

    /// The underlying cross-section.
    pub fn cross_section(&self) -> &CrossSection {
        &self.cs
    }

    /// The zeroth-order coefficient `V` of `J(f) = −2Δf − 4τ(∇f) + Vf`.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    fn bandlimit(&self) -> usize {
        self.cs.grid().bandlimit()
    }

    /// `J(f)` at the nodes for band-limited `f` given by coefficients.
    fn apply_values(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let grid = self.cs.grid();
        let w = self.cs.omega().values();
        let f = grid.synthesize(coeffs)?;
        let lap = grid.laplacian(coeffs)?;
        let [gt, gp] = grid.gradient(coeffs)?;
        Ok((0..grid.len())
            .map(|k| {
                let o2 = w[k] * w[k];
                -2.0 * lap[k] / o2 - 4.0 * (self.tau_up[0][k] * gt[k] + self.tau_up[1][k] * gp[k])
                    + self.potential[k] * f[k]
            })
            .collect())
    }

    /// `J(ul_θ f)` at the nodes, with the derivatives of `ul_θ f = 2f/ω`
    /// expanded by the product rule.
    fn apply_graph_values(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let grid = self.cs.grid();
        let w = self.cs.omega().values();
        let [dwt, dwp] = self.cs.d_omega().comps();
        let lap_w = self.cs.laplace_round_omega();
        let gsq = self.cs.grad_sq_round();
        let f = grid.synthesize(coeffs)?;
        let lap = grid.laplacian(coeffs)?;
        let [gt, gp] = grid.gradient(coeffs)?;
        Ok((0..grid.len())
            .map(|k| {
                let o = w[k];
                let o2 = o * o;
                let v = 2.0 * f[k] / o;
                let dv_t = 2.0 * gt[k] / o - 2.0 * f[k] * dwt[k] / o2;
                let dv_p = 2.0 * gp[k] / o - 2.0 * f[k] * dwp[k] / o2;
                let lap_v = 2.0 * lap[k] / o - 4.0 * (gt[k] * dwt[k] + gp[k] * dwp[k]) / o2 - 2.0 * f[k] * lap_w[k] / o2
                    + 4.0 * f[k] * gsq[k] / (o2 * o);
                -2.0 * lap_v / o2 - 4.0 * (self.tau_up[0][k] * dv_t + self.tau_up[1][k] * dv_p) + self.potential[k] * v
            })
            .collect())
    }

    /// `J(f)` for a field `f` (projected to its band-limited part).
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        let c = self.coeffs_of(f)?;
        ScalarField::from_values(self.cs.grid(), self.apply_values(&c)?)
    }

    /// `J(ul_θ f)`, the linearization of `𝓗²` along `ω + s f`.
    pub fn apply_graph(&self, f: &ScalarField) -> Result<ScalarField> {
        let c = self.coeffs_of(f)?;
        ScalarField::from_values(self.cs.grid(), self.apply_graph_values(&c)?)
    }

    /// In-model closed form `−2Δ_γ f − 𝓗²f + (2h′(ω)/ω)f`.
    pub fn apply_closed_form(&self, f: &ScalarField) -> Result<ScalarField> {
        let c = self.coeffs_of(f)?;
        let grid = self.cs.grid();
        let vals = grid.synthesize(&c)?;
        let lap = grid.laplacian(&c)?;
        let w = self.cs.omega().values();
        let h2 = self.cs.h2_values();
        let dh = &self.cs.h_at_omega()[1];
        let out = (0..grid.len())
            .map(|k| {
                let o = w[k];
                -2.0 * lap[k] / (o * o) - h2[k] * vals[k] + 2.0 * dh[k] / o * vals[k]
            })
            .collect();
        ScalarField::from_values(grid, out)
    }

    fn coeffs_of(&self, f: &ScalarField) -> Result<Vec<f64>> {
        if f.grid().as_ref() != self.cs.grid().as_ref() {
            return Err(Error::GridMismatch("field and cross-section grids differ".into()));
        }
        f.spectral()
    }

    /// Round-spectrum eigenvalue estimate of `J` on degree `l`, kept away from 0.
    fn precond_eigen(&self, l: usize, graph: bool, shift: f64) -> f64 {
        let rho = self.precond_scale;
        let lam0 = 2.0 * (l * (l + 1)) as f64 / (rho * rho);
        let mut lam = lam0 + self.mean_potential - shift;
        let floor = 0.5 / (rho * rho);
        if lam.abs() < floor {
            lam = floor.copysign(if lam == 0.0 { 1.0 } else { lam });
        }
        if graph {
            lam * 2.0 / rho
        } else {
            lam
        }
    }

    fn galerkin_solve(&self, rhs_values: &[f64], graph: bool, shift: f64, opts: &LinearOptions) -> Result<Vec<f64>> {
        let grid = self.cs.grid();
        let l_max = self.bandlimit();
        let b = grid.analyze(rhs_values, l_max)?;
        let diag: Vec<f64> = (0..coeff_len(l_max))
            .map(|i| self.precond_eigen((i as f64).sqrt().floor() as usize, graph, shift))
            .collect();
        let op = |x: &[f64]| -> Result<Vec<f64>> {
            let mut v = if graph { self.apply_graph_values(x)? } else { self.apply_values(x)? };
            if shift != 0.0 {
                let f = grid.synthesize(x)?;
                for (a, b) in v.iter_mut().zip(&f) {
                    *a -= shift * b;
                }
            }
            grid.analyze(&v, l_max)
        };
        let precond = |x: &[f64]| x.iter().zip(&diag).map(|(a, d)| a / d).collect::<Vec<f64>>();
        gmres(op, precond, &b, opts)
    }

    /// Solve `J(f) = g` in the band-limited space.
    pub fn solve(&self, g: &ScalarField, opts: &LinearOptions) -> Result<ScalarField> {
        let c = self.galerkin_solve(g.values(), false, 0.0, opts)?;
        ScalarField::from_coeffs(self.cs.grid(), c)
    }

    /// Solve `J(ul_θ f) = g` in the band-limited space.
    pub fn solve_graph(&self, g: &ScalarField, opts: &LinearOptions) -> Result<ScalarField> {
        let c = self.galerkin_solve(g.values(), true, 0.0, opts)?;
        ScalarField::from_coeffs(self.cs.grid(), c)
    }

    /// Symmetric quadratic form `∫ f J(f) dμ = ∫ 2|∇f|² + (V + 2 div τ) f² dμ`.
    pub fn quadratic_form(&self, f: &ScalarField) -> Result<f64> {
        let c = self.coeffs_of(f)?;
        let grid = self.cs.grid();
        let vals = grid.synthesize(&c)?;
        let lap = grid.laplacian(&c)?;
        let w = self.cs.omega().values();
        let dirichlet: Vec<f64> = vals.iter().zip(&lap).map(|(a, b)| -2.0 * a * b).collect();
        let pot: Vec<f64> = (0..grid.len())
            .map(|k| (self.potential[k] + 2.0 * self.div_tau[k]) * vals[k] * vals[k] * w[k] * w[k])
            .collect();
        Ok(grid.integrate(&dirichlet) + grid.integrate(&pot))
    }

    /// Smallest eigenvalue of the symmetrized `J` on `{∫ f dμ = 0}` by
    /// shifted inverse iteration with affine elimination of the constraint.
    pub fn min_eig_meanzero(&self, opts: &LinearOptions) -> Result<f64> {
        let grid = self.cs.grid().clone();
        let rho = self.cs.area_radius();
        let shift = -1.0 / (rho * rho);
        let area = self.cs.area();
        let mean = |f: &ScalarField| self.cs.integrate(f.values()) / area;
        let l2 = |f: &ScalarField| {
            let sq: Vec<f64> = f.values().iter().map(|v| v * v).collect();
            self.cs.integrate(&sq).sqrt()
        };
        let ones = vec![1.0; grid.len()];
        let u1 = ScalarField::from_coeffs(&grid, self.galerkin_solve(&ones, false, shift, opts)?)?;
        let u1_mean = mean(&u1);
        if u1_mean.abs() < 1e-14 * l2(&u1) {
            return Err(Error::DegenerateConstraint(u1_mean));
        }
        let start = crate::sphere_spectral::random_band_limited(&grid, grid.bandlimit().min(6), 1.0, 0x5eed)?;
        let mut x = start.axpby(1.0, &ScalarField::constant(&grid, mean(&start)), -1.0)?;
        let n0 = l2(&x);
        x = x.scale(1.0 / n0);
        let mut lambda = f64::INFINITY;
        for iter in 0..200 {
            let y = ScalarField::from_coeffs(&grid, self.galerkin_solve(x.values(), false, shift, opts)?)?;
            let alpha = mean(&y) / u1_mean;
            let y = y.axpby(1.0, &u1, -alpha)?;
            let ny = l2(&y);
            x = y.scale(1.0 / ny);
            let next = self.quadratic_form(&x)?;
            if (next - lambda).abs() <= 1e-13 * (1.0 / (rho * rho)) && iter > 2 {
                return Ok(next);
            }
            lambda = next;
        }
        Err(Error::NonConvergence { residual: lambda, iterations: 200 })
    }
}

/// Restarted right-preconditioned GMRES on `ℝⁿ` with the Euclidean inner
/// product.
pub fn gmres(
    op: impl Fn(&[f64]) -> Result<Vec<f64>>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: &LinearOptions,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut total = 0;
    let mut last_res = f64::INFINITY;
    let mut rel = 1.0;
    while total < opts.max_iter {
        let ax = op(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let beta = norm2(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            return Ok(x);
        }
        if rel > 0.999 * last_res && total > 0 {
            break;
        }
        last_res = rel;
        let m = opts.restart;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut hmat = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..m {
            total += 1;
            let zj = precond(&v[j]);
            let mut w = op(&zj)?;
            z.push(zj);
            for i in 0..=j {
                let hij = dot(&w, &v[i]);
                hmat[i][j] = hij;
                for (a, c) in w.iter_mut().zip(&v[i]) {
                    *a -= hij * c;
                }
            }
            let hn = norm2(&w);
            hmat[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * hmat[i][j] + sn[i] * hmat[i + 1][j];
                hmat[i + 1][j] = -sn[i] * hmat[i][j] + cs[i] * hmat[i + 1][j];
                hmat[i][j] = t;
            }
            let d = (hmat[j][j] * hmat[j][j] + hmat[j + 1][j] * hmat[j + 1][j]).sqrt();
            if d == 0.0 {
                k_used = j;
                break;
            }
            cs[j] = hmat[j][j] / d;
            sn[j] = hmat[j + 1][j] / d;
            hmat[j][j] = d;
            hmat[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k_used = j + 1;
            if g[j + 1].abs() / bnorm <= 0.1 * opts.tol || hn == 0.0 || total >= opts.max_iter {
                break;
            }
            v.push(w.iter().map(|a| a / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in (i + 1)..k_used {
                s -= hmat[i][l] * y[l];
            }
            y[i] = s / hmat[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (a, c) in x.iter_mut().zip(&z[i]) {
                *a += yi * c;
            }
        }
    }
    let ax = op(&x)?;
    let res = norm2(&b.iter().zip(&ax).map(|(a, c)| a - c).collect::<Vec<f64>>()) / bnorm;
    if res <= opts.tol {
        return Ok(x);
    }
    Err(Error::NonConvergence { residual: res.min(rel.max(res)), iterations: total })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `J(f)` on `cs`.
pub fn jacobi_apply(ctx: &JacobiContext, f: &ScalarField) -> Result<ScalarField> {
    ctx.apply(f)
}

/// Solve `J(f) = g` with default tolerances.
pub fn jacobi_solve(ctx: &JacobiContext, g: &ScalarField) -> Result<ScalarField> {
    ctx.solve(g, &LinearOptions::default())
}

/// Smallest mean-zero eigenvalue with default tolerances.
pub fn min_eig_meanzero(ctx: &JacobiContext) -> Result<f64> {
    ctx.min_eig_meanzero(&LinearOptions::default())
}

/// `‖J(f) − g‖_{L²(dμ)}` evaluated at the nodes.
pub fn residual_l2(ctx: &JacobiContext, f: &ScalarField, g: &ScalarField) -> Result<f64> {
    let jf = ctx.apply(f)?;
    let d: Vec<f64> = jf.values().iter().zip(g.values()).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(ctx.cross_section().integrate(&d).sqrt())
}

/// Weighted `W^{2,2}(γ_ω)` norm `‖f‖ + ρ‖∇f‖ + ρ²‖∇²f‖` in `L²(dμ)`.
pub fn w22_norm(cs: &CrossSection, f: &ScalarField) -> Result<f64> {
    let rho = cs.area_radius();
    let l2 = |t: &FrameTensor| {
        let n = cs.gamma_norm(t);
        let sq: Vec<f64> = n.iter().map(|v| v * v).collect();
        cs.integrate(&sq).sqrt()
    };
    let t0 = FrameTensor::from_scalar(&f.band_limited()?);
    let t1 = cs.covariant_derivative(&t0)?;
    let t2 = cs.covariant_derivative(&t1)?;
    Ok(l2(&t0) + rho * l2(&t1) + rho * rho * l2(&t2))
}

/// Settings of the Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Stop when `max|𝓗² − ⨍𝓗²| ≤ tol·⨍𝓗²`.
    pub tol: f64,
    /// Iteration budget.
    pub max_iter: usize,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
    /// Linear solver tolerances.
    pub linear: LinearOptions,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 30, max_halvings: 8, linear: LinearOptions::default() }
    }
}

/// One line of the Newton log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonRow {
    /// Iteration index (0 is the initial surface).
    pub iter: usize,
    /// `max|𝓗² − ⨍𝓗²|/⨍𝓗²` at this iterate.
    pub residual: f64,
    /// Constraint multiplier `c` of the step leading here.
    pub c: f64,
    /// Damping factor of the step leading here.
    pub damping: f64,
}

/// Outcome of [`newton_stcmc`]; on failure the last valid iterate is kept.
#[derive(Clone, Debug)]
pub struct NewtonRun {
    /// Last iterate.
    pub surface: CrossSection,
    /// Residual history.
    pub log: Vec<NewtonRow>,
    /// `None` on convergence, otherwise the reason for stopping.
    pub failure: Option<Error>,
}

impl NewtonRun {
    /// True when the tolerance was reached.
    pub fn converged(&self) -> bool {
        self.failure.is_none()
    }
}

/// `max|𝓗² − ⨍𝓗²| / ⨍𝓗²`.
pub fn stcmc_residual(cs: &CrossSection) -> f64 {
    let m = cs.mean_h2();
    cs.h2_values().iter().fold(0.0f64, |a, v| a.max((v - m).abs())) / m.abs()
}

/// Newton iteration for `𝓗² = const` at the area of `cs0`.
///
/// Each step solves `J(ul_θ f) = c − 𝓗²` with `f = c·J⁻¹(1) − J⁻¹(𝓗²)`
/// (in the graph sense) and `c` chosen so that the linearized area change
/// `∫ ul_θ f dμ` equals the current area defect, then backtracks by halving
/// while the residual does not decrease.
pub fn newton_stcmc(cs0: &CrossSection, cfg: &NewtonConfig) -> NewtonRun {
    let target_area = cs0.area();
    let mut cs = cs0.clone();
    let mut residual = stcmc_residual(&cs);
    let mut log = vec![NewtonRow { iter: 0, residual, c: 0.0, damping: 1.0 }];
    let fail = |cs: CrossSection, log: Vec<NewtonRow>, e: Error| NewtonRun { surface: cs, log, failure: Some(e) };
    for iter in 1..=cfg.max_iter {
        if residual <= cfg.tol {
            return NewtonRun { surface: cs, log, failure: None };
        }
        let step = (|| -> Result<(ScalarField, f64)> {
            let ctx = JacobiContext::new(&cs)?;
            let grid = cs.grid();
            let f1 = ctx.solve_graph(&ScalarField::constant(grid, 1.0), &cfg.linear)?;
            let h2 = ScalarField::from_values(grid, cs.h2_values().to_vec())?;
            let f2 = ctx.solve_graph(&h2, &cfg.linear)?;
            let ul = cs.ul_theta_values();
            let i1 = cs.integrate(&f1.values().iter().zip(ul).map(|(a, b)| a * b).collect::<Vec<f64>>());
            let i2 = cs.integrate(&f2.values().iter().zip(ul).map(|(a, b)| a * b).collect::<Vec<f64>>());
            if i1.abs() <= 1e-14 * cs.area() * f1.max_abs().max(1e-300) {
                return Err(Error::DegenerateConstraint(i1));
            }
            let c = (target_area - cs.area() + i2) / i1;
            Ok((f1.axpby(c, &f2, -1.0)?, c))
        })();
        let (f, c) = match step {
            Ok(v) => v,
            Err(e) => return fail(cs, log, e),
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            if let Ok(w) = cs.omega().axpby(1.0, &f, t) {
                if let Ok(next) = CrossSection::new(cs.model(), &w) {
                    let r = stcmc_residual(&next);
                    if r < residual {
                        accepted = Some((next, r));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((next, r)) => {
                cs = next;
                residual = r;
                log.push(NewtonRow { iter, residual, c, damping: t });
            }
            None => return fail(cs, log, Error::Stagnation { iteration: iter, residual }),
        }
    }
    if residual <= cfg.tol {
        NewtonRun { surface: cs, log, failure: None }
    } else {
        fail(cs, log, Error::Stagnation { iteration: cfg.max_iter, residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background_model::BackgroundModel;
    use crate::sphere_spectral::{random_band_limited, SphereGrid};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid(l: usize) -> Arc<SphereGrid> {
        SphereGrid::new(l).unwrap()
    }

    fn schw() -> BackgroundModel {
        BackgroundModel::schwarzschild(1.0).unwrap()
    }

    fn round(g: &Arc<SphereGrid>, model: &BackgroundModel, r: f64) -> CrossSection {
        CrossSection::new(model, &ScalarField::constant(g, r)).unwrap()
    }

    fn perturbed(g: &Arc<SphereGrid>, base: f64, amp: f64, seed: u64) -> ScalarField {
        random_band_limited(g, 6, amp, seed).unwrap().axpby(1.0, &ScalarField::constant(g, base), 1.0).unwrap()
    }

    fn rel_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        let s = b.max_abs().max(a.max_abs());
        a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / s
    }

    #[test]
    fn spectrum_on_round_leaf() {
        let g = grid(16);
        let ctx = JacobiContext::new(&round(&g, &schw(), 10.0)).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        assert!(ctx.apply(&one).unwrap().values().iter().all(|v| (v + 0.028).abs() <= 1e-12));
        for (l, expected) in [(1usize, 0.012), (2, 0.092)] {
            for m in -(l as i64)..=(l as i64) {
                let y = ScalarField::harmonic(&g, l, m, 1.0).unwrap();
                let jy = ctx.apply(&y).unwrap();
                for (a, b) in jy.values().iter().zip(y.values()) {
                    assert_abs_diff_eq!(*a, expected * b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn general_path_matches_closed_form() {
        let g = grid(24);
        for seed in 0..3 {
            let cs = CrossSection::new(&schw(), &perturbed(&g, 20.0, 1.0, seed)).unwrap();
            let ctx = JacobiContext::new(&cs).unwrap();
            let f = random_band_limited(&g, 10, 1.0, seed + 100).unwrap();
            let a = ctx.apply(&f).unwrap();
            let b = ctx.apply_closed_form(&f).unwrap();
            assert!(rel_diff(&a, &b) <= 1e-11);
        }
    }

    #[test]
    fn symmetric_in_model() {
        let g = grid(20);
        let cs = CrossSection::new(&schw(), &perturbed(&g, 20.0, 1.0, 4)).unwrap();
        let ctx = JacobiContext::new(&cs).unwrap();
        let f = random_band_limited(&g, 8, 1.0, 1).unwrap();
        let h = random_band_limited(&g, 8, 1.0, 2).unwrap();
        let prod = |a: &ScalarField, b: &ScalarField| cs.integrate(&a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect::<Vec<f64>>());
        let fjh = prod(&f, &ctx.apply(&h).unwrap());
        let hjf = prod(&h, &ctx.apply(&f).unwrap());
        assert!((fjh - hjf).abs() <= 1e-10 * fjh.abs().max(hjf.abs()));
        let q = ctx.quadratic_form(&f).unwrap();
        assert!((q - prod(&f, &ctx.apply(&f).unwrap())).abs() <= 1e-10 * q.abs());
    }

    #[test]
    fn solve_recovers_known_solution() {
        let g = grid(24);
        let cs = CrossSection::new(&schw(), &perturbed(&g, 20.0, 0.5, 7)).unwrap();
        let ctx = JacobiContext::new(&cs).unwrap();
        let f = random_band_limited(&g, 8, 1.0, 3).unwrap();
        let rhs = ctx.apply(&f).unwrap();
        let sol = jacobi_solve(&ctx, &rhs).unwrap();
        assert!(rel_diff(&sol, &f) <= 1e-9);
        let gl2 = cs.integrate(&rhs.values().iter().map(|v| v * v).collect::<Vec<f64>>()).sqrt();
        assert!(residual_l2(&ctx, &sol, &rhs).unwrap() <= 1e-10 * gl2);
        let sol_g = ctx.solve_graph(&ctx.apply_graph(&f).unwrap(), &LinearOptions::default()).unwrap();
        assert!(rel_diff(&sol_g, &f) <= 1e-9);
    }

    #[test]
    fn minkowski_boost_kernel_is_not_invertible() {
        let g = grid(12);
        let ctx = JacobiContext::new(&round(&g, &BackgroundModel::minkowski(), 10.0)).unwrap();
        let y10 = ScalarField::harmonic(&g, 1, 0, 1.0).unwrap();
        assert!(matches!(jacobi_solve(&ctx, &y10), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn min_eig_examples() {
        let g = grid(12);
        let lam = min_eig_meanzero(&JacobiContext::new(&round(&g, &schw(), 10.0)).unwrap()).unwrap();
        assert_abs_diff_eq!(lam, 0.012, epsilon = 1e-6);
        let lam = min_eig_meanzero(&JacobiContext::new(&round(&g, &BackgroundModel::minkowski(), 10.0)).unwrap()).unwrap();
        assert_abs_diff_eq!(lam, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn newton_round_is_fixed_point() {
        let g = grid(12);
        let run = newton_stcmc(&round(&g, &schw(), 20.0), &NewtonConfig::default());
        assert!(run.converged());
        assert_eq!(run.log.len(), 1);
    }

    #[test]
    fn newton_converges_to_round_sphere() {
        let g = grid(16);
        let w = ScalarField::constant(&g, 20.0).axpby(1.0, &ScalarField::harmonic(&g, 2, 0, 0.5).unwrap(), 1.0).unwrap();
        let cs0 = CrossSection::new(&schw(), &w).unwrap();
        let run = newton_stcmc(&cs0, &NewtonConfig::default());
        assert!(run.converged(), "{:?}", run.log);
        let out = run.surface.omega();
        let c = run.surface.area_radius();
        assert!(out.values().iter().all(|v| (v - c).abs() <= 1e-8 * 20.0));
        assert!((run.surface.area() - cs0.area()).abs() <= 1e-12 * cs0.area());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn prop_stability_form(seed in 0u64..1000, fseed in 0u64..1000) {
            let g = grid(16);
            let m = 1.0;
            let sigma = 20.0;
            let cs = CrossSection::new(&schw(), &perturbed(&g, sigma, 0.3, seed)).unwrap();
            let ctx = JacobiContext::new(&cs).unwrap();
            let f = random_band_limited(&g, 8, 1.0, fseed).unwrap();
            let mean = cs.integrate(f.values()) / cs.area();
            let f = f.axpby(1.0, &ScalarField::constant(&g, mean), -1.0).unwrap();
            let q = ctx.quadratic_form(&f).unwrap();
            let l2 = cs.integrate(&f.values().iter().map(|v| v * v).collect::<Vec<f64>>());
            prop_assert!(q >= 6.0 * m / sigma.powi(3) * l2);
        }
    }
}
