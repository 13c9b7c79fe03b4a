//! Area-preserving null mean curvature flow of graph functions.
//!
//! The graph function evolves by `∂_t ω = −(ω/4)(𝓗² − ⨍𝓗²)`. The state is
//! the vector of spherical harmonic coefficients of `ω` at the grid
//! bandlimit; the right-hand side is evaluated at the nodes and projected back
//! by the quadrature-based analysis, and time stepping is classical RK4.

use serde::{Deserialize, Serialize};

use crate::background_model::{least_squares_slope, BackgroundModel};
use crate::boost_center::{boost_vector, z_vector};
use crate::cross_section_geometry::CrossSection;
use crate::error::{Error, Result};
use crate::identity_suite::apriori_report;
use crate::sphere_spectral::{ScalarField, SphereGrid};
use std::sync::Arc;

/// Number of times a rejected step is retried with half the step size.
const MAX_HALVINGS: usize = 12;

/// Controls for [`run_flow`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Fraction of the diffusive step bound `(min ω)²/(L(L+1))`.
    pub cfl: f64,
    /// Stop when `rms(𝓗² − ⨍𝓗²)/⨍𝓗² ≤ tol`.
    pub tol: f64,
    /// Step budget.
    pub max_steps: usize,
    /// Time budget.
    pub max_time: f64,
    /// Record a series row and a snapshot every `cadence` steps.
    pub cadence: usize,
    /// Seed for random perturbations of the initial surface.
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { cfl: 0.5, tol: 1e-10, max_steps: 100_000, max_time: 1e6, cadence: 100, seed: 0 }
    }
}

impl FlowConfig {
    /// Check the documented ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidArgument(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::InvalidArgument(format!("max_time must be positive, got {}", self.max_time)));
        }
        if self.cadence == 0 {
            return Err(Error::InvalidArgument("cadence must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why a flow run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The stop tolerance was reached.
    Tolerance,
    /// The step budget was exhausted.
    MaxSteps,
    /// The time budget was exhausted.
    MaxTime,
    /// A step failed even after repeated halving.
    StepFailure,
}

impl Termination {
    /// Stable lowercase name used in manifests.
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::MaxSteps => "max_steps",
            Termination::MaxTime => "max_time",
            Termination::StepFailure => "step_failure",
        }
    }
}

/// One row of the monitored time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    /// Step index.
    pub step: usize,
    /// Flow time.
    pub t: f64,
    /// `|Σ_t|`.
    pub area: f64,
    /// Area radius.
    pub rho: f64,
    /// `⨍𝓗²`.
    pub mean_h2: f64,
    /// `‖𝓗² − ⨍𝓗²‖_{L²(γ_ω)}`.
    pub l2_dev: f64,
    /// `max|𝓗² − ⨍𝓗²|`.
    pub sup_dev: f64,
    /// Boost vector of the associated 4-vector.
    pub a: [f64; 3],
    /// `σ⁴ max|Å|_γ` with `σ` the initial area radius.
    pub a_tf_scaled: f64,
    /// `σ⁵ max|∇Å|_γ`.
    pub grad_a_tf_scaled: f64,
}

/// Graph function at a recorded step.
#[derive(Clone, Debug)]
pub struct Snapshot {
    /// Step index.
    pub step: usize,
    /// Flow time.
    pub t: f64,
    /// `ω` at that time.
    pub omega: ScalarField,
}

/// Result of [`run_flow`].
#[derive(Clone, Debug)]
pub struct FlowRun {
    /// Series rows at the configured cadence, plus the first and last step.
    pub rows: Vec<FlowRow>,
    /// `(t, ‖𝓗² − ⨍𝓗²‖²_{L²})` at every step.
    pub decay: Vec<(f64, f64)>,
    /// Snapshots at the configured cadence, plus the first and last step.
    pub snapshots: Vec<Snapshot>,
    /// The last valid surface.
    pub final_section: CrossSection,
    /// Why the run stopped.
    pub termination: Termination,
    /// The step failure, when `termination` is [`Termination::StepFailure`].
    pub failure: Option<Error>,
    /// Number of accepted steps.
    pub steps: usize,
    /// Largest relative deviation of the area from its initial value.
    pub max_area_drift: f64,
}

impl FlowRun {
    /// Whether the stop tolerance was reached.
    pub fn converged(&self) -> bool {
        self.termination == Termination::Tolerance
    }

    /// Fitted decay rate of the squared deviation (see [`measure_decay`]).
    pub fn decay_rate(&self) -> Result<f64> {
        measure_decay(&self.decay)
    }
}

/// Node values needed to advance the flow from one state.
struct Stage {
    rhs: Vec<f64>,
    area: f64,
    mean: f64,
    l2_sq: f64,
    min_omega: f64,
}

impl Stage {
    fn relative_rms(&self) -> f64 {
        (self.l2_sq / self.area).sqrt() / self.mean
    }
}

fn evaluate(model: &BackgroundModel, grid: &SphereGrid, coeffs: &[f64]) -> Result<Stage> {
    let (w, [gt, gp], lap) = grid.value_gradient_laplacian(coeffs)?;
    let min_omega = w.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_omega >= model.r_min()) {
        return Err(Error::PositivityLost(min_omega));
    }
    let n = w.len();
    let mut h2 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    for k in 0..n {
        let o = w[k];
        let o2 = o * o;
        let (h, _, _) = model.profile(o);
        h2[k] = 4.0 * h / o2 - 4.0 * lap[k] / (o2 * o) + 4.0 * (gt[k] * gt[k] + gp[k] * gp[k]) / (o2 * o2);
        w2[k] = o2;
    }
    let area = grid.integrate(&w2);
    let weighted: Vec<f64> = h2.iter().zip(&w2).map(|(a, b)| a * b).collect();
    let mean = grid.integrate(&weighted) / area;
    let dev_sq: Vec<f64> = h2.iter().zip(&w2).map(|(a, b)| (a - mean).powi(2) * b).collect();
    let l2_sq = grid.integrate(&dev_sq);
    let rhs = h2.iter().zip(&w).map(|(a, o)| -0.25 * o * (a - mean)).collect();
    Ok(Stage { rhs, area, mean, l2_sq, min_omega })
}

/// `−(ω/4)(𝓗² − ⨍𝓗²)` at the nodes of `Σ`'s grid.
pub fn flow_rhs(cs: &CrossSection) -> ScalarField {
    let mean = cs.mean_h2();
    let values = cs.omega().values().iter().zip(cs.h2_values()).map(|(o, h)| -0.25 * o * (h - mean)).collect();
    ScalarField::from_values(cs.grid(), values).expect("values live on the section's grid")
}

/// Diffusive step bound `cfl·(min ω)²/(L(L+1))`.
pub fn stable_dt(cfl: f64, min_omega: f64, bandlimit: usize) -> f64 {
    cfl * min_omega * min_omega / ((bandlimit * (bandlimit + 1)).max(1) as f64)
}

fn axpy(c: &[f64], k: &[f64], s: f64) -> Vec<f64> {
    c.iter().zip(k).map(|(a, b)| a + s * b).collect()
}

fn rk4(model: &BackgroundModel, grid: &SphereGrid, c: &[f64], first: &Stage, dt: f64) -> Result<Vec<f64>> {
    let degree = grid.bandlimit();
    let k1 = grid.analyze(&first.rhs, degree)?;
    let k2 = grid.analyze(&evaluate(model, grid, &axpy(c, &k1, 0.5 * dt))?.rhs, degree)?;
    let k3 = grid.analyze(&evaluate(model, grid, &axpy(c, &k2, 0.5 * dt))?.rhs, degree)?;
    let k4 = grid.analyze(&evaluate(model, grid, &axpy(c, &k3, dt))?.rhs, degree)?;
    Ok((0..c.len()).map(|i| c[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// One classical RK4 step of size `dt`.
pub fn step(cs: &CrossSection, dt: f64) -> Result<CrossSection> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be non-negative, got {dt}")));
    }
    if dt == 0.0 {
        return CrossSection::new(cs.model(), cs.omega());
    }
    let grid = cs.grid();
    let c = cs.omega().spectral()?;
    let first = evaluate(cs.model(), grid, &c)?;
    let next = rk4(cs.model(), grid, &c, &first, dt)?;
    CrossSection::new(cs.model(), &ScalarField::from_coeffs(grid, next)?)
}

fn record(cs: &CrossSection, sigma: f64, step: usize, t: f64) -> Result<FlowRow> {
    let mean = cs.mean_h2();
    let dev: Vec<f64> = cs.h2_values().iter().map(|h| h - mean).collect();
    let sq: Vec<f64> = dev.iter().map(|d| d * d).collect();
    let a = boost_vector(&z_vector(cs.omega())?)?;
    let apriori = apriori_report(cs, sigma, [f64::INFINITY; 3])?;
    Ok(FlowRow {
        step,
        t,
        area: cs.area(),
        rho: cs.area_radius(),
        mean_h2: mean,
        l2_dev: cs.integrate(&sq).sqrt(),
        sup_dev: dev.iter().fold(0.0f64, |m, d| m.max(d.abs())),
        a,
        a_tf_scaled: apriori.a_tf_scaled,
        grad_a_tf_scaled: apriori.grad_a_tf_scaled,
    })
}

fn section(model: &BackgroundModel, grid: &Arc<SphereGrid>, c: &[f64]) -> Result<CrossSection> {
    CrossSection::new(model, &ScalarField::from_coeffs(grid, c.to_vec())?)
}

/// Run the flow from `Σ₀` until the tolerance, the step budget or the time
/// budget is reached.
///
/// A step whose stages leave the admissible region is retried with half the
/// step size; if that keeps failing the run stops with
/// [`Termination::StepFailure`] and keeps the last valid state.
pub fn run_flow(cs0: &CrossSection, cfg: &FlowConfig) -> Result<FlowRun> {
    cfg.validate()?;
    let model = cs0.model().clone();
    let grid = cs0.grid().clone();
    let bandlimit = grid.bandlimit();
    let sigma = cs0.area_radius();
    let mut c = cs0.omega().spectral()?;
    let mut stage = evaluate(&model, &grid, &c)?;
    let initial_area = stage.area;
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut rows = vec![record(cs0, sigma, 0, 0.0)?];
    let mut snapshots = vec![Snapshot { step: 0, t: 0.0, omega: cs0.omega().clone() }];
    let mut decay = Vec::new();
    let mut max_area_drift = 0.0f64;
    let mut failure = None;
    let termination = loop {
        decay.push((t, stage.l2_sq));
        max_area_drift = max_area_drift.max((stage.area - initial_area).abs() / initial_area);
        if stage.relative_rms() <= cfg.tol {
            break Termination::Tolerance;
        }
        if steps >= cfg.max_steps {
            break Termination::MaxSteps;
        }
        if t >= cfg.max_time {
            break Termination::MaxTime;
        }
        let mut dt = stable_dt(cfg.cfl, stage.min_omega, bandlimit);
        let mut accepted = None;
        let mut last_err = None;
        for _ in 0..=MAX_HALVINGS {
            match rk4(&model, &grid, &c, &stage, dt).and_then(|next| evaluate(&model, &grid, &next).map(|s| (next, s))) {
                Ok(ok) => {
                    accepted = Some(ok);
                    break;
                }
                Err(e @ (Error::PositivityLost(_) | Error::RadiusBelowMinimum { .. })) => {
                    last_err = Some(e);
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        let Some((next, next_stage)) = accepted else {
            failure = Some(Error::StepFailure {
                t,
                reason: last_err.map(|e| e.to_string()).unwrap_or_default(),
            });
            break Termination::StepFailure;
        };
        c = next;
        stage = next_stage;
        t += dt;
        steps += 1;
        if steps % cfg.cadence == 0 {
            let cs = section(&model, &grid, &c)?;
            rows.push(record(&cs, sigma, steps, t)?);
            snapshots.push(Snapshot { step: steps, t, omega: cs.omega().clone() });
        }
    };
    let final_section = section(&model, &grid, &c)?;
    if rows.last().map(|r| r.step) != Some(steps) {
        rows.push(record(&final_section, sigma, steps, t)?);
        snapshots.push(Snapshot { step: steps, t, omega: final_section.omega().clone() });
    }
    Ok(FlowRun { rows, decay, snapshots, final_section, termination, failure, steps, max_area_drift })
}

/// Exponential rate of a decaying positive series `(t, y)`: minus the
/// least-squares slope of `ln y` over the samples after `y` first drops by a
/// factor 100 (the norm by a factor 10).
pub fn measure_decay(series: &[(f64, f64)]) -> Result<f64> {
    if let Some(i) = series.iter().position(|&(_, y)| !(y > 0.0)) {
        return Err(Error::NonPositiveSeries(i));
    }
    let Some(&(_, y0)) = series.first() else {
        return Err(Error::InsufficientSamples { needed: 10, have: 0 });
    };
    let start = series.iter().position(|&(_, y)| y <= 0.01 * y0).unwrap_or(series.len());
    let window = &series[start..];
    if window.len() < 10 {
        return Err(Error::InsufficientSamples { needed: 10, have: window.len() });
    }
    let ts: Vec<f64> = window.iter().map(|p| p.0).collect();
    let ls: Vec<f64> = window.iter().map(|p| p.1.ln()).collect();
    Ok(-least_squares_slope(&ts, &ls))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost_center::boosted_profile;
    use crate::sphere_spectral::random_band_limited;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn schw() -> BackgroundModel {
        BackgroundModel::schwarzschild(1.0).unwrap()
    }

    fn perturbed(l: usize, base: f64, modes: &[(usize, i64, f64)]) -> ScalarField {
        let g = SphereGrid::new(l).unwrap();
        let mut w = ScalarField::constant(&g, base);
        for &(d, m, a) in modes {
            w = w.axpby(1.0, &ScalarField::harmonic(&g, d, m, a).unwrap(), 1.0).unwrap();
        }
        w
    }

    #[test]
    fn rhs_examples() {
        let g = SphereGrid::new(16).unwrap();
        let cs = CrossSection::new(&schw(), &ScalarField::constant(&g, 20.0)).unwrap();
        assert!(flow_rhs(&cs).max_abs() <= 1e-15);
        let cs = CrossSection::new(&BackgroundModel::minkowski(), &boosted_profile(&g, 10.0, &[0.1, -0.2, 0.2]).unwrap()).unwrap();
        assert!(flow_rhs(&cs).max_abs() <= 1e-10);
    }

    #[test]
    fn step_examples() {
        let cs = CrossSection::new(&schw(), &perturbed(16, 20.0, &[(2, 0, 0.5)])).unwrap();
        let same = step(&cs, 0.0).unwrap();
        assert!(same.omega().axpby(1.0, cs.omega(), -1.0).unwrap().max_abs() == 0.0);
        let round = CrossSection::new(&schw(), &perturbed(16, 20.0, &[])).unwrap();
        let next = step(&round, 5.0).unwrap();
        assert!(next.omega().axpby(1.0, round.omega(), -1.0).unwrap().max_abs() <= 1e-12);
        assert!(step(&cs, -1.0).is_err());
    }

    #[test]
    fn richardson_local_error_is_fifth_order() {
        let cs = CrossSection::new(&schw(), &perturbed(16, 20.0, &[(2, 0, 0.5)])).unwrap();
        let local = |dt: f64| {
            let one = step(&cs, dt).unwrap();
            let two = step(&step(&cs, 0.5 * dt).unwrap(), 0.5 * dt).unwrap();
            one.omega().axpby(1.0, two.omega(), -1.0).unwrap().max_abs()
        };
        let (e1, e2) = (local(4.0), local(2.0));
        let order = (e1 / e2).log2();
        assert!((4.5..=5.5).contains(&order), "order {order} ({e1:e}, {e2:e})");
    }

    #[test]
    fn schwarzschild_flow_rounds_out() {
        let cs = CrossSection::new(&schw(), &perturbed(16, 20.0, &[(2, 0, 0.5)])).unwrap();
        let run = run_flow(&cs, &FlowConfig::default()).unwrap();
        assert!(run.converged(), "{:?}", run.termination);
        let w = run.final_section.omega();
        let c = 0.5 * (w.max() + w.min());
        assert!((w.max() - w.min()) / 2.0 / 20.0 <= 1e-6);
        assert!((c - 20.0).abs() <= 1e-3, "{c}");
        assert!(run.max_area_drift <= 1e-8, "{}", run.max_area_drift);
        let last = run.rows.last().unwrap();
        assert!(last.sup_dev <= 10.0 * 1e-10 * last.mean_h2);
        assert!(run.rows.windows(2).all(|p| p[1].t > p[0].t));
        // Squared-norm rate equals the degree-2 eigenvalue 8/σ² + 12m/σ³.
        let rate = run.decay_rate().unwrap();
        assert!((rate - 0.0215).abs() <= 0.15 * 0.0215, "{rate}");
        assert!(rate >= 4.0 / 8000.0);
    }

    #[test]
    fn degree_one_decay_rate() {
        let cs = CrossSection::new(&schw(), &perturbed(16, 20.0, &[(1, 0, 0.1)])).unwrap();
        let cfg = FlowConfig { max_time: 4500.0, ..FlowConfig::default() };
        let run = run_flow(&cs, &cfg).unwrap();
        let rate = run.decay_rate().unwrap();
        // 12m/σ³ at σ = 20.
        assert!((rate - 0.0015).abs() <= 0.15 * 0.0015, "{rate}");
        assert!(run.max_area_drift <= 1e-8);
    }

    #[test]
    fn minkowski_flow_reaches_constant_curvature() {
        let g = SphereGrid::new(16).unwrap();
        let w = boosted_profile(&g, 10.0, &[0.0, 0.0, 0.2])
            .unwrap()
            .axpby(1.0, &ScalarField::harmonic(&g, 2, 0, 0.3).unwrap(), 1.0)
            .unwrap();
        let cs = CrossSection::new(&BackgroundModel::minkowski(), &w).unwrap();
        let run = run_flow(&cs, &FlowConfig::default()).unwrap();
        assert!(run.converged());
        let fin = &run.final_section;
        let rho = fin.area_radius();
        let (h2, _) = fin.spacetime_mean_curvature();
        assert!(h2.values().iter().all(|v| (v - 4.0 / (rho * rho)).abs() <= 1e-6 * 4.0 / (rho * rho)));
        let k = fin.gauss_curvature();
        assert!((k.max() - k.min()) * rho * rho <= 1e-8);
    }

    #[test]
    fn apriori_membership_along_flow() {
        let cs = CrossSection::new(&schw(), &perturbed(16, 20.0, &[(2, 0, 0.05)])).unwrap();
        let cfg = FlowConfig { cadence: 10, ..FlowConfig::default() };
        let run = run_flow(&cs, &cfg).unwrap();
        assert!(run.converged());
        for snap in &run.snapshots {
            let s = CrossSection::new(&schw(), &snap.omega).unwrap();
            assert!(apriori_report(&s, 20.0, [2.0, 10.0, 10.0]).unwrap().member);
        }
    }

    #[test]
    fn budgets_stop_the_run() {
        let cs = CrossSection::new(&schw(), &perturbed(12, 20.0, &[(2, 0, 0.5)])).unwrap();
        let run = run_flow(&cs, &FlowConfig { max_steps: 3, cadence: 2, ..FlowConfig::default() }).unwrap();
        assert_eq!(run.termination, Termination::MaxSteps);
        assert_eq!(run.steps, 3);
        assert_eq!(run.rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 2, 3]);
        let run = run_flow(&cs, &FlowConfig { max_time: 1.0, ..FlowConfig::default() }).unwrap();
        assert_eq!(run.termination, Termination::MaxTime);
        assert!(run_flow(&cs, &FlowConfig { cfl: 1.5, ..FlowConfig::default() }).is_err());
    }

    #[test]
    fn measure_decay_examples() {
        let series: Vec<(f64, f64)> = (0..2000).map(|i| (i as f64, (-0.01 * i as f64).exp())).collect();
        assert_abs_diff_eq!(measure_decay(&series).unwrap(), 0.01, epsilon = 1e-6);
        assert_eq!(measure_decay(&[(0.0, 1.0), (1.0, 0.0)]), Err(Error::NonPositiveSeries(1)));
        let short: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, (-0.01 * i as f64).exp())).collect();
        assert!(matches!(measure_decay(&short), Err(Error::InsufficientSamples { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn prop_rhs_is_area_stationary(seed in 0u64..10_000, base in 12.0f64..30.0, m in 0.0f64..2.0) {
            let g = SphereGrid::new(12).unwrap();
            let w = random_band_limited(&g, 6, 1.0, seed).unwrap().axpby(1.0, &ScalarField::constant(&g, base), 1.0).unwrap();
            let model = BackgroundModel::schwarzschild(m.max(1e-3)).unwrap();
            let cs = CrossSection::new(&model, &w).unwrap();
            let rhs = flow_rhs(&cs);
            let weighted: Vec<f64> = rhs.values().iter().zip(cs.ul_theta_values()).map(|(a, b)| a * b).collect();
            let scale = cs.integrate(&rhs.values().iter().zip(cs.ul_theta_values()).map(|(a, b)| (a * b).abs()).collect::<Vec<_>>());
            prop_assert!(cs.integrate(&weighted).abs() <= 1e-13 * scale.max(1e-300) + 1e-300);
        }
    }
}
