//! Families of STCMC leaves over a range of area radii, foliation checks,
//! Bondi data and the uniqueness probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background_model::{BackgroundModel, ModelKind};
use crate::boost_center::{boost_vector, z_vector, BoostVector};
use crate::cross_section_geometry::CrossSection;
use crate::error::{Error, Result};
use crate::flow_engine::{run_flow, FlowConfig};
use crate::identity_suite::{apriori_report, APrioriReport};
use crate::sphere_spectral::ScalarField;
use crate::stcmc_solver::{newton_stcmc, JacobiContext, LinearOptions, NewtonConfig};

/// How each leaf is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafMethod {
    /// Run the area-preserving flow to its tolerance.
    Flow,
    /// Constrained Newton iteration.
    Newton,
}

/// Where the warm start of each leaf comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuation {
    /// The previous leaf scaled by `σ/(σ − Δσ)`; leaves are solved in order.
    Sequential,
    /// The first leaf scaled by `σ/σ_min`; leaves after the first are solved
    /// concurrently.
    FromFirstLeaf,
}

/// Settings of [`build_foliation`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoliationConfig {
    /// Smallest area radius.
    pub sigma_min: f64,
    /// Largest area radius (inclusive up to round-off).
    pub sigma_max: f64,
    /// Spacing of the radius grid.
    pub delta_sigma: f64,
    /// Leaf solver.
    pub method: LeafMethod,
    /// Warm start strategy.
    pub continuation: Continuation,
    /// Whether to compute the mean-zero spectral bound of the Jacobi
    /// operator on every leaf.
    pub spectral_check: bool,
    /// A-priori class bounds used in the per-leaf reports.
    pub apriori_bounds: [f64; 3],
    /// Flow settings when `method` is `flow`.
    pub flow: FlowConfig,
    /// Newton settings when `method` is `newton`.
    pub newton: NewtonConfig,
}

impl Default for FoliationConfig {
    fn default() -> Self {
        Self {
            sigma_min: 15.0,
            sigma_max: 30.0,
            delta_sigma: 1.0,
            method: LeafMethod::Newton,
            continuation: Continuation::Sequential,
            spectral_check: false,
            apriori_bounds: [2.0, 10.0, 10.0],
            flow: FlowConfig::default(),
            newton: NewtonConfig::default(),
        }
    }
}

impl FoliationConfig {
    /// The radius grid `σ_min, σ_min + Δσ, …` up to `σ_max`.
    pub fn sigmas(&self) -> Vec<f64> {
        let n = ((self.sigma_max - self.sigma_min) / self.delta_sigma + 1e-9).floor() as usize;
        (0..=n).map(|i| self.sigma_min + i as f64 * self.delta_sigma).collect()
    }

    fn validate(&self, model: &BackgroundModel) -> Result<()> {
        let floor = model.r_min().max(3.0 * model.mass());
        if !(self.sigma_min > floor) {
            return Err(Error::InvalidArgument(format!("sigma_min = {} must exceed {floor}", self.sigma_min)));
        }
        if !(self.delta_sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("delta_sigma must be positive, got {}", self.delta_sigma)));
        }
        if !(self.sigma_max >= self.sigma_min) {
            return Err(Error::InvalidArgument("sigma_max must not be below sigma_min".into()));
        }
        Ok(())
    }
}

/// One leaf of the family.
#[derive(Clone, Debug)]
pub struct Leaf {
    /// Target area radius.
    pub sigma: f64,
    /// The leaf.
    pub section: CrossSection,
    /// `⨍𝓗²`.
    pub h2: f64,
    /// Measured area radius.
    pub rho: f64,
    /// Boost vector of the associated 4-vector.
    pub a: BoostVector,
    /// A-priori class report at `σ`.
    pub apriori: APrioriReport,
    /// Smallest mean-zero eigenvalue of the Jacobi operator, when requested.
    pub min_eig: Option<f64>,
}

/// Result of [`build_foliation`].
#[derive(Clone, Debug)]
pub struct FoliationResult {
    /// Leaves in increasing `σ`; on failure, the leaves solved so far.
    pub leaves: Vec<Leaf>,
    /// `min(ω_{σ+Δσ} − ω_σ)` for adjacent leaves.
    pub gap_margins: Vec<f64>,
    /// `(E, P⃗)` from the mass and the boost vector of the outermost leaf.
    pub bondi: (f64, [f64; 3]),
    /// The failure that stopped the sweep, if any.
    pub failure: Option<Error>,
}

/// `(E, P⃗) = (m√(1 + |a⃗|²), m·a⃗)`.
pub fn bondi(m: f64, a: &BoostVector) -> (f64, [f64; 3]) {
    let n2 = a.iter().map(|x| x * x).sum::<f64>();
    (m * (1.0 + n2).sqrt(), [m * a[0], m * a[1], m * a[2]])
}

/// Scale `ω` so that its area radius equals `sigma`.
pub fn rescale_to_area_radius(model: &BackgroundModel, omega: &ScalarField, sigma: f64) -> Result<CrossSection> {
    let w2: Vec<f64> = omega.values().iter().map(|v| v * v).collect();
    let rho = (omega.grid().integrate(&w2) / (4.0 * std::f64::consts::PI)).sqrt();
    CrossSection::new(model, &omega.scale(sigma / rho))
}

/// Solve one leaf from a warm start by the chosen method.
pub fn solve_leaf(seed: &CrossSection, method: LeafMethod, flow: &FlowConfig, newton: &NewtonConfig) -> Result<CrossSection> {
    let sigma = seed.area_radius();
    match method {
        LeafMethod::Flow => {
            let run = run_flow(seed, flow)?;
            if run.converged() {
                Ok(run.final_section)
            } else {
                let reason = match run.failure {
                    Some(e) => e.to_string(),
                    None => format!("flow stopped by {}", run.termination.as_str()),
                };
                Err(Error::LeafFailure { sigma, reason })
            }
        }
        LeafMethod::Newton => {
            let run = newton_stcmc(seed, newton);
            match run.failure {
                None => Ok(run.surface),
                Some(e) => Err(Error::LeafFailure { sigma, reason: e.to_string() }),
            }
        }
    }
}

fn make_leaf(sigma: f64, section: CrossSection, cfg: &FoliationConfig) -> Result<Leaf> {
    let a = boost_vector(&z_vector(section.omega())?)?;
    let apriori = apriori_report(&section, sigma, cfg.apriori_bounds)?;
    let min_eig = if cfg.spectral_check {
        Some(JacobiContext::new(&section)?.min_eig_meanzero(&LinearOptions::default())?)
    } else {
        None
    };
    Ok(Leaf { sigma, h2: section.mean_h2(), rho: section.area_radius(), a, apriori, min_eig, section })
}

fn gaps(leaves: &[Leaf]) -> Vec<f64> {
    leaves
        .windows(2)
        .map(|p| {
            let (lo, hi) = (p[0].section.omega().values(), p[1].section.omega().values());
            hi.iter().zip(lo).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn finish(model: &BackgroundModel, leaves: Vec<Leaf>, failure: Option<Error>) -> FoliationResult {
    let gap_margins = gaps(&leaves);
    let a = leaves.last().map(|l| l.a).unwrap_or([0.0; 3]);
    FoliationResult { bondi: bondi(model.mass(), &a), leaves, gap_margins, failure }
}

/// Build the family of leaves with area radii `σ_min, σ_min + Δσ, …, σ_max`
/// starting from `seed`, which is first rescaled to area radius `σ_min`.
///
/// A failing leaf stops the sweep; the leaves solved before it are returned
/// together with the failure.
pub fn build_foliation(model: &BackgroundModel, seed: &ScalarField, cfg: &FoliationConfig) -> Result<FoliationResult> {
    cfg.validate(model)?;
    let sigmas = cfg.sigmas();
    let first_seed = rescale_to_area_radius(model, seed, sigmas[0])?;
    let first = match solve_leaf(&first_seed, cfg.method, &cfg.flow, &cfg.newton) {
        Ok(s) => make_leaf(sigmas[0], s, cfg)?,
        Err(e) => return Ok(finish(model, Vec::new(), Some(e))),
    };
    let mut leaves = vec![first];
    match cfg.continuation {
        Continuation::Sequential => {
            for &sigma in &sigmas[1..] {
                let prev = leaves.last().expect("at least one leaf");
                let warm = CrossSection::new(model, &prev.section.omega().scale(sigma / prev.sigma))?;
                match solve_leaf(&warm, cfg.method, &cfg.flow, &cfg.newton).and_then(|s| make_leaf(sigma, s, cfg)) {
                    Ok(leaf) => leaves.push(leaf),
                    Err(e) => return Ok(finish(model, leaves, Some(e))),
                }
            }
        }
        Continuation::FromFirstLeaf => {
            let base = leaves[0].section.omega().clone();
            let solved: Vec<Result<Leaf>> = sigmas[1..]
                .par_iter()
                .map(|&sigma| {
                    let warm = CrossSection::new(model, &base.scale(sigma / sigmas[0]))?;
                    solve_leaf(&warm, cfg.method, &cfg.flow, &cfg.newton).and_then(|s| make_leaf(sigma, s, cfg))
                })
                .collect();
            for r in solved {
                match r {
                    Ok(leaf) => leaves.push(leaf),
                    Err(e) => return Ok(finish(model, leaves, Some(e))),
                }
            }
        }
    }
    Ok(finish(model, leaves, None))
}

/// Findings of [`check_foliation`]; violations are listed, not raised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoliationReport {
    /// All adjacent gap margins are positive.
    pub gaps_positive: bool,
    /// Smallest gap margin.
    pub min_gap: f64,
    /// `⨍𝓗²` strictly decreases along the family.
    pub h2_strictly_decreasing: bool,
    /// The finite difference `(ω_{σ+Δσ} − ω_σ)/Δσ` is positive at every node.
    pub d_sigma_omega_positive: bool,
    /// `max σ⁴|𝓗² − 4/σ² + 8m/σ³|` over leaves with `σ < 2σ_min`.
    pub h2_profile_bound_lower: f64,
    /// The same over leaves with `σ ≥ 2σ_min` (0 if there are none).
    pub h2_profile_bound_upper: f64,
    /// `max σ|a⃗_σ|` over all leaves.
    pub boost_bound: f64,
    /// `max σ|a⃗_σ|` over leaves with `σ ≥ 2σ_min` (0 if there are none).
    pub boost_bound_upper: f64,
    /// Human-readable list of violated properties.
    pub violations: Vec<String>,
}

/// Check nesting, monotonicity of `𝓗²` and the asymptotic profile bounds.
pub fn check_foliation(result: &FoliationResult, mass: f64) -> Result<FoliationReport> {
    let leaves = &result.leaves;
    if leaves.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, have: leaves.len() });
    }
    let mut violations = Vec::new();
    let min_gap = result.gap_margins.iter().copied().fold(f64::INFINITY, f64::min);
    let gaps_positive = result.gap_margins.iter().all(|g| *g > 0.0);
    if !gaps_positive {
        violations.push(format!("non-positive gap margin {min_gap:e}"));
    }
    let h2_strictly_decreasing = leaves.windows(2).all(|p| p[1].h2 < p[0].h2);
    if !h2_strictly_decreasing {
        violations.push("mean curvature profile is not strictly decreasing".into());
    }
    let d_sigma_omega_positive = leaves.windows(2).all(|p| {
        let ds = p[1].sigma - p[0].sigma;
        let (lo, hi) = (p[0].section.omega().values(), p[1].section.omega().values());
        hi.iter().zip(lo).all(|(a, b)| (a - b) / ds > 0.0)
    });
    if !d_sigma_omega_positive {
        violations.push("finite-difference sigma derivative of omega is not positive".into());
    }
    let s0 = leaves[0].sigma;
    let profile = |l: &Leaf| l.sigma.powi(4) * (l.h2 - 4.0 / l.sigma.powi(2) + 8.0 * mass / l.sigma.powi(3)).abs();
    let boost = |l: &Leaf| l.sigma * l.a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let fold = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    let upper = |l: &&Leaf| l.sigma >= 2.0 * s0 - 1e-9;
    Ok(FoliationReport {
        gaps_positive,
        min_gap,
        h2_strictly_decreasing,
        d_sigma_omega_positive,
        h2_profile_bound_lower: fold(&mut leaves.iter().filter(|l| !upper(l)).map(profile)),
        h2_profile_bound_upper: fold(&mut leaves.iter().filter(upper).map(profile)),
        boost_bound: fold(&mut leaves.iter().map(boost)),
        boost_bound_upper: fold(&mut leaves.iter().filter(upper).map(boost)),
        violations,
    })
}

/// Outcome of one seed in [`uniqueness_probe`].
#[derive(Clone, Debug)]
pub struct ProbeLeaf {
    /// Index of the seed.
    pub seed: usize,
    /// The converged leaf, or the solver failure.
    pub result: std::result::Result<CrossSection, Error>,
}

/// Pairwise comparison of leaves obtained from different seeds.
#[derive(Clone, Debug)]
pub struct UniquenessReport {
    /// Target area radius.
    pub sigma: f64,
    /// Per-seed outcomes.
    pub leaves: Vec<ProbeLeaf>,
    /// `(i, j, max|ω_i − ω_j|)` for every pair of converged seeds.
    pub distances: Vec<(usize, usize, f64)>,
    /// Largest pairwise distance.
    pub max_distance: f64,
    /// All seeds converged and all distances are at most `1e−6·σ`.
    pub pass: bool,
    /// Set in Minkowski space, where distinct boosted spheres share the same
    /// constant `𝓗²`.
    pub caveat: Option<String>,
}

/// Solve from each seed (rescaled to area radius `σ`) and compare the leaves.
pub fn uniqueness_probe(
    model: &BackgroundModel,
    sigma: f64,
    seeds: &[ScalarField],
    method: LeafMethod,
    flow: &FlowConfig,
    newton: &NewtonConfig,
) -> Result<UniquenessReport> {
    let leaves: Vec<ProbeLeaf> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, s)| ProbeLeaf {
            seed: i,
            result: rescale_to_area_radius(model, s, sigma).and_then(|cs| solve_leaf(&cs, method, flow, newton)),
        })
        .collect();
    let mut distances = Vec::new();
    for (i, a) in leaves.iter().enumerate() {
        for b in &leaves[i + 1..] {
            if let (Ok(x), Ok(y)) = (&a.result, &b.result) {
                distances.push((a.seed, b.seed, x.omega().axpby(1.0, y.omega(), -1.0)?.max_abs()));
            }
        }
    }
    let max_distance = distances.iter().map(|d| d.2).fold(0.0f64, f64::max);
    let all_ok = leaves.iter().all(|l| l.result.is_ok());
    let caveat = (model.kind() == ModelKind::Minkowski)
        .then(|| "Minkowski: boosted spheres of equal area share the same constant mean curvature".to_string());
    Ok(UniquenessReport { sigma, leaves, distances, max_distance, pass: all_ok && max_distance <= 1e-6 * sigma, caveat })
}
