//! Scalar, covector, symmetric 2-tensor and general frame tensor fields on
//! the round sphere.

use std::sync::Arc;

use super::grid::{coeff_index, coeff_len, SphereGrid};
use crate::error::{Error, Result};

/// Direction of a spectral transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Grid values to real harmonic coefficients up to the grid bandlimit.
    ToSpectral,
    /// Coefficients to grid values.
    ToGrid,
}

/// A scalar field: grid values plus optional real harmonic coefficients up to
/// the grid bandlimit. When coefficients are present the values are their
/// synthesis.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
    coeffs: Option<Vec<f64>>,
}

impl ScalarField {
    /// Field sampled at the grid nodes (no coefficients attached).
    pub fn from_values(grid: &Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid: grid.clone(), values, coeffs: None })
    }

    /// Band-limited field from coefficients of degree at most the grid
    /// bandlimit (shorter vectors are zero-padded).
    pub fn from_coeffs(grid: &Arc<SphereGrid>, coeffs: Vec<f64>) -> Result<Self> {
        let full = coeff_len(grid.bandlimit());
        if coeffs.len() > full {
            return Err(Error::GridMismatch(format!(
                "{} coefficients exceed bandlimit {}",
                coeffs.len(),
                grid.bandlimit()
            )));
        }
        let mut c = coeffs;
        c.resize(full, 0.0);
        let values = grid.synthesize(&c)?;
        Ok(Self { grid: grid.clone(), values, coeffs: Some(c) })
    }

    /// Field evaluated pointwise from a function of the unit position vector.
    pub fn from_fn(grid: &Arc<SphereGrid>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.position(k))).collect();
        Self { grid: grid.clone(), values, coeffs: None }
    }

    /// Constant field.
    pub fn constant(grid: &Arc<SphereGrid>, c: f64) -> Self {
        let mut coeffs = vec![0.0; coeff_len(grid.bandlimit())];
        coeffs[0] = c * (4.0 * std::f64::consts::PI).sqrt();
        Self { grid: grid.clone(), values: vec![c; grid.len()], coeffs: Some(coeffs) }
    }

    /// The single real harmonic `Y_{lm}` scaled by `amplitude`.
    pub fn harmonic(grid: &Arc<SphereGrid>, l: usize, m: i64, amplitude: f64) -> Result<Self> {
        if l > grid.bandlimit() || m.unsigned_abs() as usize > l {
            return Err(Error::InvalidArgument(format!(
                "harmonic ({l}, {m}) outside bandlimit {}",
                grid.bandlimit()
            )));
        }
        let mut coeffs = vec![0.0; coeff_len(grid.bandlimit())];
        coeffs[coeff_index(l, m)] = amplitude;
        Self::from_coeffs(grid, coeffs)
    }

    /// The grid.
    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Values at the nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coefficients if attached.
    pub fn coeffs(&self) -> Option<&[f64]> {
        self.coeffs.as_deref()
    }

    /// Consume into grid values.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Coefficients, computed by analysis at the bandlimit when absent.
    pub fn spectral(&self) -> Result<Vec<f64>> {
        match &self.coeffs {
            Some(c) => Ok(c.clone()),
            None => self.grid.analyze(&self.values, self.grid.bandlimit()),
        }
    }

    /// Band-limited projection of this field (a lossy step for sampled data).
    pub fn band_limited(&self) -> Result<Self> {
        match &self.coeffs {
            Some(_) => Ok(self.clone()),
            None => Self::from_coeffs(&self.grid, self.spectral()?),
        }
    }

    /// Convert between representations.
    pub fn transform(&self, direction: Direction) -> Result<Self> {
        match direction {
            Direction::ToSpectral => {
                let c = self.spectral()?;
                Ok(Self { grid: self.grid.clone(), values: self.values.clone(), coeffs: Some(c) })
            }
            Direction::ToGrid => {
                let c = self.coeffs.as_ref().ok_or_else(|| {
                    Error::GridMismatch("field carries no spectral coefficients".into())
                })?;
                let values = self.grid.synthesize(c)?;
                Ok(Self { grid: self.grid.clone(), values, coeffs: Some(c.clone()) })
            }
        }
    }

    /// `∫ f dμ̂`.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Maximum absolute value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Minimum value.
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Maximum value.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map producing a sampled field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect(), coeffs: None }
    }

    /// `a·self + b·other`, keeping coefficients when both carry them.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        let coeffs = match (&self.coeffs, &other.coeffs) {
            (Some(c1), Some(c2)) => Some(c1.iter().zip(c2).map(|(x, y)| a * x + b * y).collect()),
            _ => None,
        };
        Ok(Self { grid: self.grid.clone(), values, coeffs })
    }

    /// Multiply by a constant.
    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            coeffs: self.coeffs.as_ref().map(|cs| cs.iter().map(|v| c * v).collect()),
        }
    }

    /// Orthonormal-frame gradient; exact for band-limited fields.
    pub fn grad(&self) -> Result<CovectorField> {
        let c = self.spectral()?;
        let [t, p] = self.grid.gradient(&c)?;
        Ok(CovectorField { grid: self.grid.clone(), comps: [t, p] })
    }

    /// Round Laplacian `Δ̂f`.
    pub fn laplace_round(&self) -> Result<Self> {
        let c = self.spectral()?;
        let values = self.grid.laplacian(&c)?;
        let lc: Vec<f64> = c
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let l = (i as f64).sqrt().floor();
                -l * (l + 1.0) * v
            })
            .collect();
        Ok(Self { grid: self.grid.clone(), values, coeffs: Some(lc) })
    }

    /// Covariant Hessian with respect to `ĝ` in the orthonormal frame.
    pub fn hess_round(&self) -> Result<SymTensor2Field> {
        let c = self.spectral()?;
        let d = self.grid.derivatives(&c)?;
        Ok(hessian_from_bundle(&self.grid, &d))
    }
}

/// Orthonormal-frame Hessian from a derivative bundle.
pub(crate) fn hessian_from_bundle(grid: &Arc<SphereGrid>, d: &super::grid::DerivativeBundle) -> SymTensor2Field {
    let n = grid.len();
    let mut tt = vec![0.0; n];
    let mut tp = vec![0.0; n];
    let mut pp = vec![0.0; n];
    for k in 0..n {
        let s = grid.sin_at(k);
        let cot = grid.cot_at(k);
        let fpp = d.d_phi_phi[k] / (s * s) + cot * d.d_theta[k];
        pp[k] = fpp;
        tt[k] = d.laplace[k] - fpp;
        tp[k] = (d.d_theta_phi[k] - cot * d.d_phi[k]) / s;
    }
    SymTensor2Field { grid: grid.clone(), comps: [tt, tp, pp] }
}

pub(crate) fn same_grid(a: &Arc<SphereGrid>, b: &Arc<SphereGrid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch("fields live on different grids".into()))
    }
}

/// A covector field in the orthonormal frame `(e_θ, e_φ)`.
#[derive(Clone, Debug)]
pub struct CovectorField {
    pub(crate) grid: Arc<SphereGrid>,
    pub(crate) comps: [Vec<f64>; 2],
}

impl CovectorField {
    /// Build from frame components.
    pub fn new(grid: &Arc<SphereGrid>, theta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if theta.len() != grid.len() || phi.len() != grid.len() {
            return Err(Error::GridMismatch("covector component length".into()));
        }
        Ok(Self { grid: grid.clone(), comps: [theta, phi] })
    }

    /// Zero covector.
    pub fn zero(grid: &Arc<SphereGrid>) -> Self {
        Self { grid: grid.clone(), comps: [vec![0.0; grid.len()], vec![0.0; grid.len()]] }
    }

    /// Frame components `[θ, φ]`.
    pub fn comps(&self) -> &[Vec<f64>; 2] {
        &self.comps
    }

    /// The grid.
    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Pointwise `ĝ` norm squared.
    pub fn norm_sq(&self) -> Vec<f64> {
        self.comps[0].iter().zip(&self.comps[1]).map(|(a, b)| a * a + b * b).collect()
    }

    /// Maximum pointwise `ĝ` norm.
    pub fn max_norm(&self) -> f64 {
        self.norm_sq().iter().fold(0.0, |a, v| a.max(v.sqrt()))
    }

    /// As a rank-1 frame tensor.
    pub fn to_tensor(&self) -> FrameTensor {
        FrameTensor { grid: self.grid.clone(), rank: 1, comps: self.comps.to_vec() }
    }
}

/// A symmetric 2-tensor in the orthonormal frame, stored as
/// `[θθ, θφ, φφ]`.
#[derive(Clone, Debug)]
pub struct SymTensor2Field {
    pub(crate) grid: Arc<SphereGrid>,
    pub(crate) comps: [Vec<f64>; 3],
}

impl SymTensor2Field {
    /// Build from the three independent components.
    pub fn new(grid: &Arc<SphereGrid>, tt: Vec<f64>, tp: Vec<f64>, pp: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if tt.len() != n || tp.len() != n || pp.len() != n {
            return Err(Error::GridMismatch("tensor component length".into()));
        }
        Ok(Self { grid: grid.clone(), comps: [tt, tp, pp] })
    }

    /// Components `[θθ, θφ, φφ]`.
    pub fn comps(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    /// The grid.
    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Trace with respect to `ĝ`.
    pub fn trace(&self) -> Vec<f64> {
        self.comps[0].iter().zip(&self.comps[2]).map(|(a, b)| a + b).collect()
    }

    /// Pointwise `ĝ` norm squared (off-diagonal counted twice).
    pub fn norm_sq(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|k| {
                let (a, b, c) = (self.comps[0][k], self.comps[1][k], self.comps[2][k]);
                a * a + 2.0 * b * b + c * c
            })
            .collect()
    }

    /// Trace-free part with respect to `ĝ` (equivalently any conformal metric).
    pub fn trace_free(&self) -> Self {
        let tr = self.trace();
        let tt = self.comps[0].iter().zip(&tr).map(|(a, t)| a - 0.5 * t).collect();
        let pp = self.comps[2].iter().zip(&tr).map(|(a, t)| a - 0.5 * t).collect();
        Self { grid: self.grid.clone(), comps: [tt, self.comps[1].clone(), pp] }
    }

    /// As a rank-2 frame tensor.
    pub fn to_tensor(&self) -> FrameTensor {
        let [tt, tp, pp] = &self.comps;
        FrameTensor { grid: self.grid.clone(), rank: 2, comps: vec![tt.clone(), tp.clone(), tp.clone(), pp.clone()] }
    }
}

/// A tensor field of arbitrary covariant rank in the orthonormal frame.
///
/// Component `(α_1, …, α_r)` (each `0 = θ`, `1 = φ`) is stored at the index
/// whose binary digits are `α_1 … α_r` (first index most significant).
#[derive(Clone, Debug)]
pub struct FrameTensor {
    pub(crate) grid: Arc<SphereGrid>,
    pub(crate) rank: usize,
    pub(crate) comps: Vec<Vec<f64>>,
}

impl FrameTensor {
    /// Zero tensor of the given rank.
    pub fn zero(grid: &Arc<SphereGrid>, rank: usize) -> Self {
        Self { grid: grid.clone(), rank, comps: vec![vec![0.0; grid.len()]; 1 << rank] }
    }

    /// Rank-0 tensor from a scalar field.
    pub fn from_scalar(f: &ScalarField) -> Self {
        Self { grid: f.grid.clone(), rank: 0, comps: vec![f.values.clone()] }
    }

    /// Covariant rank.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The grid.
    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Component arrays in binary index order.
    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// Mutable component arrays.
    pub fn comps_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.comps
    }

    /// Component array for a multi-index.
    pub fn get(&self, idx: &[usize]) -> &[f64] {
        &self.comps[flat_index(idx)]
    }

    /// `self + c·other`.
    pub fn add_scaled(&mut self, other: &FrameTensor, c: f64) {
        assert_eq!(self.rank, other.rank, "rank mismatch");
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    /// Pointwise `ĝ` norm (sum of squares of all frame components).
    pub fn pointwise_norm(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|k| self.comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt())
            .collect()
    }

    /// Maximum over nodes of the largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Reorder the indices: result index `s` is input index `perm[s]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rank);
        let mut out = Self::zero(&self.grid, self.rank);
        let mut idx = vec![0usize; self.rank];
        let mut src = vec![0usize; self.rank];
        for c in 0..(1usize << self.rank) {
            unflatten(c, &mut idx);
            for s in 0..self.rank {
                src[perm[s]] = idx[s];
            }
            out.comps[c] = self.comps[flat_index(&src)].clone();
        }
        out
    }

    /// Round covariant derivative `∇̂T` with the derivative index first.
    ///
    /// Each Cartesian component of the embedded tensor is a smooth scalar; it
    /// is analysed up to the grid's extended degree, differentiated
    /// spectrally, and projected back onto the frame.
    pub fn covariant_derivative_round(&self) -> Result<Self> {
        let grid = &self.grid;
        let n = grid.len();
        let r = self.rank;
        let frames: Vec<[[f64; 3]; 2]> = (0..n).map(|k| grid.frame(k)).collect();
        let mut out = Self::zero(grid, r + 1);
        let n_cart = 3usize.pow(r as u32);
        let degree = grid.extended_degree();
        let mut a_idx = vec![0usize; r];
        let mut alpha = vec![0usize; r];
        for cart in 0..n_cart {
            let mut rest = cart;
            for s in (0..r).rev() {
                a_idx[s] = rest % 3;
                rest /= 3;
            }
            let mut cart_values = vec![0.0; n];
            for (c, comp) in self.comps.iter().enumerate() {
                unflatten(c, &mut alpha);
                for k in 0..n {
                    let mut w = comp[k];
                    for s in 0..r {
                        w *= frames[k][alpha[s]][a_idx[s]];
                    }
                    cart_values[k] += w;
                }
            }
            let coeffs = grid.analyze(&cart_values, degree)?;
            let [gt, gp] = grid.gradient(&coeffs)?;
            for c in 0..(1usize << r) {
                unflatten(c, &mut alpha);
                for k in 0..n {
                    let mut w = 1.0;
                    for s in 0..r {
                        w *= frames[k][alpha[s]][a_idx[s]];
                    }
                    if w != 0.0 {
                        out.comps[c][k] += w * gt[k];
                        out.comps[(1 << r) + c][k] += w * gp[k];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Covariant derivative for the conformal metric `e^{2u}ĝ`, given the
    /// frame gradient of `u`: `∇T = ∇̂T − Σ_s Q(·, slot s) T` with the
    /// difference tensor `Q^k_{ij} = δ^k_i u_j + δ^k_j u_i − ĝ_{ij}∇̂^k u`.
    pub fn covariant_derivative_conformal(&self, du: &CovectorField) -> Result<Self> {
        same_grid(&self.grid, &du.grid)?;
        let mut out = self.covariant_derivative_round()?;
        let r = self.rank;
        let n = self.grid.len();
        let mut idx = vec![0usize; r + 1];
        let mut src = vec![0usize; r];
        for c in 0..(1usize << (r + 1)) {
            unflatten(c, &mut idx);
            let i = idx[0];
            for s in 0..r {
                let j = idx[s + 1];
                for mm in 0..2 {
                    src.copy_from_slice(&idx[1..]);
                    src[s] = mm;
                    let t = &self.comps[flat_index(&src)];
                    let (ui, uj, um) = (&du.comps[i], &du.comps[j], &du.comps[mm]);
                    let (dmi, dmj, dij) = ((mm == i) as i32 as f64, (mm == j) as i32 as f64, (i == j) as i32 as f64);
                    let target = &mut out.comps[c];
                    for k in 0..n {
                        let q = dmi * uj[k] + dmj * ui[k] - dij * um[k];
                        target[k] -= q * t[k];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Contract slots `a < b` with `ĝ` (frame sum), returning rank − 2.
    pub fn contract(&self, a: usize, b: usize) -> Self {
        assert!(a < b && b < self.rank);
        let mut out = Self::zero(&self.grid, self.rank - 2);
        let mut idx = vec![0usize; self.rank - 2];
        let mut full = vec![0usize; self.rank];
        for c in 0..(1usize << (self.rank - 2)) {
            unflatten(c, &mut idx);
            for mm in 0..2 {
                let mut it = idx.iter();
                for (s, slot) in full.iter_mut().enumerate() {
                    *slot = if s == a || s == b { mm } else { *it.next().unwrap() };
                }
                let src = &self.comps[flat_index(&full)];
                for (o, v) in out.comps[c].iter_mut().zip(src) {
                    *o += v;
                }
            }
        }
        out
    }

    /// Symmetric rank-2 view (uses the `θφ` component).
    pub fn to_sym2(&self) -> SymTensor2Field {
        assert_eq!(self.rank, 2);
        SymTensor2Field { grid: self.grid.clone(), comps: [self.comps[0].clone(), self.comps[1].clone(), self.comps[3].clone()] }
    }

    /// Covector view.
    pub fn to_covector(&self) -> CovectorField {
        assert_eq!(self.rank, 1);
        CovectorField { grid: self.grid.clone(), comps: [self.comps[0].clone(), self.comps[1].clone()] }
    }
}

/// Binary flat index of a frame multi-index.
#[inline]
pub fn flat_index(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &a| (acc << 1) | a)
}

/// Inverse of [`flat_index`] for a multi-index of length `idx.len()`.
#[inline]
pub fn unflatten(c: usize, idx: &mut [usize]) {
    let r = idx.len();
    for (s, slot) in idx.iter_mut().enumerate() {
        *slot = (c >> (r - 1 - s)) & 1;
    }
}
