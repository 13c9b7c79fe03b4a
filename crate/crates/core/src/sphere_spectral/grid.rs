//! Gauss–Legendre × uniform-longitude grid and the spherical harmonic
//! transforms attached to it.
//!
//! Convention: real orthonormal spherical harmonics without the
//! Condon–Shortley phase,
//!
//! ```text
//! Y_{l0}  = P̄_{l0}(cos θ)
//! Y_{lm}  = √2 P̄_{lm}(cos θ) cos(mφ)      (m > 0)
//! Y_{l,-m} = √2 P̄_{lm}(cos θ) sin(mφ)     (m > 0)
//! ```
//!
//! where `P̄_{lm} = N_{lm} P_l^m` with `N_{lm}² = (2l+1)/(4π) (l-m)!/(l+m)!`
//! and `P_l^m(x) = (1-x²)^{m/2} d^m P_l/dx^m`. Coefficient vectors are stored
//! degree by degree, the entry of `(l, m)` sitting at `l² + l + m`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Position of `(l, m)`, `-l ≤ m ≤ l`, in a real coefficient vector.
#[inline]
pub fn coeff_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

/// Number of real coefficients up to degree `l_max`.
#[inline]
pub fn coeff_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Which Legendre table a synthesis sum runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Table {
    /// `P̄_{lm}`.
    Value,
    /// `dP̄_{lm}/dθ`.
    Theta,
    /// `-l(l+1) P̄_{lm}`, the round Laplacian.
    Laplace,
}

fn is_seven_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5, 7] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

/// Grid values of a band-limited scalar and its derivatives up to second
/// order, as produced by [`SphereGrid::derivatives`].
#[derive(Clone, Debug)]
pub struct DerivativeBundle {
    /// `f`.
    pub value: Vec<f64>,
    /// `∂_θ f`.
    pub d_theta: Vec<f64>,
    /// `∂_φ f` (coordinate derivative).
    pub d_phi: Vec<f64>,
    /// `∂_θ∂_φ f`.
    pub d_theta_phi: Vec<f64>,
    /// `∂_φ² f`.
    pub d_phi_phi: Vec<f64>,
    /// `Δ̂ f`.
    pub laplace: Vec<f64>,
}

/// Gauss–Legendre colatitudes (poles excluded) times uniform longitudes
/// starting at `φ = 0`, together with precomputed Legendre tables.
///
/// Values on the grid are stored row-major with colatitude as the outer index
/// (ascending) and longitude as the inner index.
pub struct SphereGrid {
    bandlimit: usize,
    l_ext: usize,
    n_theta: usize,
    n_phi: usize,
    theta: Vec<f64>,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    weights: Vec<f64>,
    phi: Vec<f64>,
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
    plm: Vec<f64>,
    dplm: Vec<f64>,
    tri_len: usize,
    fft_forward: Arc<dyn RealToComplex<f64>>,
    fft_inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid")
            .field("bandlimit", &self.bandlimit)
            .field("n_theta", &self.n_theta)
            .field("n_phi", &self.n_phi)
            .finish()
    }
}

impl PartialEq for SphereGrid {
    fn eq(&self, other: &Self) -> bool {
        self.bandlimit == other.bandlimit
            && self.n_theta == other.n_theta
            && self.n_phi == other.n_phi
    }
}

/// Gauss–Legendre nodes in descending order of `x = cos θ` (so that `θ`
/// ascends) together with their weights.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Normalized associated Legendre functions `P̄_{lm}(cos θ)` for
/// `0 ≤ m ≤ l ≤ l_max`, stored triangularly, and their `θ` derivatives.
pub(crate) fn legendre_column(l_max: usize, x: f64, s: f64, p: &mut [f64], dp: &mut [f64]) {
    let n = tri(l_max, l_max) + 1;
    debug_assert!(p.len() >= n && dp.len() >= n);
    p[0] = 0.5 / PI.sqrt();
    for m in 0..=l_max {
        if m > 0 {
            let mf = m as f64;
            p[tri(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[tri(m - 1, m - 1)];
        }
        if m < l_max {
            p[tri(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * p[tri(m, m)];
        }
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[tri(l, m)] = a * (x * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
    for l in 0..=l_max {
        let lf = l as f64;
        for m in 0..=l {
            let mf = m as f64;
            let upper = if m < l { p[tri(l, m + 1)] } else { 0.0 };
            dp[tri(l, m)] = if m == 0 {
                -(lf * (lf + 1.0)).sqrt() * upper
            } else {
                0.5 * (((lf + mf) * (lf - mf + 1.0)).sqrt() * p[tri(l, m - 1)]
                    - ((lf + mf + 1.0) * (lf - mf)).sqrt() * upper)
            };
        }
    }
}

impl SphereGrid {
    /// Grid with `n_theta = ⌈3L/2⌉ + 1` and `n_phi` the smallest integer
    /// `≥ 3L + 1` without prime factors above 7, so that longitude FFTs use
    /// mixed-radix kernels.
    pub fn new(bandlimit: usize) -> Result<Arc<Self>> {
        let n_theta = (3 * bandlimit).div_ceil(2) + 1;
        let n_phi = (3 * bandlimit + 1..).find(|&n| is_seven_smooth(n)).expect("smooth numbers are unbounded");
        Self::with_size(bandlimit, n_theta, n_phi)
    }

    /// Grid with explicit sizes; the oversampling bounds are enforced.
    pub fn with_size(bandlimit: usize, n_theta: usize, n_phi: usize) -> Result<Arc<Self>> {
        if bandlimit == 0 {
            return Err(Error::InvalidGrid("bandlimit must be at least 1".into()));
        }
        let min_theta = (3 * bandlimit).div_ceil(2) + 1;
        let min_phi = 3 * bandlimit + 1;
        if n_theta < min_theta || n_phi < min_phi {
            return Err(Error::InvalidGrid(format!(
                "bandlimit {bandlimit} needs n_theta >= {min_theta} and n_phi >= {min_phi}, got {n_theta} x {n_phi}"
            )));
        }
        let l_ext = (n_theta - 1).min((n_phi - 1) / 2);
        let (x, weights) = gauss_legendre(n_theta);
        let theta: Vec<f64> = x.iter().map(|v| v.acos()).collect();
        let sin_theta: Vec<f64> = x.iter().map(|v| ((1.0 - v) * (1.0 + v)).sqrt()).collect();
        let phi: Vec<f64> = (0..n_phi).map(|k| 2.0 * PI * k as f64 / n_phi as f64).collect();
        let tri_len = tri(l_ext, l_ext) + 1;
        let mut plm = vec![0.0; tri_len * n_theta];
        let mut dplm = vec![0.0; tri_len * n_theta];
        for j in 0..n_theta {
            let range = j * tri_len..(j + 1) * tri_len;
            let (p, dp) = (&mut plm[range.clone()], &mut dplm[range]);
            legendre_column(l_ext, x[j], sin_theta[j], p, dp);
        }
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Arc::new(Self {
            bandlimit,
            l_ext,
            n_theta,
            n_phi,
            cos_phi: phi.iter().map(|p| p.cos()).collect(),
            sin_phi: phi.iter().map(|p| p.sin()).collect(),
            theta,
            cos_theta: x,
            sin_theta,
            weights,
            phi,
            plm,
            dplm,
            tri_len,
            fft_forward: planner.plan_fft_forward(n_phi),
            fft_inverse: planner.plan_fft_inverse(n_phi),
        }))
    }

    /// The configured bandlimit `L`.
    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    /// Largest degree the grid resolves (used for non-band-limited products).
    pub fn extended_degree(&self) -> usize {
        self.l_ext
    }

    /// Number of colatitude rings.
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    /// Number of longitudes per ring.
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    /// Always false: a grid has at least one node.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Colatitudes of the rings, ascending.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `cos θ` per ring.
    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    /// `sin θ` per ring (strictly positive).
    pub fn sin_theta(&self) -> &[f64] {
        &self.sin_theta
    }

    /// Gauss–Legendre weights per ring (they sum to 2).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Longitudes, starting at 0.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `(θ, φ)` of node `k`.
    pub fn node(&self, k: usize) -> (f64, f64) {
        (self.theta[k / self.n_phi], self.phi[k % self.n_phi])
    }

    /// Unit position vector of node `k`.
    pub fn position(&self, k: usize) -> [f64; 3] {
        let (j, i) = (k / self.n_phi, k % self.n_phi);
        let s = self.sin_theta[j];
        [s * self.cos_phi[i], s * self.sin_phi[i], self.cos_theta[j]]
    }

    /// Orthonormal frame `(e_θ, e_φ)` at node `k` as Cartesian vectors.
    pub fn frame(&self, k: usize) -> [[f64; 3]; 2] {
        let (j, i) = (k / self.n_phi, k % self.n_phi);
        let (ct, st) = (self.cos_theta[j], self.sin_theta[j]);
        let (cp, sp) = (self.cos_phi[i], self.sin_phi[i]);
        [[ct * cp, ct * sp, -st], [-sp, cp, 0.0]]
    }

    /// Quadrature weight of node `k` for `∫ · dμ̂`.
    pub fn node_weight(&self, k: usize) -> f64 {
        self.weights[k / self.n_phi] * 2.0 * PI / self.n_phi as f64
    }

    /// `∫ f dμ̂` by Gauss–Legendre × trapezoidal quadrature.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let dphi = 2.0 * PI / self.n_phi as f64;
        values
            .chunks_exact(self.n_phi)
            .zip(&self.weights)
            .map(|(row, w)| w * row.iter().sum::<f64>())
            .sum::<f64>()
            * dphi
    }

    /// `sin θ` of node `k`.
    #[inline]
    pub fn sin_at(&self, k: usize) -> f64 {
        self.sin_theta[k / self.n_phi]
    }

    /// `cot θ` of node `k`.
    #[inline]
    pub fn cot_at(&self, k: usize) -> f64 {
        let j = k / self.n_phi;
        self.cos_theta[j] / self.sin_theta[j]
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        if degree > self.l_ext {
            return Err(Error::GridMismatch(format!(
                "degree {degree} exceeds the grid's resolvable degree {}",
                self.l_ext
            )));
        }
        Ok(())
    }

    /// Real spherical harmonic coefficients up to `degree` of grid values.
    pub fn analyze(&self, values: &[f64], degree: usize) -> Result<Vec<f64>> {
        self.check_degree(degree)?;
        if values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} grid values, got {}",
                self.len(),
                values.len()
            )));
        }
        let mut input = self.fft_forward.make_input_vec();
        let mut row = self.fft_forward.make_output_vec();
        let mut scratch = self.fft_forward.make_scratch_vec();
        let mut coeffs = vec![0.0; coeff_len(degree)];
        let dphi = 2.0 * PI / self.n_phi as f64;
        for j in 0..self.n_theta {
            input.copy_from_slice(&values[j * self.n_phi..(j + 1) * self.n_phi]);
            self.fft_forward
                .process_with_scratch(&mut input, &mut row, &mut scratch)
                .expect("buffers are sized by the plan");
            let tab = &self.plm[j * self.tri_len..(j + 1) * self.tri_len];
            let w = self.weights[j] * dphi;
            for m in 0..=degree {
                let c = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                let re = c * w * row[m].re;
                let im = -c * w * row[m].im;
                let mut idx = tri(m, m);
                for l in m..=degree {
                    let p = tab[idx];
                    let base = l * l + l;
                    coeffs[base + m] += p * re;
                    if m > 0 {
                        coeffs[base - m] += p * im;
                    }
                    idx += l + 1;
                }
            }
        }
        Ok(coeffs)
    }

    fn degree_of(&self, coeffs: &[f64]) -> Result<usize> {
        let n = coeffs.len();
        let l = (n as f64).sqrt().round() as usize;
        if l == 0 || l * l != n {
            return Err(Error::GridMismatch(format!(
                "coefficient vector length {n} is not a square"
            )));
        }
        self.check_degree(l - 1)?;
        Ok(l - 1)
    }

    /// Per-ring Fourier sums `F_m(θ_j)` over the chosen Legendre table.
    fn legendre_sums(&self, coeffs: &[f64], degree: usize, table: Table) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_theta * (degree + 1)];
        let source = match table {
            Table::Theta => &self.dplm,
            _ => &self.plm,
        };
        for j in 0..self.n_theta {
            let tab = &source[j * self.tri_len..(j + 1) * self.tri_len];
            for m in 0..=degree {
                let (mut re, mut im) = (0.0, 0.0);
                let mut idx = tri(m, m);
                for l in m..=degree {
                    let mut t = tab[idx];
                    idx += l + 1;
                    if table == Table::Laplace {
                        t *= -((l * (l + 1)) as f64);
                    }
                    let base = l * l + l;
                    re += coeffs[base + m] * t;
                    if m > 0 {
                        im += coeffs[base - m] * t;
                    }
                }
                let c = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                out[j * (degree + 1) + m] = Complex64::new(c * re, -c * im);
            }
        }
        out
    }

    /// Per-ring Fourier sums of the value, `∂_θ` and `Δ̂` syntheses in a
    /// single pass over both Legendre tables.
    fn legendre_sums_fused(&self, coeffs: &[f64], degree: usize) -> [Vec<Complex64>; 3] {
        let len = self.n_theta * (degree + 1);
        let mut out = [vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); len], vec![
            Complex64::new(0.0, 0.0);
            len
        ]];
        let eig: Vec<f64> = (0..=degree).map(|l| -((l * (l + 1)) as f64)).collect();
        for j in 0..self.n_theta {
            let tab = &self.plm[j * self.tri_len..(j + 1) * self.tri_len];
            let dtab = &self.dplm[j * self.tri_len..(j + 1) * self.tri_len];
            for m in 0..=degree {
                let mut acc = [0.0f64; 6];
                let mut idx = tri(m, m);
                for l in m..=degree {
                    let (t, d) = (tab[idx], dtab[idx]);
                    let base = l * l + l;
                    let cr = coeffs[base + m];
                    let ci = if m > 0 { coeffs[base - m] } else { 0.0 };
                    acc[0] += cr * t;
                    acc[1] += ci * t;
                    acc[2] += cr * d;
                    acc[3] += ci * d;
                    acc[4] += cr * t * eig[l];
                    acc[5] += ci * t * eig[l];
                    idx += l + 1;
                }
                let c = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                let k = j * (degree + 1) + m;
                for (q, sums) in out.iter_mut().enumerate() {
                    sums[k] = Complex64::new(c * acc[2 * q], -c * acc[2 * q + 1]);
                }
            }
        }
        out
    }

    /// Grid values from per-ring Fourier sums with `phi_order` longitude
    /// derivatives applied.
    ///
    /// Each ring is the real part of `Σ_m F_m e^{imφ}`, evaluated by a
    /// complex-to-real transform of the half spectrum `(Re F_0, F_1/2, …)`.
    fn fourier_to_grid(&self, sums: &[Complex64], degree: usize, phi_order: u32) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut spectrum = self.fft_inverse.make_input_vec();
        let mut scratch = self.fft_inverse.make_scratch_vec();
        let zero = Complex64::new(0.0, 0.0);
        for (j, row) in out.chunks_exact_mut(self.n_phi).enumerate() {
            spectrum.fill(zero);
            spectrum[0] = Complex64::new(if phi_order == 0 { sums[j * (degree + 1)].re } else { 0.0 }, 0.0);
            for m in 1..=degree {
                let mut f = sums[j * (degree + 1) + m];
                if phi_order > 0 {
                    f *= Complex64::new(0.0, m as f64).powu(phi_order);
                }
                spectrum[m] = 0.5 * f;
            }
            self.fft_inverse
                .process_with_scratch(&mut spectrum, row, &mut scratch)
                .expect("buffers are sized by the plan");
        }
        out
    }

    /// Grid values of the expansion with the given coefficients.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let degree = self.degree_of(coeffs)?;
        let sums = self.legendre_sums(coeffs, degree, Table::Value);
        Ok(self.fourier_to_grid(&sums, degree, 0))
    }

    /// Grid values of `f`, its first and second coordinate derivatives and
    /// `Δ̂f`, all exact to round-off for the band-limited expansion.
    pub fn derivatives(&self, coeffs: &[f64]) -> Result<DerivativeBundle> {
        let degree = self.degree_of(coeffs)?;
        let [p, dp, lp] = self.legendre_sums_fused(coeffs, degree);
        Ok(DerivativeBundle {
            value: self.fourier_to_grid(&p, degree, 0),
            d_theta: self.fourier_to_grid(&dp, degree, 0),
            d_phi: self.fourier_to_grid(&p, degree, 1),
            d_theta_phi: self.fourier_to_grid(&dp, degree, 1),
            d_phi_phi: self.fourier_to_grid(&p, degree, 2),
            laplace: self.fourier_to_grid(&lp, degree, 0),
        })
    }

    /// Orthonormal-frame gradient components `(∂_θ f, ∂_φ f / sin θ)`.
    pub fn gradient(&self, coeffs: &[f64]) -> Result<[Vec<f64>; 2]> {
        let degree = self.degree_of(coeffs)?;
        let p = self.legendre_sums(coeffs, degree, Table::Value);
        let dp = self.legendre_sums(coeffs, degree, Table::Theta);
        let gt = self.fourier_to_grid(&dp, degree, 0);
        let mut gp = self.fourier_to_grid(&p, degree, 1);
        for (k, v) in gp.iter_mut().enumerate() {
            *v /= self.sin_at(k);
        }
        Ok([gt, gp])
    }

    /// Grid values of `f`, its orthonormal-frame gradient and `Δ̂f` from a
    /// single pass over the Legendre tables.
    pub fn value_gradient_laplacian(&self, coeffs: &[f64]) -> Result<(Vec<f64>, [Vec<f64>; 2], Vec<f64>)> {
        let degree = self.degree_of(coeffs)?;
        let [p, dp, lp] = self.legendre_sums_fused(coeffs, degree);
        let value = self.fourier_to_grid(&p, degree, 0);
        let gt = self.fourier_to_grid(&dp, degree, 0);
        let mut gp = self.fourier_to_grid(&p, degree, 1);
        for (k, v) in gp.iter_mut().enumerate() {
            *v /= self.sin_at(k);
        }
        Ok((value, [gt, gp], self.fourier_to_grid(&lp, degree, 0)))
    }

    /// `Δ̂ f` on the grid.
    pub fn laplacian(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let degree = self.degree_of(coeffs)?;
        let lp = self.legendre_sums(coeffs, degree, Table::Laplace);
        Ok(self.fourier_to_grid(&lp, degree, 0))
    }

    /// Value of the expansion at an arbitrary point of the unit sphere.
    pub fn evaluate_at(&self, coeffs: &[f64], x: [f64; 3]) -> Result<f64> {
        let degree = self.degree_of(coeffs)?;
        Ok(evaluate_expansion(coeffs, degree, x))
    }
}

/// Value of a real harmonic expansion of the given degree at the unit
/// vector `x` (computed with a fresh Legendre column).
pub fn evaluate_expansion(coeffs: &[f64], degree: usize, x: [f64; 3]) -> f64 {
    let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let ct = (x[2] / norm).clamp(-1.0, 1.0);
    let rho = (x[0] * x[0] + x[1] * x[1]).sqrt() / norm;
    let phi = x[1].atan2(x[0]);
    let n = tri(degree, degree) + 1;
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    legendre_column(degree, ct, rho, &mut p, &mut dp);
    let mut total = 0.0;
    for m in 0..=degree {
        let (cm, sm) = ((m as f64 * phi).cos(), (m as f64 * phi).sin());
        for l in m..=degree {
            let base = l * l + l;
            let t = p[tri(l, m)];
            if m == 0 {
                total += coeffs[base] * t;
            } else {
                total += std::f64::consts::SQRT_2 * t * (coeffs[base + m] * cm + coeffs[base - m] * sm);
            }
        }
    }
    total
}
